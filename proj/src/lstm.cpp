#include "bowsense/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bowsense::nn {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;

// Column block t of each matrix holds time step t for the whole batch.
struct Cache {
  Index batch = 0;
  Index steps = 0;
  MatrixXd x;      // I x (T * B)
  MatrixXd gates;  // 4H x (T * B), activated
  MatrixXd c;      // H x ((T + 1) * B), c_0 .. c_T
  MatrixXd h;      // H x ((T + 1) * B), h_0 .. h_T
  Eigen::RowVectorXd logits;
};

// Vectorised logistic and tanh. tanh(x) = 2 * sigmoid(2x) - 1.
template <typename Derived>
auto sigmoid_of(const Eigen::MatrixBase<Derived>& z) {
  return (1.0 + (-z.array()).exp()).inverse();
}

template <typename Derived>
auto tanh_of(const Eigen::MatrixBase<Derived>& z) {
  return 2.0 * (1.0 + (-2.0 * z.array()).exp()).inverse() - 1.0;
}

// Runs the recurrence over a batch of equally long sequences.
Cache run(const LstmModel& m, std::span<const MatrixXd* const> seqs) {
  const auto hidden = static_cast<Index>(m.hidden_dim);
  const auto batch = static_cast<Index>(seqs.size());
  const Index steps = seqs.front()->rows();
  for (const auto* s : seqs) {
    if (s->rows() != steps) throw std::invalid_argument("lstm: sequences in a batch differ in length");
    if (s->cols() != static_cast<Index>(m.input_dim)) {
      throw std::invalid_argument("lstm: sequence width does not match input_dim");
    }
  }

  Cache cache;
  cache.batch = batch;
  cache.steps = steps;
  cache.x.resize(static_cast<Index>(m.input_dim), steps * batch);
  for (Index b = 0; b < batch; ++b) {
    const MatrixXd& seq = *seqs[static_cast<std::size_t>(b)];
    for (Index t = 0; t < steps; ++t) cache.x.col(t * batch + b) = seq.row(t).transpose();
  }

  cache.gates.noalias() = m.w_in * cache.x;
  cache.gates.colwise() += m.bias.col(0);
  cache.c = MatrixXd::Zero(hidden, (steps + 1) * batch);
  cache.h = MatrixXd::Zero(hidden, (steps + 1) * batch);

  MatrixXd z(4 * hidden, batch);
  for (Index t = 0; t < steps; ++t) {
    auto act = cache.gates.middleCols(t * batch, batch);
    z.noalias() = act + m.w_rec * cache.h.middleCols(t * batch, batch);
    act.topRows(3 * hidden) = sigmoid_of(z.topRows(3 * hidden)).matrix();
    act.bottomRows(hidden) = tanh_of(z.bottomRows(hidden)).matrix();

    const auto in_gate = act.middleRows(0, hidden).array();
    const auto forget = act.middleRows(hidden, hidden).array();
    const auto out_gate = act.middleRows(2 * hidden, hidden).array();
    const auto cand = act.middleRows(3 * hidden, hidden).array();

    cache.c.middleCols((t + 1) * batch, batch) =
        (forget * cache.c.middleCols(t * batch, batch).array() + in_gate * cand).matrix();
    cache.h.middleCols((t + 1) * batch, batch) =
        (out_gate * tanh_of(cache.c.middleCols((t + 1) * batch, batch))).matrix();
  }
  cache.logits = (m.w_out.transpose() * cache.h.rightCols(batch)).array() + m.b_out(0, 0);
  return cache;
}

void check_finite(const MatrixXd& seq) {
  if (!seq.allFinite()) throw std::invalid_argument("lstm: non-finite input");
}

}  // namespace

LstmModel LstmModel::zeros(std::size_t input_dim, std::size_t hidden_dim) {
  LstmModel m;
  m.input_dim = input_dim;
  m.hidden_dim = hidden_dim;
  const auto in = static_cast<Index>(input_dim);
  const auto hid = static_cast<Index>(hidden_dim);
  m.w_in = MatrixXd::Zero(4 * hid, in);
  m.w_rec = MatrixXd::Zero(4 * hid, hid);
  m.bias = MatrixXd::Zero(4 * hid, 1);
  m.w_out = MatrixXd::Zero(hid, 1);
  m.b_out = MatrixXd::Zero(1, 1);
  m.input_norm = Standardizer::identity(input_dim);
  return m;
}

LstmModel LstmModel::random(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed) {
  auto m = zeros(input_dim, hidden_dim);
  m.config.seed = seed;
  std::mt19937_64 rng(seed);
  const auto gate_fan_in = static_cast<double>(input_dim + hidden_dim);
  uniform_init(m.w_in, gate_fan_in, rng);
  uniform_init(m.w_rec, gate_fan_in, rng);
  uniform_init(m.bias, gate_fan_in, rng);
  // Forget gates start mostly open so early gradients reach distant steps.
  m.bias.middleRows(static_cast<Eigen::Index>(hidden_dim), static_cast<Eigen::Index>(hidden_dim)).array() += 1.0;
  uniform_init(m.w_out, static_cast<double>(hidden_dim), rng);
  uniform_init(m.b_out, static_cast<double>(hidden_dim), rng);
  return m;
}

std::vector<Eigen::MatrixXd*> LstmModel::tensors() { return {&w_in, &w_rec, &bias, &w_out, &b_out}; }

std::vector<const Eigen::MatrixXd*> LstmModel::tensors() const {
  return {&w_in, &w_rec, &bias, &w_out, &b_out};
}

double lstm_forward(const LstmModel& model, const Eigen::MatrixXd& sequence) {
  if (sequence.rows() < 1) throw std::invalid_argument("lstm_forward: empty sequence");
  check_finite(sequence);
  const MatrixXd normed = model.input_norm.apply_rows(sequence);
  const MatrixXd* seqs[] = {&normed};
  return probability(run(model, seqs).logits(0));
}

std::vector<double> lstm_predict(const LstmModel& model, std::span<const Eigen::MatrixXd> sequences) {
  constexpr std::size_t kChunk = 64;
  std::vector<double> out;
  out.reserve(sequences.size());
  std::vector<MatrixXd> normed;
  std::vector<const MatrixXd*> ptrs;
  std::size_t i = 0;
  while (i < sequences.size()) {
    normed.clear();
    ptrs.clear();
    const Index steps = sequences[i].rows();
    if (steps < 1) throw std::invalid_argument("lstm_predict: empty sequence");
    while (i < sequences.size() && normed.size() < kChunk && sequences[i].rows() == steps) {
      check_finite(sequences[i]);
      normed.push_back(model.input_norm.apply_rows(sequences[i]));
      ++i;
    }
    for (const auto& n : normed) ptrs.push_back(&n);
    const auto cache = run(model, ptrs);
    for (Index b = 0; b < cache.logits.size(); ++b) out.push_back(probability(cache.logits(b)));
  }
  return out;
}

LstmBatchResult lstm_loss_and_grad(const LstmModel& m, std::span<const Eigen::MatrixXd* const> seqs,
                                   std::span<const double> labels) {
  if (seqs.empty() || seqs.size() != labels.size()) {
    throw std::invalid_argument("lstm_loss_and_grad: batch and labels differ");
  }
  const auto hidden = static_cast<Index>(m.hidden_dim);
  const auto batch = static_cast<Index>(seqs.size());
  const Cache cache = run(m, seqs);
  const Index steps = cache.steps;

  LstmBatchResult res;
  Eigen::RowVectorXd dlogit(batch);
  for (Index b = 0; b < batch; ++b) {
    const double y = labels[static_cast<std::size_t>(b)];
    res.loss += bce_from_logit(cache.logits(b), y);
    dlogit(b) = (sigmoid(cache.logits(b)) - y) / static_cast<double>(batch);
  }
  res.loss /= static_cast<double>(batch);

  MatrixXd g_w_out = cache.h.rightCols(batch) * dlogit.transpose();
  MatrixXd g_b_out(1, 1);
  g_b_out(0, 0) = dlogit.sum();

  MatrixXd dh = m.w_out.col(0) * dlogit;
  MatrixXd dc = MatrixXd::Zero(hidden, batch);
  MatrixXd dz_all(4 * hidden, steps * batch);
  Eigen::ArrayXXd tanh_c(hidden, batch);

  for (Index t = steps; t-- > 0;) {
    const auto act = cache.gates.middleCols(t * batch, batch);
    const auto in_gate = act.middleRows(0, hidden).array();
    const auto forget = act.middleRows(hidden, hidden).array();
    const auto out_gate = act.middleRows(2 * hidden, hidden).array();
    const auto cand = act.middleRows(3 * hidden, hidden).array();
    const auto c_prev = cache.c.middleCols(t * batch, batch).array();
    tanh_c = tanh_of(cache.c.middleCols((t + 1) * batch, batch));

    dc.array() += dh.array() * out_gate * (1.0 - tanh_c.square());

    auto dz = dz_all.middleCols(t * batch, batch);
    dz.middleRows(0, hidden) = (dc.array() * cand * in_gate * (1.0 - in_gate)).matrix();
    dz.middleRows(hidden, hidden) = (dc.array() * c_prev * forget * (1.0 - forget)).matrix();
    dz.middleRows(2 * hidden, hidden) = (dh.array() * tanh_c * out_gate * (1.0 - out_gate)).matrix();
    dz.middleRows(3 * hidden, hidden) = (dc.array() * in_gate * (1.0 - cand.square())).matrix();

    dh.noalias() = m.w_rec.transpose() * dz;
    dc.array() *= forget;
  }

  MatrixXd g_w_in = dz_all * cache.x.transpose();
  MatrixXd g_w_rec = dz_all * cache.h.leftCols(steps * batch).transpose();
  MatrixXd g_bias = dz_all.rowwise().sum();

  res.grads = {std::move(g_w_in), std::move(g_w_rec), std::move(g_bias), std::move(g_w_out),
               std::move(g_b_out)};
  return res;
}

namespace {

double dataset_loss(const LstmModel& m, const std::vector<MatrixXd>& seqs,
                    const std::vector<double>& labels, std::size_t chunk) {
  double total = 0.0;
  std::vector<const MatrixXd*> ptrs;
  for (std::size_t start = 0; start < seqs.size(); start += chunk) {
    const std::size_t end = std::min(seqs.size(), start + chunk);
    ptrs.clear();
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&seqs[i]);
    const auto cache = run(m, ptrs);
    for (std::size_t i = start; i < end; ++i) {
      total += bce_from_logit(cache.logits(static_cast<Index>(i - start)), labels[i]);
    }
  }
  return total / static_cast<double>(seqs.size());
}

}  // namespace

LstmTrainResult lstm_train(const std::vector<dataset::WindowSample>& samples, const TrainConfig& cfg,
                           std::size_t hidden_dim) {
  cfg.validate();
  if (samples.empty()) throw std::invalid_argument("lstm_train: no samples");
  const bool has_pos = std::any_of(samples.begin(), samples.end(), [](const auto& s) { return s.label == 1; });
  const bool has_neg = std::any_of(samples.begin(), samples.end(), [](const auto& s) { return s.label == 0; });
  if (!has_pos || !has_neg) throw std::invalid_argument("lstm_train: both classes are required");

  const auto input_dim = static_cast<std::size_t>(samples.front().features.cols());
  Index rows = 0;
  for (const auto& s : samples) {
    if (static_cast<std::size_t>(s.features.cols()) != input_dim) {
      throw std::invalid_argument("lstm_train: inconsistent channel count");
    }
    if (!s.features.allFinite()) throw std::invalid_argument("lstm_train: non-finite features");
    rows += s.features.rows();
  }
  MatrixXd stacked(rows, static_cast<Index>(input_dim));
  Index at = 0;
  for (const auto& s : samples) {
    stacked.middleRows(at, s.features.rows()) = s.features;
    at += s.features.rows();
  }

  LstmTrainResult result;
  LstmModel& model = result.model;
  model = LstmModel::random(input_dim, hidden_dim, cfg.seed);
  model.config = cfg;
  model.input_norm = Standardizer::fit(stacked);
  stacked.resize(0, 0);

  std::vector<MatrixXd> seqs;
  std::vector<double> labels;
  seqs.reserve(samples.size());
  for (const auto& s : samples) {
    seqs.push_back(model.input_norm.apply_rows(s.features));
    labels.push_back(static_cast<double>(s.label));
  }

  std::vector<MatrixXd> velocity;
  for (const auto* p : std::as_const(model).tensors()) velocity.push_back(MatrixXd::Zero(p->rows(), p->cols()));

  std::mt19937_64 rng(cfg.seed + 1);
  std::vector<std::size_t> order(seqs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<const MatrixXd*> batch;
  std::vector<double> batch_labels;

  result.history.initial_loss = dataset_loss(model, seqs, labels, 64);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      batch_labels.clear();
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back(&seqs[order[k]]);
        batch_labels.push_back(labels[order[k]]);
      }
      auto step = lstm_loss_and_grad(model, batch, batch_labels);
      if (!std::isfinite(step.loss)) throw std::runtime_error("lstm_train: loss became non-finite");
      epoch_loss += step.loss * static_cast<double>(end - start);
      clip_gradients(step.grads, cfg.clip_norm);
      momentum_step(model.tensors(), velocity, step.grads, cfg);
    }
    result.history.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  result.history.final_loss = dataset_loss(model, seqs, labels, 64);
  return result;
}

double lstm_gradient_check(std::uint64_t seed, std::size_t hidden_dim, std::size_t steps,
                           std::size_t batch) {
  constexpr double h = 1e-5;
  auto model = LstmModel::random(5, hidden_dim, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<MatrixXd> seqs(batch, MatrixXd(static_cast<Index>(steps), 5));
  std::vector<double> labels(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    for (Index i = 0; i < seqs[b].size(); ++i) seqs[b].data()[i] = normal(rng);
    labels[b] = static_cast<double>(b % 2);
  }
  std::vector<const MatrixXd*> ptrs;
  for (const auto& s : seqs) ptrs.push_back(&s);

  const auto analytic = lstm_loss_and_grad(model, ptrs, labels).grads;
  std::vector<MatrixXd> numeric;
  auto params = model.tensors();
  for (auto* p : params) {
    MatrixXd g(p->rows(), p->cols());
    for (Index i = 0; i < p->size(); ++i) {
      const double saved = p->data()[i];
      p->data()[i] = saved + h;
      const double up = lstm_loss_and_grad(model, ptrs, labels).loss;
      p->data()[i] = saved - h;
      const double down = lstm_loss_and_grad(model, ptrs, labels).loss;
      p->data()[i] = saved;
      g.data()[i] = (up - down) / (2.0 * h);
    }
    numeric.push_back(std::move(g));
  }
  return max_relative_error(analytic, numeric);
}

}  // namespace bowsense::nn
