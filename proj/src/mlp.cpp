#include "bowsense/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bowsense::nn {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;

MatrixXd hidden_pre(const MlpModel& m, const MatrixXd& x) {
  MatrixXd z = m.w1 * x;
  z.colwise() += m.b1.col(0);
  return z;
}

Eigen::RowVectorXd logits_of(const MlpModel& m, const MatrixXd& x) {
  const MatrixXd a = hidden_pre(m, x).cwiseMax(0.0);
  return (m.w2.transpose() * a).array() + m.b2(0, 0);
}

MatrixXd standardized_columns(const MlpModel& m, const std::vector<dataset::StressSample>& samples) {
  MatrixXd x(static_cast<Index>(m.input_dim), static_cast<Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    x.col(static_cast<Index>(i)) = m.input_norm.apply(to_vector(samples[i].features));
  }
  return x;
}

}  // namespace

Eigen::VectorXd to_vector(const hrv::HrvFeatureVector& f) {
  const auto a = f.to_array();
  return Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Index>(a.size()));
}

MlpModel MlpModel::zeros(std::size_t input_dim, std::size_t hidden_dim) {
  MlpModel m;
  m.input_dim = input_dim;
  m.hidden_dim = hidden_dim;
  const auto in = static_cast<Index>(input_dim);
  const auto hid = static_cast<Index>(hidden_dim);
  m.w1 = MatrixXd::Zero(hid, in);
  m.b1 = MatrixXd::Zero(hid, 1);
  m.w2 = MatrixXd::Zero(hid, 1);
  m.b2 = MatrixXd::Zero(1, 1);
  m.input_norm = Standardizer::identity(input_dim);
  return m;
}

MlpModel MlpModel::random(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed) {
  auto m = zeros(input_dim, hidden_dim);
  m.config.seed = seed;
  std::mt19937_64 rng(seed);
  uniform_init(m.w1, static_cast<double>(input_dim), rng);
  uniform_init(m.b1, static_cast<double>(input_dim), rng);
  uniform_init(m.w2, static_cast<double>(hidden_dim), rng);
  uniform_init(m.b2, static_cast<double>(hidden_dim), rng);
  return m;
}

std::vector<Eigen::MatrixXd*> MlpModel::tensors() { return {&w1, &b1, &w2, &b2}; }

std::vector<const Eigen::MatrixXd*> MlpModel::tensors() const { return {&w1, &b1, &w2, &b2}; }

double mlp_forward(const MlpModel& model, const Eigen::VectorXd& x) {
  if (x.size() != static_cast<Index>(model.input_dim)) {
    throw std::invalid_argument("mlp_forward: input has " + std::to_string(x.size()) +
                                " features, model expects " + std::to_string(model.input_dim));
  }
  if (!x.allFinite()) throw std::invalid_argument("mlp_forward: non-finite input");
  const MatrixXd col = model.input_norm.apply(x);
  return probability(logits_of(model, col)(0));
}

std::vector<double> mlp_predict(const MlpModel& model, const std::vector<dataset::StressSample>& samples) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(mlp_forward(model, to_vector(s.features)));
  return out;
}

MlpBatchResult mlp_loss_and_grad(const MlpModel& m, const Eigen::MatrixXd& inputs,
                                 std::span<const double> labels) {
  const Index batch = inputs.cols();
  if (batch == 0 || static_cast<std::size_t>(batch) != labels.size()) {
    throw std::invalid_argument("mlp_loss_and_grad: batch and labels differ");
  }
  const MatrixXd z = hidden_pre(m, inputs);
  const MatrixXd a = z.cwiseMax(0.0);
  const Eigen::RowVectorXd logits = (m.w2.transpose() * a).array() + m.b2(0, 0);

  MlpBatchResult res;
  Eigen::RowVectorXd dlogit(batch);
  for (Index b = 0; b < batch; ++b) {
    const double y = labels[static_cast<std::size_t>(b)];
    res.loss += bce_from_logit(logits(b), y);
    dlogit(b) = (sigmoid(logits(b)) - y) / static_cast<double>(batch);
  }
  res.loss /= static_cast<double>(batch);

  MatrixXd g_w2 = a * dlogit.transpose();
  MatrixXd g_b2(1, 1);
  g_b2(0, 0) = dlogit.sum();
  const MatrixXd dz = ((m.w2.col(0) * dlogit).array() * (z.array() > 0.0).cast<double>()).matrix();
  MatrixXd g_w1 = dz * inputs.transpose();
  MatrixXd g_b1 = dz.rowwise().sum();
  res.grads = {std::move(g_w1), std::move(g_b1), std::move(g_w2), std::move(g_b2)};
  return res;
}

MlpTrainResult mlp_train(const std::vector<dataset::StressSample>& samples, const TrainConfig& cfg,
                         std::size_t hidden_dim) {
  cfg.validate();
  if (samples.empty()) throw std::invalid_argument("mlp_train: no samples");
  const bool has_pos = std::any_of(samples.begin(), samples.end(), [](const auto& s) { return s.label == 1; });
  const bool has_neg = std::any_of(samples.begin(), samples.end(), [](const auto& s) { return s.label == 0; });
  if (!has_pos || !has_neg) throw std::invalid_argument("mlp_train: both classes are required");

  MatrixXd raw(static_cast<Index>(samples.size()), static_cast<Index>(hrv::kFeatureCount));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    raw.row(static_cast<Index>(i)) = to_vector(samples[i].features).transpose();
  }
  if (!raw.allFinite()) throw std::invalid_argument("mlp_train: non-finite features");

  MlpTrainResult result;
  MlpModel& model = result.model;
  model = MlpModel::random(hrv::kFeatureCount, hidden_dim, cfg.seed);
  model.config = cfg;
  model.input_norm = Standardizer::fit(raw);

  const MatrixXd x = standardized_columns(model, samples);
  std::vector<double> labels;
  for (const auto& s : samples) labels.push_back(static_cast<double>(s.label));

  std::vector<MatrixXd> velocity;
  for (const auto* p : std::as_const(model).tensors()) velocity.push_back(MatrixXd::Zero(p->rows(), p->cols()));

  std::mt19937_64 rng(cfg.seed + 1);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  result.history.initial_loss = mlp_loss_and_grad(model, x, labels).loss;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      MatrixXd batch(x.rows(), static_cast<Index>(end - start));
      std::vector<double> batch_labels;
      for (std::size_t k = start; k < end; ++k) {
        batch.col(static_cast<Index>(k - start)) = x.col(static_cast<Index>(order[k]));
        batch_labels.push_back(labels[order[k]]);
      }
      auto step = mlp_loss_and_grad(model, batch, batch_labels);
      if (!std::isfinite(step.loss)) throw std::runtime_error("mlp_train: loss became non-finite");
      epoch_loss += step.loss * static_cast<double>(end - start);
      clip_gradients(step.grads, cfg.clip_norm);
      momentum_step(model.tensors(), velocity, step.grads, cfg);
    }
    result.history.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  result.history.final_loss = mlp_loss_and_grad(model, x, labels).loss;
  return result;
}

double mlp_gradient_check(std::uint64_t seed, std::size_t hidden_dim, std::size_t batch) {
  constexpr double h = 1e-5;
  auto model = MlpModel::random(hrv::kFeatureCount, hidden_dim, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd x(static_cast<Index>(hrv::kFeatureCount), static_cast<Index>(batch));
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  std::vector<double> labels(batch);
  for (std::size_t b = 0; b < batch; ++b) labels[b] = static_cast<double>(b % 2);

  const auto analytic = mlp_loss_and_grad(model, x, labels).grads;
  std::vector<MatrixXd> numeric;
  for (auto* p : model.tensors()) {
    MatrixXd g(p->rows(), p->cols());
    for (Index i = 0; i < p->size(); ++i) {
      const double saved = p->data()[i];
      p->data()[i] = saved + h;
      const double up = mlp_loss_and_grad(model, x, labels).loss;
      p->data()[i] = saved - h;
      const double down = mlp_loss_and_grad(model, x, labels).loss;
      p->data()[i] = saved;
      g.data()[i] = (up - down) / (2.0 * h);
    }
    numeric.push_back(std::move(g));
  }
  return max_relative_error(analytic, numeric);
}

}  // namespace bowsense::nn
