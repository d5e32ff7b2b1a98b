#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "bowsense/neural_nets.hpp"

using namespace bowsense;
using namespace bowsense::nn;
using Eigen::MatrixXd;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Step-by-step scalar LSTM with gate rows ordered input, forget, output,
// candidate; identity input scaling assumed.
double naive_lstm(const LstmModel& m, const MatrixXd& seq) {
  const auto h_dim = static_cast<Eigen::Index>(m.hidden_dim);
  std::vector<double> h(h_dim, 0.0);
  std::vector<double> c(h_dim, 0.0);
  for (Eigen::Index t = 0; t < seq.rows(); ++t) {
    std::vector<double> z(4 * h_dim);
    for (Eigen::Index r = 0; r < 4 * h_dim; ++r) {
      double acc = m.bias(r, 0);
      for (Eigen::Index i = 0; i < seq.cols(); ++i) acc += m.w_in(r, i) * seq(t, i);
      for (Eigen::Index j = 0; j < h_dim; ++j) acc += m.w_rec(r, j) * h[j];
      z[r] = acc;
    }
    for (Eigen::Index j = 0; j < h_dim; ++j) {
      const double in = sig(z[j]);
      const double forget = sig(z[h_dim + j]);
      const double out = sig(z[2 * h_dim + j]);
      const double cand = std::tanh(z[3 * h_dim + j]);
      c[j] = forget * c[j] + in * cand;
      h[j] = out * std::tanh(c[j]);
    }
  }
  double logit = m.b_out(0, 0);
  for (Eigen::Index j = 0; j < h_dim; ++j) logit += m.w_out(j, 0) * h[j];
  return sig(logit);
}

MatrixXd random_seq(std::mt19937_64& rng, Eigen::Index steps, Eigen::Index dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixXd s(steps, dim);
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = n(rng);
  return s;
}

// Plateau windows (label 0) against windows with a sharp spike (label 1).
std::vector<dataset::WindowSample> plateau_vs_spike(std::size_t per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::uniform_int_distribution<int> where(10, 60);
  std::vector<dataset::WindowSample> out;
  for (std::size_t k = 0; k < 2 * per_class; ++k) {
    dataset::WindowSample s;
    s.label = k % 2 == 0 ? 0 : 1;
    s.features = MatrixXd::Constant(80, 5, 1.0);
    for (Eigen::Index i = 0; i < s.features.size(); ++i) s.features.data()[i] += noise(rng);
    if (s.label == 1) {
      const int at = where(rng);
      for (int t = at; t < at + 10; ++t) {
        s.features(t, 3) += 3.0;
        s.features(t, 4) += 1.5;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<dataset::StressSample> two_clusters(std::size_t per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<dataset::StressSample> out;
  for (std::size_t k = 0; k < 2 * per_class; ++k) {
    dataset::StressSample s;
    s.label = static_cast<int>(k % 2);
    const double shift = s.label ? 1.0 : -1.0;
    s.features.hr = 75.0 + 10.0 * shift + 3.0 * n(rng);
    s.features.sdnn = 50.0 - 20.0 * shift + 5.0 * n(rng);
    s.features.rmssd = 40.0 - 15.0 * shift + 5.0 * n(rng);
    s.features.pnn20 = 30.0 + 5.0 * n(rng);
    s.features.pnn50 = 10.0 + 2.0 * n(rng);
    s.features.hf = 800.0 - 300.0 * shift + 50.0 * n(rng);
    s.features.tf = 2000.0 + 100.0 * n(rng);
    s.features.pob = 5.0 + n(rng);
    s.features.sd1 = 30.0 - 10.0 * shift + 3.0 * n(rng);
    s.features.sd2 = 60.0 + 5.0 * n(rng);
    s.features.samp_en = 1.5 + 0.1 * n(rng);
    out.push_back(s);
  }
  return out;
}

bool same_weights(const std::vector<const MatrixXd*>& a, const std::vector<const MatrixXd*>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (*a[i] != *b[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("lstm forward") {
  std::mt19937_64 rng(5);
  const auto seq = random_seq(rng, 12, 5);
  CHECK(lstm_forward(LstmModel::zeros(), seq) == 0.5);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = LstmModel::random(5, 7, seed);
    const auto s = random_seq(rng, 9, 5);
    const double p = lstm_forward(m, s);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    CHECK(p == doctest::Approx(naive_lstm(m, s)).epsilon(1e-12));
    CHECK(lstm_forward(m, s) == p);
  }

  auto bad = seq;
  bad(3, 2) = std::nan("");
  CHECK_THROWS_AS(lstm_forward(LstmModel::zeros(), bad), std::invalid_argument);
  CHECK_THROWS_AS(lstm_forward(LstmModel::zeros(), MatrixXd(0, 5)), std::invalid_argument);
}

TEST_CASE("lstm batched prediction equals one-by-one") {
  std::mt19937_64 rng(8);
  const auto m = LstmModel::random(5, 6, 3);
  std::vector<MatrixXd> seqs;
  for (int i = 0; i < 5; ++i) seqs.push_back(random_seq(rng, 10, 5));
  const auto probs = lstm_predict(m, seqs);
  REQUIRE(probs.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(probs[i] == doctest::Approx(lstm_forward(m, seqs[i])).epsilon(1e-12));
}

TEST_CASE("gradient checks") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CAPTURE(seed);
    CHECK(gradient_check(ModelKind::Lstm, seed) <= 1e-4);
    CHECK(gradient_check(ModelKind::Mlp, seed) <= 1e-5);
  }
  const std::vector<MatrixXd> zero = {MatrixXd::Zero(2, 3), MatrixXd::Zero(1, 1)};
  CHECK(max_relative_error(zero, zero) == 0.0);
}

TEST_CASE("lstm training") {
  const auto data = plateau_vs_spike(100, 11);
  TrainConfig cfg;
  cfg.seed = 4;
  const auto trained = lstm_train(data, cfg, 16);
  CHECK(trained.history.final_loss < trained.history.initial_loss);
  for (double l : trained.history.epoch_loss) CHECK(std::isfinite(l));

  std::vector<MatrixXd> seqs;
  for (const auto& s : data) seqs.push_back(s.features);
  const auto probs = lstm_predict(trained.model, seqs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) correct += (probs[i] > 0.5) == (data[i].label == 1) ? 1 : 0;
  CHECK(static_cast<double>(correct) / static_cast<double>(data.size()) >= 0.95);

  const auto again = lstm_train(data, cfg, 16);
  CHECK(same_weights(std::as_const(again.model).tensors(), std::as_const(trained.model).tensors()));

  TrainConfig frozen = cfg;
  frozen.learning_rate = 0.0;
  frozen.epochs = 1;
  const auto still = lstm_train(data, frozen, 16);
  const auto init = LstmModel::random(5, 16, cfg.seed);
  CHECK(same_weights(std::as_const(still.model).tensors(), std::as_const(init).tensors()));

  std::vector<dataset::WindowSample> one_class(data.begin(), data.begin() + 1);
  CHECK_THROWS_AS(lstm_train(one_class, cfg, 16), std::invalid_argument);
}

TEST_CASE("mlp forward") {
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(11, -1.0, 1.0);
  CHECK(mlp_forward(MlpModel::zeros(), x) == 0.5);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 5.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = MlpModel::random(11, 16, seed);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = n(rng);
    const double p = mlp_forward(m, x);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    // Independent evaluation of the two layers.
    double logit = m.b2(0, 0);
    for (Eigen::Index h = 0; h < 16; ++h) {
      double a = m.b1(h, 0);
      for (Eigen::Index i = 0; i < 11; ++i) a += m.w1(h, i) * x(i);
      logit += m.w2(h, 0) * std::max(0.0, a);
    }
    CHECK(p == doctest::Approx(sig(logit)).epsilon(1e-12));
  }
  x(0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(mlp_forward(MlpModel::zeros(), x), std::invalid_argument);
  CHECK_THROWS_AS(mlp_forward(MlpModel::zeros(), Eigen::VectorXd::Zero(10)), std::invalid_argument);
}

TEST_CASE("mlp is monotone when every path weight is positive") {
  auto m = MlpModel::zeros(11, 2);
  m.w1.setZero();
  m.w1(0, 0) = 0.5;
  m.w1(1, 0) = 1.5;
  m.w1(1, 3) = 0.2;
  m.b1(0, 0) = -0.3;
  m.b1(1, 0) = 0.1;
  m.w2(0, 0) = 0.8;
  m.w2(1, 0) = 0.4;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(11);
  double prev = 0.0;
  for (double v = -3.0; v <= 3.0; v += 0.25) {
    x(0) = v;
    const double p = mlp_forward(m, x);
    CHECK(p >= prev);
    prev = p;
  }
}

TEST_CASE("mlp training") {
  const auto train = two_clusters(100, 1);
  const auto held = two_clusters(50, 2);
  TrainConfig cfg;
  cfg.seed = 9;
  const auto r = mlp_train(train, cfg, 16);
  CHECK(r.history.final_loss < r.history.initial_loss);
  for (double l : r.history.epoch_loss) CHECK(std::isfinite(l));
  const auto probs = mlp_predict(r.model, held);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < held.size(); ++i) correct += (probs[i] > 0.5) == (held[i].label == 1) ? 1 : 0;
  CHECK(static_cast<double>(correct) / static_cast<double>(held.size()) >= 0.9);

  const auto again = mlp_train(train, cfg, 16);
  CHECK(same_weights(std::as_const(again.model).tensors(), std::as_const(r.model).tensors()));

  TrainConfig frozen = cfg;
  frozen.learning_rate = 0.0;
  frozen.epochs = 1;
  const auto still = mlp_train(train, frozen, 16);
  const auto init = MlpModel::random(11, 16, cfg.seed);
  CHECK(same_weights(std::as_const(still.model).tensors(), std::as_const(init).tensors()));
}

TEST_CASE("model files") {
  const auto dir = std::filesystem::temp_directory_path() / "bowsense_nn_test";
  std::filesystem::create_directories(dir);

  auto lstm = LstmModel::random(5, 6, 21);
  lstm.input_norm.mean = Eigen::VectorXd::LinSpaced(5, 0.0, 1.0);
  lstm.input_norm.scale = Eigen::VectorXd::LinSpaced(5, 1.0, 2.0);
  lstm.config.seed = 77;
  save_model(dir / "m.bin", lstm);
  const auto back = load_lstm(dir / "m.bin", 5);
  CHECK(same_weights(std::as_const(back).tensors(), std::as_const(lstm).tensors()));
  CHECK(back.input_norm.mean == lstm.input_norm.mean);
  CHECK(back.input_norm.scale == lstm.input_norm.scale);
  CHECK(back.config.seed == 77);
  std::mt19937_64 rng(3);
  const auto s = random_seq(rng, 8, 5);
  CHECK(lstm_forward(back, s) == lstm_forward(lstm, s));

  const auto bytes = serialize(lstm);
  CHECK_THROWS_AS(deserialize_lstm(bytes.substr(0, bytes.size() - 3)), ModelFormatError);
  CHECK_THROWS_AS(deserialize_lstm(bytes, 11), ModelFormatError);
  CHECK_THROWS_AS(deserialize_mlp(bytes), ModelFormatError);
  CHECK_THROWS_AS(deserialize_lstm("not a model"), ModelFormatError);

  const auto mlp = MlpModel::random(11, 16, 5);
  save_model(dir / "s.bin", mlp);
  const auto mback = load_mlp(dir / "s.bin", 11);
  CHECK(same_weights(std::as_const(mback).tensors(), std::as_const(mlp).tensors()));
  CHECK_THROWS(load_mlp(dir / "missing.bin"));

  std::filesystem::remove_all(dir);
}
