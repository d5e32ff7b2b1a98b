#include "bowsense/nn_common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace bowsense::nn {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be finite and >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(clip_norm >= 0.0)) throw std::invalid_argument("clip_norm must be >= 0");
}

Standardizer Standardizer::identity(std::size_t dim) {
  const auto n = static_cast<Eigen::Index>(dim);
  return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n)};
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& rows) {
  if (rows.rows() < 1) throw std::invalid_argument("Standardizer::fit: no observations");
  Standardizer s;
  s.mean = rows.colwise().mean().transpose();
  s.scale.resize(rows.cols());
  for (Eigen::Index c = 0; c < rows.cols(); ++c) {
    const double var = (rows.col(c).array() - s.mean(c)).square().mean();
    const double sd = std::sqrt(var);
    s.scale(c) = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply_rows(const Eigen::MatrixXd& rows) const {
  return (rows.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& x) const {
  return ((x - mean).array() / scale.array()).matrix();
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double probability(double logit) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  return std::clamp(sigmoid(logit), eps, 1.0 - eps);
}

double bce_from_logit(double logit, double label) {
  const double softplus = std::max(logit, 0.0) + std::log1p(std::exp(-std::abs(logit)));
  return softplus - label * logit;
}

void uniform_init(Eigen::MatrixXd& m, double fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
  }
}

void momentum_step(std::vector<Eigen::MatrixXd*> params, std::vector<Eigen::MatrixXd>& velocity,
                   const std::vector<Eigen::MatrixXd>& grads, const TrainConfig& cfg) {
  for (std::size_t k = 0; k < params.size(); ++k) {
    velocity[k] = cfg.momentum * velocity[k] - cfg.learning_rate * grads[k];
    *params[k] += velocity[k];
  }
}

void clip_gradients(std::vector<Eigen::MatrixXd>& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    for (auto& g : grads) g *= max_norm / norm;
  }
}

double max_relative_error(const std::vector<Eigen::MatrixXd>& analytic,
                          const std::vector<Eigen::MatrixXd>& numeric, double floor) {
  if (analytic.size() != numeric.size()) throw std::invalid_argument("gradient lists differ in size");
  double worst = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const auto& a = analytic[k];
    const auto& n = numeric[k];
    if (a.rows() != n.rows() || a.cols() != n.cols()) throw std::invalid_argument("gradient shapes differ");
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      const double x = a.data()[i];
      const double y = n.data()[i];
      const double diff = std::abs(x - y);
      if (diff == 0.0) continue;
      worst = std::max(worst, diff / std::max({std::abs(x), std::abs(y), floor}));
    }
  }
  return worst;
}

}  // namespace bowsense::nn
