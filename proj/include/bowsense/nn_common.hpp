#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace bowsense::nn {

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  /// Global gradient-norm clip; 0 disables clipping.
  double clip_norm = 5.0;

  void validate() const;
};

/// Per-feature z-score parameters estimated on training data.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer identity(std::size_t dim);
  /// Rows of `rows` are observations. Zero-variance features keep scale 1.
  static Standardizer fit(const Eigen::MatrixXd& rows);

  /// Standardizes each row of a (observations x features) matrix.
  Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& rows) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
};

/// Binary cross-entropy of one sample, computed from its logit.
double bce_from_logit(double logit, double label);

double sigmoid(double x);

/// Sigmoid clamped to [eps, 1 - eps] so reported probabilities stay inside
/// the open unit interval.
double probability(double logit);

/// Fills `m` with U(-1/sqrt(fan_in), 1/sqrt(fan_in)) draws in column-major
/// order.
void uniform_init(Eigen::MatrixXd& m, double fan_in, std::mt19937_64& rng);

/// Applies one momentum step to every tensor: v = mu * v - lr * g, p += v.
void momentum_step(std::vector<Eigen::MatrixXd*> params, std::vector<Eigen::MatrixXd>& velocity,
                   const std::vector<Eigen::MatrixXd>& grads, const TrainConfig& cfg);

/// Scales gradients in place so their joint L2 norm is at most max_norm.
void clip_gradients(std::vector<Eigen::MatrixXd>& grads, double max_norm);

/// Max over entries of |a - n| / max(|a|, |n|, floor). Two all-zero gradients
/// give 0.
double max_relative_error(const std::vector<Eigen::MatrixXd>& analytic,
                          const std::vector<Eigen::MatrixXd>& numeric, double floor = 1e-8);

struct TrainHistory {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> epoch_loss;
};

enum class ModelKind { Lstm, Mlp };

}  // namespace bowsense::nn
