#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bowsense/dataset.hpp"
#include "bowsense/nn_common.hpp"

namespace bowsense::nn {

/// input -> rectifier hidden layer -> sigmoid output.
struct MlpModel {
  std::size_t input_dim = 11;
  std::size_t hidden_dim = 16;
  Eigen::MatrixXd w1;  // H x I
  Eigen::MatrixXd b1;  // H x 1
  Eigen::MatrixXd w2;  // H x 1
  Eigen::MatrixXd b2;  // 1 x 1
  Standardizer input_norm;
  TrainConfig config;

  static MlpModel zeros(std::size_t input_dim = 11, std::size_t hidden_dim = 16);
  static MlpModel random(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed);

  std::vector<Eigen::MatrixXd*> tensors();
  std::vector<const Eigen::MatrixXd*> tensors() const;
};

/// Raw (unstandardized) features in; the model's standardizer is applied.
double mlp_forward(const MlpModel& model, const Eigen::VectorXd& x);

std::vector<double> mlp_predict(const MlpModel& model, const std::vector<dataset::StressSample>& samples);

struct MlpBatchResult {
  double loss = 0.0;
  std::vector<Eigen::MatrixXd> grads;
};
/// Columns of `inputs` are standardized samples.
MlpBatchResult mlp_loss_and_grad(const MlpModel& model, const Eigen::MatrixXd& inputs,
                                 std::span<const double> labels);

struct MlpTrainResult {
  MlpModel model;
  TrainHistory history;
};

MlpTrainResult mlp_train(const std::vector<dataset::StressSample>& samples, const TrainConfig& cfg,
                         std::size_t hidden_dim = 16);

double mlp_gradient_check(std::uint64_t seed, std::size_t hidden_dim = 6, std::size_t batch = 4);

Eigen::VectorXd to_vector(const hrv::HrvFeatureVector& f);

}  // namespace bowsense::nn
