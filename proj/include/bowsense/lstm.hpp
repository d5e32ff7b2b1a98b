#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bowsense/dataset.hpp"
#include "bowsense/nn_common.hpp"

namespace bowsense::nn {

/// Single-layer LSTM read out from the last hidden state through a sigmoid.
/// Gate rows are stacked input, forget, output, candidate.
struct LstmModel {
  std::size_t input_dim = 5;
  std::size_t hidden_dim = 32;
  Eigen::MatrixXd w_in;   // 4H x I
  Eigen::MatrixXd w_rec;  // 4H x H
  Eigen::MatrixXd bias;   // 4H x 1
  Eigen::MatrixXd w_out;  // H x 1
  Eigen::MatrixXd b_out;  // 1 x 1
  Standardizer input_norm;
  TrainConfig config;

  /// All-zero weights and an identity standardizer.
  static LstmModel zeros(std::size_t input_dim = 5, std::size_t hidden_dim = 32);
  static LstmModel random(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed);

  std::vector<Eigen::MatrixXd*> tensors();
  std::vector<const Eigen::MatrixXd*> tensors() const;
};

/// Probability for one sequence (T x input_dim), in the open interval (0, 1).
double lstm_forward(const LstmModel& model, const Eigen::MatrixXd& sequence);

/// Mean loss over a batch and its gradients with respect to tensors(), in the
/// same order. Sequences are taken as already standardized.
struct LstmBatchResult {
  double loss = 0.0;
  std::vector<Eigen::MatrixXd> grads;
};
LstmBatchResult lstm_loss_and_grad(const LstmModel& model,
                                   std::span<const Eigen::MatrixXd* const> sequences,
                                   std::span<const double> labels);

struct LstmTrainResult {
  LstmModel model;
  TrainHistory history;
};

/// Backpropagation through time with momentum SGD on mean binary cross-entropy.
LstmTrainResult lstm_train(const std::vector<dataset::WindowSample>& samples,
                           const TrainConfig& cfg, std::size_t hidden_dim = 32);

/// Probabilities for many sequences, batched through the same recurrence.
std::vector<double> lstm_predict(const LstmModel& model, std::span<const Eigen::MatrixXd> sequences);

/// Largest relative error between BPTT and central differences (h = 1e-5)
/// over every parameter of a small seeded model.
double lstm_gradient_check(std::uint64_t seed, std::size_t hidden_dim = 4, std::size_t steps = 5,
                           std::size_t batch = 3);

}  // namespace bowsense::nn
