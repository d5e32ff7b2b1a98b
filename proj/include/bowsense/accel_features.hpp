#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bowsense/core_types.hpp"

namespace bowsense::accel {

inline constexpr std::size_t kDefaultSmoothWindow = 20;
inline constexpr std::size_t kChannelCount = 5;

/// The five model input channels, column-wise and equally long.
struct FeatureChannels {
  std::vector<double> ax;
  std::vector<double> ay;
  std::vector<double> az;
  std::vector<double> total;
  std::vector<double> smooth_diff;

  std::size_t size() const { return total.size(); }
  /// Channel c at sample i, in the order ax, ay, az, total, smooth_diff.
  double at(std::size_t i, std::size_t c) const;
};

/// Euclidean norm of the three axes per sample.
std::vector<double> total_acc(std::span<const double> ax, std::span<const double> ay,
                              std::span<const double> az);

/// First-order difference with out[0] = 0.
std::vector<double> diff_series(std::span<const double> total);

/// Trailing rolling mean of `window` samples. Outputs before the first full
/// window are 0.
std::vector<double> smooth_diff(std::span<const double> diff,
                                std::size_t window = kDefaultSmoothWindow);

FeatureChannels build_channels(std::span<const AccSample> acc,
                               std::size_t window = kDefaultSmoothWindow);

}  // namespace bowsense::accel
