#include "bowsense/accel_features.hpp"

#include <cmath>
#include <stdexcept>

namespace bowsense::accel {

double FeatureChannels::at(std::size_t i, std::size_t c) const {
  switch (c) {
    case 0: return ax[i];
    case 1: return ay[i];
    case 2: return az[i];
    case 3: return total[i];
    case 4: return smooth_diff[i];
    default: throw std::out_of_range("channel index out of range");
  }
}

std::vector<double> total_acc(std::span<const double> ax, std::span<const double> ay,
                              std::span<const double> az) {
  if (ax.size() != ay.size() || ax.size() != az.size()) {
    throw std::invalid_argument("total_acc: axis lengths differ");
  }
  if (ax.empty()) throw std::invalid_argument("total_acc: empty input");
  std::vector<double> out(ax.size());
  for (std::size_t i = 0; i < ax.size(); ++i) {
    out[i] = std::sqrt(ax[i] * ax[i] + ay[i] * ay[i] + az[i] * az[i]);
  }
  return out;
}

std::vector<double> diff_series(std::span<const double> total) {
  if (total.empty()) throw std::invalid_argument("diff_series: empty input");
  std::vector<double> out(total.size(), 0.0);
  for (std::size_t t = 1; t < total.size(); ++t) out[t] = total[t] - total[t - 1];
  return out;
}

std::vector<double> smooth_diff(std::span<const double> diff, std::size_t window) {
  if (window == 0) throw std::invalid_argument("smooth_diff: window must be >= 1");
  std::vector<double> out(diff.size(), 0.0);
  if (window == 1) {
    out.assign(diff.begin(), diff.end());
    return out;
  }
  // Summed per window: each output depends only on its own inputs.
  const auto n = static_cast<double>(window);
  for (std::size_t t = window - 1; t < diff.size(); ++t) {
    double sum = 0.0;
    for (std::size_t i = t + 1 - window; i <= t; ++i) sum += diff[i];
    out[t] = sum / n;
  }
  return out;
}

FeatureChannels build_channels(std::span<const AccSample> acc, std::size_t window) {
  if (acc.empty()) throw std::invalid_argument("build_channels: empty accelerometer series");
  FeatureChannels ch;
  ch.ax.reserve(acc.size());
  ch.ay.reserve(acc.size());
  ch.az.reserve(acc.size());
  for (const auto& s : acc) {
    ch.ax.push_back(s.ax);
    ch.ay.push_back(s.ay);
    ch.az.push_back(s.az);
  }
  ch.total = total_acc(ch.ax, ch.ay, ch.az);
  ch.smooth_diff = smooth_diff(diff_series(ch.total), window);
  return ch;
}

}  // namespace bowsense::accel
