#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bowsense/accel_features.hpp"
#include "bowsense/core_types.hpp"
#include "bowsense/hrv_features.hpp"
#include "bowsense/ppg_pipeline.hpp"

namespace bowsense::dataset {

inline constexpr std::size_t kDefaultWindow = 80;
inline constexpr std::size_t kDefaultStep = 20;
inline constexpr std::int64_t kStressWindowMs = 30000;

/// window_len x 5 block of channels (ax, ay, az, total, smooth_diff).
struct WindowSample {
  Eigen::MatrixXd features;
  int label = 0;
  std::string session_id;
  std::size_t start = 0;
};

struct StressSample {
  hrv::HrvFeatureVector features;
  int label = 0;
  std::string session_id;
  std::int64_t start_ms = 0;
};

/// Window start offsets 0, step, 2*step, ... that fit in `length`.
std::vector<std::size_t> window_offsets(std::size_t length, std::size_t win = kDefaultWindow,
                                        std::size_t step = kDefaultStep);

/// Copies channels [start, start + win) into a win x 5 matrix.
Eigen::MatrixXd window_at(const accel::FeatureChannels& channels, std::size_t start,
                          std::size_t win = kDefaultWindow);

std::vector<Eigen::MatrixXd> slide_windows(const accel::FeatureChannels& channels,
                                           std::size_t win = kDefaultWindow,
                                           std::size_t step = kDefaultStep);

/// 1 iff strictly more than half of mask[start, start + win) is positive.
int label_window(std::size_t start, std::size_t win, std::span<const std::uint8_t> mask);

/// Every window of one session, labelled against its annotations.
std::vector<WindowSample> motion_samples(const std::string& session_id,
                                         const accel::FeatureChannels& channels,
                                         std::span<const ShotAnnotation> annotations,
                                         std::size_t win = kDefaultWindow,
                                         std::size_t step = kDefaultStep);

/// Likert 1..3 -> 0 (low), 4..5 -> 1 (high).
int binarize_stress(int likert);

struct StressWindows {
  std::vector<StressSample> samples;
  std::size_t skipped = 0;
};

/// One 30 s window per annotated shot, anchored at the draw start. Intervals
/// with either bounding peak inside the window contribute. Shots whose window
/// runs past the end of the PPG recording, or whose window holds too few beats
/// for the feature bank, are skipped and counted.
StressWindows stress_windows(const std::string& session_id, const SessionRecording& session,
                             std::span<const ShotAnnotation> annotations, const ppg::RRSeries& rr);

namespace detail {

template <typename Sample>
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> by_label(
    const std::vector<Sample>& samples) {
  std::vector<std::size_t> neg;
  std::vector<std::size_t> pos;
  for (std::size_t i = 0; i < samples.size(); ++i) (samples[i].label ? pos : neg).push_back(i);
  return {std::move(neg), std::move(pos)};
}

}  // namespace detail

/// Balances classes 1:1. The majority is randomly under-sampled to at most
/// twice the minority count and the minority is duplicated up to the same
/// count. Every output sample is a copy of an input sample.
template <typename Sample>
std::vector<Sample> rebalance(const std::vector<Sample>& samples, std::uint64_t seed) {
  auto [neg, pos] = detail::by_label(samples);
  if (neg.empty() || pos.empty()) throw std::invalid_argument("rebalance: a class is empty");

  std::mt19937_64 rng(seed);
  auto& minority = pos.size() <= neg.size() ? pos : neg;
  auto& majority = pos.size() <= neg.size() ? neg : pos;
  const std::size_t target = std::min(majority.size(), 2 * minority.size());

  std::shuffle(majority.begin(), majority.end(), rng);
  majority.resize(target);

  std::vector<std::size_t> grown;
  grown.reserve(target);
  while (grown.size() + minority.size() <= target) {
    grown.insert(grown.end(), minority.begin(), minority.end());
  }
  if (grown.size() < target) {
    auto extra = minority;
    std::shuffle(extra.begin(), extra.end(), rng);
    grown.insert(grown.end(), extra.begin(),
                 extra.begin() + static_cast<std::ptrdiff_t>(target - grown.size()));
  }

  std::vector<std::size_t> order = majority;
  order.insert(order.end(), grown.begin(), grown.end());
  std::sort(order.begin(), order.end());
  std::vector<Sample> out;
  out.reserve(order.size());
  for (auto i : order) out.push_back(samples[i]);
  return out;
}

template <typename Sample>
struct Split {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

/// Stratified shuffle split; |train| = round(ratio * N) and each class is
/// split at ratio to within one sample.
template <typename Sample>
Split<Sample> split(const std::vector<Sample>& samples, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split: ratio must be in (0, 1)");
  if (samples.size() < 2) throw std::invalid_argument("split: need at least 2 samples");
  auto [neg, pos] = detail::by_label(samples);
  if (neg.empty() || pos.empty()) {
    throw std::invalid_argument("split: stratification needs both classes");
  }

  std::mt19937_64 rng(seed);
  std::shuffle(neg.begin(), neg.end(), rng);
  std::shuffle(pos.begin(), pos.end(), rng);

  const auto total = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(samples.size())));
  const double exact_neg = ratio * static_cast<double>(neg.size());
  const double exact_pos = ratio * static_cast<double>(pos.size());
  std::size_t take_neg = static_cast<std::size_t>(std::floor(exact_neg));
  std::size_t take_pos = static_cast<std::size_t>(std::floor(exact_pos));
  // Hand out the remainder by largest fractional part, negatives first on ties.
  while (take_neg + take_pos < total) {
    const double gap_neg = exact_neg - static_cast<double>(take_neg);
    const double gap_pos = exact_pos - static_cast<double>(take_pos);
    if (gap_neg >= gap_pos && take_neg < neg.size()) {
      ++take_neg;
    } else if (take_pos < pos.size()) {
      ++take_pos;
    } else {
      ++take_neg;
    }
  }

  std::vector<bool> in_train(samples.size(), false);
  for (std::size_t i = 0; i < take_neg; ++i) in_train[neg[i]] = true;
  for (std::size_t i = 0; i < take_pos; ++i) in_train[pos[i]] = true;

  Split<Sample> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (in_train[i] ? out.train : out.test).push_back(samples[i]);
  }
  return out;
}

}  // namespace bowsense::dataset
