#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bowsense/accel_features.hpp"
#include "bowsense/lstm.hpp"

namespace bowsense::phase {

struct DetectedEvent {
  std::size_t start_idx = 0;
  std::size_t end_idx = 0;  // exclusive
  double mean_prob = 0.0;

  friend bool operator==(const DetectedEvent&, const DetectedEvent&) = default;
};

struct DetectorConfig {
  std::size_t win = 80;
  std::size_t step = 20;
  double threshold = 0.9;
  double min_s = 1.0;
  double max_s = 8.0;
  double fs = 20.0;
};

/// Model probability for every sliding window of the stream.
std::vector<double> window_probabilities(const nn::LstmModel& model,
                                         const accel::FeatureChannels& channels,
                                         std::size_t win = 80, std::size_t step = 20);

/// 1 where the probability is strictly above the threshold.
std::vector<std::uint8_t> threshold_labels(std::span<const double> probs, double threshold = 0.9);

std::vector<std::uint8_t> predict_stream(const nn::LstmModel& model,
                                         const accel::FeatureChannels& channels,
                                         std::size_t win = 80, std::size_t step = 20,
                                         double threshold = 0.9);

/// Each maximal run of positive windows becomes one event spanning
/// [first start, last start + win). mean_prob averages `probs` over the run,
/// and is 0 when no probabilities are supplied.
std::vector<DetectedEvent> merge_consecutive(std::span<const std::uint8_t> labels, std::size_t win,
                                             std::size_t step, std::span<const double> probs = {});

/// Keeps events lasting between min_s and max_s seconds, bounds inclusive.
std::vector<DetectedEvent> validate_durations(std::span<const DetectedEvent> events, double min_s = 1.0,
                                              double max_s = 8.0, double fs = 20.0);

/// All four steps: windowing, thresholding, merging, duration filtering.
std::vector<DetectedEvent> detect_events(const nn::LstmModel& model,
                                         const accel::FeatureChannels& channels,
                                         const DetectorConfig& cfg = {});

struct Interval {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
};

double iou(const Interval& a, const Interval& b);

struct MatchPair {
  std::size_t detected = 0;
  std::size_t truth = 0;
  double iou = 0.0;
};

struct Matching {
  std::vector<MatchPair> pairs;  // hits only, in the order they were matched
  std::size_t hits() const { return pairs.size(); }
};

/// Greedy one-to-one matching by descending IoU; only pairs reaching iou_min
/// are kept.
Matching match_events(std::span<const Interval> detected, std::span<const Interval> truth,
                      double iou_min = 0.5);

}  // namespace bowsense::phase
