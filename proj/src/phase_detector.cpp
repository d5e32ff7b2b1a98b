#include "bowsense/phase_detector.hpp"

#include <algorithm>
#include <stdexcept>

#include "bowsense/dataset.hpp"

namespace bowsense::phase {

std::vector<double> window_probabilities(const nn::LstmModel& model,
                                         const accel::FeatureChannels& channels, std::size_t win,
                                         std::size_t step) {
  return nn::lstm_predict(model, dataset::slide_windows(channels, win, step));
}

std::vector<std::uint8_t> threshold_labels(std::span<const double> probs, double threshold) {
  std::vector<std::uint8_t> labels(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) labels[i] = probs[i] > threshold ? 1 : 0;
  return labels;
}

std::vector<std::uint8_t> predict_stream(const nn::LstmModel& model,
                                         const accel::FeatureChannels& channels, std::size_t win,
                                         std::size_t step, double threshold) {
  return threshold_labels(window_probabilities(model, channels, win, step), threshold);
}

std::vector<DetectedEvent> merge_consecutive(std::span<const std::uint8_t> labels, std::size_t win,
                                             std::size_t step, std::span<const double> probs) {
  if (!probs.empty() && probs.size() != labels.size()) {
    throw std::invalid_argument("merge_consecutive: probabilities and labels differ in length");
  }
  std::vector<DetectedEvent> events;
  std::size_t i = 0;
  while (i < labels.size()) {
    if (!labels[i]) {
      ++i;
      continue;
    }
    const std::size_t first = i;
    double sum = 0.0;
    while (i < labels.size() && labels[i]) {
      if (!probs.empty()) sum += probs[i];
      ++i;
    }
    const std::size_t last = i - 1;
    const double mean = probs.empty() ? 0.0 : sum / static_cast<double>(i - first);
    events.push_back({first * step, last * step + win, mean});
  }
  return events;
}

std::vector<DetectedEvent> validate_durations(std::span<const DetectedEvent> events, double min_s,
                                              double max_s, double fs) {
  if (min_s > max_s) throw std::invalid_argument("validate_durations: min_s > max_s");
  if (!(fs > 0.0)) throw std::invalid_argument("validate_durations: fs must be > 0");
  std::vector<DetectedEvent> kept;
  for (const auto& e : events) {
    const double seconds = static_cast<double>(e.end_idx - e.start_idx) / fs;
    if (seconds >= min_s && seconds <= max_s) kept.push_back(e);
  }
  return kept;
}

std::vector<DetectedEvent> detect_events(const nn::LstmModel& model,
                                         const accel::FeatureChannels& channels,
                                         const DetectorConfig& cfg) {
  const auto probs = window_probabilities(model, channels, cfg.win, cfg.step);
  const auto labels = threshold_labels(probs, cfg.threshold);
  const auto merged = merge_consecutive(labels, cfg.win, cfg.step, probs);
  return validate_durations(merged, cfg.min_s, cfg.max_s, cfg.fs);
}

double iou(const Interval& a, const Interval& b) {
  const std::size_t lo = std::max(a.start, b.start);
  const std::size_t hi = std::min(a.end, b.end);
  const std::size_t inter = hi > lo ? hi - lo : 0;
  const std::size_t uni = (a.end - a.start) + (b.end - b.start) - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Matching match_events(std::span<const Interval> detected, std::span<const Interval> truth,
                      double iou_min) {
  for (const auto& iv : detected) {
    if (iv.end <= iv.start) throw std::invalid_argument("match_events: empty detected interval");
  }
  for (const auto& iv : truth) {
    if (iv.end <= iv.start) throw std::invalid_argument("match_events: empty truth interval");
  }

  std::vector<MatchPair> candidates;
  for (std::size_t d = 0; d < detected.size(); ++d) {
    for (std::size_t t = 0; t < truth.size(); ++t) {
      const double v = iou(detected[d], truth[t]);
      if (v >= iou_min && v > 0.0) candidates.push_back({d, t, v});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const MatchPair& a, const MatchPair& b) { return a.iou > b.iou; });

  Matching m;
  std::vector<bool> used_d(detected.size(), false);
  std::vector<bool> used_t(truth.size(), false);
  for (const auto& c : candidates) {
    if (used_d[c.detected] || used_t[c.truth]) continue;
    used_d[c.detected] = true;
    used_t[c.truth] = true;
    m.pairs.push_back(c);
  }
  return m;
}

}  // namespace bowsense::phase
