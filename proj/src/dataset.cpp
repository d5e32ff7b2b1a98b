#include "bowsense/dataset.hpp"

namespace bowsense::dataset {

std::vector<std::size_t> window_offsets(std::size_t length, std::size_t win, std::size_t step) {
  if (win == 0 || step == 0) throw std::invalid_argument("window and step must be >= 1");
  if (length < win) {
    throw std::invalid_argument("series of length " + std::to_string(length) +
                                " is shorter than the window " + std::to_string(win));
  }
  std::vector<std::size_t> offsets;
  for (std::size_t s = 0; s + win <= length; s += step) offsets.push_back(s);
  return offsets;
}

Eigen::MatrixXd window_at(const accel::FeatureChannels& channels, std::size_t start,
                          std::size_t win) {
  if (start + win > channels.size()) throw std::out_of_range("window exceeds the series");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(win), static_cast<Eigen::Index>(accel::kChannelCount));
  for (std::size_t t = 0; t < win; ++t) {
    for (std::size_t c = 0; c < accel::kChannelCount; ++c) {
      m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = channels.at(start + t, c);
    }
  }
  return m;
}

std::vector<Eigen::MatrixXd> slide_windows(const accel::FeatureChannels& channels,
                                           std::size_t win, std::size_t step) {
  std::vector<Eigen::MatrixXd> out;
  for (auto s : window_offsets(channels.size(), win, step)) out.push_back(window_at(channels, s, win));
  return out;
}

int label_window(std::size_t start, std::size_t win, std::span<const std::uint8_t> mask) {
  if (start + win > mask.size()) throw std::out_of_range("label_window: window exceeds the mask");
  std::size_t positives = 0;
  for (std::size_t i = start; i < start + win; ++i) positives += mask[i] ? 1 : 0;
  return 2 * positives > win ? 1 : 0;
}

std::vector<WindowSample> motion_samples(const std::string& session_id,
                                         const accel::FeatureChannels& channels,
                                         std::span<const ShotAnnotation> annotations,
                                         std::size_t win, std::size_t step) {
  const auto mask = positive_mask(annotations, channels.size());
  std::vector<WindowSample> out;
  for (auto s : window_offsets(channels.size(), win, step)) {
    out.push_back({window_at(channels, s, win), label_window(s, win, mask), session_id, s});
  }
  return out;
}

int binarize_stress(int likert) {
  if (likert < 1 || likert > 5) {
    throw std::invalid_argument("stress report " + std::to_string(likert) + " outside 1..5");
  }
  return likert >= 4 ? 1 : 0;
}

StressWindows stress_windows(const std::string& session_id, const SessionRecording& session,
                             std::span<const ShotAnnotation> annotations, const ppg::RRSeries& rr) {
  if (!session.stress_report) {
    throw std::invalid_argument("session " + session_id + " has no stress report");
  }
  const int label = binarize_stress(*session.stress_report);
  StressWindows out;
  if (session.ppg.empty()) {
    out.skipped = annotations.size();
    return out;
  }
  const std::int64_t recording_end = session.ppg.back().t_ms;

  for (const auto& a : annotations) {
    if (a.b1 >= session.acc.size()) throw std::out_of_range("annotation outside the acc series");
    const std::int64_t start = session.acc[a.b1].t_ms;
    const std::int64_t end = start + kStressWindowMs;
    if (end > recording_end) {
      ++out.skipped;
      continue;
    }
    auto inside = [&](std::size_t peak) {
      const std::int64_t t = session.ppg.at(peak).t_ms;
      return t >= start && t < end;
    };
    std::vector<double> intervals;
    for (std::size_t i = 0; i < rr.intervals_ms.size(); ++i) {
      if (inside(rr.peak_indices[i]) || inside(rr.peak_indices[i + 1])) {
        intervals.push_back(rr.intervals_ms[i]);
      }
    }
    try {
      out.samples.push_back({hrv::extract_all(intervals), label, session_id, start});
    } catch (const std::invalid_argument&) {
      ++out.skipped;
    }
  }
  return out;
}

}  // namespace bowsense::dataset
