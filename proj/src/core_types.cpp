#include "bowsense/core_types.hpp"

#include <algorithm>
#include <stdexcept>

namespace bowsense {

std::string_view to_string(MarkerKind kind) {
  switch (kind) {
    case MarkerKind::ExpStart: return "ExpStart";
    case MarkerKind::ExpEnd: return "ExpEnd";
    case MarkerKind::Draw: return "Draw";
    case MarkerKind::Release: return "Release";
  }
  return "?";
}

std::optional<MarkerKind> parse_marker_kind(std::string_view text) {
  for (auto k : {MarkerKind::ExpStart, MarkerKind::ExpEnd, MarkerKind::Draw,
                 MarkerKind::Release}) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::Draw: return "Draw";
    case Phase::Aim: return "Aim";
    case Phase::Release: return "Release";
  }
  return "?";
}

namespace {

template <typename Sample>
void check_increasing(const std::vector<Sample>& series, const char* name) {
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (series[i].t_ms <= series[i - 1].t_ms) {
      throw std::invalid_argument(std::string(name) + ": timestamp at sample " +
                                  std::to_string(i) + " is not strictly increasing");
    }
  }
}

}  // namespace

void validate(const SessionRecording& session) {
  check_increasing(session.acc, "acc");
  check_increasing(session.ppg, "ppg");

  if (!session.acc.empty() && !session.ppg.empty()) {
    const bool overlap = session.acc.front().t_ms <= session.ppg.back().t_ms &&
                         session.ppg.front().t_ms <= session.acc.back().t_ms;
    if (!overlap) throw std::invalid_argument("acc and ppg time ranges do not overlap");
  }

  if (session.stress_report && (*session.stress_report < 1 || *session.stress_report > 5)) {
    throw std::invalid_argument("stress_report must be in 1..5");
  }

  std::optional<std::int64_t> start;
  std::optional<std::int64_t> end;
  for (const auto& m : session.markers) {
    if (m.kind == MarkerKind::ExpStart && !start) start = m.t_ms;
    if (m.kind == MarkerKind::ExpEnd) end = m.t_ms;
  }
  for (const auto& m : session.markers) {
    if (m.kind != MarkerKind::Draw && m.kind != MarkerKind::Release) continue;
    if (start && m.t_ms < *start) {
      throw std::invalid_argument("marker " + std::string(to_string(m.kind)) + " at " +
                                  std::to_string(m.t_ms) + " ms precedes ExpStart");
    }
    if (end && m.t_ms > *end) {
      throw std::invalid_argument("marker " + std::string(to_string(m.kind)) + " at " +
                                  std::to_string(m.t_ms) + " ms follows ExpEnd");
    }
  }
}

std::optional<std::string> annotation_violation(const ShotAnnotation& a, std::size_t series_len) {
  if (!(a.b1 < a.b2)) return "b1 < b2 violated";
  if (!(a.b2 < a.b3)) return "b2 < b3 violated";
  if (!(a.b3 < a.b4)) return "b3 < b4 violated";
  // b4 is itself a clicked sample, so it must exist in the series.
  if (series_len != 0 && a.b4 >= series_len) return "b4 must be < series length";
  return std::nullopt;
}

std::vector<PhaseSegment> annotation_to_segments(const ShotAnnotation& a) {
  if (auto why = annotation_violation(a)) throw std::invalid_argument("invalid annotation: " + *why);
  return {{Phase::Draw, a.b1, a.b2}, {Phase::Aim, a.b2, a.b3}, {Phase::Release, a.b3, a.b4}};
}

ShotAnnotation segments_to_annotation(std::span<const PhaseSegment> segments) {
  if (segments.size() != 3 || segments[0].phase != Phase::Draw || segments[1].phase != Phase::Aim ||
      segments[2].phase != Phase::Release) {
    throw std::invalid_argument("expected Draw, Aim, Release segments");
  }
  if (segments[0].end_idx != segments[1].start_idx || segments[1].end_idx != segments[2].start_idx) {
    throw std::invalid_argument("segments are not contiguous");
  }
  ShotAnnotation a{segments[0].start_idx, segments[1].start_idx, segments[2].start_idx,
                   segments[2].end_idx};
  if (auto why = annotation_violation(a)) throw std::invalid_argument("invalid segments: " + *why);
  return a;
}

std::vector<std::uint8_t> positive_mask(std::span<const ShotAnnotation> annotations,
                                        std::size_t series_len) {
  std::vector<std::uint8_t> mask(series_len, 0);
  for (const auto& a : annotations) {
    if (auto why = annotation_violation(a, series_len)) {
      throw std::invalid_argument("invalid annotation: " + *why);
    }
    for (std::size_t i = a.b1; i < a.b4; ++i) {
      if (mask[i]) {
        throw std::invalid_argument("overlapping annotations at index " + std::to_string(i));
      }
      mask[i] = 1;
    }
  }
  return mask;
}

}  // namespace bowsense
