#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bowsense {

/// One accelerometer reading. Axis values are raw sensor units.
struct AccSample {
  std::int64_t t_ms = 0;
  double ax = 0.0;
  double ay = 0.0;
  double az = 0.0;

  friend bool operator==(const AccSample&, const AccSample&) = default;
};

struct PpgSample {
  std::int64_t t_ms = 0;
  double value = 0.0;

  friend bool operator==(const PpgSample&, const PpgSample&) = default;
};

enum class MarkerKind { ExpStart, ExpEnd, Draw, Release };

std::string_view to_string(MarkerKind kind);
std::optional<MarkerKind> parse_marker_kind(std::string_view text);

struct EventMarker {
  std::int64_t t_ms = 0;
  MarkerKind kind = MarkerKind::ExpStart;

  friend bool operator==(const EventMarker&, const EventMarker&) = default;
};

/// One shooting round of one athlete. The stress report is the 1..5 Likert
/// answer given at the end of the round; one report covers every arrow of it.
struct SessionRecording {
  std::string subject_id;
  std::string round_id;
  std::vector<AccSample> acc;
  std::vector<PpgSample> ppg;
  std::vector<EventMarker> markers;
  std::optional<int> stress_report;

  friend bool operator==(const SessionRecording&, const SessionRecording&) = default;
};

/// Checks timestamp monotonicity, marker ordering and the stress range.
/// Throws std::invalid_argument naming the first violation.
void validate(const SessionRecording& session);

/// Four annotation clicks, as sample indices into the accelerometer series:
/// draw = [b1, b2), aim = [b2, b3), release = [b3, b4).
struct ShotAnnotation {
  std::size_t b1 = 0;
  std::size_t b2 = 0;
  std::size_t b3 = 0;
  std::size_t b4 = 0;

  friend bool operator==(const ShotAnnotation&, const ShotAnnotation&) = default;
};

/// Empty when the annotation is well formed, otherwise the violated
/// invariant in words. A series_len of 0 skips the bounds check.
std::optional<std::string> annotation_violation(const ShotAnnotation& a,
                                                std::size_t series_len = 0);

enum class Phase { Draw, Aim, Release };

std::string_view to_string(Phase phase);

struct PhaseSegment {
  Phase phase = Phase::Draw;
  std::size_t start_idx = 0;
  std::size_t end_idx = 0;

  friend bool operator==(const PhaseSegment&, const PhaseSegment&) = default;
};

std::vector<PhaseSegment> annotation_to_segments(const ShotAnnotation& a);

/// Inverse of annotation_to_segments.
ShotAnnotation segments_to_annotation(std::span<const PhaseSegment> segments);

/// Point-level draw-to-release membership: mask[i] = 1 iff b1 <= i < b4 for
/// some annotation. Overlapping annotations are rejected.
std::vector<std::uint8_t> positive_mask(std::span<const ShotAnnotation> annotations,
                                        std::size_t series_len);

}  // namespace bowsense
