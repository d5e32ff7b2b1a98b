#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bowsense/core_types.hpp"
#include "bowsense/phase_detector.hpp"

namespace bowsense::app {

/// Ingestion failure. what() carries the file and, where known, the line.
class IngestError : public std::runtime_error {
 public:
  IngestError(const std::filesystem::path& file, std::size_t line, const std::string& message);
  IngestError(const std::filesystem::path& file, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

inline constexpr const char* kAccFile = "acc.csv";
inline constexpr const char* kPpgFile = "ppg.csv";
inline constexpr const char* kMarkersFile = "markers.csv";
inline constexpr const char* kMetaFile = "meta.txt";
inline constexpr const char* kLabelsFile = "labels.json";

/// Reads acc.csv, ppg.csv, markers.csv and meta.txt from a session directory.
SessionRecording ingest(const std::filesystem::path& dir);

/// Writes the four ingestion files; ingest() of the result returns an equal
/// recording.
void export_session(const std::filesystem::path& dir, const SessionRecording& session);

/// Session directories under data_dir (those holding an acc.csv), sorted by
/// name. The directory name is the session id.
std::vector<std::string> list_sessions(const std::filesystem::path& data_dir);

struct LabeledShot {
  std::string session_id;
  ShotAnnotation shot;
};

nlohmann::ordered_json annotation_json(const std::string& session_id, const ShotAnnotation& a);
/// Parses one {session_id?, b1, b2, b3, b4} object. Fields must be
/// non-negative integers.
ShotAnnotation parse_annotation(const nlohmann::json& j);

std::string annotations_to_text(const std::string& session_id, const std::vector<ShotAnnotation>& shots);
/// Missing file means no annotations.
std::vector<ShotAnnotation> load_annotations(const std::filesystem::path& session_dir);
void save_annotations(const std::filesystem::path& session_dir, const std::string& session_id,
                      const std::vector<ShotAnnotation>& shots);

/// Model-detected events in the annotation shape. Only the draw onset and
/// release end are known, so b2 and b3 are null.
nlohmann::ordered_json detected_events_json(const std::string& session_id,
                                            const std::vector<phase::DetectedEvent>& events);

/// Index of the first accelerometer sample at or after t_ms, clamped to the
/// last sample.
std::size_t sample_index_at(const SessionRecording& session, std::int64_t t_ms);

}  // namespace bowsense::app
