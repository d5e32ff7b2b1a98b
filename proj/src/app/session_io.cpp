#include "bowsense/app/session_io.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include "bowsense/io_util.hpp"

namespace fs = std::filesystem;

namespace bowsense::app {

IngestError::IngestError(const fs::path& file, std::size_t line, const std::string& message)
    : std::runtime_error(file.string() + ":" + std::to_string(line) + ": " + message), line_(line) {}

IngestError::IngestError(const fs::path& file, const std::string& message)
    : std::runtime_error(file.string() + ": " + message) {}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t from = 0;
  while (true) {
    const auto at = line.find(',', from);
    out.push_back(io::trim(line.substr(from, at == std::string_view::npos ? std::string_view::npos : at - from)));
    if (at == std::string_view::npos) break;
    from = at + 1;
  }
  return out;
}

// Calls row(fields, line_no) for every data line after the mandatory header.
void read_csv(const fs::path& file, const std::vector<std::string_view>& header,
              const std::function<void(const std::vector<std::string_view>&, std::size_t)>& row) {
  if (!fs::exists(file)) throw IngestError(file, "missing file");
  const std::string text = io::read_file(file);
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (io::trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (!seen_header) {
      if (cells != header) {
        std::string want;
        for (std::size_t i = 0; i < header.size(); ++i) want += (i ? "," : "") + std::string(header[i]);
        throw IngestError(file, line_no, "expected header '" + want + "'");
      }
      seen_header = true;
      continue;
    }
    if (cells.size() != header.size()) {
      throw IngestError(file, line_no,
                        "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(cells.size()));
    }
    row(cells, line_no);
  }
  if (!seen_header) throw IngestError(file, "empty file, header row is mandatory");
}

std::int64_t need_int(std::string_view cell, const fs::path& file, std::size_t line, const char* what) {
  const auto v = io::parse_int(cell);
  if (!v) throw IngestError(file, line, std::string(what) + " is not an integer: '" + std::string(cell) + "'");
  return *v;
}

double need_double(std::string_view cell, const fs::path& file, std::size_t line, const char* what) {
  const auto v = io::parse_double(cell);
  if (!v || !std::isfinite(*v)) {
    throw IngestError(file, line, std::string(what) + " is not a finite number: '" + std::string(cell) + "'");
  }
  return *v;
}

void check_time(std::optional<std::int64_t>& prev, std::int64_t t, bool strict, const fs::path& file,
                std::size_t line) {
  if (prev && (strict ? t <= *prev : t < *prev)) {
    throw IngestError(file, line,
                      "timestamp " + std::to_string(t) + " does not follow " + std::to_string(*prev) +
                          (strict ? " (must be strictly increasing)" : " (must be non-decreasing)"));
  }
  prev = t;
}

void read_meta(const fs::path& file, SessionRecording& s) {
  if (!fs::exists(file)) throw IngestError(file, "missing file");
  const std::string text = io::read_file(file);
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool subject = false;
  bool round = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = io::trim(line);
    if (body.empty()) continue;
    const auto colon = body.find(':');
    if (colon == std::string_view::npos) throw IngestError(file, line_no, "expected 'key: value'");
    const auto key = io::trim(body.substr(0, colon));
    const auto value = io::trim(body.substr(colon + 1));
    if (key == "subject_id") {
      s.subject_id = value;
      subject = true;
    } else if (key == "round_id") {
      s.round_id = value;
      round = true;
    } else if (key == "stress_report") {
      if (value.empty()) continue;
      const auto v = io::parse_int(value);
      if (!v || *v < 1 || *v > 5) throw IngestError(file, line_no, "stress_report must be an integer in 1..5");
      s.stress_report = static_cast<int>(*v);
    } else {
      throw IngestError(file, line_no, "unknown key '" + std::string(key) + "'");
    }
  }
  if (!subject) throw IngestError(file, "subject_id is missing");
  if (!round) throw IngestError(file, "round_id is missing");
}

}  // namespace

SessionRecording ingest(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IngestError(dir, "not a session directory");
  SessionRecording s;

  const auto acc_file = dir / kAccFile;
  std::optional<std::int64_t> prev;
  read_csv(acc_file, {"t_ms", "ax", "ay", "az"}, [&](const auto& c, std::size_t ln) {
    AccSample a;
    a.t_ms = need_int(c[0], acc_file, ln, "t_ms");
    check_time(prev, a.t_ms, true, acc_file, ln);
    a.ax = need_double(c[1], acc_file, ln, "ax");
    a.ay = need_double(c[2], acc_file, ln, "ay");
    a.az = need_double(c[3], acc_file, ln, "az");
    s.acc.push_back(a);
  });

  const auto ppg_file = dir / kPpgFile;
  prev.reset();
  read_csv(ppg_file, {"t_ms", "value"}, [&](const auto& c, std::size_t ln) {
    PpgSample p;
    p.t_ms = need_int(c[0], ppg_file, ln, "t_ms");
    check_time(prev, p.t_ms, true, ppg_file, ln);
    p.value = need_double(c[1], ppg_file, ln, "value");
    s.ppg.push_back(p);
  });

  const auto marker_file = dir / kMarkersFile;
  prev.reset();
  read_csv(marker_file, {"t_ms", "kind"}, [&](const auto& c, std::size_t ln) {
    EventMarker m;
    m.t_ms = need_int(c[0], marker_file, ln, "t_ms");
    check_time(prev, m.t_ms, false, marker_file, ln);
    const auto kind = parse_marker_kind(c[1]);
    if (!kind) throw IngestError(marker_file, ln, "unknown marker kind '" + std::string(c[1]) + "'");
    m.kind = *kind;
    s.markers.push_back(m);
  });

  read_meta(dir / kMetaFile, s);
  if (s.acc.empty()) throw IngestError(acc_file, "no samples");
  if (s.ppg.empty()) throw IngestError(ppg_file, "no samples");
  try {
    validate(s);
  } catch (const std::invalid_argument& e) {
    throw IngestError(dir, e.what());
  }
  return s;
}

void export_session(const fs::path& dir, const SessionRecording& s) {
  std::string acc = "t_ms,ax,ay,az\n";
  for (const auto& a : s.acc) {
    acc += std::to_string(a.t_ms) + ',' + io::format_double(a.ax) + ',' + io::format_double(a.ay) + ',' +
           io::format_double(a.az) + '\n';
  }
  std::string ppg = "t_ms,value\n";
  for (const auto& p : s.ppg) ppg += std::to_string(p.t_ms) + ',' + io::format_double(p.value) + '\n';
  std::string markers = "t_ms,kind\n";
  for (const auto& m : s.markers) markers += std::to_string(m.t_ms) + ',' + std::string(to_string(m.kind)) + '\n';
  std::string meta = "subject_id: " + s.subject_id + "\nround_id: " + s.round_id + '\n';
  if (s.stress_report) meta += "stress_report: " + std::to_string(*s.stress_report) + '\n';

  io::write_file_atomic(dir / kAccFile, acc);
  io::write_file_atomic(dir / kPpgFile, ppg);
  io::write_file_atomic(dir / kMarkersFile, markers);
  io::write_file_atomic(dir / kMetaFile, meta);
}

std::vector<std::string> list_sessions(const fs::path& data_dir) {
  if (!fs::is_directory(data_dir)) throw std::runtime_error("data directory " + data_dir.string() + " does not exist");
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(data_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / kAccFile)) ids.push_back(entry.path().filename().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

nlohmann::ordered_json annotation_json(const std::string& session_id, const ShotAnnotation& a) {
  return {{"session_id", session_id}, {"b1", a.b1}, {"b2", a.b2}, {"b3", a.b3}, {"b4", a.b4}};
}

ShotAnnotation parse_annotation(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("annotation must be a JSON object");
  const auto field = [&](const char* name) -> std::size_t {
    if (!j.contains(name)) throw std::invalid_argument(std::string(name) + " is missing");
    const auto& v = j.at(name);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw std::invalid_argument(std::string(name) + " must be a non-negative integer");
    }
    return v.get<std::size_t>();
  };
  return {field("b1"), field("b2"), field("b3"), field("b4")};
}

std::string annotations_to_text(const std::string& session_id, const std::vector<ShotAnnotation>& shots) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& a : shots) arr.push_back(annotation_json(session_id, a));
  return arr.dump(2) + '\n';
}

std::vector<ShotAnnotation> load_annotations(const fs::path& session_dir) {
  const auto file = session_dir / kLabelsFile;
  if (!fs::exists(file)) return {};
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(file));
  } catch (const nlohmann::json::parse_error& e) {
    throw IngestError(file, e.what());
  }
  if (!j.is_array()) throw IngestError(file, "expected a JSON array");
  std::vector<ShotAnnotation> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    try {
      out.push_back(parse_annotation(j[i]));
    } catch (const std::invalid_argument& e) {
      throw IngestError(file, "entry " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

void save_annotations(const fs::path& session_dir, const std::string& session_id,
                      const std::vector<ShotAnnotation>& shots) {
  io::write_file_atomic(session_dir / kLabelsFile, annotations_to_text(session_id, shots));
}

nlohmann::ordered_json detected_events_json(const std::string& session_id,
                                            const std::vector<phase::DetectedEvent>& events) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : events) {
    arr.push_back({{"session_id", session_id},
                   {"b1", e.start_idx},
                   {"b2", nullptr},
                   {"b3", nullptr},
                   {"b4", e.end_idx},
                   {"mean_prob", e.mean_prob},
                   {"source", "model"}});
  }
  return arr;
}

std::size_t sample_index_at(const SessionRecording& s, std::int64_t t_ms) {
  if (s.acc.empty()) return 0;
  const auto it = std::lower_bound(s.acc.begin(), s.acc.end(), t_ms,
                                   [](const AccSample& a, std::int64_t t) { return a.t_ms < t; });
  if (it == s.acc.end()) return s.acc.size() - 1;
  return static_cast<std::size_t>(it - s.acc.begin());
}

}  // namespace bowsense::app
