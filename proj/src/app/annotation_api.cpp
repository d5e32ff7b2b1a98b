#include "bowsense/app/annotation_api.hpp"

#include <algorithm>
#include <mutex>

#include <json.hpp>

#include "bowsense/app/session_io.hpp"
#include "bowsense/io_util.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a macro that
// collides with Eigen parameter names.
#include <httplib.h>

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace bowsense::app {

struct AnnotationService::Entry {
  std::string id;
  fs::path dir;
  SessionRecording recording;
  accel::FeatureChannels channels;
  std::vector<ShotAnnotation> annotations;
  mutable std::shared_mutex mu;
};

namespace {

ApiResponse json_response(int status, const ordered_json& j) { return {status, j.dump()}; }

ApiResponse error(int status, const std::string& message) {
  return json_response(status, {{"error", message}});
}

ApiResponse invalid(const std::string& invariant) {
  return json_response(422, {{"error", "invalid annotation"}, {"invariant", invariant}});
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t from = 0;
  while (from <= path.size()) {
    const auto at = path.find('/', from);
    const auto piece = path.substr(from, at == std::string::npos ? std::string::npos : at - from);
    if (!piece.empty()) parts.push_back(piece);
    if (at == std::string::npos) break;
    from = at + 1;
  }
  return parts;
}

std::optional<std::int64_t> query_int(const std::map<std::string, std::string>& q, const char* key) {
  const auto it = q.find(key);
  if (it == q.end()) return std::nullopt;
  const auto v = io::parse_int(it->second);
  if (!v) throw std::invalid_argument(std::string(key) + " must be an integer");
  return v;
}

}  // namespace

AnnotationService::AnnotationService(fs::path data_dir, std::size_t smooth_window) : data_dir_(std::move(data_dir)) {
  for (const auto& id : app::list_sessions(data_dir_)) {
    auto e = std::make_unique<Entry>();
    e->id = id;
    e->dir = data_dir_ / id;
    e->recording = ingest(e->dir);
    e->channels = accel::build_channels(e->recording.acc, smooth_window);
    e->annotations = load_annotations(e->dir);
    sessions_.emplace(id, std::move(e));
  }
}

AnnotationService::~AnnotationService() = default;

AnnotationService::Entry* AnnotationService::find(const std::string& id) const {
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second.get();
}

std::vector<std::string> AnnotationService::session_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, e] : sessions_) ids.push_back(id);
  return ids;
}

ApiResponse AnnotationService::list_sessions() const {
  ordered_json arr = ordered_json::array();
  for (const auto& [id, e] : sessions_) {
    std::shared_lock lock(e->mu);
    const auto draws = std::count_if(e->recording.markers.begin(), e->recording.markers.end(),
                                     [](const EventMarker& m) { return m.kind == MarkerKind::Draw; });
    arr.push_back({{"session_id", id},
                   {"subject_id", e->recording.subject_id},
                   {"round_id", e->recording.round_id},
                   {"samples", e->recording.acc.size()},
                   {"draw_markers", draws},
                   {"annotations", e->annotations.size()}});
  }
  return json_response(200, arr);
}

ApiResponse AnnotationService::waveform(const std::string& id, const std::map<std::string, std::string>& query) const {
  const Entry* e = find(id);
  if (e == nullptr) return error(404, "unknown session '" + id + "'");
  const auto n = static_cast<std::int64_t>(e->recording.acc.size());

  std::optional<std::int64_t> start;
  std::optional<std::int64_t> end;
  std::optional<std::int64_t> draw_idx;
  try {
    start = query_int(query, "start");
    end = query_int(query, "end");
    if (start.has_value() != end.has_value()) return error(400, "start and end must be given together");
    if (!start) {
      const auto k = query_int(query, "draw").value_or(0);
      std::vector<std::int64_t> draws;
      for (const auto& m : e->recording.markers) {
        if (m.kind == MarkerKind::Draw) draws.push_back(static_cast<std::int64_t>(sample_index_at(e->recording, m.t_ms)));
      }
      if (draws.empty()) {
        start = 0;
        end = static_cast<std::int64_t>(kSliceBefore + kSliceAfter);
      } else {
        if (k < 0 || k >= static_cast<std::int64_t>(draws.size())) {
          return error(400, "draw must be in 0.." + std::to_string(draws.size() - 1));
        }
        draw_idx = draws[static_cast<std::size_t>(k)];
        start = *draw_idx - static_cast<std::int64_t>(kSliceBefore);
        end = *draw_idx + static_cast<std::int64_t>(kSliceAfter);
      }
    }
  } catch (const std::invalid_argument& ex) {
    return error(400, ex.what());
  }
  const std::int64_t lo = std::clamp<std::int64_t>(*start, 0, n);
  const std::int64_t hi = std::clamp<std::int64_t>(*end, lo, n);

  const auto column = [&](std::size_t c) {
    ordered_json arr = ordered_json::array();
    for (auto i = lo; i < hi; ++i) arr.push_back(e->channels.at(static_cast<std::size_t>(i), c));
    return arr;
  };
  ordered_json times = ordered_json::array();
  for (auto i = lo; i < hi; ++i) times.push_back(e->recording.acc[static_cast<std::size_t>(i)].t_ms);

  ordered_json markers = ordered_json::array();
  for (const auto& m : e->recording.markers) {
    const auto idx = static_cast<std::int64_t>(sample_index_at(e->recording, m.t_ms));
    if (idx >= lo && idx < hi) markers.push_back({{"t_ms", m.t_ms}, {"kind", to_string(m.kind)}, {"index", idx}});
  }

  ordered_json shots = ordered_json::array();
  {
    std::shared_lock lock(e->mu);
    for (const auto& a : e->annotations) {
      if (static_cast<std::int64_t>(a.b1) < hi && static_cast<std::int64_t>(a.b4) > lo) {
        shots.push_back(annotation_json(id, a));
      }
    }
  }

  ordered_json body = {{"session_id", id},
                       {"start", lo},
                       {"end", hi},
                       {"draw_index", draw_idx ? ordered_json(*draw_idx) : ordered_json(nullptr)},
                       {"t_ms", times},
                       {"channels",
                        {{"ax", column(0)},
                         {"ay", column(1)},
                         {"az", column(2)},
                         {"total", column(3)},
                         {"smooth_diff", column(4)}}},
                       {"markers", markers},
                       {"annotations", shots}};
  return json_response(200, body);
}

ApiResponse AnnotationService::annotations(const std::string& id) const {
  const Entry* e = find(id);
  if (e == nullptr) return error(404, "unknown session '" + id + "'");
  std::shared_lock lock(e->mu);
  ordered_json arr = ordered_json::array();
  for (const auto& a : e->annotations) arr.push_back(annotation_json(id, a));
  return json_response(200, arr);
}

ApiResponse AnnotationService::post_annotation(const std::string& id, const std::string& body) {
  Entry* e = find(id);
  if (e == nullptr) return error(404, "unknown session '" + id + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error&) {
    return error(400, "body is not valid JSON");
  }
  ShotAnnotation a;
  try {
    a = parse_annotation(j);
  } catch (const std::invalid_argument& ex) {
    return invalid(ex.what());
  }
  if (j.contains("session_id") && j["session_id"] != id) return invalid("session_id must match the URL");
  if (auto why = annotation_violation(a, e->recording.acc.size())) return invalid(*why);

  std::unique_lock lock(e->mu);
  for (const auto& other : e->annotations) {
    if (a.b1 < other.b4 && other.b1 < a.b4) {
      return invalid("overlaps existing annotation [" + std::to_string(other.b1) + ", " + std::to_string(other.b4) + ")");
    }
  }
  auto next = e->annotations;
  next.push_back(a);
  std::sort(next.begin(), next.end(), [](const ShotAnnotation& x, const ShotAnnotation& y) { return x.b1 < y.b1; });
  try {
    save_annotations(e->dir, id, next);
  } catch (const std::exception& ex) {
    return error(500, std::string("could not persist annotation: ") + ex.what());
  }
  e->annotations = std::move(next);
  return json_response(200, annotation_json(id, a));
}

ApiResponse AnnotationService::export_annotations() const {
  ordered_json arr = ordered_json::array();
  for (const auto& [id, e] : sessions_) {
    std::shared_lock lock(e->mu);
    for (const auto& a : e->annotations) arr.push_back(annotation_json(id, a));
  }
  return json_response(200, arr);
}

ApiResponse AnnotationService::handle(const std::string& method, const std::string& path,
                                      const std::map<std::string, std::string>& query, const std::string& body) {
  const auto parts = split_path(path);
  if (parts.empty() || parts[0] != "api") return error(404, "no route for " + path);
  if (parts.size() == 2 && parts[1] == "annotations" && method == "GET") return export_annotations();
  if (parts.size() >= 2 && parts[1] == "sessions") {
    if (parts.size() == 2 && method == "GET") return list_sessions();
    if (parts.size() == 4 && parts[3] == "waveform" && method == "GET") return waveform(parts[2], query);
    if (parts.size() == 4 && parts[3] == "annotations") {
      if (method == "GET") return annotations(parts[2]);
      if (method == "POST") return post_annotation(parts[2], body);
      return error(405, "method not allowed");
    }
  }
  return error(404, "no route for " + method + " " + path);
}

struct HttpServer::Impl {
  explicit Impl(AnnotationService& s) : service(s) {}
  AnnotationService& service;
  httplib::Server server;
};

HttpServer::HttpServer(AnnotationService& service) : impl_(std::make_unique<Impl>(service)) {
  const auto forward = [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    const auto out = impl_->service.handle(req.method, req.path, query, req.body);
    res.status = out.status;
    res.set_content(out.body, "application/json");
  };
  impl_->server.Get(R"(/api/.*)", forward);
  impl_->server.Post(R"(/api/.*)", forward);
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw std::runtime_error("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

bool HttpServer::mount_static(const fs::path& dir) { return impl_->server.set_mount_point("/", dir.string()); }

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace bowsense::app
