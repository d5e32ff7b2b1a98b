#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "bowsense/accel_features.hpp"
#include "bowsense/core_types.hpp"

namespace bowsense::app {

inline constexpr std::size_t kSliceBefore = 150;
inline constexpr std::size_t kSliceAfter = 300;

struct ApiResponse {
  int status = 200;
  std::string body;
};

/// JSON request handling for the labelling UI, independent of any HTTP
/// library. Sessions are loaded once at construction; annotations are read
/// from and written to each session's labels.json.
///
///   GET  /api/sessions
///   GET  /api/sessions/{id}/waveform?draw=K | ?start=A&end=B
///   GET  /api/sessions/{id}/annotations
///   POST /api/sessions/{id}/annotations   {"b1":..,"b2":..,"b3":..,"b4":..}
///   GET  /api/annotations
class AnnotationService {
 public:
  AnnotationService(std::filesystem::path data_dir, std::size_t smooth_window = accel::kDefaultSmoothWindow);
  ~AnnotationService();
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  ApiResponse handle(const std::string& method, const std::string& path,
                     const std::map<std::string, std::string>& query, const std::string& body);

  ApiResponse list_sessions() const;
  /// Default slice is [draw - 150, draw + 300) around the K-th Draw marker
  /// (K = 0 when absent), clipped to the recording.
  ApiResponse waveform(const std::string& id, const std::map<std::string, std::string>& query) const;
  ApiResponse annotations(const std::string& id) const;
  ApiResponse post_annotation(const std::string& id, const std::string& body);
  ApiResponse export_annotations() const;

  std::vector<std::string> session_ids() const;

 private:
  struct Entry;
  Entry* find(const std::string& id) const;

  std::filesystem::path data_dir_;
  std::map<std::string, std::unique_ptr<Entry>> sessions_;
};

/// Serves an AnnotationService over HTTP.
class HttpServer {
 public:
  explicit HttpServer(AnnotationService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds host:port (port 0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves files under `dir` at "/" (for a built frontend).
  bool mount_static(const std::filesystem::path& dir);
  /// Blocks serving requests until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace bowsense::app
