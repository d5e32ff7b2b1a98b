#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bowsense/nn_common.hpp"
#include "bowsense/phase_detector.hpp"
#include "bowsense/ppg_pipeline.hpp"

namespace bowsense::app {

inline constexpr const char* kDataDirEnv = "BOWSENSE_DATA_DIR";

struct PipelineConfig {
  std::string data_dir = "data";
  std::string model_dir = "models";
  std::string out_dir = "out";

  double fs = 20.0;
  std::uint64_t smooth_window = 20;
  std::uint64_t win = 80;
  std::uint64_t step = 20;
  double threshold = 0.9;
  double min_event_s = 1.0;
  double max_event_s = 8.0;
  double iou_min = 0.5;

  double bp_low_hz = 0.6;
  double bp_high_hz = 10.0;
  std::uint64_t bp_order = 3;
  double refractory_s = 0.3;
  double rr_tolerance = 0.3;

  double split_ratio = 0.7;
  std::uint64_t seed = 42;

  double lr = 0.01;
  double momentum = 0.9;
  std::uint64_t epochs = 50;
  std::uint64_t batch_size = 32;
  double clip_norm = 5.0;
  std::uint64_t lstm_hidden = 32;
  std::uint64_t mlp_hidden = 16;

  std::uint64_t synth_sessions = 30;
  std::uint64_t synth_shots = 30;
  std::uint64_t synth_seed = 1000;

  std::string host = "127.0.0.1";
  std::uint64_t port = 8080;
  /// Worker threads for per-session stages; 0 picks the hardware count.
  std::uint64_t threads = 0;

  /// Throws std::invalid_argument naming the offending key.
  void validate() const;

  /// Sets one key from its textual form. Unknown keys and unparsable values
  /// throw std::invalid_argument.
  void set(std::string_view key, std::string_view value);
  static const std::vector<std::string>& keys();

  nlohmann::ordered_json to_json() const;

  ppg::BandpassParams bandpass() const;
  ppg::PeakParams peaks() const;
  ppg::CorrectionParams correction() const;
  phase::DetectorConfig detector() const;
  nn::TrainConfig train(std::uint64_t stream) const;

  std::filesystem::path data_path() const { return data_dir; }
  std::filesystem::path model_path() const { return model_dir; }
  std::filesystem::path out_path() const { return out_dir; }
};

/// Defaults, then the data-dir environment variable, then the JSON config
/// file (if any), then flag overrides. The result is validated.
PipelineConfig load_config(const std::filesystem::path* config_file,
                           const std::map<std::string, std::string>& overrides);

/// Applies every member of a JSON object as a key.
void apply_json(PipelineConfig& cfg, const nlohmann::json& object);

}  // namespace bowsense::app
