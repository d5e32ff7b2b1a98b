#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bowsense/accel_features.hpp"
#include "bowsense/app/config.hpp"
#include "bowsense/core_types.hpp"
#include "bowsense/dataset.hpp"
#include "bowsense/ppg_pipeline.hpp"

namespace bowsense::app {

/// A stage failure with the process exit code the CLI should return.
class StageError : public std::runtime_error {
 public:
  StageError(int code, const std::string& message) : std::runtime_error(message), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

inline constexpr int kExitStageFailed = 1;
inline constexpr int kExitBadConfig = 2;
inline constexpr int kExitBadInput = 3;
inline constexpr int kExitMissingArtifact = 4;

inline constexpr const char* kMotionModelFile = "motion_lstm.bin";
inline constexpr const char* kStressModelFile = "stress_mlp.bin";

struct PreparedSession {
  std::string id;
  SessionRecording recording;
  std::vector<ShotAnnotation> annotations;
  accel::FeatureChannels channels;
  /// Empty when the PPG trace could not be turned into a usable RR series.
  std::optional<ppg::RRSeries> rr;
  std::string rr_error;
};

/// Runs fn(0) .. fn(n - 1) on up to `threads` workers (0 = hardware count).
/// Each index must touch only its own output slot. The exception of the
/// lowest failing index is rethrown.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

PreparedSession prepare_session(const PipelineConfig& cfg, std::string id, SessionRecording recording,
                                std::vector<ShotAnnotation> annotations);
/// Ingests and preprocesses every session under data_dir, in id order.
std::vector<PreparedSession> prepare_sessions(const PipelineConfig& cfg);

struct MotionData {
  std::size_t windows = 0;
  std::size_t positives = 0;
  std::vector<dataset::WindowSample> train;
  std::vector<dataset::WindowSample> test;
};

/// Windows and labels every session, balances the classes and splits.
MotionData motion_dataset(const PipelineConfig& cfg, const std::vector<PreparedSession>& sessions);

struct StressData {
  std::size_t windows = 0;
  std::size_t positives = 0;
  std::size_t skipped_shots = 0;
  std::size_t skipped_sessions = 0;
  std::vector<dataset::StressSample> train;
  std::vector<dataset::StressSample> test;
};

StressData stress_dataset(const PipelineConfig& cfg, const std::vector<PreparedSession>& sessions);

struct StageResult {
  std::vector<std::filesystem::path> artifacts;
  std::string summary;
};

StageResult run_synth(const PipelineConfig& cfg);
StageResult run_preprocess(const PipelineConfig& cfg);
StageResult run_build_dataset(const PipelineConfig& cfg);
StageResult run_train_motion(const PipelineConfig& cfg);
StageResult run_train_stress(const PipelineConfig& cfg);
StageResult run_eval_motion(const PipelineConfig& cfg);
StageResult run_eval_stress(const PipelineConfig& cfg);
StageResult run_report(const PipelineConfig& cfg);

/// The batch subcommands by name. label-serve is not a batch stage.
const std::vector<std::string>& stage_names();
StageResult run_stage(const PipelineConfig& cfg, std::string_view name);

}  // namespace bowsense::app
