#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bowsense/core_types.hpp"
#include "bowsense/ppg_pipeline.hpp"

namespace bowsense::synth {

enum class StressRegime { Low, High };

struct SynthConfig {
  std::size_t n_shots = 30;
  double shot_spacing_s = 15.0;
  double draw_s = 1.5;
  double aim_s = 2.0;
  double release_s = 0.5;
  double lead_in_s = 10.0;
  /// Idle time after the last shot; long enough for a 30 s stress window.
  double tail_s = 35.0;
  /// Each shot start is shifted by U(-onset_jitter_s, +onset_jitter_s).
  double onset_jitter_s = 1.0;
  double noise_std = 0.02;
  /// Mean number of non-shot arm movements per minute of idle time.
  double fidgets_per_min = 2.0;

  double hr_bpm = 70.0;
  double rr_jitter_ms = 30.0;
  double resp_freq_hz = 0.25;
  double resp_amp_ms = 30.0;
  double ppg_noise_std = 0.01;
  StressRegime stress_regime = StressRegime::Low;

  double fs = 20.0;
  std::uint64_t seed = 0;
  std::string subject_id = "S00";
  std::string round_id = "R00";

  void validate() const;
};

/// Sets heart rate, RR jitter and respiratory modulation to the regime's
/// physiology and records the regime.
void apply_regime(SynthConfig& cfg, StressRegime regime);

struct SynthSession {
  SessionRecording recording;
  std::vector<ShotAnnotation> annotations;
  std::vector<double> true_rr_ms;
  std::vector<double> beat_times_ms;
};

SynthSession gen_session(const SynthConfig& cfg);

struct CohortSample {
  ppg::RRSeries rr;
  int label = 0;
};

/// n_per_class low-stress (label 0) then n_per_class high-stress (label 1)
/// RR series of about 60 s each.
std::vector<CohortSample> gen_stress_cohort(std::size_t n_per_class, std::uint64_t seed);

}  // namespace bowsense::synth
