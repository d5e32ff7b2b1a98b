#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "bowsense/ppg_pipeline.hpp"

namespace bowsense::hrv {

inline constexpr std::size_t kFeatureCount = 11;
inline constexpr double kHfLowHz = 0.15;
inline constexpr double kHfHighHz = 0.40;
inline constexpr double kResampleHz = 4.0;
inline constexpr double kMinSpectrumSpanS = 30.0;
inline constexpr std::size_t kMinSpectrumIntervals = 8;

struct HrvFeatureVector {
  double hr = 0.0;     // bpm
  double sdnn = 0.0;   // ms
  double rmssd = 0.0;  // ms
  double pnn20 = 0.0;  // %
  double pnn50 = 0.0;  // %
  double hf = 0.0;     // ms^2
  double tf = 0.0;     // ms^2
  double pob = 0.0;    // %
  double sd1 = 0.0;    // ms
  double sd2 = 0.0;    // ms
  std::optional<double> samp_en;  // empty when no template matches exist

  /// Model input order: hr, sdnn, rmssd, pnn20, pnn50, hf, tf, pob, sd1, sd2,
  /// samp_en. An undefined sample entropy is encoded as 0.
  std::array<double, kFeatureCount> to_array() const;
  static const std::array<const char*, kFeatureCount>& names();
};

double hr(std::span<const double> rr_ms);
double sdnn(std::span<const double> rr_ms);
double rmssd(std::span<const double> rr_ms);
double pnnx(std::span<const double> rr_ms, double x_ms);

/// One-sided power spectral density of the evenly resampled tachogram.
struct Psd {
  std::vector<double> freq_hz;
  std::vector<double> power;  // ms^2 / Hz
  double df = 0.0;

  /// Rectangle-rule integral over bins with lo <= f <= hi.
  double band_power(double lo_hz, double hi_hz) const;
  /// Frequency of the largest bin above 0 Hz.
  double peak_frequency() const;
};

/// Evenly resampled, mean-removed tachogram: interval i is placed at the time
/// of the beat that ends it, then a natural cubic spline through those points
/// is sampled on a 4 Hz grid.
std::vector<double> resample_tachogram(std::span<const double> rr_ms,
                                       double rate_hz = kResampleHz);

Psd spectrum(std::span<const double> rr_ms, double min_span_s = kMinSpectrumSpanS);
double hf_power(const Psd& psd);
double tf_power(const Psd& psd);

/// Percentage of beats deviating by more than 50 ms from the centred 5-beat
/// moving average. Only beats with a full window are counted.
double pob(std::span<const double> rr_ms, double threshold_ms = 50.0);

struct Poincare {
  double sd1 = 0.0;
  double sd2 = 0.0;
};
Poincare poincare(std::span<const double> rr_ms);

/// Sample entropy with Chebyshev distance and self-matches excluded. Both
/// template lengths are counted over the same N - m starting points.
std::optional<double> sample_entropy(std::span<const double> rr_ms, std::size_t m, double r);
/// As above with r = 0.2 * sdnn; undefined when sdnn is 0.
std::optional<double> sample_entropy(std::span<const double> rr_ms, std::size_t m = 2);

HrvFeatureVector extract_all(std::span<const double> rr_ms);
inline HrvFeatureVector extract_all(const ppg::RRSeries& rr) { return extract_all(rr.intervals_ms); }

}  // namespace bowsense::hrv
