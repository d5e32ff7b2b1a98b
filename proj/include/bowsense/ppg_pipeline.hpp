#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace bowsense::ppg {

inline constexpr double kMinRrMs = 300.0;
inline constexpr double kMaxRrMs = 2000.0;

/// Corrected inter-beat intervals. intervals_ms[i] spans peak_indices[i] to
/// peak_indices[i + 1].
struct RRSeries {
  std::vector<double> intervals_ms;
  std::vector<std::size_t> peak_indices;
};

struct BandpassParams {
  double fs = 20.0;
  double low_hz = 0.6;
  double high_hz = 10.0;
  int order = 3;
};

/// One biquad, a0 normalised to 1.
struct Biquad {
  std::array<double, 3> b{};
  std::array<double, 2> a{};
};

/// Digital Butterworth bandpass as cascaded second-order sections. The upper
/// edge is clamped to 0.45 * fs.
class ButterworthBandpass {
 public:
  explicit ButterworthBandpass(const BandpassParams& params);

  const std::vector<Biquad>& sections() const { return sections_; }
  double effective_high_hz() const { return high_hz_; }

  /// Complex response of a single causal pass at frequency f (Hz).
  std::complex<double> response(double f_hz) const;

  /// Forward-backward filtering with odd-reflection padding and steady-state
  /// initial conditions. Output has the input's length.
  std::vector<double> filtfilt(std::span<const double> x) const;

 private:
  std::vector<double> pass(std::span<const double> x) const;

  double fs_;
  double high_hz_;
  std::vector<Biquad> sections_;
};

std::vector<double> bandpass(std::span<const double> ppg, const BandpassParams& params = {});

struct PeakParams {
  double refractory_s = 0.3;
  double threshold_window_s = 5.0;
  double threshold_fraction = 0.5;
  double threshold_quantile = 0.75;
};

/// Pulse peaks of a filtered PPG trace: local maxima within the refractory
/// window that exceed an adaptive amplitude threshold.
std::vector<std::size_t> detect_peaks(std::span<const double> filtered, double fs,
                                      const PeakParams& params = {});

RRSeries peaks_to_rr(std::span<const std::size_t> peaks, double fs);

struct CorrectionParams {
  double tolerance = 0.30;
  std::size_t neighbourhood = 5;
  double max_flagged_fraction = 0.5;
};

/// Replaces implausible intervals by interpolating their accepted neighbours,
/// repeating until no interval is flagged. Throws std::runtime_error when more
/// than half of the series had to be replaced.
RRSeries correct_rr(const RRSeries& rr, const CorrectionParams& params = {});

/// Indices that correct_rr would flag in one pass over `intervals`.
std::vector<std::size_t> flag_outliers(std::span<const double> intervals,
                                       const CorrectionParams& params = {});

}  // namespace bowsense::ppg
