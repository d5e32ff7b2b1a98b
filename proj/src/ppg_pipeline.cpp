#include "bowsense/ppg_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace bowsense::ppg {

namespace {

using cplx = std::complex<double>;

// Poles of the analog Butterworth lowpass prototype (cutoff 1 rad/s).
std::vector<cplx> prototype_poles(int order) {
  std::vector<cplx> poles;
  for (int m = -order + 1; m < order; m += 2) {
    poles.push_back(-std::exp(cplx(0.0, std::numbers::pi * m / (2.0 * order))));
  }
  return poles;
}

// Groups poles into conjugate or real pairs, each pair giving one
// denominator 1 + a1 z^-1 + a2 z^-2.
std::vector<std::array<double, 2>> pair_poles(std::vector<cplx> poles) {
  constexpr double kImagEps = 1e-12;
  std::vector<std::array<double, 2>> out;
  std::vector<double> reals;
  for (const auto& p : poles) {
    if (std::abs(p.imag()) <= kImagEps) {
      reals.push_back(p.real());
    } else if (p.imag() > 0) {
      out.push_back({-2.0 * p.real(), std::norm(p)});
    }
  }
  std::sort(reals.begin(), reals.end());
  if (reals.size() % 2 != 0) throw std::logic_error("odd number of real poles");
  for (std::size_t i = 0; i < reals.size(); i += 2) {
    out.push_back({-(reals[i] + reals[i + 1]), reals[i] * reals[i + 1]});
  }
  return out;
}

// Steady-state transposed direct-form II state for a unit step.
std::array<double, 2> step_state(const Biquad& s) {
  const double y = (s.b[0] + s.b[1] + s.b[2]) / (1.0 + s.a[0] + s.a[1]);
  return {y - s.b[0], s.b[2] - s.a[1] * y};
}

double dc_gain(const Biquad& s) {
  return (s.b[0] + s.b[1] + s.b[2]) / (1.0 + s.a[0] + s.a[1]);
}

}  // namespace

ButterworthBandpass::ButterworthBandpass(const BandpassParams& params) : fs_(params.fs) {
  if (!(params.fs > 0.0)) throw std::invalid_argument("bandpass: fs must be > 0");
  if (params.order < 1) throw std::invalid_argument("bandpass: order must be >= 1");
  if (!(params.low_hz > 0.0) || !(params.low_hz < params.high_hz)) {
    throw std::invalid_argument("bandpass: require 0 < low < high");
  }
  high_hz_ = std::min(params.high_hz, 0.45 * params.fs);
  if (!(params.low_hz < high_hz_)) {
    throw std::invalid_argument("bandpass: low cutoff is not below the clamped high cutoff " +
                                std::to_string(high_hz_) + " Hz");
  }

  const double fs2 = 2.0 * fs_;
  const double wl = fs2 * std::tan(std::numbers::pi * params.low_hz / fs_);
  const double wh = fs2 * std::tan(std::numbers::pi * high_hz_ / fs_);
  const double bw = wh - wl;
  const double wo2 = wl * wh;

  // Lowpass -> bandpass: every prototype pole splits in two; `order` zeros
  // land at s = 0 and `order` at infinity.
  std::vector<cplx> analog;
  for (const auto& p : prototype_poles(params.order)) {
    const cplx half = p * bw / 2.0;
    const cplx root = std::sqrt(half * half - wo2);
    analog.push_back(half + root);
    analog.push_back(half - root);
  }
  double gain = std::pow(bw, params.order);

  // Bilinear transform. Zeros at s = 0 map to z = 1, zeros at infinity to
  // z = -1, so every section numerator is (1 - z^-2).
  std::vector<cplx> digital;
  cplx denom_prod = 1.0;
  for (const auto& p : analog) {
    digital.push_back((fs2 + p) / (fs2 - p));
    denom_prod *= (fs2 - p);
  }
  gain *= (std::pow(fs2, params.order) / denom_prod).real();

  for (const auto& a : pair_poles(digital)) {
    sections_.push_back({{1.0, 0.0, -1.0}, a});
  }
  for (double& c : sections_.front().b) c *= gain;
}

std::complex<double> ButterworthBandpass::response(double f_hz) const {
  const cplx zinv = std::exp(cplx(0.0, -2.0 * std::numbers::pi * f_hz / fs_));
  cplx h = 1.0;
  for (const auto& s : sections_) {
    h *= (s.b[0] + zinv * (s.b[1] + zinv * s.b[2])) / (1.0 + zinv * (s.a[0] + zinv * s.a[1]));
  }
  return h;
}

std::vector<double> ButterworthBandpass::pass(std::span<const double> x) const {
  std::vector<double> y(x.begin(), x.end());
  if (y.empty()) return y;
  double scale = y.front();
  for (const auto& s : sections_) {
    auto z = step_state(s);
    z[0] *= scale;
    z[1] *= scale;
    scale *= dc_gain(s);
    for (double& v : y) {
      const double in = v;
      const double out = s.b[0] * in + z[0];
      z[0] = s.b[1] * in - s.a[0] * out + z[1];
      z[1] = s.b[2] * in - s.a[1] * out;
      v = out;
    }
  }
  return y;
}

std::vector<double> ButterworthBandpass::filtfilt(std::span<const double> x) const {
  if (x.empty()) return {};
  const std::size_t n = x.size();
  const std::size_t pad = std::min<std::size_t>(n - 1, 3 * (2 * sections_.size() + 1));

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x.front() - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x.back() - x[n - 1 - i]);

  auto fwd = pass(ext);
  std::reverse(fwd.begin(), fwd.end());
  auto bwd = pass(fwd);
  std::reverse(bwd.begin(), bwd.end());
  return {bwd.begin() + static_cast<std::ptrdiff_t>(pad),
          bwd.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

std::vector<double> bandpass(std::span<const double> ppg, const BandpassParams& params) {
  return ButterworthBandpass(params).filtfilt(ppg);
}

namespace {

double quantile_linear(std::vector<double>& v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

std::vector<std::size_t> detect_peaks(std::span<const double> filtered, double fs,
                                      const PeakParams& params) {
  if (filtered.empty()) throw std::invalid_argument("detect_peaks: empty input");
  if (!(fs > 0.0)) throw std::invalid_argument("detect_peaks: fs must be > 0");
  const std::size_t n = filtered.size();
  const auto refractory = static_cast<std::size_t>(std::lround(params.refractory_s * fs));
  const auto half_win = static_cast<std::size_t>(std::lround(params.threshold_window_s * fs / 2.0));

  std::vector<std::size_t> peaks;
  std::vector<double> positives;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = filtered[i];
    if (!(v > 0.0)) continue;

    const std::size_t lo = i >= refractory ? i - refractory : 0;
    const std::size_t hi = std::min(n - 1, i + refractory);
    bool is_max = true;
    for (std::size_t j = lo; j <= hi && is_max; ++j) {
      // Plateaus resolve to their first sample.
      if (j < i ? filtered[j] >= v : filtered[j] > v) is_max = false;
    }
    if (!is_max) continue;

    positives.clear();
    const std::size_t tlo = i >= half_win ? i - half_win : 0;
    const std::size_t thi = std::min(n - 1, i + half_win);
    for (std::size_t j = tlo; j <= thi; ++j) {
      if (filtered[j] > 0.0) positives.push_back(filtered[j]);
    }
    const double threshold =
        params.threshold_fraction * quantile_linear(positives, params.threshold_quantile);
    if (v > threshold) peaks.push_back(i);
  }
  return peaks;
}

RRSeries peaks_to_rr(std::span<const std::size_t> peaks, double fs) {
  if (peaks.size() < 2) throw std::invalid_argument("peaks_to_rr: need at least 2 peaks");
  if (!(fs > 0.0)) throw std::invalid_argument("peaks_to_rr: fs must be > 0");
  RRSeries rr;
  rr.peak_indices.assign(peaks.begin(), peaks.end());
  for (std::size_t i = 0; i + 1 < peaks.size(); ++i) {
    if (peaks[i + 1] <= peaks[i]) throw std::invalid_argument("peaks_to_rr: peaks not increasing");
    rr.intervals_ms.push_back(static_cast<double>(peaks[i + 1] - peaks[i]) * 1000.0 / fs);
  }
  return rr;
}

namespace {

bool in_range(double v) { return v >= kMinRrMs && v <= kMaxRrMs; }

double median_of(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

std::vector<std::size_t> flag_outliers(std::span<const double> intervals,
                                       const CorrectionParams& params) {
  const std::size_t reach = params.neighbourhood / 2;
  std::vector<std::size_t> flagged;
  std::vector<double> neighbours;
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    if (!in_range(intervals[i])) {
      flagged.push_back(i);
      continue;
    }
    // Leave-one-out: the interval under test is excluded from its own median.
    neighbours.clear();
    const std::size_t lo = i >= reach ? i - reach : 0;
    const std::size_t hi = std::min(intervals.size() - 1, i + reach);
    for (std::size_t j = lo; j <= hi; ++j) {
      if (j != i && in_range(intervals[j])) neighbours.push_back(intervals[j]);
    }
    if (neighbours.empty()) continue;
    const double med = median_of(neighbours);
    if (std::abs(intervals[i] - med) > params.tolerance * med) flagged.push_back(i);
  }
  return flagged;
}

RRSeries correct_rr(const RRSeries& rr, const CorrectionParams& params) {
  const auto& original = rr.intervals_ms;
  const std::size_t n = original.size();
  if (n == 0) throw std::invalid_argument("correct_rr: empty series");

  std::vector<bool> replaced(n, false);
  std::size_t replaced_count = 0;
  RRSeries out = rr;

  // The replaced set only grows, so this terminates within n rounds.
  while (true) {
    const auto flags = flag_outliers(out.intervals_ms, params);
    if (flags.empty()) return out;

    const std::size_t before = replaced_count;
    for (auto i : flags) {
      if (!replaced[i]) {
        replaced[i] = true;
        ++replaced_count;
      }
    }
    if (static_cast<double>(replaced_count) > params.max_flagged_fraction * static_cast<double>(n)) {
      throw std::runtime_error("correct_rr: " + std::to_string(replaced_count) + " of " +
                               std::to_string(n) + " intervals flagged, signal too corrupted");
    }
    if (replaced_count == before) {
      throw std::runtime_error("correct_rr: interpolation did not converge");
    }

    for (std::size_t i = 0; i < n; ++i) {
      if (!replaced[i]) {
        out.intervals_ms[i] = original[i];
        continue;
      }
      std::ptrdiff_t left = static_cast<std::ptrdiff_t>(i) - 1;
      while (left >= 0 && replaced[static_cast<std::size_t>(left)]) --left;
      std::size_t right = i + 1;
      while (right < n && replaced[right]) ++right;

      if (left < 0) {
        out.intervals_ms[i] = original[right];
      } else if (right >= n) {
        out.intervals_ms[i] = original[static_cast<std::size_t>(left)];
      } else {
        const auto l = static_cast<std::size_t>(left);
        const double frac = static_cast<double>(i - l) / static_cast<double>(right - l);
        out.intervals_ms[i] = original[l] + frac * (original[right] - original[l]);
      }
    }
  }
}

}  // namespace bowsense::ppg
