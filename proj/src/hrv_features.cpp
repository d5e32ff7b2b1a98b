#include "bowsense/hrv_features.hpp"

#include <fftw3.h>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_spline.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>

namespace bowsense::hrv {

namespace {

void require(std::span<const double> rr, std::size_t min_len, const char* what) {
  if (rr.size() < min_len) {
    throw std::invalid_argument(std::string(what) + ": need at least " + std::to_string(min_len) +
                                " intervals, got " + std::to_string(rr.size()));
  }
}

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Unbiased (N - 1) variance.
double variance(std::span<const double> v) {
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return acc / static_cast<double>(v.size() - 1);
}

std::vector<double> successive_diffs(std::span<const double> rr) {
  std::vector<double> d(rr.size() - 1);
  for (std::size_t i = 0; i + 1 < rr.size(); ++i) d[i] = rr[i + 1] - rr[i];
  return d;
}

// FFTW's planner is not re-entrant; execution on a private plan is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

std::array<double, kFeatureCount> HrvFeatureVector::to_array() const {
  return {hr, sdnn, rmssd, pnn20, pnn50, hf, tf, pob, sd1, sd2, samp_en.value_or(0.0)};
}

const std::array<const char*, kFeatureCount>& HrvFeatureVector::names() {
  static const std::array<const char*, kFeatureCount> n = {
      "hr", "sdnn", "rmssd", "pnn20", "pnn50", "hf", "tf", "pob", "sd1", "sd2", "samp_en"};
  return n;
}

double hr(std::span<const double> rr_ms) {
  require(rr_ms, 1, "hr");
  return 60000.0 / mean(rr_ms);
}

double sdnn(std::span<const double> rr_ms) {
  require(rr_ms, 2, "sdnn");
  return std::sqrt(variance(rr_ms));
}

double rmssd(std::span<const double> rr_ms) {
  require(rr_ms, 2, "rmssd");
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < rr_ms.size(); ++i) {
    const double d = rr_ms[i + 1] - rr_ms[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(rr_ms.size() - 1));
}

double pnnx(std::span<const double> rr_ms, double x_ms) {
  require(rr_ms, 2, "pnnx");
  if (!(x_ms > 0.0)) throw std::invalid_argument("pnnx: threshold must be > 0");
  std::size_t count = 0;
  for (std::size_t i = 0; i + 1 < rr_ms.size(); ++i) {
    if (std::abs(rr_ms[i + 1] - rr_ms[i]) > x_ms) ++count;
  }
  return 100.0 * static_cast<double>(count) / static_cast<double>(rr_ms.size() - 1);
}

double Psd::band_power(double lo_hz, double hi_hz) const {
  double acc = 0.0;
  for (std::size_t k = 0; k < freq_hz.size(); ++k) {
    if (freq_hz[k] >= lo_hz && freq_hz[k] <= hi_hz) acc += power[k];
  }
  return acc * df;
}

double Psd::peak_frequency() const {
  std::size_t best = 0;
  for (std::size_t k = 1; k < power.size(); ++k) {
    if (best == 0 || power[k] > power[best]) best = k;
  }
  return freq_hz.at(best);
}

std::vector<double> resample_tachogram(std::span<const double> rr_ms, double rate_hz) {
  require(rr_ms, 2, "resample_tachogram");
  std::vector<double> t(rr_ms.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < rr_ms.size(); ++i) {
    acc += rr_ms[i] / 1000.0;
    t[i] = acc;
  }
  static const bool quiet = [] {
    gsl_set_error_handler_off();
    return true;
  }();
  (void)quiet;

  const auto* kind = rr_ms.size() >= 3 ? gsl_interp_cspline : gsl_interp_linear;
  std::unique_ptr<gsl_spline, decltype(&gsl_spline_free)> spline(gsl_spline_alloc(kind, t.size()),
                                                                 gsl_spline_free);
  std::unique_ptr<gsl_interp_accel, decltype(&gsl_interp_accel_free)> cursor(gsl_interp_accel_alloc(),
                                                                             gsl_interp_accel_free);
  if (!spline || !cursor || gsl_spline_init(spline.get(), t.data(), rr_ms.data(), t.size()) != GSL_SUCCESS) {
    throw std::runtime_error("resample_tachogram: interpolation setup failed");
  }

  const double step = 1.0 / rate_hz;
  const auto count = static_cast<std::size_t>(std::floor((t.back() - t.front()) * rate_hz)) + 1;
  std::vector<double> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double tk = std::min(t.back(), t.front() + static_cast<double>(k) * step);
    out[k] = gsl_spline_eval(spline.get(), tk, cursor.get());
  }
  const double m = mean(out);
  for (double& v : out) v -= m;
  return out;
}

Psd spectrum(std::span<const double> rr_ms, double min_span_s) {
  require(rr_ms, kMinSpectrumIntervals, "spectrum");
  const double span_s = std::accumulate(rr_ms.begin(), rr_ms.end(), 0.0) / 1000.0;
  if (span_s < min_span_s) {
    throw std::invalid_argument("spectrum: intervals span " + std::to_string(span_s) +
                                " s, need at least " + std::to_string(min_span_s) + " s");
  }

  auto x = resample_tachogram(rr_ms, kResampleHz);
  const std::size_t n = x.size();
  const std::size_t bins = n / 2 + 1;
  std::vector<fftw_complex> coeffs(bins);

  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), x.data(), coeffs.data(), FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }

  Psd psd;
  psd.df = kResampleHz / static_cast<double>(n);
  psd.freq_hz.resize(bins);
  psd.power.resize(bins);
  const double norm = 1.0 / (kResampleHz * static_cast<double>(n));
  for (std::size_t k = 0; k < bins; ++k) {
    const double mag2 = coeffs[k][0] * coeffs[k][0] + coeffs[k][1] * coeffs[k][1];
    const bool edge = k == 0 || (n % 2 == 0 && k == n / 2);
    psd.freq_hz[k] = static_cast<double>(k) * psd.df;
    psd.power[k] = (edge ? 1.0 : 2.0) * mag2 * norm;
  }
  return psd;
}

double hf_power(const Psd& psd) { return psd.band_power(kHfLowHz, kHfHighHz); }

double tf_power(const Psd& psd) {
  if (psd.freq_hz.empty()) return 0.0;
  // DC is excluded: the tachogram is mean-removed before the transform.
  return psd.band_power(psd.df / 2.0, psd.freq_hz.back());
}

double pob(std::span<const double> rr_ms, double threshold_ms) {
  require(rr_ms, 6, "pob");
  std::size_t count = 0;
  const std::size_t beats = rr_ms.size() - 4;
  for (std::size_t i = 2; i + 2 < rr_ms.size(); ++i) {
    const double local = (rr_ms[i - 2] + rr_ms[i - 1] + rr_ms[i] + rr_ms[i + 1] + rr_ms[i + 2]) / 5.0;
    if (std::abs(rr_ms[i] - local) > threshold_ms) ++count;
  }
  return 100.0 * static_cast<double>(count) / static_cast<double>(beats);
}

Poincare poincare(std::span<const double> rr_ms) {
  require(rr_ms, 3, "poincare");
  const auto d = successive_diffs(rr_ms);
  const double sd1_sq = 0.5 * variance(d);
  const double sd2_sq = std::max(0.0, 2.0 * variance(rr_ms) - sd1_sq);
  return {std::sqrt(sd1_sq), std::sqrt(sd2_sq)};
}

std::optional<double> sample_entropy(std::span<const double> rr_ms, std::size_t m, double r) {
  require(rr_ms, 10, "sample_entropy");
  if (m < 1) throw std::invalid_argument("sample_entropy: m must be >= 1");
  if (!(r > 0.0)) throw std::invalid_argument("sample_entropy: tolerance r must be > 0");

  const std::size_t templates = rr_ms.size() - m;
  std::size_t b = 0;
  std::size_t a = 0;
  for (std::size_t i = 0; i < templates; ++i) {
    for (std::size_t j = i + 1; j < templates; ++j) {
      double dist = 0.0;
      for (std::size_t k = 0; k < m; ++k) dist = std::max(dist, std::abs(rr_ms[i + k] - rr_ms[j + k]));
      if (dist > r) continue;
      ++b;
      if (std::abs(rr_ms[i + m] - rr_ms[j + m]) <= r) ++a;
    }
  }
  if (a == 0 || b == 0) return std::nullopt;
  return -std::log(static_cast<double>(a) / static_cast<double>(b));
}

std::optional<double> sample_entropy(std::span<const double> rr_ms, std::size_t m) {
  const double r = 0.2 * sdnn(rr_ms);
  if (!(r > 0.0)) {
    require(rr_ms, 10, "sample_entropy");
    return std::nullopt;
  }
  return sample_entropy(rr_ms, m, r);
}

HrvFeatureVector extract_all(std::span<const double> rr_ms) {
  HrvFeatureVector f;
  f.hr = hr(rr_ms);
  f.sdnn = sdnn(rr_ms);
  f.rmssd = rmssd(rr_ms);
  f.pnn20 = pnnx(rr_ms, 20.0);
  f.pnn50 = pnnx(rr_ms, 50.0);
  const auto psd = spectrum(rr_ms);
  f.hf = hf_power(psd);
  f.tf = tf_power(psd);
  f.pob = pob(rr_ms);
  const auto pc = poincare(rr_ms);
  f.sd1 = pc.sd1;
  f.sd2 = pc.sd2;
  f.samp_en = sample_entropy(rr_ms);
  return f;
}

}  // namespace bowsense::hrv
