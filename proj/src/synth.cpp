#include "bowsense/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace bowsense::synth {

namespace {

using Vec3 = std::array<double, 3>;

constexpr Vec3 kBaseline = {0.05, -0.10, 0.98};
// Aim posture relative to baseline, the draw overshoot on X/Y and the release
// kick (X and Z up, Y down).
constexpr Vec3 kAimOffset = {0.35, 0.25, -0.15};
constexpr Vec3 kDrawBump = {0.50, 0.40, 0.0};
constexpr Vec3 kReleaseKick = {0.90, -0.30, 0.80};

constexpr double kPulseFwhmMs = 150.0;

double smoothstep(double u) { return u * u * (3.0 - 2.0 * u); }

std::size_t samples_for(double seconds, double fs) {
  return static_cast<std::size_t>(std::lround(seconds * fs));
}

struct Offsets {
  std::vector<double> x, y, z;
  explicit Offsets(std::size_t n) : x(n, 0.0), y(n, 0.0), z(n, 0.0) {}
  void add(std::size_t i, const Vec3& v, double scale) {
    x[i] += scale * v[0];
    y[i] += scale * v[1];
    z[i] += scale * v[2];
  }
};

void add_shot(Offsets& off, const ShotAnnotation& a, double gain) {
  const double draw_n = static_cast<double>(a.b2 - a.b1);
  for (std::size_t i = a.b1; i < a.b2; ++i) {
    const double u = static_cast<double>(i - a.b1 + 1) / (draw_n + 1.0);
    off.add(i, kAimOffset, smoothstep(u));
    off.add(i, kDrawBump, gain * std::sin(std::numbers::pi * u));
  }
  for (std::size_t i = a.b2; i < a.b3; ++i) off.add(i, kAimOffset, 1.0);
  const double rel_n = static_cast<double>(a.b4 - a.b3);
  for (std::size_t i = a.b3; i < a.b4; ++i) {
    const double u = static_cast<double>(i - a.b3 + 1) / (rel_n + 1.0);
    off.add(i, kAimOffset, 1.0 - smoothstep(u));
    off.add(i, kReleaseKick, gain * std::sin(std::numbers::pi * u));
  }
}

// Random non-shot arm movements inside [lo, hi).
void add_fidgets(Offsets& off, std::size_t lo, std::size_t hi, const SynthConfig& cfg,
                 std::mt19937_64& rng) {
  if (hi <= lo || cfg.fidgets_per_min <= 0.0) return;
  const double minutes = static_cast<double>(hi - lo) / cfg.fs / 60.0;
  std::poisson_distribution<int> count(cfg.fidgets_per_min * minutes);
  std::uniform_real_distribution<double> dur_s(0.8, 3.0);
  std::uniform_real_distribution<double> amp(-0.3, 0.3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::pair<std::size_t, std::size_t>> placed;
  const int n = count(rng);
  for (int k = 0; k < n; ++k) {
    const std::size_t len = samples_for(dur_s(rng), cfg.fs);
    const Vec3 a = {amp(rng), amp(rng), amp(rng)};
    if (len + 2 > hi - lo) continue;
    const auto start = lo + 1 + static_cast<std::size_t>(unit(rng) * static_cast<double>(hi - lo - len - 2));
    const bool clash = std::any_of(placed.begin(), placed.end(), [&](const auto& p) {
      return start < p.second + 1 && p.first < start + len + 1;
    });
    if (clash) continue;
    placed.emplace_back(start, start + len);
    for (std::size_t i = 0; i < len; ++i) {
      const double u = static_cast<double>(i + 1) / static_cast<double>(len + 1);
      off.add(start + i, a, std::sin(std::numbers::pi * u));
    }
  }
}

struct Beats {
  std::vector<double> times_ms;
  std::vector<double> rr_ms;
};

Beats make_beats(double until_ms, double hr_bpm, double jitter_ms, double resp_hz, double resp_amp_ms,
                 std::mt19937_64& rng) {
  const double mean_rr = 60000.0 / hr_bpm;
  std::normal_distribution<double> jitter(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, mean_rr);
  Beats b;
  double t = phase(rng);
  b.times_ms.push_back(t);
  while (t < until_ms) {
    double rr = mean_rr + jitter_ms * jitter(rng) +
                resp_amp_ms * std::sin(2.0 * std::numbers::pi * resp_hz * t / 1000.0);
    rr = std::clamp(rr, 350.0, 1800.0);
    t += rr;
    b.rr_ms.push_back(rr);
    b.times_ms.push_back(t);
  }
  return b;
}

}  // namespace

void SynthConfig::validate() const {
  if (!(draw_s > 0.0 && aim_s > 0.0 && release_s > 0.0)) {
    throw std::invalid_argument("synth: phase durations must be > 0");
  }
  if (!(hr_bpm >= 40.0 && hr_bpm <= 200.0)) throw std::invalid_argument("synth: hr_bpm must be in [40, 200]");
  if (!(fs > 0.0)) throw std::invalid_argument("synth: fs must be > 0");
  if (noise_std < 0.0 || ppg_noise_std < 0.0 || rr_jitter_ms < 0.0 || onset_jitter_s < 0.0) {
    throw std::invalid_argument("synth: noise levels must be >= 0");
  }
  if (lead_in_s < onset_jitter_s) throw std::invalid_argument("synth: lead_in_s must cover onset jitter");
  const double shot_s = draw_s + aim_s + release_s;
  if (n_shots > 1 && shot_spacing_s <= shot_s + 2.0 * onset_jitter_s) {
    throw std::invalid_argument("synth: shots overlap; shot_spacing_s must exceed the shot length "
                                "plus twice the onset jitter");
  }
}

void apply_regime(SynthConfig& cfg, StressRegime regime) {
  cfg.stress_regime = regime;
  if (regime == StressRegime::Low) {
    cfg.hr_bpm = 65.0;
    cfg.rr_jitter_ms = 60.0;
    cfg.resp_amp_ms = 40.0;
  } else {
    cfg.hr_bpm = 95.0;
    cfg.rr_jitter_ms = 15.0;
    cfg.resp_amp_ms = 8.0;
  }
  cfg.resp_freq_hz = 0.25;
}

SynthSession gen_session(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const double period_ms = 1000.0 / cfg.fs;

  const std::size_t draw_n = std::max<std::size_t>(1, samples_for(cfg.draw_s, cfg.fs));
  const std::size_t aim_n = std::max<std::size_t>(1, samples_for(cfg.aim_s, cfg.fs));
  const std::size_t rel_n = std::max<std::size_t>(1, samples_for(cfg.release_s, cfg.fs));
  const std::size_t shot_n = draw_n + aim_n + rel_n;

  const double span_s = cfg.n_shots == 0
                            ? cfg.lead_in_s + cfg.tail_s
                            : cfg.lead_in_s + static_cast<double>(cfg.n_shots - 1) * cfg.shot_spacing_s +
                                  static_cast<double>(shot_n) / cfg.fs + cfg.onset_jitter_s + cfg.tail_s;
  const std::size_t n = samples_for(span_s, cfg.fs) + 1;

  SynthSession out;
  std::uniform_real_distribution<double> onset(-cfg.onset_jitter_s, cfg.onset_jitter_s);
  std::uniform_real_distribution<double> gain(0.8, 1.2);
  Offsets off(n);
  for (std::size_t k = 0; k < cfg.n_shots; ++k) {
    const double start_s = cfg.lead_in_s + static_cast<double>(k) * cfg.shot_spacing_s + onset(rng);
    const std::size_t b1 = samples_for(start_s, cfg.fs);
    ShotAnnotation a{b1, b1 + draw_n, b1 + draw_n + aim_n, b1 + shot_n};
    add_shot(off, a, gain(rng));
    out.annotations.push_back(a);
  }

  // Idle gaps keep one second of clearance from every shot.
  const std::size_t margin = samples_for(1.0, cfg.fs);
  std::size_t cursor = 0;
  for (const auto& a : out.annotations) {
    if (a.b1 > cursor + margin) add_fidgets(off, cursor, a.b1 - margin, cfg, rng);
    cursor = a.b4 + margin;
  }
  if (n > cursor) add_fidgets(off, cursor, n, cfg, rng);

  std::normal_distribution<double> noise(0.0, 1.0);
  auto& rec = out.recording;
  rec.subject_id = cfg.subject_id;
  rec.round_id = cfg.round_id;
  rec.acc.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = rec.acc[i];
    s.t_ms = static_cast<std::int64_t>(std::llround(static_cast<double>(i) * period_ms));
    s.ax = kBaseline[0] + off.x[i] + cfg.noise_std * noise(rng);
    s.ay = kBaseline[1] + off.y[i] + cfg.noise_std * noise(rng);
    s.az = kBaseline[2] + off.z[i] + cfg.noise_std * noise(rng);
  }

  const double end_ms = static_cast<double>(rec.acc.back().t_ms);
  auto beats = make_beats(end_ms + 2000.0, cfg.hr_bpm, cfg.rr_jitter_ms, cfg.resp_freq_hz,
                          cfg.resp_amp_ms, rng);
  const double sigma = kPulseFwhmMs / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  std::vector<double> ppg(n, 0.0);
  for (double tb : beats.times_ms) {
    const double lo = std::max(0.0, (tb - 5.0 * sigma) / period_ms);
    const double hi = std::min(static_cast<double>(n - 1), (tb + 5.0 * sigma) / period_ms);
    for (auto i = static_cast<std::size_t>(std::ceil(lo)); static_cast<double>(i) <= hi; ++i) {
      const double d = static_cast<double>(i) * period_ms - tb;
      ppg[i] += std::exp(-0.5 * d * d / (sigma * sigma));
    }
  }
  rec.ppg.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    rec.ppg[i] = {rec.acc[i].t_ms, ppg[i] + cfg.ppg_noise_std * noise(rng)};
  }
  out.true_rr_ms = std::move(beats.rr_ms);
  out.beat_times_ms = std::move(beats.times_ms);

  // Tablet markers lag the true motion by up to half a second.
  std::uniform_real_distribution<double> lag_ms(0.0, 500.0);
  rec.markers.push_back({0, MarkerKind::ExpStart});
  for (const auto& a : out.annotations) {
    rec.markers.push_back({rec.acc[a.b1].t_ms + std::llround(lag_ms(rng)), MarkerKind::Draw});
    rec.markers.push_back({rec.acc[a.b3].t_ms + std::llround(lag_ms(rng)), MarkerKind::Release});
  }
  rec.markers.push_back({rec.acc.back().t_ms, MarkerKind::ExpEnd});
  for (auto& m : rec.markers) m.t_ms = std::min(m.t_ms, rec.acc.back().t_ms);

  std::uniform_int_distribution<int> low_report(1, 3);
  std::uniform_int_distribution<int> high_report(4, 5);
  rec.stress_report = cfg.stress_regime == StressRegime::Low ? low_report(rng) : high_report(rng);
  return out;
}

std::vector<CohortSample> gen_stress_cohort(std::size_t n_per_class, std::uint64_t seed) {
  if (n_per_class < 1) throw std::invalid_argument("gen_stress_cohort: n_per_class must be >= 1");
  constexpr double kDurationMs = 60000.0;
  constexpr double kFs = 20.0;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> hr_spread(-5.0, 5.0);

  std::vector<CohortSample> out;
  for (int label = 0; label < 2; ++label) {
    SynthConfig cfg;
    apply_regime(cfg, label == 0 ? StressRegime::Low : StressRegime::High);
    for (std::size_t k = 0; k < n_per_class; ++k) {
      auto beats = make_beats(kDurationMs, cfg.hr_bpm + hr_spread(rng), cfg.rr_jitter_ms, cfg.resp_freq_hz,
                              cfg.resp_amp_ms, rng);
      CohortSample s;
      s.label = label;
      s.rr.intervals_ms = std::move(beats.rr_ms);
      for (double t : beats.times_ms) {
        s.rr.peak_indices.push_back(static_cast<std::size_t>(std::llround(t * kFs / 1000.0)));
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace bowsense::synth
