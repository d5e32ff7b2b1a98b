// Acceptance gate: one PASS/FAIL line per headline criterion. Exit status is
// the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bowsense/app/config.hpp"
#include "bowsense/app/pipeline.hpp"
#include "bowsense/dataset.hpp"
#include "bowsense/hrv_features.hpp"
#include "bowsense/metrics.hpp"
#include "bowsense/neural_nets.hpp"
#include "bowsense/ppg_pipeline.hpp"
#include "bowsense/synth.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace bowsense;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kOracleRelTol = 1e-9;
constexpr double kOracleBudgetS = 5.0;
constexpr double kPoincareRelTol = 1e-9;
constexpr double kPassbandLo = 0.9;
constexpr double kPassbandHi = 1.1;
constexpr double kDcAttenuation = 20.0;
constexpr double kLinearityTol = 1e-9;
constexpr double kRrTarget = 1000.0;
constexpr double kRrTol = 50.0;
constexpr double kLstmGradTol = 1e-4;
constexpr double kMlpGradTol = 1e-5;
constexpr double kGradBudgetS = 10.0;
constexpr double kEventRecallMin = 0.95;
constexpr double kPqdMin = 0.9;
constexpr double kSlaMin = 0.9;
constexpr double kMotionBudgetS = 300.0;
constexpr double kStressAccMin = 0.90;
constexpr double kStressF1Min = 0.90;
constexpr double kStressBudgetS = 60.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double rel_err(double a, double b) {
  const double scale = std::max({std::fabs(a), std::fabs(b), 1e-300});
  return std::fabs(a - b) / scale;
}

std::vector<std::vector<double>> oracle_series() {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<std::size_t> len(30, 120);
  std::vector<std::vector<double>> out;
  for (int i = 0; i < 100; ++i) out.push_back(oracle::random_rr(rng, len(rng)));
  return out;
}

Outcome hrv_oracle() {
  const auto series = oracle_series();
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t undefined_mismatch = 0;
  for (const auto& rr : series) {
    worst = std::max(worst, rel_err(hrv::sdnn(rr), oracle::sdnn(rr)));
    worst = std::max(worst, rel_err(hrv::rmssd(rr), oracle::rmssd(rr)));
    worst = std::max(worst, rel_err(hrv::pnnx(rr, 20.0), oracle::pnn(rr, 20.0)));
    worst = std::max(worst, rel_err(hrv::pnnx(rr, 50.0), oracle::pnn(rr, 50.0)));
    const auto p = hrv::poincare(rr);
    worst = std::max(worst, rel_err(p.sd1, oracle::sd1(rr)));
    worst = std::max(worst, rel_err(p.sd2, oracle::sd2(rr)));
    const auto se = hrv::sample_entropy(rr);
    const double want = oracle::sample_entropy(rr, 2, 0.2 * oracle::sdnn(rr));
    if (std::isfinite(want) && se) {
      worst = std::max(worst, rel_err(*se, want));
    } else if (std::isfinite(want) != se.has_value()) {
      ++undefined_mismatch;
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst <= kOracleRelTol && undefined_mismatch == 0 && elapsed < kOracleBudgetS,
          "100 series, max rel err " + fmt("%.2e", worst) + ", undefined mismatches " +
              std::to_string(undefined_mismatch) + ", " + fmt("%.2f", elapsed) + " s"};
}

Outcome poincare_identity() {
  double worst = 0.0;
  for (const auto& rr : oracle_series()) {
    const auto p = hrv::poincare(rr);
    worst = std::max(worst, rel_err(p.sd1 * p.sd1 + p.sd2 * p.sd2, 2.0 * oracle::var(rr)));
  }
  return {worst <= kPoincareRelTol, "max rel err " + fmt("%.2e", worst)};
}

// Least-squares amplitude of the f-Hz component over the middle half.
double fitted_amplitude(const std::vector<double>& y, double f, double fs) {
  double ss = 0.0, cc = 0.0, sc = 0.0, ys = 0.0, yc = 0.0;
  for (std::size_t i = y.size() / 4; i < 3 * y.size() / 4; ++i) {
    const double w = 2.0 * M_PI * f * static_cast<double>(i) / fs;
    ss += std::sin(w) * std::sin(w);
    cc += std::cos(w) * std::cos(w);
    sc += std::sin(w) * std::cos(w);
    ys += y[i] * std::sin(w);
    yc += y[i] * std::cos(w);
  }
  const double det = ss * cc - sc * sc;
  return std::hypot((ys * cc - yc * sc) / det, (yc * ss - ys * sc) / det);
}

Outcome filter_contract() {
  constexpr double fs = 20.0;
  std::vector<double> sine(1200);
  for (std::size_t i = 0; i < sine.size(); ++i) sine[i] = std::sin(2.0 * M_PI * 2.0 * static_cast<double>(i) / fs);
  const double gain = fitted_amplitude(ppg::bandpass(sine), 2.0, fs);

  const std::vector<double> dc(1200, 1.0);
  const auto ydc = ppg::bandpass(dc);
  double residual = 0.0;
  for (std::size_t i = ydc.size() / 4; i < 3 * ydc.size() / 4; ++i) residual = std::max(residual, std::fabs(ydc[i]));

  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(800), z(800), mix(800);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = g(rng);
    z[i] = g(rng) + 1.5;
    mix[i] = 0.7 * x[i] - 1.3 * z[i];
  }
  const auto fx = ppg::bandpass(x);
  const auto fz = ppg::bandpass(z);
  const auto fm = ppg::bandpass(mix);
  double lin = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) lin = std::max(lin, std::fabs(fm[i] - (0.7 * fx[i] - 1.3 * fz[i])));

  const bool ok = gain >= kPassbandLo && gain <= kPassbandHi && residual <= 1.0 / kDcAttenuation && lin <= kLinearityTol;
  return {ok, "2 Hz gain " + fmt("%.4f", gain) + ", DC gain " + fmt("%.2e", residual) +
                  ", linearity err " + fmt("%.2e", lin)};
}

Outcome peak_recovery() {
  synth::SynthConfig cfg;
  cfg.n_shots = 4;
  cfg.hr_bpm = 60.0;
  cfg.rr_jitter_ms = 0.0;
  cfg.resp_amp_ms = 0.0;
  cfg.seed = 60;
  const auto s = synth::gen_session(cfg);
  std::vector<double> ppg_values;
  for (const auto& p : s.recording.ppg) ppg_values.push_back(p.value);
  const auto filtered = ppg::bandpass(ppg_values);
  const auto rr = ppg::correct_rr(ppg::peaks_to_rr(ppg::detect_peaks(filtered, cfg.fs), cfg.fs));
  double mean = 0.0;
  for (double v : rr.intervals_ms) mean += v;
  mean /= static_cast<double>(rr.intervals_ms.size());

  ppg::RRSeries outlier;
  outlier.intervals_ms = {800, 800, 2400, 800, 800};
  outlier.peak_indices = {0, 16, 32, 80, 96, 112};
  const auto fixed = ppg::correct_rr(outlier);
  const bool restored = fixed.intervals_ms == std::vector<double>(5, 800.0);

  return {std::fabs(mean - kRrTarget) <= kRrTol && restored,
          std::to_string(rr.intervals_ms.size()) + " intervals, mean RR " + fmt("%.2f", mean) +
              " ms, outlier restored " + (restored ? "yes" : "no")};
}

Outcome gradient_checks() {
  const auto t0 = Clock::now();
  double lstm = 0.0;
  double mlp = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    lstm = std::max(lstm, nn::gradient_check(nn::ModelKind::Lstm, seed));
    mlp = std::max(mlp, nn::gradient_check(nn::ModelKind::Mlp, seed));
  }
  const double elapsed = seconds_since(t0);
  return {lstm <= kLstmGradTol && mlp <= kMlpGradTol && elapsed < kGradBudgetS,
          "LSTM max rel err " + fmt("%.2e", lstm) + ", MLP " + fmt("%.2e", mlp) + " over 5 seeds, " +
              fmt("%.2f", elapsed) + " s"};
}

app::PipelineConfig rooted(const fs::path& root) {
  app::PipelineConfig cfg;
  cfg.data_dir = (root / "data").string();
  cfg.model_dir = (root / "models").string();
  cfg.out_dir = (root / "out").string();
  return cfg;
}

Outcome motion_end_to_end() {
  TempDir tmp("accept_motion");
  const auto cfg = rooted(tmp.path());
  const auto t0 = Clock::now();
  app::run_synth(cfg);
  app::run_train_motion(cfg);
  app::run_eval_motion(cfg);
  const double elapsed = seconds_since(t0);
  std::ifstream in(cfg.out_path() / "reports" / "motion_eval.json");
  const auto j = nlohmann::json::parse(in);
  const double recall = j["events"]["recall"];
  const double pqd = j["stream_windows"]["pqd"];
  const double sla = j["stream_windows"]["sla"];
  const bool ok = recall >= kEventRecallMin && pqd >= kPqdMin && sla >= kSlaMin && elapsed < kMotionBudgetS;
  return {ok, std::to_string(cfg.synth_sessions) + "x" + std::to_string(cfg.synth_shots) + " shots, event recall " +
                  fmt("%.4f", recall) + " (" + j["events"]["hits"].dump() + "/" + j["events"]["truth"].dump() +
                  ", mean IoU " + fmt("%.3f", j["events"]["mean_iou"].get<double>()) + "), stream PQD " +
                  fmt("%.4f", pqd) + ", stream SLA " + fmt("%.4f", sla) + ", held-out SLA " +
                  fmt("%.4f", j["held_out_windows"]["sla"].get<double>()) + ", " + fmt("%.1f", elapsed) + " s"};
}

Outcome stress_end_to_end() {
  const auto t0 = Clock::now();
  const auto cohort = synth::gen_stress_cohort(100, 2024);
  std::vector<dataset::StressSample> samples;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    dataset::StressSample s;
    s.features = hrv::extract_all(cohort[i].rr);
    s.label = cohort[i].label;
    s.session_id = "cohort";
    s.start_ms = static_cast<std::int64_t>(i);
    samples.push_back(s);
  }
  const auto parts = dataset::split(samples, 0.7, 7);
  nn::TrainConfig cfg;
  cfg.seed = 11;
  const auto trained = nn::mlp_train(parts.train, cfg);
  const auto probs = nn::mlp_predict(trained.model, parts.test);
  std::vector<std::uint8_t> pred;
  std::vector<std::uint8_t> truth;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    pred.push_back(probs[i] > 0.5 ? 1 : 0);
    truth.push_back(static_cast<std::uint8_t>(parts.test[i].label));
  }
  const auto m = metrics::classification_metrics(pred, truth);
  const double elapsed = seconds_since(t0);
  return {m.accuracy >= kStressAccMin && m.f1 >= kStressF1Min && elapsed < kStressBudgetS,
          std::to_string(samples.size()) + " samples, " + std::to_string(parts.train.size()) + "/" +
              std::to_string(parts.test.size()) + " split, held-out accuracy " + fmt("%.4f", m.accuracy) + ", F1 " +
              fmt("%.4f", m.f1) + ", " + fmt("%.2f", elapsed) + " s"};
}

Outcome metric_definitions() {
  const bool pqd_half = metrics::pqd(5, 10) == 0.5;
  const bool pqd_neg = metrics::pqd(30, 10) == -1.0;
  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.5);
  bool sla_is_accuracy = true;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint8_t> p(97), t(97);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = coin(rng);
      t[i] = coin(rng);
    }
    sla_is_accuracy = sla_is_accuracy && metrics::sla(p, t) == metrics::classification_metrics(p, t).accuracy;
  }
  const auto windows = dataset::window_offsets(200, 80, 20).size();
  return {pqd_half && pqd_neg && sla_is_accuracy && windows == 7,
          "pqd(5,10)=" + fmt("%g", metrics::pqd(5, 10)) + ", pqd(30,10)=" + fmt("%g", metrics::pqd(30, 10)) +
              ", sla==accuracy " + (sla_is_accuracy ? "yes" : "no") + ", L=200 windows " + std::to_string(windows)};
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), root).string()] = ss.str();
  }
  return files;
}

Outcome determinism() {
  // Same paths both times: reports embed the configuration.
  TempDir tmp("accept_det");
  std::vector<std::map<std::string, std::string>> runs;
  for (int round = 0; round < 2; ++round) {
    fs::remove_all(tmp.path());
    fs::create_directories(tmp.path());
    auto cfg = rooted(tmp.path());
    cfg.synth_sessions = 6;
    cfg.synth_shots = 10;
    cfg.epochs = 5;
    cfg.threads = 4;
    for (const auto& stage : app::stage_names()) app::run_stage(cfg, stage);
    runs.push_back(snapshot(tmp.path()));
  }
  std::size_t differing = 0;
  std::string first_diff;
  for (const auto& [name, bytes] : runs[0]) {
    const auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != bytes) {
      if (differing++ == 0) first_diff = ", first " + name;
    }
  }
  differing += runs[1].size() > runs[0].size() ? runs[1].size() - runs[0].size() : 0;
  return {differing == 0 && !runs[0].empty(),
          std::to_string(app::stage_names().size()) + " stages run twice, " + std::to_string(runs[0].size()) +
              " artifacts, " + std::to_string(differing) + " differ" + first_diff};
}

}  // namespace

int main() {
  ::unsetenv(app::kDataDirEnv);
  report("hrv-oracle-equivalence", hrv_oracle);
  report("poincare-identity", poincare_identity);
  report("filter-contract", filter_contract);
  report("peak-rr-recovery", peak_recovery);
  report("gradient-checks", gradient_checks);
  report("end-to-end-motion", motion_end_to_end);
  report("end-to-end-stress", stress_end_to_end);
  report("metric-definitions", metric_definitions);
  report("determinism", determinism);
  std::printf("%d failed\n", failures);
  return failures;
}
