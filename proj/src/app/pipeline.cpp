#include "bowsense/app/pipeline.hpp"

#include <atomic>
#include <exception>
#include <thread>

#include <json.hpp>

#include "bowsense/app/session_io.hpp"
#include "bowsense/hrv_features.hpp"
#include "bowsense/io_util.hpp"
#include "bowsense/lstm.hpp"
#include "bowsense/metrics.hpp"
#include "bowsense/mlp.hpp"
#include "bowsense/neural_nets.hpp"
#include "bowsense/phase_detector.hpp"
#include "bowsense/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace bowsense::app {

namespace {

constexpr double kWindowDecision = 0.5;

fs::path reports_dir(const PipelineConfig& cfg) { return cfg.out_path() / "reports"; }

std::string fmt(double v) { return io::format_double(v); }

ordered_json cls_json(const metrics::EvalReport& r) {
  return {{"accuracy", r.cls.accuracy}, {"precision", r.cls.precision}, {"recall", r.cls.recall},
          {"f1", r.cls.f1},             {"pqd", r.pqd},                 {"sla", r.sla},
          {"tp", r.counts.tp},          {"fp", r.counts.fp},            {"fn", r.counts.fn},
          {"tn", r.counts.tn}};
}

// Flattens a JSON object into "prefix.key: value" lines.
void text_lines(const ordered_json& j, const std::string& prefix, std::string& out) {
  for (const auto& [k, v] : j.items()) {
    const std::string name = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      text_lines(v, name, out);
    } else if (v.is_array()) {
      out += name + ": [" + std::to_string(v.size()) + " values]\n";
    } else if (v.is_number_float()) {
      out += name + ": " + fmt(v.get<double>()) + "\n";
    } else if (v.is_string()) {
      out += name + ": " + v.get<std::string>() + "\n";
    } else {
      out += name + ": " + v.dump() + "\n";
    }
  }
}

// Writes <stem>.json and <stem>.txt under the reports directory.
void write_report(const PipelineConfig& cfg, const std::string& stem, const std::string& title,
                  const ordered_json& body, StageResult& result) {
  const auto json_path = reports_dir(cfg) / (stem + ".json");
  const auto text_path = reports_dir(cfg) / (stem + ".txt");
  std::string text = title + "\n";
  text_lines(body, "", text);
  io::write_file_atomic(json_path, body.dump(2) + "\n");
  io::write_file_atomic(text_path, text);
  result.artifacts.push_back(json_path);
  result.artifacts.push_back(text_path);
}

ordered_json history_json(const nn::TrainHistory& h, std::size_t train, std::size_t test) {
  ordered_json losses = ordered_json::array();
  for (double l : h.epoch_loss) losses.push_back(l);
  return {{"train_samples", train},
          {"test_samples", test},
          {"initial_loss", h.initial_loss},
          {"final_loss", h.final_loss},
          {"epoch_loss", losses}};
}

fs::path require_model(const PipelineConfig& cfg, const char* file, const char* trainer) {
  const auto path = cfg.model_path() / file;
  if (!fs::exists(path)) {
    throw StageError(kExitMissingArtifact, "no trained model at " + path.string() + "; run " + trainer + " first");
  }
  return path;
}

template <typename Fn>
auto model_guard(Fn&& fn) {
  try {
    return fn();
  } catch (const nn::ModelFormatError& e) {
    throw StageError(kExitBadInput, std::string("unreadable model: ") + e.what());
  }
}

std::vector<std::uint8_t> truth_labels(const std::vector<dataset::WindowSample>& s) {
  std::vector<std::uint8_t> out;
  out.reserve(s.size());
  for (const auto& w : s) out.push_back(static_cast<std::uint8_t>(w.label));
  return out;
}

metrics::EvalReport evaluate_or_explain(std::span<const std::uint8_t> preds,
                                        std::span<const std::uint8_t> truths, const char* what) {
  try {
    return metrics::evaluate(preds, truths);
  } catch (const std::invalid_argument& e) {
    throw StageError(kExitBadInput, std::string(what) + ": " + e.what());
  }
}

}  // namespace

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  std::vector<std::exception_ptr> errors(n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

PreparedSession prepare_session(const PipelineConfig& cfg, std::string id, SessionRecording recording,
                                std::vector<ShotAnnotation> annotations) {
  PreparedSession p;
  p.id = std::move(id);
  p.recording = std::move(recording);
  p.annotations = std::move(annotations);
  const std::size_t len = p.recording.acc.size();
  for (const auto& a : p.annotations) {
    if (auto why = annotation_violation(a, len)) {
      throw StageError(kExitBadInput, "session " + p.id + ": invalid annotation: " + *why);
    }
  }
  try {
    (void)positive_mask(p.annotations, len);
  } catch (const std::invalid_argument& e) {
    throw StageError(kExitBadInput, "session " + p.id + ": " + e.what());
  }

  p.channels = accel::build_channels(p.recording.acc, cfg.smooth_window);

  std::vector<double> ppg(p.recording.ppg.size());
  for (std::size_t i = 0; i < ppg.size(); ++i) ppg[i] = p.recording.ppg[i].value;
  try {
    const auto filtered = ppg::bandpass(ppg, cfg.bandpass());
    const auto peaks = ppg::detect_peaks(filtered, cfg.fs, cfg.peaks());
    p.rr = ppg::correct_rr(ppg::peaks_to_rr(peaks, cfg.fs), cfg.correction());
  } catch (const std::exception& e) {
    p.rr.reset();
    p.rr_error = e.what();
  }
  return p;
}

std::vector<PreparedSession> prepare_sessions(const PipelineConfig& cfg) {
  const auto ids = list_sessions(cfg.data_path());
  if (ids.empty()) throw StageError(kExitBadInput, "no sessions under " + cfg.data_dir);
  std::vector<PreparedSession> out(ids.size());
  try {
    parallel_for(ids.size(), cfg.threads, [&](std::size_t i) {
      const auto dir = cfg.data_path() / ids[i];
      out[i] = prepare_session(cfg, ids[i], ingest(dir), load_annotations(dir));
    });
  } catch (const IngestError& e) {
    throw StageError(kExitBadInput, e.what());
  }
  return out;
}

MotionData motion_dataset(const PipelineConfig& cfg, const std::vector<PreparedSession>& sessions) {
  std::vector<std::vector<dataset::WindowSample>> per(sessions.size());
  parallel_for(sessions.size(), cfg.threads, [&](std::size_t i) {
    const auto& s = sessions[i];
    per[i] = dataset::motion_samples(s.id, s.channels, s.annotations, cfg.win, cfg.step);
  });
  std::vector<dataset::WindowSample> all;
  for (auto& v : per) std::move(v.begin(), v.end(), std::back_inserter(all));

  MotionData d;
  d.windows = all.size();
  for (const auto& w : all) d.positives += static_cast<std::size_t>(w.label);
  if (d.positives == 0 || d.positives == d.windows) {
    throw StageError(kExitBadInput, "motion dataset needs both shot and idle windows; are labels.json files present?");
  }
  auto split = dataset::split(dataset::rebalance(all, cfg.seed), cfg.split_ratio, cfg.seed + 1);
  d.train = std::move(split.train);
  d.test = std::move(split.test);
  return d;
}

StressData stress_dataset(const PipelineConfig& cfg, const std::vector<PreparedSession>& sessions) {
  StressData d;
  std::vector<dataset::StressSample> all;
  for (const auto& s : sessions) {
    if (!s.recording.stress_report || !s.rr || s.annotations.empty()) {
      ++d.skipped_sessions;
      continue;
    }
    auto w = dataset::stress_windows(s.id, s.recording, s.annotations, *s.rr);
    d.skipped_shots += w.skipped;
    std::move(w.samples.begin(), w.samples.end(), std::back_inserter(all));
  }
  d.windows = all.size();
  for (const auto& s : all) d.positives += static_cast<std::size_t>(s.label);
  if (d.positives == 0 || d.positives == d.windows) {
    throw StageError(kExitBadInput, "stress dataset needs windows from both stress classes (got " +
                                        std::to_string(d.windows) + " windows, " + std::to_string(d.positives) +
                                        " high-stress)");
  }
  auto split = dataset::split(dataset::rebalance(all, cfg.seed + 2), cfg.split_ratio, cfg.seed + 3);
  d.train = std::move(split.train);
  d.test = std::move(split.test);
  return d;
}

StageResult run_synth(const PipelineConfig& cfg) {
  StageResult r;
  std::vector<std::string> ids(cfg.synth_sessions);
  parallel_for(cfg.synth_sessions, cfg.threads, [&](std::size_t i) {
    synth::SynthConfig sc;
    sc.n_shots = cfg.synth_shots;
    sc.fs = cfg.fs;
    sc.seed = cfg.synth_seed + i;
    synth::apply_regime(sc, i % 2 == 0 ? synth::StressRegime::Low : synth::StressRegime::High);
    const auto subject = std::to_string(i / 3 + 1);
    sc.subject_id = "S" + std::string(subject.size() < 2 ? 2 - subject.size() : 0, '0') + subject;
    sc.round_id = "R" + std::to_string(i % 3 + 1);
    ids[i] = sc.subject_id + "_" + sc.round_id;
    const auto session = synth::gen_session(sc);
    const auto dir = cfg.data_path() / ids[i];
    export_session(dir, session.recording);
    save_annotations(dir, ids[i], session.annotations);
  });
  for (const auto& id : ids) r.artifacts.push_back(cfg.data_path() / id);
  r.summary = "synthesized " + std::to_string(ids.size()) + " sessions in " + cfg.data_dir;
  return r;
}

StageResult run_preprocess(const PipelineConfig& cfg) {
  const auto sessions = prepare_sessions(cfg);
  StageResult r;
  const auto root = cfg.out_path() / "preprocessed";
  ordered_json summary = ordered_json::array();
  for (const auto& s : sessions) {
    std::string channels = "index,t_ms,ax,ay,az,total,smooth_diff\n";
    for (std::size_t i = 0; i < s.channels.size(); ++i) {
      channels += std::to_string(i) + ',' + std::to_string(s.recording.acc[i].t_ms);
      for (std::size_t c = 0; c < accel::kChannelCount; ++c) channels += ',' + fmt(s.channels.at(i, c));
      channels += '\n';
    }
    const auto channel_path = root / s.id / "channels.csv";
    io::write_file_atomic(channel_path, channels);
    r.artifacts.push_back(channel_path);

    ordered_json entry = {{"session_id", s.id},
                          {"acc_samples", s.recording.acc.size()},
                          {"ppg_samples", s.recording.ppg.size()},
                          {"annotations", s.annotations.size()}};
    if (s.rr) {
      std::string rr = "peak_index,t_ms,rr_ms\n";
      for (std::size_t i = 0; i < s.rr->intervals_ms.size(); ++i) {
        const auto peak = s.rr->peak_indices[i + 1];
        rr += std::to_string(peak) + ',' + std::to_string(s.recording.ppg[peak].t_ms) + ',' +
              fmt(s.rr->intervals_ms[i]) + '\n';
      }
      const auto rr_path = root / s.id / "rr.csv";
      io::write_file_atomic(rr_path, rr);
      r.artifacts.push_back(rr_path);
      entry["beats"] = s.rr->peak_indices.size();
      entry["mean_hr_bpm"] = s.rr->intervals_ms.empty() ? 0.0 : hrv::hr(s.rr->intervals_ms);
    } else {
      entry["rr_error"] = s.rr_error;
    }
    summary.push_back(entry);
  }
  const auto summary_path = root / "summary.json";
  io::write_file_atomic(summary_path, summary.dump(2) + "\n");
  r.artifacts.push_back(summary_path);
  r.summary = "preprocessed " + std::to_string(sessions.size()) + " sessions into " + root.string();
  return r;
}

StageResult run_build_dataset(const PipelineConfig& cfg) {
  const auto sessions = prepare_sessions(cfg);
  StageResult r;
  const auto root = cfg.out_path() / "datasets";

  const auto motion = motion_dataset(cfg, sessions);
  std::string motion_csv = "split,session_id,start,label\n";
  for (const auto* part : {&motion.train, &motion.test}) {
    const char* name = part == &motion.train ? "train" : "test";
    for (const auto& w : *part) {
      motion_csv += std::string(name) + ',' + w.session_id + ',' + std::to_string(w.start) + ',' +
                    std::to_string(w.label) + '\n';
    }
  }
  io::write_file_atomic(root / "motion_windows.csv", motion_csv);
  r.artifacts.push_back(root / "motion_windows.csv");

  ordered_json summary = {{"motion",
                           {{"windows", motion.windows},
                            {"positives", motion.positives},
                            {"train", motion.train.size()},
                            {"test", motion.test.size()}}}};
  try {
    const auto stress = stress_dataset(cfg, sessions);
    std::string stress_csv = "split,session_id,start_ms,label";
    for (const char* n : hrv::HrvFeatureVector::names()) stress_csv += std::string(",") + n;
    stress_csv += '\n';
    for (const auto* part : {&stress.train, &stress.test}) {
      const char* name = part == &stress.train ? "train" : "test";
      for (const auto& s : *part) {
        stress_csv += std::string(name) + ',' + s.session_id + ',' + std::to_string(s.start_ms) + ',' +
                      std::to_string(s.label);
        const auto values = s.features.to_array();
        for (std::size_t k = 0; k < values.size(); ++k) {
          // An undefined sample entropy stays an empty cell here.
          const bool undefined = k + 1 == values.size() && !s.features.samp_en;
          stress_csv += ',' + (undefined ? std::string() : fmt(values[k]));
        }
        stress_csv += '\n';
      }
    }
    io::write_file_atomic(root / "stress_features.csv", stress_csv);
    r.artifacts.push_back(root / "stress_features.csv");
    summary["stress"] = {{"windows", stress.windows},
                         {"positives", stress.positives},
                         {"skipped_shots", stress.skipped_shots},
                         {"skipped_sessions", stress.skipped_sessions},
                         {"train", stress.train.size()},
                         {"test", stress.test.size()}};
  } catch (const StageError& e) {
    summary["stress"] = {{"error", e.what()}};
  }
  io::write_file_atomic(root / "summary.json", summary.dump(2) + "\n");
  r.artifacts.push_back(root / "summary.json");
  r.summary = "built datasets in " + root.string();
  return r;
}

StageResult run_train_motion(const PipelineConfig& cfg) {
  const auto sessions = prepare_sessions(cfg);
  const auto data = motion_dataset(cfg, sessions);
  auto trained = nn::lstm_train(data.train, cfg.train(0), cfg.lstm_hidden);
  StageResult r;
  const auto model_path = cfg.model_path() / kMotionModelFile;
  nn::save_model(model_path, trained.model);
  r.artifacts.push_back(model_path);
  write_report(cfg, "motion_train", "motion model training",
               history_json(trained.history, data.train.size(), data.test.size()), r);
  r.summary = "trained motion model on " + std::to_string(data.train.size()) + " windows, loss " +
              fmt(trained.history.initial_loss) + " -> " + fmt(trained.history.final_loss);
  return r;
}

StageResult run_train_stress(const PipelineConfig& cfg) {
  const auto sessions = prepare_sessions(cfg);
  const auto data = stress_dataset(cfg, sessions);
  auto trained = nn::mlp_train(data.train, cfg.train(1), cfg.mlp_hidden);
  StageResult r;
  const auto model_path = cfg.model_path() / kStressModelFile;
  nn::save_model(model_path, trained.model);
  r.artifacts.push_back(model_path);
  write_report(cfg, "stress_train", "stress model training",
               history_json(trained.history, data.train.size(), data.test.size()), r);
  r.summary = "trained stress model on " + std::to_string(data.train.size()) + " windows, loss " +
              fmt(trained.history.initial_loss) + " -> " + fmt(trained.history.final_loss);
  return r;
}

StageResult run_eval_motion(const PipelineConfig& cfg) {
  const auto model_path = require_model(cfg, kMotionModelFile, "train-motion");
  const auto model = model_guard([&] { return nn::load_lstm(model_path, accel::kChannelCount); });
  const auto sessions = prepare_sessions(cfg);
  const auto data = motion_dataset(cfg, sessions);

  std::vector<Eigen::MatrixXd> test_x;
  test_x.reserve(data.test.size());
  for (const auto& w : data.test) test_x.push_back(w.features);
  const auto test_pred = phase::threshold_labels(nn::lstm_predict(model, test_x), kWindowDecision);
  const auto test_truth = truth_labels(data.test);
  const auto window_report = evaluate_or_explain(test_pred, test_truth, "held-out windows");

  const auto det = cfg.detector();
  struct PerSession {
    std::vector<std::uint8_t> pred;
    std::vector<std::uint8_t> truth;
    std::vector<phase::DetectedEvent> events;
    std::size_t hits = 0;
    double iou_sum = 0.0;
  };
  std::vector<PerSession> per(sessions.size());
  parallel_for(sessions.size(), cfg.threads, [&](std::size_t i) {
    const auto& s = sessions[i];
    auto& out = per[i];
    const auto probs = phase::window_probabilities(model, s.channels, det.win, det.step);
    out.pred = phase::threshold_labels(probs, det.threshold);
    const auto mask = positive_mask(s.annotations, s.channels.size());
    for (auto start : dataset::window_offsets(s.channels.size(), det.win, det.step)) {
      out.truth.push_back(static_cast<std::uint8_t>(dataset::label_window(start, det.win, mask)));
    }
    out.events = phase::validate_durations(phase::merge_consecutive(out.pred, det.win, det.step, probs),
                                           det.min_s, det.max_s, det.fs);
    std::vector<phase::Interval> found;
    std::vector<phase::Interval> truth;
    for (const auto& e : out.events) found.push_back({e.start_idx, e.end_idx});
    for (const auto& a : s.annotations) truth.push_back({a.b1, a.b4});
    const auto m = phase::match_events(found, truth, cfg.iou_min);
    out.hits = m.hits();
    for (const auto& p : m.pairs) out.iou_sum += p.iou;
  });

  std::vector<std::uint8_t> stream_pred;
  std::vector<std::uint8_t> stream_truth;
  std::size_t truth_events = 0;
  std::size_t found_events = 0;
  std::size_t hits = 0;
  double iou_sum = 0.0;
  ordered_json detected = ordered_json::array();
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const auto& p = per[i];
    stream_pred.insert(stream_pred.end(), p.pred.begin(), p.pred.end());
    stream_truth.insert(stream_truth.end(), p.truth.begin(), p.truth.end());
    truth_events += sessions[i].annotations.size();
    found_events += p.events.size();
    hits += p.hits;
    iou_sum += p.iou_sum;
    for (auto& e : detected_events_json(sessions[i].id, p.events)) detected.push_back(e);
  }
  const auto stream_report = evaluate_or_explain(stream_pred, stream_truth, "stream windows");

  const auto ratio = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  ordered_json body = {
      {"sessions", sessions.size()},
      {"held_out_windows", cls_json(window_report)},
      {"stream_windows", cls_json(stream_report)},
      {"events",
       {{"truth", truth_events},
        {"detected", found_events},
        {"hits", hits},
        {"recall", ratio(hits, truth_events)},
        {"precision", ratio(hits, found_events)},
        {"mean_iou", hits == 0 ? 0.0 : iou_sum / static_cast<double>(hits)}}},
  };
  body["held_out_windows"]["threshold"] = kWindowDecision;
  body["stream_windows"]["threshold"] = det.threshold;
  body["events"]["iou_min"] = cfg.iou_min;

  StageResult r;
  write_report(cfg, "motion_eval", "motion evaluation", body, r);
  const auto events_path = cfg.out_path() / "detected_events.json";
  io::write_file_atomic(events_path, detected.dump(2) + "\n");
  r.artifacts.push_back(events_path);
  r.summary = "motion: event recall " + fmt(ratio(hits, truth_events)) + ", stream PQD " + fmt(stream_report.pqd) +
              ", stream SLA " + fmt(stream_report.sla);
  return r;
}

StageResult run_eval_stress(const PipelineConfig& cfg) {
  const auto model_path = require_model(cfg, kStressModelFile, "train-stress");
  const auto model = model_guard([&] { return nn::load_mlp(model_path, hrv::kFeatureCount); });
  const auto sessions = prepare_sessions(cfg);
  const auto data = stress_dataset(cfg, sessions);
  const auto probs = nn::mlp_predict(model, data.test);
  const auto pred = phase::threshold_labels(probs, kWindowDecision);
  std::vector<std::uint8_t> truth;
  for (const auto& s : data.test) truth.push_back(static_cast<std::uint8_t>(s.label));
  const auto report = evaluate_or_explain(pred, truth, "held-out stress windows");

  ordered_json body = {{"sessions", sessions.size()},
                       {"windows", data.windows},
                       {"skipped_shots", data.skipped_shots},
                       {"skipped_sessions", data.skipped_sessions},
                       {"held_out", cls_json(report)}};
  body["held_out"]["threshold"] = kWindowDecision;
  StageResult r;
  write_report(cfg, "stress_eval", "stress evaluation", body, r);
  r.summary = "stress: accuracy " + fmt(report.cls.accuracy) + ", F1 " + fmt(report.cls.f1);
  return r;
}

StageResult run_report(const PipelineConfig& cfg) {
  ordered_json body = {{"config", cfg.to_json()}};
  bool any_eval = false;
  for (const char* stem : {"motion_train", "motion_eval", "stress_train", "stress_eval"}) {
    const auto path = reports_dir(cfg) / (std::string(stem) + ".json");
    if (!fs::exists(path)) continue;
    auto part = ordered_json::parse(io::read_file(path));
    if (part.contains("epoch_loss")) part.erase("epoch_loss");
    body[stem] = std::move(part);
    any_eval = any_eval || std::string_view(stem).ends_with("eval");
  }
  if (!any_eval) {
    throw StageError(kExitMissingArtifact, "no evaluation reports under " + reports_dir(cfg).string() +
                                               "; run eval-motion or eval-stress first");
  }
  StageResult r;
  const auto json_path = cfg.out_path() / "report.json";
  const auto text_path = cfg.out_path() / "report.txt";
  std::string text = "bowsense report\n";
  text_lines(body, "", text);
  io::write_file_atomic(json_path, body.dump(2) + "\n");
  io::write_file_atomic(text_path, text);
  r.artifacts = {json_path, text_path};
  r.summary = "wrote " + text_path.string();
  return r;
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"synth",       "preprocess",  "build-dataset",
                                                 "train-motion", "train-stress", "eval-motion",
                                                 "eval-stress", "report"};
  return names;
}

StageResult run_stage(const PipelineConfig& cfg, std::string_view name) {
  if (name == "synth") return run_synth(cfg);
  if (name == "preprocess") return run_preprocess(cfg);
  if (name == "build-dataset") return run_build_dataset(cfg);
  if (name == "train-motion") return run_train_motion(cfg);
  if (name == "train-stress") return run_train_stress(cfg);
  if (name == "eval-motion") return run_eval_motion(cfg);
  if (name == "eval-stress") return run_eval_stress(cfg);
  if (name == "report") return run_report(cfg);
  throw std::invalid_argument("unknown stage '" + std::string(name) + "'");
}

}  // namespace bowsense::app
