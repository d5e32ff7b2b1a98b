#include "bowsense/app/config.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <variant>

#include "bowsense/io_util.hpp"

namespace bowsense::app {

namespace {

using Member = std::variant<std::string PipelineConfig::*, double PipelineConfig::*,
                            std::uint64_t PipelineConfig::*>;

struct Field {
  const char* name;
  Member member;
};

const std::vector<Field>& fields() {
  using C = PipelineConfig;
  static const std::vector<Field> table = {
      {"data_dir", &C::data_dir},
      {"model_dir", &C::model_dir},
      {"out_dir", &C::out_dir},
      {"fs", &C::fs},
      {"smooth_window", &C::smooth_window},
      {"win", &C::win},
      {"step", &C::step},
      {"threshold", &C::threshold},
      {"min_event_s", &C::min_event_s},
      {"max_event_s", &C::max_event_s},
      {"iou_min", &C::iou_min},
      {"bp_low_hz", &C::bp_low_hz},
      {"bp_high_hz", &C::bp_high_hz},
      {"bp_order", &C::bp_order},
      {"refractory_s", &C::refractory_s},
      {"rr_tolerance", &C::rr_tolerance},
      {"split_ratio", &C::split_ratio},
      {"seed", &C::seed},
      {"lr", &C::lr},
      {"momentum", &C::momentum},
      {"epochs", &C::epochs},
      {"batch_size", &C::batch_size},
      {"clip_norm", &C::clip_norm},
      {"lstm_hidden", &C::lstm_hidden},
      {"mlp_hidden", &C::mlp_hidden},
      {"synth_sessions", &C::synth_sessions},
      {"synth_shots", &C::synth_shots},
      {"synth_seed", &C::synth_seed},
      {"host", &C::host},
      {"port", &C::port},
      {"threads", &C::threads},
  };
  return table;
}

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw std::invalid_argument("config: " + key + " " + why);
}

}  // namespace

const std::vector<std::string>& PipelineConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.emplace_back(f.name);
    return out;
  }();
  return names;
}

void PipelineConfig::set(std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (key != f.name) continue;
    const std::string k(key);
    std::visit(
        [&](auto member) {
          using T = std::remove_reference_t<decltype(this->*member)>;
          if constexpr (std::is_same_v<T, std::string>) {
            this->*member = std::string(value);
          } else if constexpr (std::is_same_v<T, double>) {
            const auto v = io::parse_double(io::trim(value));
            if (!v) bad(k, "expects a number, got '" + std::string(value) + "'");
            this->*member = *v;
          } else {
            const auto v = io::parse_int(io::trim(value));
            if (!v || *v < 0) bad(k, "expects a non-negative integer, got '" + std::string(value) + "'");
            this->*member = static_cast<std::uint64_t>(*v);
          }
        },
        f.member);
    return;
  }
  throw std::invalid_argument("config: unknown key '" + std::string(key) + "'");
}

nlohmann::ordered_json PipelineConfig::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& f : fields()) {
    std::visit([&](auto member) { j[f.name] = this->*member; }, f.member);
  }
  return j;
}

void PipelineConfig::validate() const {
  const auto finite_pos = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (data_dir.empty()) bad("data_dir", "must not be empty");
  if (model_dir.empty()) bad("model_dir", "must not be empty");
  if (out_dir.empty()) bad("out_dir", "must not be empty");
  if (!finite_pos(fs)) bad("fs", "must be > 0");
  if (smooth_window < 1) bad("smooth_window", "must be >= 1");
  if (win < 1) bad("win", "must be >= 1");
  if (step < 1) bad("step", "must be >= 1");
  if (!(threshold >= 0.0 && threshold < 1.0)) bad("threshold", "must be in [0, 1)");
  if (!finite_pos(min_event_s)) bad("min_event_s", "must be > 0");
  if (!(std::isfinite(max_event_s) && max_event_s >= min_event_s)) bad("max_event_s", "must be >= min_event_s");
  if (!(iou_min > 0.0 && iou_min <= 1.0)) bad("iou_min", "must be in (0, 1]");
  if (bp_order < 1 || bp_order > 10) bad("bp_order", "must be in 1..10");
  try {
    ppg::ButterworthBandpass check(bandpass());
  } catch (const std::invalid_argument& e) {
    bad("bp_low_hz/bp_high_hz", std::string("rejected: ") + e.what());
  }
  if (!finite_pos(refractory_s)) bad("refractory_s", "must be > 0");
  if (!(rr_tolerance > 0.0 && rr_tolerance < 1.0)) bad("rr_tolerance", "must be in (0, 1)");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) bad("split_ratio", "must be in (0, 1)");
  if (!(std::isfinite(lr) && lr >= 0.0)) bad("lr", "must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) bad("momentum", "must be in [0, 1)");
  if (epochs < 1) bad("epochs", "must be >= 1");
  if (batch_size < 1) bad("batch_size", "must be >= 1");
  if (!(clip_norm >= 0.0)) bad("clip_norm", "must be >= 0");
  if (lstm_hidden < 1) bad("lstm_hidden", "must be >= 1");
  if (mlp_hidden < 1) bad("mlp_hidden", "must be >= 1");
  if (port > 65535) bad("port", "must be <= 65535");
}

ppg::BandpassParams PipelineConfig::bandpass() const {
  return {fs, bp_low_hz, bp_high_hz, static_cast<int>(bp_order)};
}

ppg::PeakParams PipelineConfig::peaks() const {
  ppg::PeakParams p;
  p.refractory_s = refractory_s;
  return p;
}

ppg::CorrectionParams PipelineConfig::correction() const {
  ppg::CorrectionParams p;
  p.tolerance = rr_tolerance;
  return p;
}

phase::DetectorConfig PipelineConfig::detector() const {
  return {win, step, threshold, min_event_s, max_event_s, fs};
}

nn::TrainConfig PipelineConfig::train(std::uint64_t stream) const {
  nn::TrainConfig t;
  t.learning_rate = lr;
  t.momentum = momentum;
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.clip_norm = clip_norm;
  t.seed = seed + stream;
  return t;
}

void apply_json(PipelineConfig& cfg, const nlohmann::json& object) {
  if (!object.is_object()) throw std::invalid_argument("config: top level must be a JSON object");
  for (const auto& [key, value] : object.items()) {
    if (value.is_string()) {
      cfg.set(key, value.get<std::string>());
    } else if (value.is_number()) {
      cfg.set(key, value.dump());
    } else {
      throw std::invalid_argument("config: " + key + " must be a string or a number");
    }
  }
}

PipelineConfig load_config(const std::filesystem::path* config_file,
                           const std::map<std::string, std::string>& overrides) {
  PipelineConfig cfg;
  if (const char* env = std::getenv(kDataDirEnv); env != nullptr && *env != '\0') cfg.data_dir = env;
  if (config_file != nullptr) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(io::read_file(*config_file));
    } catch (const nlohmann::json::parse_error& e) {
      throw std::invalid_argument("config: " + config_file->string() + ": " + e.what());
    }
    apply_json(cfg, j);
  }
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

}  // namespace bowsense::app
