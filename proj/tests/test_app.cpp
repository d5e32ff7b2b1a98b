#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "bowsense/app/config.hpp"
#include "bowsense/app/pipeline.hpp"
#include "bowsense/app/session_io.hpp"
#include "bowsense/synth.hpp"
#include "temp_dir.hpp"

using namespace bowsense;
using namespace bowsense::app;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return files;
}

PipelineConfig small_config(const fs::path& root) {
  PipelineConfig cfg;
  cfg.data_dir = (root / "data").string();
  cfg.model_dir = (root / "models").string();
  cfg.out_dir = (root / "out").string();
  cfg.synth_sessions = 4;
  cfg.synth_shots = 6;
  cfg.epochs = 3;
  cfg.lstm_hidden = 6;
  cfg.mlp_hidden = 4;
  cfg.threads = 2;
  return cfg;
}

struct EnvGuard {
  EnvGuard() { ::unsetenv(kDataDirEnv); }
  ~EnvGuard() { ::unsetenv(kDataDirEnv); }
};

}  // namespace

TEST_CASE("config precedence") {
  EnvGuard guard;
  TempDir tmp("cfg");
  CHECK(load_config(nullptr, {}).data_dir == "data");

  ::setenv(kDataDirEnv, "from_env", 1);
  CHECK(load_config(nullptr, {}).data_dir == "from_env");

  const auto file = tmp / "c.json";
  write(file, R"({"data_dir": "from_file", "epochs": 7, "threshold": 0.8})");
  auto cfg = load_config(&file, {});
  CHECK(cfg.data_dir == "from_file");
  CHECK(cfg.epochs == 7);
  CHECK(cfg.threshold == 0.8);

  cfg = load_config(&file, {{"data_dir", "from_flag"}, {"epochs", "9"}});
  CHECK(cfg.data_dir == "from_flag");
  CHECK(cfg.epochs == 9);
  CHECK(cfg.threshold == 0.8);
}

TEST_CASE("config validation names the key") {
  EnvGuard guard;
  const auto fails_with = [](std::map<std::string, std::string> o, const std::string& key) {
    try {
      load_config(nullptr, o);
    } catch (const std::invalid_argument& e) {
      return std::string(e.what()).find(key) != std::string::npos;
    }
    return false;
  };
  CHECK(fails_with({{"threshold", "1.5"}}, "threshold"));
  CHECK(fails_with({{"win", "0"}}, "win"));
  CHECK(fails_with({{"epochs", "0"}}, "epochs"));
  CHECK(fails_with({{"bp_low_hz", "12"}}, "bp_low_hz"));
  CHECK(fails_with({{"split_ratio", "1"}}, "split_ratio"));
  CHECK(fails_with({{"min_event_s", "9"}}, "min_event_s"));
  CHECK(fails_with({{"epochs", "many"}}, "epochs"));
  CHECK(fails_with({{"no_such_key", "1"}}, "no_such_key"));

  TempDir tmp("cfgbad");
  const auto file = tmp / "c.json";
  write(file, "{not json");
  CHECK_THROWS_AS(load_config(&file, {}), std::invalid_argument);

  PipelineConfig cfg;
  for (const auto& key : PipelineConfig::keys()) CHECK(cfg.to_json().contains(key));
}

TEST_CASE("ingest round trip") {
  TempDir tmp("ingest");
  synth::SynthConfig sc;
  sc.n_shots = 3;
  sc.seed = 8;
  sc.subject_id = "S07";
  sc.round_id = "R2";
  const auto s = synth::gen_session(sc);
  export_session(tmp.path(), s.recording);
  const auto back = ingest(tmp.path());
  CHECK(back == s.recording);

  save_annotations(tmp.path(), "S07_R2", s.annotations);
  CHECK(load_annotations(tmp.path()) == s.annotations);
  CHECK(load_annotations(tmp / "nowhere").empty());
}

TEST_CASE("ingest errors name the line") {
  TempDir tmp("ingest_bad");
  synth::SynthConfig sc;
  sc.n_shots = 1;
  const auto s = synth::gen_session(sc);
  export_session(tmp.path(), s.recording);

  write(tmp / kMarkersFile, "t_ms,kind\n0,ExpStart\n10500,Drow\n");
  try {
    ingest(tmp.path());
    FAIL("expected an ingest error");
  } catch (const IngestError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("markers.csv:3") != std::string::npos);
    CHECK(std::string(e.what()).find("Drow") != std::string::npos);
  }

  export_session(tmp.path(), s.recording);
  write(tmp / kAccFile, "t_ms,ax,ay,az\n0,0,0,1\n50,0,0,1\n40,0,0,1\n");
  try {
    ingest(tmp.path());
    FAIL("expected an ingest error");
  } catch (const IngestError& e) {
    CHECK(e.line() == 4);
  }

  export_session(tmp.path(), s.recording);
  fs::remove(tmp / kPpgFile);
  CHECK_THROWS_AS(ingest(tmp.path()), IngestError);
}

TEST_CASE("detected events use the annotation shape") {
  const std::vector<phase::DetectedEvent> ev = {{20, 120, 0.95}};
  const auto j = detected_events_json("S01_R1", ev);
  REQUIRE(j.size() == 1);
  CHECK(j[0]["b1"] == 20);
  CHECK(j[0]["b4"] == 120);
  CHECK(j[0]["b2"].is_null());
  CHECK(j[0]["b3"].is_null());
  CHECK(j[0]["session_id"] == "S01_R1");
}

TEST_CASE("parallel_for rethrows the lowest failing index") {
  std::vector<int> out(50, 0);
  parallel_for(out.size(), 4, [&](std::size_t i) { out[i] = static_cast<int>(i) * 2; });
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i) * 2);
  try {
    parallel_for(20, 4, [](std::size_t i) {
      if (i == 7 || i == 13) throw std::runtime_error("fail " + std::to_string(i));
    });
    FAIL("expected a rethrow");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "fail 7");
  }
}

TEST_CASE("pipeline stages") {
  EnvGuard guard;
  TempDir tmp("pipe");
  const auto cfg = small_config(tmp.path());

  SUBCASE("missing model") {
    run_synth(cfg);
    try {
      run_eval_motion(cfg);
      FAIL("expected a missing-artifact error");
    } catch (const StageError& e) {
      CHECK(e.code() == kExitMissingArtifact);
      CHECK(std::string(e.what()).find("train-motion") != std::string::npos);
    }
    try {
      run_report(cfg);
      FAIL("expected a missing-artifact error");
    } catch (const StageError& e) {
      CHECK(e.code() == kExitMissingArtifact);
    }
  }

  SUBCASE("empty data directory") {
    fs::create_directories(cfg.data_path());
    CHECK_THROWS_AS(run_train_motion(cfg), StageError);
  }

  SUBCASE("overlapping annotations are rejected") {
    run_synth(cfg);
    const auto first = list_sessions(cfg.data_path()).front();
    save_annotations(cfg.data_path() / first, first, {{10, 40, 80, 90}, {50, 60, 70, 95}});
    try {
      run_preprocess(cfg);
      FAIL("expected a bad-input error");
    } catch (const StageError& e) {
      CHECK(e.code() == kExitBadInput);
    }
  }

  SUBCASE("full run is deterministic") {
    std::vector<std::map<std::string, std::string>> runs;
    for (int round = 0; round < 2; ++round) {
      fs::remove_all(tmp.path());
      fs::create_directories(tmp.path());
      for (const auto& name : stage_names()) {
        CAPTURE(name);
        CHECK_NOTHROW(run_stage(cfg, name));
      }
      runs.push_back(snapshot(tmp.path()));
    }
    CHECK(runs[0].size() == runs[1].size());
    for (const auto& [name, bytes] : runs[0]) {
      CAPTURE(name);
      REQUIRE(runs[1].count(name) == 1);
      CHECK(runs[1].at(name) == bytes);
    }
    CHECK(runs[0].count("out/report.json") == 1);
    CHECK(runs[0].count("out/detected_events.json") == 1);
    CHECK(runs[0].count("models/motion_lstm.bin") == 1);
    CHECK(runs[0].count("models/stress_mlp.bin") == 1);

    const auto report = nlohmann::json::parse(runs[0].at("out/report.json"));
    CHECK(report.contains("config"));
    const auto events = nlohmann::json::parse(runs[0].at("out/detected_events.json"));
    CHECK(events.is_array());
    CHECK_THROWS(run_stage(cfg, "no-such-stage"));
  }
}
