#include <doctest.h>

#include <thread>

#include <json.hpp>

#include "bowsense/app/annotation_api.hpp"
#include "bowsense/app/session_io.hpp"
#include "bowsense/synth.hpp"
#include "temp_dir.hpp"

// After the Eigen-using headers; see annotation_api.cpp.
#include <httplib.h>

using namespace bowsense;
using namespace bowsense::app;
using nlohmann::json;

namespace {

// Two synthetic sessions with markers but no saved labels.
struct Fixture {
  TempDir tmp{"api"};
  std::vector<synth::SynthSession> sessions;

  Fixture() {
    for (int k = 0; k < 2; ++k) {
      synth::SynthConfig sc;
      sc.n_shots = 3;
      sc.seed = 40 + static_cast<std::uint64_t>(k);
      sc.subject_id = "S0" + std::to_string(k + 1);
      sc.round_id = "R1";
      sessions.push_back(synth::gen_session(sc));
      export_session(tmp / id(k), sessions.back().recording);
    }
  }
  static std::string id(int k) { return "S0" + std::to_string(k + 1) + "_R1"; }
};

json body(const ApiResponse& r) { return json::parse(r.body); }

std::string shot(std::size_t b1, std::size_t b2, std::size_t b3, std::size_t b4) {
  return json{{"b1", b1}, {"b2", b2}, {"b3", b3}, {"b4", b4}}.dump();
}

}  // namespace

TEST_CASE("session listing and waveform slices") {
  Fixture f;
  AnnotationService api(f.tmp.path());
  const auto list = api.handle("GET", "/api/sessions", {}, "");
  REQUIRE(list.status == 200);
  const auto arr = body(list);
  REQUIRE(arr.size() == 2);
  CHECK(arr[0]["session_id"] == Fixture::id(0));
  CHECK(arr[0]["draw_markers"] == 3);
  CHECK(arr[0]["annotations"] == 0);

  const auto wf = api.handle("GET", "/api/sessions/" + Fixture::id(0) + "/waveform", {{"draw", "1"}}, "");
  REQUIRE(wf.status == 200);
  const auto w = body(wf);
  const auto& rec = f.sessions[0].recording;
  const auto draw = sample_index_at(rec, rec.markers[3].t_ms);  // ExpStart, Draw, Release, Draw
  CHECK(w["draw_index"] == draw);
  CHECK(w["start"] == draw - 150);
  CHECK(w["end"] == draw + 300);
  for (const char* ch : {"ax", "ay", "az", "total", "smooth_diff"}) CHECK(w["channels"][ch].size() == 450);
  CHECK(w["t_ms"].size() == 450);
  CHECK(w["channels"]["ax"][0] == rec.acc[draw - 150].ax);
  for (const auto& m : w["markers"]) {
    CHECK(m["index"] >= w["start"]);
    CHECK(m["index"] < w["end"]);
  }
  CHECK(w["markers"].size() >= 2);

  const auto ranged = body(api.handle("GET", "/api/sessions/" + Fixture::id(0) + "/waveform",
                                      {{"start", "-20"}, {"end", "30"}}, ""));
  CHECK(ranged["start"] == 0);
  CHECK(ranged["end"] == 30);
  CHECK(ranged["draw_index"].is_null());

  CHECK(api.handle("GET", "/api/sessions/nope/waveform", {}, "").status == 404);
  CHECK(api.handle("GET", "/api/sessions/" + Fixture::id(0) + "/waveform", {{"draw", "9"}}, "").status == 400);
  CHECK(api.handle("GET", "/api/sessions/" + Fixture::id(0) + "/waveform", {{"draw", "x"}}, "").status == 400);
  CHECK(api.handle("GET", "/api/sessions/" + Fixture::id(0) + "/waveform", {{"start", "3"}}, "").status == 400);
  CHECK(api.handle("GET", "/api/elsewhere", {}, "").status == 404);
}

TEST_CASE("posting annotations") {
  Fixture f;
  const auto id = Fixture::id(0);
  const auto path = "/api/sessions/" + id + "/annotations";
  {
    AnnotationService api(f.tmp.path());
    const auto ok = api.handle("POST", path, {}, shot(10, 40, 100, 115));
    REQUIRE(ok.status == 200);
    CHECK(body(ok)["b3"] == 100);
    CHECK(body(ok)["session_id"] == id);

    const auto bad = api.handle("POST", path, {}, shot(40, 10, 100, 115));
    CHECK(bad.status == 422);
    CHECK(body(bad)["invariant"].get<std::string>().find("b1") != std::string::npos);

    const auto overlap = api.handle("POST", path, {}, shot(100, 120, 130, 140));
    CHECK(overlap.status == 422);
    CHECK(body(overlap)["invariant"].get<std::string>().find("overlaps") != std::string::npos);

    const auto past_end = api.handle("POST", path, {}, shot(1, 2, 3, 1000000));
    CHECK(past_end.status == 422);
    CHECK(api.handle("POST", path, {}, "{\"b1\": -1, \"b2\": 1, \"b3\": 2, \"b4\": 3}").status == 422);
    CHECK(api.handle("POST", path, {}, "{\"b1\": 1}").status == 422);
    CHECK(api.handle("POST", path, {}, "not json").status == 400);
    CHECK(api.handle("POST", "/api/sessions/nope/annotations", {}, shot(1, 2, 3, 4)).status == 404);

    json mismatched = json::parse(shot(200, 210, 220, 230));
    mismatched["session_id"] = Fixture::id(1);
    CHECK(api.handle("POST", path, {}, mismatched.dump()).status == 422);

    CHECK(api.handle("POST", path, {}, shot(200, 230, 270, 280)).status == 200);
    CHECK(api.handle("POST", path, {}, shot(150, 160, 170, 180)).status == 200);
    const auto got = body(api.handle("GET", path, {}, ""));
    REQUIRE(got.size() == 3);
    CHECK(got[0]["b1"] == 10);
    CHECK(got[1]["b1"] == 150);
    CHECK(got[2]["b1"] == 200);

    CHECK(api.handle("POST", "/api/sessions/" + Fixture::id(1) + "/annotations", {}, shot(5, 6, 7, 8)).status == 200);
    const auto all = body(api.handle("GET", "/api/annotations", {}, ""));
    CHECK(all.size() == 4);
  }
  // Persisted: a fresh service and the file itself see the same labels.
  const auto stored = load_annotations(f.tmp / id);
  REQUIRE(stored.size() == 3);
  CHECK(stored[0] == ShotAnnotation{10, 40, 100, 115});
  AnnotationService reopened(f.tmp.path());
  CHECK(body(reopened.annotations(id)).size() == 3);
}

TEST_CASE("http server") {
  Fixture f;
  AnnotationService api(f.tmp.path());
  HttpServer server(api);
  const int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread worker([&] { server.listen(); });

  httplib::Client client("127.0.0.1", port);
  const auto list = client.Get("/api/sessions");
  REQUIRE(list);
  CHECK(list->status == 200);
  CHECK(json::parse(list->body).size() == 2);

  const auto path = "/api/sessions/" + Fixture::id(1) + "/annotations";
  const auto posted = client.Post(path, shot(10, 40, 100, 115), "application/json");
  REQUIRE(posted);
  CHECK(posted->status == 200);
  const auto rejected = client.Post(path, shot(40, 10, 100, 115), "application/json");
  REQUIRE(rejected);
  CHECK(rejected->status == 422);

  const auto got = client.Get(path);
  REQUIRE(got);
  const auto arr = json::parse(got->body);
  REQUIRE(arr.size() == 1);
  CHECK(arr[0]["b4"] == 115);

  const auto wf = client.Get("/api/sessions/" + Fixture::id(1) + "/waveform?draw=0");
  REQUIRE(wf);
  CHECK(wf->status == 200);
  CHECK(json::parse(wf->body)["channels"]["total"].size() == 450);

  const auto missing = client.Get("/api/sessions/none/annotations");
  REQUIRE(missing);
  CHECK(missing->status == 404);

  server.stop();
  worker.join();
}
