#include <doctest.h>


#include <cstdio>
#include <fstream>
#include <random>
#include <thread>

#include "coughtb/audio_io.hpp"
#include "coughtb/errors.hpp"
#include "coughtb/screening_service.hpp"

#include <httplib.h>  // after Eigen: resolv.h defines _res
#include "fixtures.hpp"
#include "helpers.hpp"

using namespace coughtb;
using nlohmann::json;

namespace {

const json kDemo = {{"age", 35}, {"gender", "male"}, {"bmi", 21.0}, {"symptom", true}};

std::string two_burst_wav() { return encode_wav(testing::burst_clip(4.0, {{1.0, 1.3}, {2.5, 2.8}})); }

// A recording of a TB+ participant the bundle has not seen.
std::string unseen_tb_wav() {
  SimulationSpec spec = testing::small_spec();
  spec.seed = 404;
  const StudyManifest m = simulate_manifest(spec);
  const SimulatedRecordingSource src(spec);
  for (const auto& r : m.recordings) {
    const Participant& p = m.participant(r.participant_id);
    if (p.group == Group::TBpos) return encode_wav(src.load(p, r));
  }
  return {};
}

std::string open_with_audio(ScreeningService& svc) {
  const std::string id = svc.create_session().body["session_id"];
  REQUIRE(svc.upload_recording(id, two_burst_wav()).status == 200);
  return id;
}

// Written-out transition graph, independent of next_state.
std::optional<SessionState> oracle(SessionState s, SessionAction a, bool coughs, bool demo) {
  using S = SessionState;
  using A = SessionAction;
  if (s == S::Closed) return std::nullopt;
  if (a == A::Close) return S::Closed;
  if (s == S::Open && a == A::Upload) return coughs ? (demo ? S::HasDemographics : S::HasAudio) : S::Open;
  if (s == S::Open && a == A::Demographics) return S::Open;
  if (s == S::HasAudio && a == A::Upload) return S::HasAudio;
  if ((s == S::HasAudio || s == S::HasDemographics) && a == A::Demographics) return S::HasDemographics;
  if ((s == S::HasDemographics || s == S::Scored) && a == A::Score) return S::Scored;
  return std::nullopt;
}

}  // namespace

TEST_CASE("transition table") {
  const std::array states = {SessionState::Open, SessionState::HasAudio, SessionState::HasDemographics,
                             SessionState::Scored, SessionState::Closed};
  const std::array actions = {SessionAction::Upload, SessionAction::Demographics, SessionAction::Score,
                              SessionAction::Close};
  for (auto s : states)
    for (auto a : actions)
      for (bool c : {false, true})
        for (bool d : {false, true}) CHECK(next_state(s, a, c, d) == oracle(s, a, c, d));
}

TEST_CASE("health and session creation") {
  ScreeningService none(nullptr);
  CHECK(none.health().body["ready"] == false);
  CHECK(none.create_session().status == 503);

  ScreeningService svc(testing::small_world().bundle);
  CHECK(svc.health().body["ready"] == true);
  const auto a = svc.create_session();
  const auto b = svc.create_session();
  CHECK(a.status == 201);
  CHECK(a.body["state"] == "Open");
  CHECK(a.body["session_id"] != b.body["session_id"]);
  CHECK(svc.get_session("nope").status == 404);
}

TEST_CASE("uploads") {
  ScreeningService svc(testing::small_world().bundle);
  const std::string id = svc.create_session().body["session_id"];

  const auto silent = svc.upload_recording(id, encode_wav(testing::silence(3.0)));
  CHECK(silent.status == 200);
  CHECK(silent.body["segments"].empty());
  CHECK(silent.body["advisory"] == "retry");
  CHECK(silent.body["state"] == "Open");

  CHECK(svc.upload_recording(id, "not a wav").status == 400);
  CHECK(svc.upload_recording("S999999", two_burst_wav()).status == 404);

  const auto two = svc.upload_recording(id, two_burst_wav());
  CHECK(two.body["state"] == "HasAudio");
  REQUIRE(two.body["segments"].size() == 2);
  // Boundaries sit on frame centres: within two hops of burst edge +/- 200 ms.
  CHECK(std::abs(two.body["segments"][0]["onset_s"].get<double>() - 0.8) <= 0.020 + 1e-9);
  CHECK(std::abs(two.body["segments"][1]["offset_s"].get<double>() - 3.0) <= 0.020 + 1e-9);
}

TEST_CASE("demographics") {
  ScreeningService svc(testing::small_world().bundle);
  const std::string id = open_with_audio(svc);

  json young = kDemo;
  young["age"] = 17;
  const auto r = svc.put_demographics(id, young.dump());
  CHECK(r.status == 422);
  CHECK(r.body["fields"].contains("age"));
  json missing = kDemo;
  missing.erase("bmi");
  CHECK(svc.put_demographics(id, missing.dump()).body["fields"].contains("bmi"));
  CHECK(svc.put_demographics(id, "{").status == 400);

  CHECK(svc.put_demographics(id, kDemo.dump()).body["state"] == "HasDemographics");
  const double first = svc.score(id, std::nullopt, std::nullopt).body["score"];
  // Once scored, demographics are frozen.
  CHECK(svc.put_demographics(id, kDemo.dump()).status == 409);

  const std::string id2 = open_with_audio(svc);
  json other = kDemo;
  other["symptom"] = false;
  other["age"] = 70;
  svc.put_demographics(id2, other.dump());
  CHECK(svc.put_demographics(id2, kDemo.dump()).status == 200);
  CHECK(svc.score(id2, std::nullopt, std::nullopt).body["score"] == first);
}

TEST_CASE("scoring") {
  ScreeningService svc(testing::small_world().bundle);
  const std::string id = svc.create_session().body["session_id"];
  CHECK(svc.score(id, std::nullopt, std::nullopt).status == 409);
  REQUIRE(svc.upload_recording(id, unseen_tb_wav()).body["segments"].size() >= 1);
  CHECK(svc.score(id, std::nullopt, std::nullopt).status == 409);
  svc.put_demographics(id, kDemo.dump());

  CHECK(svc.score(id, std::nullopt, std::string("0")).status == 400);
  CHECK(svc.score(id, std::nullopt, std::string("1")).status == 400);
  CHECK(svc.score(id, std::nullopt, std::string("abc")).status == 400);
  CHECK(svc.score(id, std::string("tb_vs_everything"), std::nullopt).status == 422);

  const auto a = svc.score(id, std::nullopt, std::nullopt);
  REQUIRE(a.status == 200);
  CHECK(a.body["threshold"] == 0.38);
  CHECK(a.body["operating_point_source"] == "default 0.38");
  CHECK(a.body["task"] == "tb_vs_rest");
  CHECK(a.body["decision"] == "refer");
  CHECK(a.body.contains("validated_operating_point"));
  const auto b = svc.score(id, std::nullopt, std::nullopt);
  CHECK(a.body == b.body);

  SUBCASE("score equal to the threshold refers") {
    const double s = a.body["score"];
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", s);
    const auto r = svc.score(id, std::nullopt, std::string(buf));
    CHECK(r.body["threshold"].get<double>() == s);
    CHECK(r.body["decision"] == "refer");
    CHECK(r.body["operating_point_source"] == "request");
    std::snprintf(buf, sizeof buf, "%.17g", std::nextafter(s, 1.0));
    CHECK(svc.score(id, std::nullopt, std::string(buf)).body["decision"] == "no-refer");
  }
  SUBCASE("after scoring, uploads are refused") {
    CHECK(svc.upload_recording(id, two_burst_wav()).status == 409);
    CHECK(svc.close_session(id).status == 200);
    CHECK(svc.score(id, std::nullopt, std::nullopt).status == 409);
    CHECK(svc.close_session(id).status == 409);
  }
}

TEST_CASE("state machine against random request sequences") {
  ScreeningService svc(testing::small_world().bundle);
  const std::string loud = two_burst_wav();
  const std::string quiet = encode_wav(testing::silence(2.0));
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> pick(0, 5);
  for (int seq = 0; seq < 100; ++seq) {
    const std::string id = svc.create_session().body["session_id"];
    SessionState model = SessionState::Open;
    bool coughs = false, demo = false;
    for (int step = 0; step < 12; ++step) {
      const int a = pick(rng);
      ServiceResponse r;
      std::optional<SessionState> expect;
      switch (a) {
        case 0:
        case 1: {
          const bool has = a == 0;
          expect = oracle(model, SessionAction::Upload, has, demo);
          r = svc.upload_recording(id, has ? loud : quiet);
          if (expect && has) coughs = true;
          break;
        }
        case 2:
          expect = oracle(model, SessionAction::Demographics, coughs, true);
          r = svc.put_demographics(id, kDemo.dump());
          if (expect) demo = true;
          break;
        case 3:
        case 4:
          expect = oracle(model, SessionAction::Score, coughs, demo);
          r = svc.score(id, std::nullopt, std::nullopt);
          break;
        default:
          if (step < 9) continue;
          expect = oracle(model, SessionAction::Close, coughs, demo);
          r = svc.close_session(id);
      }
      CHECK(r.status == (expect ? 200 : 409));
      if (expect) model = *expect;
      CHECK(svc.get_session(id).body["state"] == std::string(to_string(model)));
      if (model == SessionState::Scored) CHECK(coughs);
      if (model == SessionState::Scored) CHECK(demo);
    }
  }
}

TEST_CASE("HTTP routes") {
  const auto audit = testing::tmp_dir("service_audit");
  ScreeningService svc(testing::small_world().bundle, {audit});
  httplib::Server server;
  svc.mount(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);

  auto health = cli.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);
  auto created = cli.Post("/sessions");
  REQUIRE(created);
  CHECK(created->status == 201);
  const std::string id = json::parse(created->body)["session_id"];
  const std::string base = "/sessions/" + id;
  CHECK(cli.Post(base + "/recordings", two_burst_wav(), "audio/wav")->status == 200);
  CHECK(cli.Put(base + "/demographics", kDemo.dump(), "application/json")->status == 200);
  auto scored = cli.Post(base + "/score?task=tb_vs_hc&threshold=0.4");
  REQUIRE(scored);
  CHECK(scored->status == 200);
  const json body = json::parse(scored->body);
  CHECK(body["task"] == "tb_vs_hc");
  CHECK(body["threshold"] == 0.4);
  CHECK(cli.Get(base)->status == 200);
  CHECK(cli.Post("/sessions/S424242/close")->status == 404);
  CHECK(cli.Post(base + "/close")->status == 200);

  server.stop();
  t.join();

  std::ifstream log(audit / (id + ".jsonl"));
  int lines = 0;
  for (std::string line; std::getline(log, line);) {
    CHECK_NOTHROW(json::parse(line));
    ++lines;
  }
  CHECK(lines == 5);
}
