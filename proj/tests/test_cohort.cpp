#include <doctest.h>

#include <fstream>

#include "coughtb/audio_io.hpp"
#include "coughtb/cohort.hpp"
#include "coughtb/cough_segmenter.hpp"
#include "coughtb/dsp_features.hpp"
#include "coughtb/errors.hpp"
#include "helpers.hpp"

using namespace coughtb;
using nlohmann::json;

namespace {

json participant(const std::string& id, const std::string& group, bool symptom) {
  return {{"participant_id", id}, {"group", group},         {"gender", "female"},
          {"age_years", 34},      {"bmi", 21.5},            {"symptom_present", symptom},
          {"hiv_positive", false}, {"site", "Kanyama"},     {"recorded_at", "2023-05-02T09"}};
}

json recording(const std::string& id, int session = 1) {
  return {{"participant_id", id}, {"session_index", session}, {"device", "mic"}, {"wav", "a.wav"}};
}

json minimal() {
  return {{"schema_version", 1},
          {"participants", json::array({participant("P1", "TB+", true)})},
          {"recordings", json::array({recording("P1")})}};
}

template <typename E>
E rejects(const json& j) {
  try {
    parse_manifest(j, "/tmp", false);
  } catch (const E& e) {
    return e;
  }
  FAIL("manifest was accepted");
  throw;
}

double band_mean(const LtasCurve& c, double lo, double hi) {
  double s = 0;
  int n = 0;
  for (Eigen::Index i = 0; i < c.freqs_hz.size(); ++i) {
    if (c.freqs_hz[i] >= lo && c.freqs_hz[i] <= hi) {
      s += c.power_db[i];
      ++n;
    }
  }
  return s / n;
}

}  // namespace

TEST_CASE("minimal manifest loads") {
  const StudyManifest m = parse_manifest(minimal(), "/data", false);
  CHECK(m.participants.size() == 1);
  CHECK(m.recordings.at(0).wav == std::filesystem::path("/data/a.wav"));
  CHECK(m.group_totals() == std::array<int, 3>{1, 0, 0});
  CHECK(m.participant("P1").recording_hour() == 9);
  CHECK_THROWS_AS(m.participant("P2"), DanglingReferenceError);
}

TEST_CASE("manifest invariants are named") {
  json hc = minimal();
  hc["participants"][0] = participant("P1", "HC", true);
  CHECK(rejects<InvariantViolation>(hc).invariant() == "hc_asymptomatic");

  json or_quiet = minimal();
  or_quiet["participants"][0] = participant("P1", "OR", false);
  CHECK(rejects<InvariantViolation>(or_quiet).invariant() == "symptomatic_groups");

  json no_rec = minimal();
  no_rec["participants"].push_back(participant("P2", "TB+", true));
  CHECK(rejects<InvariantViolation>(no_rec).invariant() == "participant_has_recording");
}

TEST_CASE("manifest errors are distinct and carry field paths") {
  json young = minimal();
  young["participants"][0]["age_years"] = 17;
  CHECK(rejects<SchemaError>(young).field_path() == "$.participants[0].age_years");

  json typed = minimal();
  typed["participants"][0]["bmi"] = "heavy";
  CHECK(rejects<SchemaError>(typed).field_path() == "$.participants[0].bmi");

  json missing = minimal();
  missing["participants"][0].erase("group");
  CHECK(rejects<SchemaError>(missing).field_path() == "$.participants[0].group");

  json dup = minimal();
  dup["participants"].push_back(participant("P1", "TB+", true));
  rejects<DuplicateIdError>(dup);

  json dangling = minimal();
  dangling["recordings"].push_back(recording("P9"));
  rejects<DanglingReferenceError>(dangling);

  CHECK_THROWS_AS(parse_manifest(minimal(), "/definitely/not/here", true), DanglingReferenceError);
  CHECK_THROWS_AS(load_manifest("/definitely/not/here/manifest.json"), FileNotFoundError);
}

TEST_CASE("cohort-scale manifest reports group totals") {
  json j = {{"schema_version", 1}, {"participants", json::array()}, {"recordings", json::array()}};
  int id = 0;
  for (auto [group, n] : {std::pair{"TB+", 201}, {"OR", 150}, {"HC", 149}}) {
    for (int i = 0; i < n; ++i) {
      const std::string pid = "P" + std::to_string(id++);
      j["participants"].push_back(participant(pid, group, std::string(group) != "HC"));
      for (int s = 1; s <= 3; ++s) j["recordings"].push_back(recording(pid, s));
    }
  }
  const StudyManifest m = parse_manifest(j, "/data", false);
  CHECK(m.group_totals() == std::array<int, 3>{201, 150, 149});
  CHECK(m.recordings.size() == 1500);
}

TEST_CASE("simulated cohort") {
  SimulationSpec spec;
  spec.group_sizes = {3, 2, 2};
  spec.sessions = 2;
  const auto dir_a = testing::tmp_dir("cohort_a");
  const auto dir_b = testing::tmp_dir("cohort_b");
  const StudyManifest a = simulate_cohort(spec, dir_a, 2);
  simulate_cohort(spec, dir_b, 1);

  SUBCASE("output passes the loader") {
    const StudyManifest back = load_manifest(dir_a / "manifest.json");
    CHECK(back.group_totals() == std::array<int, 3>{3, 2, 2});
    CHECK(back.recordings.size() == a.recordings.size());
  }
  SUBCASE("same seed gives byte-identical WAVs") {
    for (const auto& r : a.recordings) {
      const auto rel = r.wav.lexically_relative(dir_a);
      std::ifstream fa(r.wav, std::ios::binary), fb(dir_b / rel, std::ios::binary);
      const std::string sa((std::istreambuf_iterator<char>(fa)), {});
      const std::string sb((std::istreambuf_iterator<char>(fb)), {});
      REQUIRE(!sa.empty());
      CHECK(sa == sb);
    }
  }
  SUBCASE("in-memory source equals the written file") {
    const SimulatedRecordingSource src(spec);
    const auto& r = a.recordings.front();
    CHECK(src.load(a.participant(r.participant_id), r).samples == load_wav(r.wav).samples);
  }
  SUBCASE("every participant has 2 to 3 coughs per session") {
    const SimulatedRecordingSource src(spec);
    for (const auto& r : a.recordings) {
      const auto n = detect_coughs(canonicalise(src.load(a.participant(r.participant_id), r))).size();
      CHECK(n >= 1);
      CHECK(n <= 3);
    }
  }
}

TEST_CASE("simulation spec validation") {
  SimulationSpec bad;
  bad.group_sizes = {0, 1, 1};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  SimulationSpec neg;
  neg.effect_size = -1;
  CHECK_THROWS_AS(neg.validate(), ConfigError);
  SimulationSpec ok;
  CHECK(simulation_spec_from_json(to_json(ok)).group_sizes == ok.group_sizes);
}

TEST_CASE("TB-profile coughs show the configured spectral signs") {
  SimulationSpec spec;
  spec.group_sizes = {12, 1, 12};
  spec.sessions = 1;
  spec.include_phone = false;
  const StudyManifest m = simulate_manifest(spec);
  const SimulatedRecordingSource src(spec);
  LtasAccumulator tb, hc;
  for (const auto& r : m.recordings) {
    const Participant& p = m.participant(r.participant_id);
    if (p.group == Group::OR) continue;
    for (const auto& c : detect_coughs(canonicalise(src.load(p, r)))) (p.group == Group::TBpos ? tb : hc).add(c.samples);
  }
  const LtasCurve t = tb.curve(), h = hc.curve();
  CHECK(band_mean(t, 150, 250) < band_mean(h, 150, 250));
  CHECK(band_mean(t, 1500, 4000) > band_mean(h, 1500, 4000));
}
