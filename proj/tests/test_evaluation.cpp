#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "coughtb/errors.hpp"
#include "coughtb/evaluation.hpp"

using namespace coughtb;

namespace {

std::vector<Participant> population(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> g(0, 2), s(0, 1);
  std::vector<Participant> out;
  for (int i = 0; i < n; ++i) {
    Participant p;
    p.participant_id = "P" + std::to_string(1000 + i);
    p.group = static_cast<Group>(g(rng));
    p.demographics = {30, s(rng) ? Gender::Male : Gender::Female, 22.0, false};
    p.recorded_at = "2024-01-01T10";
    out.push_back(p);
  }
  return out;
}

}  // namespace

TEST_CASE("folds are stratified on group and gender") {
  const auto people = population(500, 1);
  const FoldAssignment f = make_folds(people, 10, 77);
  CHECK(f.fold_of.size() == 500);
  std::map<std::pair<int, int>, int> total;
  std::map<std::tuple<int, int, int>, int> per_fold;
  for (const auto& p : people) {
    const auto key = std::pair{class_index(p.group), static_cast<int>(p.demographics.gender)};
    ++total[key];
    ++per_fold[{f.fold(p.participant_id), key.first, key.second}];
  }
  for (int k = 0; k < 10; ++k) {
    CHECK(std::abs(static_cast<int>(f.members(k).size()) - 50) <= 1);
    for (const auto& [key, n] : total) {
      const double expected = n / 10.0;
      CHECK(std::abs(per_fold[{k, key.first, key.second}] - expected) <= 1.0);
    }
  }
}

TEST_CASE("folds are deterministic and seed dependent") {
  const auto people = population(60, 2);
  CHECK(make_folds(people, 5, 3).fold_of == make_folds(people, 5, 3).fold_of);
  CHECK(make_folds(people, 5, 3).fold_of != make_folds(people, 5, 4).fold_of);
  // Input order does not matter.
  auto reversed = people;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(make_folds(reversed, 5, 3).fold_of == make_folds(people, 5, 3).fold_of);
  CHECK_THROWS_AS(make_folds(people, 1, 3), InvalidArgument);
  CHECK_THROWS_AS(make_folds(population(3, 1), 5, 3), InvalidArgument);
  CHECK_THROWS_AS(make_folds(people, 5, 3).fold("nobody"), DanglingReferenceError);
}

TEST_CASE("train/test overlap is an invariant violation") {
  const std::vector<std::string> a = {"x", "y"}, b = {"z"}, c = {"y"};
  CHECK_NOTHROW(assert_disjoint(a, b));
  try {
    assert_disjoint(a, c);
    FAIL("expected InvariantViolation");
  } catch (const InvariantViolation& e) {
    CHECK(e.invariant() == "fold_disjoint");
  }
}

TEST_CASE("recording hour ANOVA") {
  auto people = population(30, 5);
  for (auto& p : people) p.recorded_at = p.group == Group::TBpos ? "2024-02-01T08" : "2024-02-01T15";
  people[1].recorded_at = "2024-02-01T09";
  people[2].recorded_at = "2024-02-01T16";
  people[3].recorded_at = "2024-02-01T14";
  const AnovaResult r = anova_recording_hour(people);
  CHECK(r.p < 0.001);
}

TEST_CASE("stratified report") {
  std::vector<ParticipantRecord> rows;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 90; ++i) {
    for (DeviceFilter d : {DeviceFilter::Mic, DeviceFilter::Phone, DeviceFilter::All}) {
      ParticipantRecord r;
      r.participant_id = "P" + std::to_string(i);
      r.group = static_cast<Group>(i % 3);
      r.hiv_positive = i % 4 == 0;
      r.device_stratum = d;
      const double base = r.group == Group::TBpos ? 0.3 : 0.0;
      for (auto& s : r.task_scores) s = std::clamp(base + 0.7 * u(rng), 0.0, 1.0);
      rows.push_back(r);
    }
  }
  const std::vector<StratumKind> kinds = {StratumKind::Task, StratumKind::HivStatus, StratumKind::Device};
  const auto out = stratified_report(rows, kinds, 0.5, 200, 1);
  // task/all, HIV+/-, mic, phone -> 5 slices x 3 tasks.
  REQUIRE(out.size() == 15);
  for (const auto& s : out) {
    if (s.task == Task::TbVsRest) CHECK(s.n == (s.kind == StratumKind::HivStatus ? (s.name == "HIV+" ? 23 : 67) : 90));
    if (s.task == Task::TbVsOr && s.kind != StratumKind::HivStatus) CHECK(s.n == 60);
    CHECK(s.low_n == (s.n < kLowN));
  }
  const auto again = stratified_report(rows, kinds, 0.5, 200, 1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].metrics.metrics.ci(Metric::Auroc)->lo == again[i].metrics.metrics.ci(Metric::Auroc)->lo);
  }
  // A primary stratum with no rows is reported, not skipped.
  std::vector<ParticipantRecord> phone_only;
  for (const auto& r : rows) {
    if (r.device_stratum == DeviceFilter::Phone) phone_only.push_back(r);
  }
  const std::vector<StratumKind> task_kind = {StratumKind::Task};
  CHECK_THROWS_AS(stratified_report(phone_only, task_kind, 0.5, 10, 1), EmptyInputError);
}
