#include <doctest.h>

#include <cmath>
#include <random>

#include "coughtb/aggregation_fusion.hpp"
#include "coughtb/errors.hpp"

using namespace coughtb;

namespace {

ScoredSegment seg(Eigen::Vector3d probs, Device d = Device::HighFidelityMic) {
  ScoredSegment s;
  s.scores.probs = probs;
  s.scores.logits = probs.array().log();
  s.device = d;
  return s;
}

Demographics demo(int age, Gender g, double bmi, bool symptom) { return {age, g, bmi, symptom}; }

}  // namespace

TEST_CASE("soft vote averages probabilities") {
  const std::vector<ScoredSegment> segs = {seg({0.6, 0.3, 0.1}), seg({0.2, 0.5, 0.3})};
  const ParticipantPrediction p = soft_vote("p1", segs);
  CHECK((p.mean_probs - Eigen::Vector3d(0.4, 0.4, 0.2)).cwiseAbs().maxCoeff() < 1e-12);
  // 0.4 / 0.4 tie goes to TB+.
  CHECK(p.predicted_class == Group::TBpos);
  CHECK(p.segment_count == 2);

  const std::vector<ScoredSegment> single = {seg({0.1, 0.7, 0.2})};
  CHECK(soft_vote("p2", single).mean_probs == single[0].scores.probs);
  CHECK(soft_vote("p2", single).predicted_class == Group::OR);
}

TEST_CASE("soft vote device filter") {
  const std::vector<ScoredSegment> segs = {seg({0.7, 0.2, 0.1}), seg({0.1, 0.1, 0.8}, Device::Smartphone)};
  CHECK(soft_vote("p", segs, DeviceFilter::Mic).predicted_class == Group::TBpos);
  CHECK(soft_vote("p", segs, DeviceFilter::Phone).predicted_class == Group::HC);
  CHECK(soft_vote("p", segs, DeviceFilter::All).segment_count == 2);
  const std::vector<ScoredSegment> mic_only = {seg({0.7, 0.2, 0.1})};
  CHECK_THROWS_AS(soft_vote("p", mic_only, DeviceFilter::Phone), EmptyInputError);
  CHECK_THROWS_AS(soft_vote("p", std::vector<ScoredSegment>{}), EmptyInputError);
}

TEST_CASE("argmax tie tolerance") {
  CHECK(argmax_toward_tb({1.0 / 3, 1.0 / 3, 1.0 / 3}) == 0);
  CHECK(argmax_toward_tb({0.2, 0.4, 0.4}) == 1);
  CHECK(argmax_toward_tb({0.2, 0.3, 0.5}) == 2);
}

TEST_CASE("demographic validation names the field") {
  CHECK(validate_demographics(demo(30, Gender::Male, 22, false)).empty());
  const auto bad = validate_demographics(demo(17, Gender::Male, 9, false));
  REQUIRE(bad.size() == 2);
  CHECK(bad[0].field == "age_years");
  CHECK(bad[1].field == "bmi");
  CHECK(validate_demographics(demo(121, Gender::Female, 22, true)).size() == 1);
  CHECK(validate_demographics(demo(40, Gender::Female, std::nan(""), true)).size() == 1);
  try {
    require_valid(demo(40, Gender::Female, 81, true));
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(e.field_path() == "bmi");
  }
}

TEST_CASE("fusion vector") {
  const std::vector<Demographics> train = {demo(20, Gender::Male, 20, false), demo(40, Gender::Female, 30, true)};
  const FusionStandardizer st = FusionStandardizer::fit(train);
  CHECK(st.age_mean == 30.0);
  CHECK(st.age_scale == 10.0);
  CHECK(st.bmi_mean == 25.0);
  CHECK(st.bmi_scale == 5.0);

  ParticipantPrediction p;
  p.mean_logits = Eigen::Vector3d(1.0, -0.5, -0.5);
  const FusionVector v = build_fusion_vector(p, demo(20, Gender::Male, 20, true), st);
  FusionVector expect;
  expect << 1.0, -0.5, -0.5, -1.0, 1.0, -1.0, 1.0;
  CHECK(v == expect);
  const FusionVector f = build_fusion_vector(p, demo(40, Gender::Female, 30, false), st);
  CHECK(f[3] == 1.0);
  CHECK(f[4] == 0.0);
  CHECK(f[6] == 0.0);
  CHECK_THROWS_AS(build_fusion_vector(p, demo(5, Gender::Male, 20, true), st), SchemaError);

  SUBCASE("feature sets mask columns") {
    const FusionVector a = apply_feature_set(v, FeatureSet::AudioAlone);
    CHECK(a.tail(4).norm() == 0.0);
    CHECK(a.head(3) == v.head(3));
    CHECK(apply_feature_set(v, FeatureSet::AudioAge)[3] == -1.0);
    CHECK(apply_feature_set(v, FeatureSet::AudioAge)[4] == 0.0);
    CHECK(apply_feature_set(v, FeatureSet::AudioAll) == v);
  }
}

TEST_CASE("stacker") {
  // Symptom carries half the signal; logits the other half.
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<FusionRow> rows;
  for (int i = 0; i < 300; ++i) {
    const Group g = kAllGroups[static_cast<std::size_t>(i % 3)];
    const bool tb = g == Group::TBpos;
    FusionRow r;
    r.group = g;
    r.x << (tb ? 1.0 : -0.5) + n(rng), n(rng), n(rng), n(rng), (i / 3) % 2, n(rng),
        (tb ? (n(rng) > -1.0) : (n(rng) > 1.0)) ? 1.0 : 0.0;
    rows.push_back(r);
  }
  auto train_auc = [&](FeatureSet fs, Task task) {
    const StackerModel s = train_stacker(rows, task, fs);
    double pairs = 0, wins = 0;
    for (const auto& a : rows) {
      if (a.group != Group::TBpos) continue;
      for (const auto& b : rows) {
        if (b.group == Group::TBpos || !task_includes(task, b.group)) continue;
        const double sa = score_task(s, a.x), sb = score_task(s, b.x);
        wins += sa > sb ? 1.0 : (sa == sb ? 0.5 : 0.0);
        pairs += 1;
      }
    }
    return wins / pairs;
  };
  SUBCASE("adding an informative column does not lower training AUROC") {
    CHECK(train_auc(FeatureSet::AudioSymptom, Task::TbVsRest) >= train_auc(FeatureSet::AudioAlone, Task::TbVsRest));
  }
  SUBCASE("task rows are filtered") {
    const StackerModel s = train_stacker(rows, Task::TbVsHc);
    CHECK(s.model.l2_strength == kStackerL2);
    CHECK(s.model.classes.size() == 2);
    CHECK(train_auc(FeatureSet::AudioAll, Task::TbVsHc) > 0.7);
  }
  SUBCASE("score_task is the logistic of the logit difference") {
    const StackerModel s = train_stacker(rows, Task::TbVsRest);
    const FusionVector v = rows[0].x;
    const Eigen::VectorXd x = s.model.standardizer.apply(Eigen::VectorXd(v));
    const Eigen::VectorXd z = s.model.weights * x + s.model.bias;
    CHECK(score_task(s, v) == doctest::Approx(1.0 / (1.0 + std::exp(-(z[1] - z[0])))).epsilon(1e-14));
  }
  SUBCASE("JSON round trip scores identically") {
    const StackerModel s = train_stacker(rows, Task::TbVsOr, FeatureSet::AudioBmi);
    const StackerModel back = stacker_from_json(nlohmann::json::parse(to_json(s).dump()));
    CHECK(back.features == FeatureSet::AudioBmi);
    CHECK(back.task == Task::TbVsOr);
    for (const auto& r : rows) CHECK(score_task(back, r.x) == score_task(s, r.x));
  }
  const std::vector<FusionRow> only_tb(rows.begin(), rows.begin() + 1);
  CHECK_THROWS_AS(train_stacker(only_tb, Task::TbVsRest), SingleClassError);
}

TEST_CASE("audio-only task score") {
  const Eigen::Vector3d p(0.5, 0.3, 0.2);
  CHECK(audio_task_score(p, Task::TbVsRest) == 0.5);
  CHECK(audio_task_score(p, Task::TbVsOr) == doctest::Approx(0.5 / 0.8));
  CHECK(audio_task_score(p, Task::TbVsHc) == doctest::Approx(0.5 / 0.7));
}
