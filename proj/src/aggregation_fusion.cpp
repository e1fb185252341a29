#include "coughtb/aggregation_fusion.hpp"

#include <cmath>

#include "coughtb/errors.hpp"

namespace coughtb {
namespace {

constexpr double kTieTolerance = 1e-12;
const std::vector<std::string> kStackerClasses = {"not TB+", "TB+"};

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

std::array<bool, kFusionDim> feature_mask(FeatureSet set) {
  std::array<bool, kFusionDim> m = {true, true, true, false, false, false, false};
  switch (set) {
    case FeatureSet::AudioAlone: break;
    case FeatureSet::AudioGender: m[4] = true; break;
    case FeatureSet::AudioAge: m[3] = true; break;
    case FeatureSet::AudioBmi: m[5] = true; break;
    case FeatureSet::AudioSymptom: m[6] = true; break;
    case FeatureSet::AudioAll: m[3] = m[4] = m[5] = m[6] = true; break;
  }
  return m;
}

FeatureSet parse_feature_set(std::string_view s) {
  for (FeatureSet f : kAllFeatureSets) {
    if (to_string(f) == s) return f;
  }
  throw SchemaError("features", "unknown feature set '" + std::string(s) + "'");
}

}  // namespace

int argmax_toward_tb(const Eigen::Vector3d& p) {
  const double top = p.maxCoeff();
  for (int c = 0; c < 3; ++c) {
    if (p[c] >= top - kTieTolerance) return c;
  }
  return 0;
}

ParticipantPrediction soft_vote(const std::string& participant_id, std::span<const ScoredSegment> segments,
                                DeviceFilter filter) {
  ParticipantPrediction out;
  out.participant_id = participant_id;
  out.device_stratum = filter;
  Eigen::Vector3d probs = Eigen::Vector3d::Zero();
  Eigen::Vector3d logits = Eigen::Vector3d::Zero();
  for (const auto& s : segments) {
    if (!device_matches(filter, s.device)) continue;
    if (s.scores.probs.size() != 3 || s.scores.logits.size() != 3) {
      throw DimensionMismatch("soft vote expects three-class segment scores");
    }
    probs += s.scores.probs;
    logits += s.scores.logits - Eigen::Vector3d::Constant(s.scores.logits.mean());
    ++out.segment_count;
  }
  if (out.segment_count == 0) {
    throw EmptyInputError("participant '" + participant_id + "' has no segments for device filter " +
                          std::string(to_string(filter)));
  }
  out.mean_probs = probs / out.segment_count;
  out.mean_logits = logits / out.segment_count;
  out.predicted_class = static_cast<Group>(argmax_toward_tb(out.mean_probs));
  return out;
}

std::vector<FieldIssue> validate_demographics(const Demographics& d) {
  std::vector<FieldIssue> issues;
  if (d.age_years < kMinAge || d.age_years > kMaxAge) {
    issues.push_back({"age_years", "must be an integer in [" + std::to_string(kMinAge) + ", " +
                                       std::to_string(kMaxAge) + "], got " + std::to_string(d.age_years)});
  }
  if (!std::isfinite(d.bmi) || d.bmi < kMinBmi || d.bmi > kMaxBmi) {
    issues.push_back({"bmi", "must lie in [10, 80] kg/m^2"});
  }
  return issues;
}

void require_valid(const Demographics& d) {
  const auto issues = validate_demographics(d);
  if (!issues.empty()) throw SchemaError(issues.front().field, issues.front().message);
}

FusionStandardizer FusionStandardizer::fit(std::span<const Demographics> rows) {
  if (rows.empty()) throw EmptyInputError("cannot fit fusion statistics on zero participants");
  Eigen::VectorXd age(static_cast<Eigen::Index>(rows.size()));
  Eigen::VectorXd bmi(age.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    age[static_cast<Eigen::Index>(i)] = rows[i].age_years;
    bmi[static_cast<Eigen::Index>(i)] = rows[i].bmi;
  }
  auto scale = [](const Eigen::VectorXd& v, double mean) {
    const double sd = std::sqrt((v.array() - mean).square().mean());
    return sd < 1e-12 ? 1.0 : sd;
  };
  FusionStandardizer s;
  s.age_mean = age.mean();
  s.age_scale = scale(age, s.age_mean);
  s.bmi_mean = bmi.mean();
  s.bmi_scale = scale(bmi, s.bmi_mean);
  return s;
}

FusionVector build_fusion_vector(const ParticipantPrediction& pred, const Demographics& demo,
                                 const FusionStandardizer& standardizer) {
  require_valid(demo);
  FusionVector v;
  v << pred.mean_logits, (demo.age_years - standardizer.age_mean) / standardizer.age_scale,
      demo.gender == Gender::Male ? 1.0 : 0.0, (demo.bmi - standardizer.bmi_mean) / standardizer.bmi_scale,
      demo.symptom_present ? 1.0 : 0.0;
  return v;
}

std::string_view to_string(FeatureSet f) {
  switch (f) {
    case FeatureSet::AudioAlone: return "audio";
    case FeatureSet::AudioGender: return "audio+gender";
    case FeatureSet::AudioAge: return "audio+age";
    case FeatureSet::AudioBmi: return "audio+bmi";
    case FeatureSet::AudioSymptom: return "audio+symptom";
    case FeatureSet::AudioAll: return "audio+all";
  }
  return "?";
}

std::string_view feature_set_label(FeatureSet f) {
  switch (f) {
    case FeatureSet::AudioAlone: return "Audio Alone";
    case FeatureSet::AudioGender: return "Audio + Gender";
    case FeatureSet::AudioAge: return "Audio + Age";
    case FeatureSet::AudioBmi: return "Audio + BMI";
    case FeatureSet::AudioSymptom: return "Audio + Symptom";
    case FeatureSet::AudioAll: return "Audio + All Info";
  }
  return "?";
}

FusionVector apply_feature_set(const FusionVector& v, FeatureSet set) {
  const auto mask = feature_mask(set);
  FusionVector out = v;
  for (int i = 0; i < kFusionDim; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) out[i] = 0.0;
  }
  return out;
}

StackerModel train_stacker(std::span<const FusionRow> rows, Task task, FeatureSet features,
                           const OptimizerSettings& opt) {
  std::vector<const FusionRow*> kept;
  for (const auto& r : rows) {
    if (task_includes(task, r.group)) kept.push_back(&r);
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(kept.size()), kFusionDim);
  std::vector<int> y(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = apply_feature_set(kept[i]->x, features).transpose();
    y[i] = kept[i]->group == Group::TBpos ? 1 : 0;
  }
  if (kept.empty()) throw SingleClassError("no stacker rows for task " + std::string(task_label(task)));
  StackerModel s;
  s.task = task;
  s.features = features;
  s.model = train(x, y, kStackerL2, opt, kStackerClasses);
  return s;
}

double score_task(const StackerModel& stacker, const FusionVector& v) {
  if (stacker.model.dim() != kFusionDim || stacker.model.num_classes() != 2) {
    throw DimensionMismatch("stacker expects a 7-dimensional, two-class model");
  }
  const Eigen::VectorXd x = stacker.model.standardizer.apply(Eigen::VectorXd(apply_feature_set(v, stacker.features)));
  const Eigen::VectorXd z = stacker.model.weights * x + stacker.model.bias;
  return sigmoid(z[1] - z[0]);
}

nlohmann::json to_json(const StackerModel& s) {
  return {{"task", to_string(s.task)}, {"features", to_string(s.features)}, {"model", to_json(s.model)}};
}

StackerModel stacker_from_json(const nlohmann::json& j) {
  try {
    StackerModel s;
    s.task = parse_task(j.at("task").get<std::string>());
    s.features = parse_feature_set(j.at("features").get<std::string>());
    s.model = softmax_model_from_json(j.at("model"));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("stacker", e.what());
  }
}

nlohmann::json to_json(const FusionStandardizer& s) {
  return {{"age_mean", s.age_mean}, {"age_scale", s.age_scale}, {"bmi_mean", s.bmi_mean}, {"bmi_scale", s.bmi_scale}};
}

FusionStandardizer fusion_standardizer_from_json(const nlohmann::json& j) {
  try {
    return {j.at("age_mean").get<double>(), j.at("age_scale").get<double>(), j.at("bmi_mean").get<double>(),
            j.at("bmi_scale").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("fusion_standardizer", e.what());
  }
}

double audio_task_score(const Eigen::Vector3d& mean_probs, Task task) {
  const double tb = mean_probs[0];
  switch (task) {
    case Task::TbVsRest: return tb;
    case Task::TbVsOr: return tb / (tb + mean_probs[1]);
    case Task::TbVsHc: return tb / (tb + mean_probs[2]);
  }
  return tb;
}

}  // namespace coughtb
