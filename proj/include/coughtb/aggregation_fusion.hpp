#pragma once

#include <Eigen/Dense>
#include <array>
#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "coughtb/classifier.hpp"
#include "coughtb/types.hpp"

namespace coughtb {

struct ScoredSegment {
  SegmentScores scores;
  Device device = Device::Synthetic;
};

struct ParticipantPrediction {
  std::string participant_id;
  Eigen::Vector3d mean_probs = Eigen::Vector3d::Constant(1.0 / 3.0);
  Eigen::Vector3d mean_logits = Eigen::Vector3d::Zero();  // mean of per-segment centred logits
  Group predicted_class = Group::TBpos;
  int segment_count = 0;
  DeviceFilter device_stratum = DeviceFilter::All;
};

// Argmax with ties (within 1e-12) resolved toward the lower class index, i.e. toward TB+.
int argmax_toward_tb(const Eigen::Vector3d& p);

// Soft vote over the segments whose device passes `filter`.
ParticipantPrediction soft_vote(const std::string& participant_id, std::span<const ScoredSegment> segments,
                                DeviceFilter filter = DeviceFilter::All);

inline constexpr int kMinAge = 18;
inline constexpr int kMaxAge = 120;
inline constexpr double kMinBmi = 10.0;
inline constexpr double kMaxBmi = 80.0;

struct Demographics {
  int age_years = 0;
  Gender gender = Gender::Male;
  double bmi = 0.0;
  bool symptom_present = false;
};

struct FieldIssue {
  std::string field;
  std::string message;
};

std::vector<FieldIssue> validate_demographics(const Demographics& d);
// Throws SchemaError naming the first offending field.
void require_valid(const Demographics& d);

// Age and BMI statistics from training participants only.
struct FusionStandardizer {
  double age_mean = 0.0, age_scale = 1.0;
  double bmi_mean = 0.0, bmi_scale = 1.0;

  static FusionStandardizer fit(std::span<const Demographics> rows);
};

inline constexpr int kFusionDim = 7;
using FusionVector = Eigen::Matrix<double, kFusionDim, 1>;

// [z_TB, z_OR, z_HC, age, gender (1 = male), bmi, symptom]
FusionVector build_fusion_vector(const ParticipantPrediction& pred, const Demographics& demo,
                                 const FusionStandardizer& standardizer);

enum class FeatureSet { AudioAlone, AudioGender, AudioAge, AudioBmi, AudioSymptom, AudioAll };
inline constexpr std::array<FeatureSet, 6> kAllFeatureSets = {FeatureSet::AudioAlone,  FeatureSet::AudioGender,
                                                              FeatureSet::AudioAge,    FeatureSet::AudioBmi,
                                                              FeatureSet::AudioSymptom, FeatureSet::AudioAll};
std::string_view to_string(FeatureSet f);
std::string_view feature_set_label(FeatureSet f);

// Columns outside the feature set are zeroed.
FusionVector apply_feature_set(const FusionVector& v, FeatureSet set);

inline constexpr double kStackerL2 = 0.5;  // inverse of C = 2

struct StackerModel {
  Task task = Task::TbVsRest;
  FeatureSet features = FeatureSet::AudioAll;
  SoftmaxModel model;  // classes {"not TB+", "TB+"}
};

struct FusionRow {
  FusionVector x;
  Group group = Group::TBpos;
};

// Rows outside the task's two groups are dropped before fitting.
StackerModel train_stacker(std::span<const FusionRow> rows, Task task, FeatureSet features = FeatureSet::AudioAll,
                           const OptimizerSettings& opt = {});

// P(TB+) = sigmoid of the linear score.
double score_task(const StackerModel& stacker, const FusionVector& v);

nlohmann::json to_json(const StackerModel& s);
StackerModel stacker_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FusionStandardizer& s);
FusionStandardizer fusion_standardizer_from_json(const nlohmann::json& j);

// Audio-only binary task score from soft-voted class probabilities:
// p_TB against the probability mass of the task's other group(s).
double audio_task_score(const Eigen::Vector3d& mean_probs, Task task);

}  // namespace coughtb
