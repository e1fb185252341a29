#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "coughtb/aggregation_fusion.hpp"
#include "coughtb/audio_io.hpp"
#include "coughtb/classifier.hpp"
#include "coughtb/cohort.hpp"
#include "coughtb/cough_segmenter.hpp"
#include "coughtb/dsp_features.hpp"
#include "coughtb/embedding.hpp"
#include "coughtb/evaluation.hpp"
#include "coughtb/metrics.hpp"

namespace coughtb {

enum class ProviderKind { MfccBaseline, EmbeddingFile, Synthetic };
std::string_view to_string(ProviderKind p);
ProviderKind parse_provider(std::string_view s);

struct PipelineConfig {
  ProviderKind provider = ProviderKind::Synthetic;
  std::filesystem::path embeddings;  // container for the embedding-file provider
  std::uint64_t embedding_seed = 1234;
  int embedding_dim = 64;
  double duration_s = 3.0;
  std::vector<double> thresholds = kDefaultThresholds;
  double decision_threshold = 0.5;
  std::uint64_t seed = 1;
  int jobs = 1;
  DeviceFilter device = DeviceFilter::Mic;
  DetectorConfig detector;
  TrimConfig trim;
  int folds = 10;
  int n_resamples = 10000;
  double head_l2 = 1e-2;
  OptimizerSettings head_opt;
  bool baseline_grid_search = true;  // MFCC baseline picks lambda/tol/iters per fold

  void validate() const;
};

nlohmann::json to_json(const PipelineConfig& c);
// Keys absent from `j` keep the values already in `base`.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, PipelineConfig base = {});

// Turns a duration-fitted segment into one fixed-length vector.
class Featurizer {
 public:
  virtual ~Featurizer() = default;
  virtual Eigen::VectorXd featurize(const CoughSegment& fitted) const = 0;
  virtual std::string provider_id() const = 0;
  // Whether segments carry audio that must be duration-fitted first.
  virtual bool needs_audio() const { return true; }
};

// Embedding containers referenced by `manifest` recordings are searched after config.embeddings.
std::unique_ptr<Featurizer> make_featurizer(const PipelineConfig& config, const StudyManifest* manifest = nullptr);

struct RecordingSegments {
  std::size_t participant = 0;  // index into the manifest's participant list
  Device device = Device::HighFidelityMic;
  std::string key;
  std::vector<CoughSegment> coughs;
  std::vector<CoughSegment> backgrounds;
};

// Canonicalise (resample, trim) then detect; backgrounds are windows of
// `background_s`. Embeddings-only recordings take their segment ids from the container.
RecordingSegments segment_recording(const AudioClip& clip, const PipelineConfig& config, double background_s);

std::vector<RecordingSegments> segment_cohort(const StudyManifest& manifest, const RecordingSource& source,
                                              const PipelineConfig& config);

// Pooled feature rows for one segment kind at one duration.
struct FeatureTable {
  Eigen::MatrixXd rows;
  std::vector<std::size_t> participant;
  std::vector<Device> device;
  std::vector<std::string> segment_id;
  std::size_t length_checks = 0;  // segments whose fitted length was verified
};

FeatureTable featurize(const std::vector<RecordingSegments>& recordings, SegmentKind kind, double duration_s,
                       const Featurizer& featurizer, const PipelineConfig& config);

// Per-participant outcome of cross-validation, all predictions out-of-fold.
struct ParticipantOutcome {
  std::size_t participant = 0;
  int fold = 0;
  std::map<DeviceFilter, ParticipantPrediction> votes;  // primary stratum plus device-pure strata
  // fused[stratum][feature set][task]
  std::map<DeviceFilter, std::array<std::array<double, 3>, 6>> fused;
};

struct CrossValidation {
  FoldAssignment folds;
  std::vector<ParticipantOutcome> outcomes;  // sorted by participant index
  std::vector<std::string> excluded;         // participants without usable segments
  std::vector<SoftmaxModel> fold_models;
  std::vector<FusionStandardizer> fold_fusion;
  std::vector<std::array<StackerModel, 3>> fold_stackers;  // audio+all stacker per task
};

struct CvOptions {
  bool stacking = true;
  // Train on rows of `train`, evaluate on rows of `test`; both must cover the
  // same participants. When `test` is null the training table is used.
  const FeatureTable* test = nullptr;
};

CrossValidation cross_validate(const StudyManifest& manifest, const FeatureTable& train, const PipelineConfig& config,
                               const CvOptions& options = {});

// Task scores for one stratum: audio-only (feature set nullopt) or fused.
std::vector<ParticipantRecord> participant_records(const StudyManifest& manifest, const CrossValidation& cv,
                                                   std::optional<FeatureSet> features);

struct TaskMetrics {
  Task task = Task::TbVsRest;
  std::optional<FeatureSet> features;  // nullopt: audio-only score
  int n = 0;
  int positives = 0;
  MetricSetBootstrap metrics;
};

enum class AdversarialCondition { WhiteWhite, BgBg, CoughBg, CoughCough };
inline constexpr std::array<AdversarialCondition, 4> kAllConditions = {
    AdversarialCondition::WhiteWhite, AdversarialCondition::BgBg, AdversarialCondition::CoughBg,
    AdversarialCondition::CoughCough};
std::string_view to_string(AdversarialCondition c);

struct AdversarialRow {
  AdversarialCondition condition = AdversarialCondition::CoughCough;
  SegmentKind train_kind = SegmentKind::Cough;
  SegmentKind test_kind = SegmentKind::Cough;
  int participants = 0;
  std::array<std::optional<double>, 3> auroc{};
};

struct DurationRow {
  double duration_s = 0.0;
  std::size_t length_checks = 0;
  std::array<std::optional<double>, 3> auroc{};
};

struct EvaluationReport {
  nlohmann::json config;
  std::string provider_id;
  std::array<int, 3> group_totals{};
  int participants_included = 0;
  std::vector<std::string> excluded;
  std::size_t segment_count = 0;
  std::size_t length_checks = 0;
  std::vector<TaskMetrics> task_metrics;
  std::map<Task, std::vector<SweepRow>> sweep;  // fused audio+all scores
  std::vector<StratumResult> strata_audio;
  std::vector<StratumResult> strata_fused;
  std::optional<AnovaResult> anova;
  std::vector<DurationRow> duration_sweep;
  std::vector<AdversarialRow> adversarial;
  std::vector<std::array<std::string, 9>> predictions;  // CSV rows
};

struct EvaluateOptions {
  bool metrics = true;
  bool sweep = true;
  bool strata = true;
  std::vector<double> durations;  // duration sweep, empty to skip
  bool adversarial = false;
};

EvaluationReport evaluate(const StudyManifest& manifest, const RecordingSource& source, const PipelineConfig& config,
                          const EvaluateOptions& options);

// Segments computed once and reused across calls.
class Workbench {
 public:
  Workbench(const StudyManifest& manifest, const RecordingSource& source, PipelineConfig config);

  const std::vector<RecordingSegments>& recordings() const { return recordings_; }
  const Featurizer& featurizer() const { return *featurizer_; }
  const PipelineConfig& config() const { return config_; }
  const StudyManifest& manifest() const { return manifest_; }

  FeatureTable table(SegmentKind kind, double duration_s) const;
  DurationRow duration_row(double duration_s) const;

 private:
  const StudyManifest& manifest_;
  PipelineConfig config_;
  std::unique_ptr<Featurizer> featurizer_;
  std::vector<RecordingSegments> recordings_;
};

std::vector<AdversarialRow> run_adversarial(const Workbench& bench);

// ---- deployable model -------------------------------------------------------

struct ModelBundle {
  std::string model_id;
  PipelineConfig config;
  std::string provider_id;
  SoftmaxModel head;
  FusionStandardizer fusion;
  std::array<StackerModel, 3> stackers;  // audio+all, per task
  nlohmann::json sweep;                  // threshold sweep of the cross-validated fused scores
};

// Fits the head on every usable participant and the stackers on out-of-fold
// acoustic predictions from a full cross-validation.
ModelBundle train_bundle(const StudyManifest& manifest, const RecordingSource& source, const PipelineConfig& config,
                         EvaluationReport* report = nullptr);

nlohmann::json to_json(const ModelBundle& b);
ModelBundle bundle_from_json(const nlohmann::json& j);
ModelBundle load_bundle(const std::filesystem::path& path);
void write_bundle(const std::filesystem::path& path, const ModelBundle& b);

struct ScoreResult {
  Task task = Task::TbVsRest;
  double score = 0.0;
  ParticipantPrediction vote;
  int segments = 0;
};

// Cough segments for one uploaded clip under the bundle's trim/detector settings.
std::vector<CoughSegment> bundle_segments(const ModelBundle& bundle, const AudioClip& clip);

// Score from already-detected cough segments; shared by the CLI and the service.
ScoreResult score_segments(const ModelBundle& bundle, std::span<const CoughSegment> coughs, const Demographics& demo,
                           Task task);

}  // namespace coughtb
