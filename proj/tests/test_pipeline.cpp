#include <doctest.h>

#include "coughtb/audio_io.hpp"
#include "coughtb/embedding.hpp"
#include "coughtb/errors.hpp"
#include "coughtb/pipeline.hpp"
#include "fixtures.hpp"
#include "helpers.hpp"

using namespace coughtb;

TEST_CASE("config validation") {
  PipelineConfig c;
  CHECK_NOTHROW(c.validate());
  for (double d : {0.5, 6.5}) {
    PipelineConfig bad;
    bad.duration_s = d;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
  PipelineConfig tau;
  tau.thresholds = {0.4, 1.0};
  CHECK_THROWS_AS(tau.validate(), ConfigError);
  tau.thresholds = {0.5, 0.4};
  CHECK_THROWS_AS(tau.validate(), ConfigError);
  PipelineConfig jobs;
  jobs.jobs = 0;
  CHECK_THROWS_AS(jobs.validate(), ConfigError);
}

TEST_CASE("config JSON round trip and overrides") {
  PipelineConfig c;
  c.duration_s = 2.0;
  c.thresholds = {0.3, 0.6};
  c.device = DeviceFilter::All;
  c.provider = ProviderKind::MfccBaseline;
  const PipelineConfig back = pipeline_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  const PipelineConfig part = pipeline_config_from_json({{"seed", 9}}, c);
  CHECK(part.seed == 9);
  CHECK(part.duration_s == 2.0);
  CHECK_THROWS_AS(pipeline_config_from_json({{"duraton_s", 2}}), ConfigError);
  CHECK_THROWS_AS(pipeline_config_from_json({{"duration_s", 9}}), ConfigError);
  CHECK(parse_provider("mfcc-baseline") == ProviderKind::MfccBaseline);
  CHECK(parse_provider("embedding-file") == ProviderKind::EmbeddingFile);
  CHECK_THROWS_AS(parse_provider("whisper"), ConfigError);
}

TEST_CASE("segment ids and fitted lengths") {
  const auto spec = testing::small_spec();
  const StudyManifest m = simulate_manifest(spec);
  const SimulatedRecordingSource src(spec);
  const PipelineConfig cfg = testing::small_config();
  const auto recs = segment_cohort(m, src, cfg);
  REQUIRE(recs.size() == m.recordings.size());
  for (const auto& r : recs) {
    for (std::size_t i = 0; i < r.coughs.size(); ++i) CHECK(r.coughs[i].id == r.key + "/c" + std::to_string(i));
  }
  const auto feat = make_featurizer(cfg);
  for (double d : {1.0, 6.0}) {
    const FeatureTable t = featurize(recs, SegmentKind::Cough, d, *feat, cfg);
    CHECK(t.length_checks == static_cast<std::size_t>(t.rows.rows()));
    CHECK(t.rows.cols() == 64);
  }
}

TEST_CASE("embedding-file provider reproduces the synthetic provider") {
  const auto spec = testing::small_spec();
  const StudyManifest m = simulate_manifest(spec);
  const SimulatedRecordingSource src(spec);
  PipelineConfig cfg = testing::small_config();
  const auto recs = segment_cohort(m, src, cfg);
  const SyntheticProvider p(cfg.embedding_seed, cfg.embedding_dim);
  std::map<std::string, EmbeddingSequence> seqs;
  for (const auto& r : recs) {
    for (const auto& c : r.coughs) seqs[c.id] = p.provide(fit_duration(c, cfg.duration_s, cfg.detector));
  }
  const auto dir = testing::tmp_dir("pipeline_file");
  write_embeddings(dir / "e.bin", "synthetic", seqs);

  const auto synth = make_featurizer(cfg);
  const FeatureTable a = featurize(recs, SegmentKind::Cough, cfg.duration_s, *synth, cfg);
  PipelineConfig fcfg = cfg;
  fcfg.provider = ProviderKind::EmbeddingFile;
  fcfg.embeddings = dir / "e.bin";
  const auto file = make_featurizer(fcfg);
  const FeatureTable b = featurize(recs, SegmentKind::Cough, fcfg.duration_s, *file, fcfg);
  CHECK(a.segment_id == b.segment_id);
  CHECK((a.rows - b.rows).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("bundle round trip scores identically") {
  const auto& w = testing::small_world();
  const ModelBundle& b = *w.bundle;
  CHECK(b.model_id.rfind("ctb-", 0) == 0);
  CHECK(b.model_id.size() == 20);
  const auto dir = testing::tmp_dir("pipeline_bundle");
  write_bundle(dir / "model.json", b);
  const ModelBundle back = load_bundle(dir / "model.json");
  CHECK(back.model_id == b.model_id);
  CHECK(to_json(back) == to_json(b));

  const SimulatedRecordingSource src(w.spec);
  const auto& r = w.manifest.recordings.front();
  const Participant& p = w.manifest.participant(r.participant_id);
  const auto coughs = bundle_segments(b, src.load(p, r));
  REQUIRE(!coughs.empty());
  for (Task t : kAllTasks) {
    const double s1 = score_segments(b, coughs, p.demographics, t).score;
    const double s2 = score_segments(back, coughs, p.demographics, t).score;
    CHECK(s1 == s2);
    CHECK(s1 > 0.0);
    CHECK(s1 < 1.0);
  }
  Demographics bad = p.demographics;
  bad.age_years = 10;
  CHECK_THROWS_AS(score_segments(b, coughs, bad, Task::TbVsRest), SchemaError);
  CHECK_THROWS_AS(score_segments(b, {}, p.demographics, Task::TbVsRest), EmptyInputError);
  CHECK_THROWS_AS(load_bundle(dir / "missing.json"), FileNotFoundError);
}

TEST_CASE("evaluation is deterministic and independent of jobs") {
  const auto spec = testing::small_spec();
  const StudyManifest m = simulate_manifest(spec);
  const SimulatedRecordingSource src(spec);
  PipelineConfig one = testing::small_config();
  PipelineConfig two = one;
  two.jobs = 3;
  EvaluateOptions opt;
  const auto a = evaluate(m, src, one, opt);
  const auto b = evaluate(m, src, two, opt);
  REQUIRE(a.task_metrics.size() == b.task_metrics.size());
  for (std::size_t i = 0; i < a.task_metrics.size(); ++i) {
    CHECK(a.task_metrics[i].metrics.metrics.auroc == b.task_metrics[i].metrics.metrics.auroc);
  }
  CHECK(a.predictions == b.predictions);
}
