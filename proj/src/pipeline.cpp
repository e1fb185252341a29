#include "coughtb/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "coughtb/errors.hpp"
#include "coughtb/report.hpp"
#include "coughtb/util.hpp"

namespace coughtb {
namespace {

using nlohmann::json;

class SyntheticFeaturizer final : public Featurizer {
 public:
  SyntheticFeaturizer(std::uint64_t seed, int dim) : provider_(seed, dim) {}
  Eigen::VectorXd featurize(const CoughSegment& s) const override { return global_average_pool(provider_.provide(s)); }
  std::string provider_id() const override { return provider_.provider_id(); }

 private:
  SyntheticProvider provider_;
};

class MfccFeaturizer final : public Featurizer {
 public:
  Eigen::VectorXd featurize(const CoughSegment& s) const override { return summarize_features(compute_mfcc(s)); }
  std::string provider_id() const override { return "mfcc-baseline"; }
};

class FileFeaturizer final : public Featurizer {
 public:
  explicit FileFeaturizer(std::vector<std::filesystem::path> containers) {
    if (containers.empty()) throw ConfigError("the embedding-file provider needs an embeddings container");
    for (auto& c : containers) providers_.push_back(std::make_unique<FileEmbeddingProvider>(std::move(c)));
  }
  Eigen::VectorXd featurize(const CoughSegment& s) const override {
    for (const auto& p : providers_) {
      if (p->contains(s.id)) return global_average_pool(p->provide_id(s.id));
    }
    throw DataError("segment '" + s.id + "' not found in any embeddings container");
  }
  std::string provider_id() const override { return providers_.front()->provider_id(); }
  bool needs_audio() const override { return false; }

 private:
  std::vector<std::unique_ptr<FileEmbeddingProvider>> providers_;
};

int label_of(const StudyManifest& m, std::size_t participant) {
  return class_index(m.participants[participant].group);
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

struct HeadChoice {
  double l2;
  OptimizerSettings opt;
};

// Rows of `table` whose participant's fold is not excluded.
std::vector<std::size_t> rows_where(const FeatureTable& table, const std::vector<int>& fold_of_participant,
                                    const std::function<bool(int)>& keep_fold) {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < table.participant.size(); ++r) {
    const int f = fold_of_participant[table.participant[r]];
    if (f >= 0 && keep_fold(f)) rows.push_back(r);
  }
  return rows;
}

SoftmaxModel fit_head(const StudyManifest& m, const FeatureTable& t, const std::vector<std::size_t>& rows,
                      const HeadChoice& h) {
  std::vector<int> labels;
  labels.reserve(rows.size());
  for (std::size_t r : rows) labels.push_back(label_of(m, t.participant[r]));
  return train(gather(t.rows, rows), labels, h.l2, h.opt);
}

// Baseline grid search: validate on one held-out fold of the training split.
HeadChoice choose_head(const StudyManifest& m, const FeatureTable& t, const std::vector<int>& fold_of,
                       const PipelineConfig& config, int test_fold) {
  HeadChoice base{config.head_l2, config.head_opt};
  if (config.provider != ProviderKind::MfccBaseline || !config.baseline_grid_search) return base;
  const int valid_fold = (test_fold + 1) % config.folds;
  auto to_rows = [&](const std::vector<std::size_t>& idx) {
    LabelledRows lr;
    lr.features = gather(t.rows, idx);
    for (std::size_t r : idx) {
      lr.labels.push_back(label_of(m, t.participant[r]));
      lr.participants.push_back(m.participants[t.participant[r]].participant_id);
    }
    return lr;
  };
  const auto train_idx = rows_where(t, fold_of, [&](int f) { return f != test_fold && f != valid_fold; });
  const auto valid_idx = rows_where(t, fold_of, [&](int f) { return f == valid_fold; });
  const auto grid = default_grid();
  const auto outcome = grid_search(to_rows(train_idx), to_rows(valid_idx), grid, 1);
  const GridPoint& best = grid[outcome.best_index];
  return {best.l2, {best.tol, best.max_iters}};
}

// Soft votes for each participant over the given rows, for every stratum in `strata`.
std::map<std::size_t, std::map<DeviceFilter, ParticipantPrediction>> vote(
    const StudyManifest& m, const FeatureTable& t, const std::vector<std::size_t>& rows, const SoftmaxModel& model,
    const std::vector<DeviceFilter>& strata) {
  std::map<std::size_t, std::vector<ScoredSegment>> by_participant;
  if (!rows.empty()) {
    const Eigen::MatrixXd logits = predict_logits(model, gather(t.rows, rows));
    const Eigen::MatrixXd probs = softmax_rows(logits);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto r = rows[i];
      ScoredSegment s;
      s.scores.segment_id = t.segment_id[r];
      s.scores.logits = logits.row(static_cast<Eigen::Index>(i)).transpose();
      s.scores.probs = probs.row(static_cast<Eigen::Index>(i)).transpose();
      s.device = t.device[r];
      by_participant[t.participant[r]].push_back(std::move(s));
    }
  }
  std::map<std::size_t, std::map<DeviceFilter, ParticipantPrediction>> out;
  for (const auto& [p, segs] : by_participant) {
    for (DeviceFilter f : strata) {
      const bool any = std::any_of(segs.begin(), segs.end(), [&](const ScoredSegment& s) { return device_matches(f, s.device); });
      if (any) out[p][f] = soft_vote(m.participants[p].participant_id, segs, f);
    }
  }
  return out;
}

std::vector<DeviceFilter> strata_for(DeviceFilter primary) {
  if (primary == DeviceFilter::All) return {DeviceFilter::All, DeviceFilter::Mic, DeviceFilter::Phone};
  return {primary};
}

std::array<std::optional<double>, 3> audio_aurocs(const StudyManifest& m, const CrossValidation& cv,
                                                  DeviceFilter primary) {
  std::array<std::optional<double>, 3> out{};
  const auto records = participant_records(m, cv, std::nullopt);
  std::vector<ParticipantRecord> rows;
  for (const auto& r : records) {
    if (r.device_stratum == primary) rows.push_back(r);
  }
  for (Task t : kAllTasks) out[static_cast<std::size_t>(t)] = auroc_or_null(task_scores(rows, t));
  return out;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view to_string(ProviderKind p) {
  switch (p) {
    case ProviderKind::MfccBaseline: return "mfcc-baseline";
    case ProviderKind::EmbeddingFile: return "embedding-file";
    case ProviderKind::Synthetic: return "synthetic";
  }
  return "?";
}

ProviderKind parse_provider(std::string_view s) {
  if (s == "mfcc-baseline" || s == "mfcc") return ProviderKind::MfccBaseline;
  if (s == "embedding-file") return ProviderKind::EmbeddingFile;
  if (s == "synthetic") return ProviderKind::Synthetic;
  throw ConfigError("unknown provider '" + std::string(s) + "' (mfcc-baseline|embedding-file|synthetic)");
}

std::string_view to_string(AdversarialCondition c) {
  switch (c) {
    case AdversarialCondition::WhiteWhite: return "white_white";
    case AdversarialCondition::BgBg: return "bg_bg";
    case AdversarialCondition::CoughBg: return "cough_bg";
    case AdversarialCondition::CoughCough: return "cough_cough";
  }
  return "?";
}

void PipelineConfig::validate() const {
  if (!(duration_s >= 1.0 && duration_s <= 6.0)) throw ConfigError("duration_s must lie in [1, 6]");
  if (thresholds.empty()) throw ConfigError("threshold grid is empty");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0 && thresholds[i] < 1.0)) throw ConfigError("thresholds must lie in (0, 1)");
    if (i > 0 && !(thresholds[i] > thresholds[i - 1])) throw ConfigError("thresholds must be strictly ascending");
  }
  if (!(decision_threshold > 0.0 && decision_threshold < 1.0)) throw ConfigError("decision_threshold must lie in (0, 1)");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (folds < 2) throw ConfigError("folds must be >= 2");
  if (n_resamples < 0) throw ConfigError("n_resamples must be >= 0");
  if (!(head_l2 >= 0.0)) throw ConfigError("head_l2 must be >= 0");
  if (embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
  if (!(trim.floor_db < 0.0)) throw ConfigError("trim.floor_db must be negative");
  if (!(detector.frame_s > 0.0 && detector.hop_s > 0.0 && detector.pad_s >= 0.0)) {
    throw ConfigError("detector frame, hop and pad must be positive");
  }
}

json to_json(const PipelineConfig& c) {
  return {{"provider", to_string(c.provider)},
          {"embeddings", c.embeddings.generic_string()},
          {"embedding_seed", c.embedding_seed},
          {"embedding_dim", c.embedding_dim},
          {"duration_s", c.duration_s},
          {"thresholds", c.thresholds},
          {"decision_threshold", c.decision_threshold},
          {"seed", c.seed},
          {"jobs", c.jobs},
          {"device", to_string(c.device)},
          {"detector",
           {{"frame_s", c.detector.frame_s},
            {"hop_s", c.detector.hop_s},
            {"k", c.detector.k},
            {"merge_gap_s", c.detector.merge_gap_s},
            {"min_event_s", c.detector.min_event_s},
            {"pad_s", c.detector.pad_s}}},
          {"trim", {{"floor_db", c.trim.floor_db}, {"frame_s", c.trim.frame_s}, {"hop_s", c.trim.hop_s}}},
          {"folds", c.folds},
          {"n_resamples", c.n_resamples},
          {"head_l2", c.head_l2},
          {"head_tol", c.head_opt.tol},
          {"head_max_iters", c.head_opt.max_iters},
          {"baseline_grid_search", c.baseline_grid_search}};
}

PipelineConfig pipeline_config_from_json(const json& j, PipelineConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known = {
      "provider", "embeddings", "embedding_seed", "embedding_dim", "duration_s",  "thresholds",
      "decision_threshold", "seed", "jobs", "device", "detector", "trim", "folds", "n_resamples",
      "head_l2", "head_tol", "head_max_iters", "baseline_grid_search", "manifest", "out", "simulation"};
  for (const auto& [k, _] : j.items()) {
    if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");
  }
  try {
    if (j.contains("provider")) c.provider = parse_provider(j.at("provider").get<std::string>());
    if (j.contains("embeddings")) c.embeddings = j.at("embeddings").get<std::string>();
    c.embedding_seed = j.value("embedding_seed", c.embedding_seed);
    c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
    c.duration_s = j.value("duration_s", c.duration_s);
    if (j.contains("thresholds")) c.thresholds = j.at("thresholds").get<std::vector<double>>();
    c.decision_threshold = j.value("decision_threshold", c.decision_threshold);
    c.seed = j.value("seed", c.seed);
    c.jobs = j.value("jobs", c.jobs);
    if (j.contains("device")) c.device = parse_device_filter(j.at("device").get<std::string>());
    if (j.contains("detector")) {
      const auto& d = j.at("detector");
      c.detector.frame_s = d.value("frame_s", c.detector.frame_s);
      c.detector.hop_s = d.value("hop_s", c.detector.hop_s);
      c.detector.k = d.value("k", c.detector.k);
      c.detector.merge_gap_s = d.value("merge_gap_s", c.detector.merge_gap_s);
      c.detector.min_event_s = d.value("min_event_s", c.detector.min_event_s);
      c.detector.pad_s = d.value("pad_s", c.detector.pad_s);
    }
    if (j.contains("trim")) {
      const auto& t = j.at("trim");
      c.trim.floor_db = t.value("floor_db", c.trim.floor_db);
      c.trim.frame_s = t.value("frame_s", c.trim.frame_s);
      c.trim.hop_s = t.value("hop_s", c.trim.hop_s);
    }
    c.folds = j.value("folds", c.folds);
    c.n_resamples = j.value("n_resamples", c.n_resamples);
    c.head_l2 = j.value("head_l2", c.head_l2);
    c.head_opt.tol = j.value("head_tol", c.head_opt.tol);
    c.head_opt.max_iters = j.value("head_max_iters", c.head_opt.max_iters);
    c.baseline_grid_search = j.value("baseline_grid_search", c.baseline_grid_search);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

std::unique_ptr<Featurizer> make_featurizer(const PipelineConfig& config, const StudyManifest* manifest) {
  switch (config.provider) {
    case ProviderKind::Synthetic: return std::make_unique<SyntheticFeaturizer>(config.embedding_seed, config.embedding_dim);
    case ProviderKind::MfccBaseline: return std::make_unique<MfccFeaturizer>();
    case ProviderKind::EmbeddingFile: {
      std::vector<std::filesystem::path> containers;
      if (!config.embeddings.empty()) containers.push_back(config.embeddings);
      if (manifest) {
        for (const auto& r : manifest->recordings) {
          if (!r.embeddings.empty() && std::find(containers.begin(), containers.end(), r.embeddings) == containers.end()) {
            containers.push_back(r.embeddings);
          }
        }
      }
      return std::make_unique<FileFeaturizer>(std::move(containers));
    }
  }
  throw ConfigError("unknown provider");
}

RecordingSegments segment_recording(const AudioClip& clip, const PipelineConfig& config, double background_s) {
  // Detection runs on the trimmed span; segment times and context padding
  // refer to the full resampled recording.
  const AudioClip resampled = resample_to_16k(clip);
  const SampleRange kept = trim_range(resampled, config.trim);
  RecordingSegments out;
  out.device = clip.source_device;
  out.key = recording_key(clip.participant_id, clip.session_index, clip.source_device);
  if (kept.end == kept.begin) return out;
  out.coughs = detect_coughs(resampled, kept, config.detector);

  // Backgrounds come from the trimmed audio only.
  const double shift = static_cast<double>(kept.begin) / kCanonicalRate;
  AudioClip trimmed = resampled;
  trimmed.samples = resampled.samples.segment(kept.begin, kept.end - kept.begin);
  std::vector<CoughSegment> local = out.coughs;
  for (auto& c : local) {
    c.onset_s -= shift;
    c.offset_s -= shift;
  }
  out.backgrounds = extract_background(trimmed, local, background_s);
  for (auto& b : out.backgrounds) {
    b.onset_s += shift;
    b.offset_s += shift;
  }
  return out;
}

std::vector<RecordingSegments> segment_cohort(const StudyManifest& manifest, const RecordingSource& source,
                                              const PipelineConfig& config) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < manifest.participants.size(); ++i) index[manifest.participants[i].participant_id] = i;
  std::vector<const Recording*> selected;
  for (const auto& r : manifest.recordings) {
    if (device_matches(config.device, r.device)) selected.push_back(&r);
  }
  std::vector<RecordingSegments> out(selected.size());
  parallel_for(selected.size(), config.jobs, [&](std::size_t i) {
    const Recording& r = *selected[i];
    const std::size_t p = index.at(r.participant_id);
    if (r.wav.empty()) {
      // Embeddings-only: the container's ids define the segments.
      FileEmbeddingProvider container(r.embeddings);
      RecordingSegments rs;
      rs.device = r.device;
      rs.key = r.key();
      for (const auto& id : container.ids()) {
        for (const auto& [tag, kind] : {std::pair{"/c", SegmentKind::Cough}, std::pair{"/b", SegmentKind::Background}}) {
          if (id.rfind(rs.key + tag, 0) != 0) continue;
          CoughSegment s;
          s.id = id;
          s.participant_id = r.participant_id;
          s.session_index = r.session_index;
          s.source_device = r.device;
          s.kind = kind;
          (kind == SegmentKind::Cough ? rs.coughs : rs.backgrounds).push_back(std::move(s));
        }
      }
      out[i] = std::move(rs);
    } else {
      out[i] = segment_recording(source.load(manifest.participants[p], r), config, config.duration_s);
    }
    out[i].participant = p;
  });
  return out;
}

FeatureTable featurize(const std::vector<RecordingSegments>& recordings, SegmentKind kind, double duration_s,
                       const Featurizer& featurizer, const PipelineConfig& config) {
  std::vector<CoughSegment> segments;
  std::vector<std::size_t> participants;
  for (const auto& rec : recordings) {
    const auto& source = kind == SegmentKind::Background ? rec.backgrounds : rec.coughs;
    for (const auto& s : source) {
      if (kind == SegmentKind::WhiteNoise) {
        if (!featurizer.needs_audio()) throw DataError("white-noise conditions need an audio-based provider");
        CoughSegment w = generate_white_noise(duration_s, derive_seed(config.seed, "white/" + s.id));
        w.id = s.id + "/w";
        w.participant_id = s.participant_id;
        w.session_index = s.session_index;
        w.source_device = s.source_device;
        segments.push_back(std::move(w));
      } else {
        segments.push_back(s);
      }
      participants.push_back(rec.participant);
    }
  }

  FeatureTable t;
  t.participant = participants;
  const auto target = static_cast<Eigen::Index>(std::lround(duration_s * kCanonicalRate));
  std::vector<Eigen::VectorXd> vectors(segments.size());
  std::vector<char> checked(segments.size(), 0);
  parallel_for(segments.size(), config.jobs, [&](std::size_t i) {
    if (featurizer.needs_audio()) {
      const CoughSegment fitted = fit_duration(segments[i], duration_s, config.detector);
      if (fitted.samples.size() != target) {
        throw InvariantViolation("fit_duration_length", "segment '" + segments[i].id + "' has " +
                                                            std::to_string(fitted.samples.size()) + " samples");
      }
      checked[i] = 1;
      vectors[i] = featurizer.featurize(fitted);
    } else {
      vectors[i] = featurizer.featurize(segments[i]);
    }
  });
  const Eigen::Index dim = vectors.empty() ? 0 : vectors.front().size();
  t.rows.resize(static_cast<Eigen::Index>(vectors.size()), dim);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != dim) throw DimensionMismatch("feature vectors differ in length");
    t.rows.row(static_cast<Eigen::Index>(i)) = vectors[i].transpose();
    t.device.push_back(segments[i].source_device);
    t.segment_id.push_back(segments[i].id);
  }
  t.length_checks = static_cast<std::size_t>(std::count(checked.begin(), checked.end(), 1));
  return t;
}

CrossValidation cross_validate(const StudyManifest& m, const FeatureTable& train_table, const PipelineConfig& config,
                               const CvOptions& options) {
  const FeatureTable& test_table = options.test ? *options.test : train_table;
  std::set<std::size_t> in_train(train_table.participant.begin(), train_table.participant.end());
  std::set<std::size_t> in_test(test_table.participant.begin(), test_table.participant.end());

  CrossValidation cv;
  std::vector<Participant> usable;
  for (std::size_t p = 0; p < m.participants.size(); ++p) {
    if (in_train.count(p) && in_test.count(p)) {
      usable.push_back(m.participants[p]);
    } else {
      cv.excluded.push_back(m.participants[p].participant_id);
    }
  }
  if (usable.size() < static_cast<std::size_t>(config.folds)) {
    throw DataError("only " + std::to_string(usable.size()) + " participants have usable segments");
  }
  cv.folds = make_folds(usable, config.folds, derive_seed(config.seed, "folds"));
  std::vector<int> fold_of(m.participants.size(), -1);
  for (std::size_t p = 0; p < m.participants.size(); ++p) {
    const auto it = cv.folds.fold_of.find(m.participants[p].participant_id);
    if (it != cv.folds.fold_of.end()) fold_of[p] = it->second;
  }

  const int k = config.folds;
  const auto strata = strata_for(config.device);
  cv.fold_models.resize(static_cast<std::size_t>(k));
  cv.fold_fusion.resize(static_cast<std::size_t>(k));
  cv.fold_stackers.resize(static_cast<std::size_t>(k));
  std::vector<std::vector<ParticipantOutcome>> per_fold(static_cast<std::size_t>(k));

  parallel_for(static_cast<std::size_t>(k), config.jobs, [&](std::size_t fi) {
    const int f = static_cast<int>(fi);
    const auto train_rows = rows_where(train_table, fold_of, [&](int g) { return g != f; });
    const auto test_rows = rows_where(test_table, fold_of, [&](int g) { return g == f; });
    {
      std::vector<std::string> train_ids, test_ids;
      for (auto r : train_rows) train_ids.push_back(m.participants[train_table.participant[r]].participant_id);
      for (auto r : test_rows) test_ids.push_back(m.participants[test_table.participant[r]].participant_id);
      assert_disjoint(train_ids, test_ids);
    }
    const HeadChoice head = choose_head(m, train_table, fold_of, config, f);
    SoftmaxModel model = fit_head(m, train_table, train_rows, head);
    const auto votes = vote(m, test_table, test_rows, model, strata);

    std::vector<ParticipantOutcome> outcomes;
    for (const auto& [p, v] : votes) {
      ParticipantOutcome o;
      o.participant = p;
      o.fold = f;
      o.votes = v;
      outcomes.push_back(std::move(o));
    }

    if (options.stacking) {
      // Out-of-fold acoustic predictions inside the training split.
      std::map<std::size_t, ParticipantPrediction> oof;
      for (int g = 0; g < k; ++g) {
        if (g == f) continue;
        const auto inner_train = rows_where(train_table, fold_of, [&](int h) { return h != f && h != g; });
        const auto inner_test = rows_where(train_table, fold_of, [&](int h) { return h == g; });
        const SoftmaxModel inner = fit_head(m, train_table, inner_train, head);
        for (const auto& [p, v] : vote(m, train_table, inner_test, inner, {config.device})) oof[p] = v.at(config.device);
      }
      std::vector<Demographics> demo;
      for (const auto& [p, _] : oof) demo.push_back(m.participants[p].demographics);
      const FusionStandardizer fs = FusionStandardizer::fit(demo);
      std::vector<FusionRow> rows;
      for (const auto& [p, pred] : oof) {
        rows.push_back({build_fusion_vector(pred, m.participants[p].demographics, fs), m.participants[p].group});
      }
      std::array<StackerModel, 3> all_info;
      for (std::size_t si = 0; si < kAllFeatureSets.size(); ++si) {
        const FeatureSet set = kAllFeatureSets[si];
        for (Task task : kAllTasks) {
          const StackerModel st = train_stacker(rows, task, set);
          if (set == FeatureSet::AudioAll) all_info[static_cast<std::size_t>(task)] = st;
          for (auto& o : outcomes) {
            for (const auto& [stratum, pred] : o.votes) {
              const FusionVector x = build_fusion_vector(pred, m.participants[o.participant].demographics, fs);
              o.fused[stratum][si][static_cast<std::size_t>(task)] = score_task(st, x);
            }
          }
        }
      }
      cv.fold_fusion[fi] = fs;
      cv.fold_stackers[fi] = std::move(all_info);
    }
    cv.fold_models[fi] = std::move(model);
    per_fold[fi] = std::move(outcomes);
  });

  for (auto& fo : per_fold) {
    for (auto& o : fo) cv.outcomes.push_back(std::move(o));
  }
  std::sort(cv.outcomes.begin(), cv.outcomes.end(),
            [](const ParticipantOutcome& a, const ParticipantOutcome& b) { return a.participant < b.participant; });
  return cv;
}

std::vector<ParticipantRecord> participant_records(const StudyManifest& m, const CrossValidation& cv,
                                                   std::optional<FeatureSet> features) {
  std::vector<ParticipantRecord> out;
  for (const auto& o : cv.outcomes) {
    const Participant& p = m.participants[o.participant];
    for (const auto& [stratum, pred] : o.votes) {
      ParticipantRecord r;
      r.participant_id = p.participant_id;
      r.group = p.group;
      r.hiv_positive = p.hiv_positive;
      r.device_stratum = stratum;
      for (Task t : kAllTasks) {
        const auto ti = static_cast<std::size_t>(t);
        if (features) {
          const auto it = o.fused.find(stratum);
          if (it == o.fused.end()) throw InvalidArgument("fused scores requested from a run without stacking");
          r.task_scores[ti] = it->second[static_cast<std::size_t>(*features)][ti];
        } else {
          r.task_scores[ti] = audio_task_score(pred.mean_probs, t);
        }
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

Workbench::Workbench(const StudyManifest& manifest, const RecordingSource& source, PipelineConfig config)
    : manifest_(manifest), config_(std::move(config)) {
  config_.validate();
  featurizer_ = make_featurizer(config_, &manifest_);
  recordings_ = segment_cohort(manifest_, source, config_);
}

FeatureTable Workbench::table(SegmentKind kind, double duration_s) const {
  return featurize(recordings_, kind, duration_s, *featurizer_, config_);
}

DurationRow Workbench::duration_row(double duration_s) const {
  DurationRow row;
  row.duration_s = duration_s;
  const FeatureTable t = table(SegmentKind::Cough, duration_s);
  row.length_checks = t.length_checks;
  const CrossValidation cv = cross_validate(manifest_, t, config_, {false, nullptr});
  row.auroc = audio_aurocs(manifest_, cv, config_.device);
  return row;
}

std::vector<AdversarialRow> run_adversarial(const Workbench& bench) {
  const double d = bench.config().duration_s;
  const FeatureTable cough = bench.table(SegmentKind::Cough, d);
  const FeatureTable bg = bench.table(SegmentKind::Background, d);
  const FeatureTable white = bench.table(SegmentKind::WhiteNoise, d);
  if (bg.rows.rows() == 0) throw DataError("no background segments available for the background conditions");

  std::vector<AdversarialRow> out;
  for (AdversarialCondition c : kAllConditions) {
    AdversarialRow row;
    row.condition = c;
    const FeatureTable* train_t = &cough;
    const FeatureTable* test_t = &cough;
    switch (c) {
      case AdversarialCondition::WhiteWhite:
        train_t = test_t = &white;
        row.train_kind = row.test_kind = SegmentKind::WhiteNoise;
        break;
      case AdversarialCondition::BgBg:
        train_t = test_t = &bg;
        row.train_kind = row.test_kind = SegmentKind::Background;
        break;
      case AdversarialCondition::CoughBg:
        test_t = &bg;
        row.test_kind = SegmentKind::Background;
        break;
      case AdversarialCondition::CoughCough: break;
    }
    const CrossValidation cv = cross_validate(bench.manifest(), *train_t, bench.config(), {false, test_t});
    row.participants = static_cast<int>(cv.outcomes.size());
    row.auroc = audio_aurocs(bench.manifest(), cv, bench.config().device);
    out.push_back(row);
  }
  return out;
}

namespace {

std::vector<ParticipantRecord> primary_only(std::vector<ParticipantRecord> rows, DeviceFilter primary) {
  std::erase_if(rows, [&](const ParticipantRecord& r) { return r.device_stratum != primary; });
  return rows;
}

void assemble_report(const Workbench& bench, const FeatureTable& table, const CrossValidation& cv,
                     const EvaluateOptions& options, EvaluationReport& report) {
  const auto& m = bench.manifest();
  const auto& config = bench.config();
  report.config = to_json(config);
  report.provider_id = bench.featurizer().provider_id();
  report.group_totals = m.group_totals();
  report.participants_included = static_cast<int>(cv.outcomes.size());
  report.excluded = cv.excluded;
  report.segment_count = static_cast<std::size_t>(table.rows.rows());
  report.length_checks = table.length_checks;

  const auto audio = participant_records(m, cv, std::nullopt);
  const auto fused_all = participant_records(m, cv, FeatureSet::AudioAll);
  const auto audio_primary = primary_only(audio, config.device);
  const auto fused_primary = primary_only(fused_all, config.device);

  if (options.metrics) {
    std::vector<std::optional<FeatureSet>> sets = {std::nullopt};
    for (FeatureSet f : kAllFeatureSets) sets.push_back(f);
    for (Task task : kAllTasks) {
      for (const auto& set : sets) {
        const auto rows = set ? primary_only(participant_records(m, cv, *set), config.device) : audio_primary;
        const auto scored = task_scores(rows, task);
        TaskMetrics tm;
        tm.task = task;
        tm.features = set;
        tm.n = static_cast<int>(scored.size());
        tm.positives = static_cast<int>(std::count_if(scored.begin(), scored.end(), [](auto& s) { return s.positive; }));
        const std::string key = std::string("metrics/") + std::string(to_string(task)) + "/" +
                                (set ? std::string(to_string(*set)) : "audio-only");
        tm.metrics = bootstrap_metric_set(scored, config.decision_threshold, config.n_resamples,
                                          derive_seed(config.seed, key), config.jobs, false);
        report.task_metrics.push_back(std::move(tm));
      }
    }
  }
  if (options.sweep) {
    for (Task task : kAllTasks) {
      const auto scored = task_scores(fused_primary, task);
      report.sweep[task] = threshold_sweep(scored, config.thresholds, config.n_resamples,
                                           derive_seed(config.seed, "sweep/" + std::string(to_string(task))), config.jobs);
    }
  }
  if (options.strata) {
    const std::vector<StratumKind> kinds = {StratumKind::Task, StratumKind::HivStatus, StratumKind::Device};
    const std::vector<StratumKind> kinds_list(kinds);
    report.strata_audio = stratified_report(audio, kinds_list, config.decision_threshold, config.n_resamples,
                                            derive_seed(config.seed, "strata/audio"), config.jobs, config.device);
    report.strata_fused = stratified_report(fused_all, kinds_list, config.decision_threshold, config.n_resamples,
                                            derive_seed(config.seed, "strata/fused"), config.jobs, config.device);
  }
  try {
    report.anova = anova_recording_hour(m.participants);
  } catch (const InvalidArgument&) {
    report.anova.reset();
  }

  for (const auto& o : cv.outcomes) {
    const Participant& p = m.participants[o.participant];
    for (const auto& [stratum, pred] : o.votes) {
      std::array<std::string, 9> row = {p.participant_id, std::string(group_label(p.group)),
                                        std::string(to_string(stratum)), fmt17(pred.mean_probs[0]),
                                        fmt17(pred.mean_probs[1]), fmt17(pred.mean_probs[2]), "", "", ""};
      const auto it = o.fused.find(stratum);
      for (std::size_t t = 0; t < 3; ++t) {
        row[6 + t] = it == o.fused.end() ? "" : fmt17(it->second[static_cast<std::size_t>(FeatureSet::AudioAll)][t]);
      }
      report.predictions.push_back(std::move(row));
    }
  }
}

}  // namespace

EvaluationReport evaluate(const StudyManifest& manifest, const RecordingSource& source, const PipelineConfig& config,
                          const EvaluateOptions& options) {
  const Workbench bench(manifest, source, config);
  EvaluationReport report;
  const FeatureTable table = bench.table(SegmentKind::Cough, config.duration_s);
  const CrossValidation cv = cross_validate(manifest, table, bench.config(), {true, nullptr});
  assemble_report(bench, table, cv, options, report);
  for (double d : options.durations) report.duration_sweep.push_back(bench.duration_row(d));
  if (options.adversarial) report.adversarial = run_adversarial(bench);
  return report;
}

// ---- bundle -----------------------------------------------------------------

ModelBundle train_bundle(const StudyManifest& manifest, const RecordingSource& source, const PipelineConfig& config,
                         EvaluationReport* report) {
  if (config.provider == ProviderKind::EmbeddingFile) {
    throw ConfigError("deployable bundles need an audio-based provider (synthetic or mfcc-baseline)");
  }
  const Workbench bench(manifest, source, config);
  const FeatureTable table = bench.table(SegmentKind::Cough, config.duration_s);
  const CrossValidation cv = cross_validate(manifest, table, bench.config(), {true, nullptr});

  ModelBundle b;
  b.config = bench.config();
  b.config.embeddings.clear();
  b.provider_id = bench.featurizer().provider_id();

  std::vector<int> fold_of(manifest.participants.size(), -1);
  for (std::size_t p = 0; p < manifest.participants.size(); ++p) {
    const auto it = cv.folds.fold_of.find(manifest.participants[p].participant_id);
    if (it != cv.folds.fold_of.end()) fold_of[p] = it->second;
  }
  // Grid search, if any, validates on fold 1 with fold 0 left out, as inside CV.
  const HeadChoice head = choose_head(manifest, table, fold_of, b.config, 0);
  b.head = fit_head(manifest, table, rows_where(table, fold_of, [](int) { return true; }), head);

  std::vector<Demographics> demo;
  for (const auto& o : cv.outcomes) demo.push_back(manifest.participants[o.participant].demographics);
  b.fusion = FusionStandardizer::fit(demo);
  std::vector<FusionRow> rows;
  for (const auto& o : cv.outcomes) {
    const Participant& p = manifest.participants[o.participant];
    rows.push_back({build_fusion_vector(o.votes.at(config.device), p.demographics, b.fusion), p.group});
  }
  for (Task t : kAllTasks) b.stackers[static_cast<std::size_t>(t)] = train_stacker(rows, t, FeatureSet::AudioAll);

  EvaluationReport local;
  EvaluationReport& r = report ? *report : local;
  EvaluateOptions opts;
  opts.metrics = report != nullptr;
  opts.strata = report != nullptr;
  assemble_report(bench, table, cv, opts, r);
  b.sweep = json::object();
  for (const auto& [task, sweep_rows] : r.sweep) b.sweep[std::string(to_string(task))] = sweep_to_json(sweep_rows);

  json id_basis = to_json(b);
  id_basis.erase("model_id");
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(stable_hash(id_basis.dump())));
  b.model_id = std::string("ctb-") + hex;
  return b;
}

json to_json(const ModelBundle& b) {
  json stackers = json::array();
  for (const auto& s : b.stackers) stackers.push_back(to_json(s));
  return {{"format", "coughtb-bundle/1"},
          {"model_id", b.model_id},
          {"provider_id", b.provider_id},
          {"config", to_json(b.config)},
          {"head", to_json(b.head)},
          {"fusion_standardizer", to_json(b.fusion)},
          {"stackers", stackers},
          {"sweep", b.sweep}};
}

ModelBundle bundle_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "coughtb-bundle/1") throw SchemaError("format", "unsupported bundle format");
    ModelBundle b;
    b.model_id = j.at("model_id").get<std::string>();
    b.provider_id = j.at("provider_id").get<std::string>();
    b.config = pipeline_config_from_json(j.at("config"));
    if (b.config.provider == ProviderKind::EmbeddingFile) {
      throw SchemaError("config.provider", "bundles cannot use the embedding-file provider");
    }
    b.head = softmax_model_from_json(j.at("head"));
    b.fusion = fusion_standardizer_from_json(j.at("fusion_standardizer"));
    const auto& st = j.at("stackers");
    if (st.size() != 3) throw SchemaError("stackers", "expected three task stackers");
    for (std::size_t i = 0; i < 3; ++i) {
      b.stackers[i] = stacker_from_json(st.at(i));
      if (b.stackers[i].task != kAllTasks[i]) throw SchemaError("stackers[" + std::to_string(i) + "]", "task out of order");
    }
    b.sweep = j.value("sweep", json::object());
    return b;
  } catch (const json::exception& e) {
    throw SchemaError("bundle", e.what());
  } catch (const ConfigError& e) {
    throw SchemaError("bundle.config", e.what());
  }
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFoundError(path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError("bundle", e.what());
  }
  return bundle_from_json(j);
}

void write_bundle(const std::filesystem::path& path, const ModelBundle& b) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << to_json(b).dump(2) << '\n';
}

std::vector<CoughSegment> bundle_segments(const ModelBundle& bundle, const AudioClip& clip) {
  return segment_recording(clip, bundle.config, bundle.config.duration_s).coughs;
}

ScoreResult score_segments(const ModelBundle& bundle, std::span<const CoughSegment> coughs, const Demographics& demo,
                           Task task) {
  if (coughs.empty()) throw EmptyInputError("no cough segments to score");
  require_valid(demo);
  const auto featurizer = make_featurizer(bundle.config);
  std::vector<ScoredSegment> scored;
  for (const auto& c : coughs) {
    const CoughSegment fitted = fit_duration(c, bundle.config.duration_s, bundle.config.detector);
    ScoredSegment s;
    s.scores = predict(bundle.head, featurizer->featurize(fitted), c.id);
    s.device = c.source_device;
    scored.push_back(std::move(s));
  }
  ScoreResult r;
  r.task = task;
  r.vote = soft_vote(coughs.front().participant_id, scored, DeviceFilter::All);
  r.segments = static_cast<int>(coughs.size());
  r.score = score_task(bundle.stackers[static_cast<std::size_t>(task)],
                       build_fusion_vector(r.vote, demo, bundle.fusion));
  return r;
}

}  // namespace coughtb
