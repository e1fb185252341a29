// coughtb: batch driver for the cough screening pipeline.
//
// Exit status: 0 ok, 2 configuration error, 3 data error, 4 internal error.

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "coughtb/errors.hpp"
#include "coughtb/pipeline.hpp"
#include "coughtb/report.hpp"
#include "coughtb/screening_service.hpp"
#include "coughtb/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace coughtb;

namespace {

struct Common {
  std::string config_path;
  std::string manifest;
  std::string out = "out";
  std::string provider;
  std::string embeddings;
  double duration = 3.0;
  std::vector<double> thresholds;
  std::uint64_t seed = 1;
  int jobs = 1;
  std::string device;
  int folds = 10;
  int resamples = 10000;
  double tau = 0.5;

  std::map<std::string, CLI::Option*> opts;
};

void add_common(CLI::App* cmd, Common& c, bool pipeline) {
  c.opts["config"] = cmd->add_option("--config", c.config_path, "JSON config file; flags override it");
  c.opts["out"] = cmd->add_option("--out", c.out, "output directory");
  c.opts["seed"] = cmd->add_option("--seed", c.seed, "master seed");
  c.opts["jobs"] = cmd->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
  if (!pipeline) return;
  c.opts["manifest"] = cmd->add_option("--manifest", c.manifest, "study manifest JSON");
  c.opts["provider"] = cmd->add_option("--provider", c.provider, "mfcc-baseline | embedding-file | synthetic");
  c.opts["embeddings"] = cmd->add_option("--embeddings", c.embeddings, "embeddings container for embedding-file");
  c.opts["duration"] = cmd->add_option("--duration", c.duration, "segment duration in seconds");
  c.opts["thresholds"] = cmd->add_option("--thresholds", c.thresholds, "threshold grid")->delimiter(',');
  c.opts["device"] = cmd->add_option("--device", c.device, "mic | phone | all");
  c.opts["folds"] = cmd->add_option("--folds", c.folds, "cross-validation folds");
  c.opts["resamples"] = cmd->add_option("--resamples", c.resamples, "bootstrap resamples");
  c.opts["tau"] = cmd->add_option("--tau", c.tau, "decision threshold for the metric tables");
}

bool given(const Common& c, const char* name) {
  const auto it = c.opts.find(name);
  return it != c.opts.end() && it->second->count() > 0;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
}

struct Resolved {
  PipelineConfig config;
  fs::path manifest;
  fs::path out;
};

// Defaults, then the config file, then flags.
Resolved resolve(Common& c) {
  Resolved r;
  json file = json::object();
  fs::path base = fs::current_path();
  if (!c.config_path.empty()) {
    file = read_json(c.config_path);
    base = fs::absolute(c.config_path).parent_path();
  }
  r.config = pipeline_config_from_json(file);
  if (file.contains("manifest")) r.manifest = base / file.at("manifest").get<std::string>();
  if (file.contains("out")) r.out = file.at("out").get<std::string>();
  auto& cfg = r.config;
  if (given(c, "manifest")) r.manifest = c.manifest;
  if (given(c, "out") || r.out.empty()) r.out = c.out;
  if (given(c, "provider")) cfg.provider = parse_provider(c.provider);
  if (given(c, "embeddings")) cfg.embeddings = c.embeddings;
  if (given(c, "duration")) cfg.duration_s = c.duration;
  if (given(c, "thresholds")) cfg.thresholds = c.thresholds;
  if (given(c, "seed")) cfg.seed = c.seed;
  if (given(c, "jobs")) cfg.jobs = c.jobs;
  if (given(c, "device")) {
    try {
      cfg.device = parse_device_filter(c.device);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  if (given(c, "folds")) cfg.folds = c.folds;
  if (given(c, "resamples")) cfg.n_resamples = c.resamples;
  if (given(c, "tau")) cfg.decision_threshold = c.tau;
  if (!cfg.embeddings.empty()) cfg.embeddings = fs::absolute(cfg.embeddings);
  cfg.validate();
  return r;
}

StudyManifest require_manifest(const Resolved& r) {
  if (r.manifest.empty()) throw ConfigError("--manifest is required");
  return load_manifest(r.manifest);
}

// Config as it can be fed back through --config to replay the run.
json replay_config(const Resolved& r) {
  json j = to_json(r.config);
  if (!r.manifest.empty()) j["manifest"] = fs::absolute(r.manifest).lexically_normal().generic_string();
  j["out"] = r.out.generic_string();
  return j;
}

void write_metadata(const Resolved& r, const std::string& command, const json& extra = json::object()) {
  fs::create_directories(r.out);
  json meta = {{"command", command},
               {"version", COUGHTB_VERSION},
               {"config", replay_config(r)},
               {"seeds",
                {{"master", r.config.seed},
                 {"folds", derive_seed(r.config.seed, "folds")},
                 {"embedding_projection", r.config.embedding_seed}}},
               {"policies",
                {{"trim", "silence trimmed before cough detection"},
                 {"crop", "peak-frame anchored crop, symmetric zero padding"},
                 {"bootstrap", "percentile, participant resampling"}}}};
  for (const auto& [k, v] : extra.items()) meta[k] = v;
  write_json(r.out / "run_metadata.json", meta);
  write_json(r.out / "config.json", replay_config(r));
}

std::vector<double> parse_durations(const std::string& s) {
  std::vector<double> out;
  if (s.empty()) return out;
  if (s == "all") return {1, 2, 3, 4, 5, 6};
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("bad duration '" + item + "'");
    }
  }
  return out;
}

void write_report(const fs::path& out, const EvaluationReport& report) {
  write_json(out / "report.json", to_json(report));
  write_text(out / "report.txt", render_text(report));
  write_predictions_csv(out / "predictions.csv", report);
}

int run_simulate(const Common& c, const std::vector<int>& sizes, double effect, double confound, int sessions,
                 bool no_phone, const std::string& spec_path) {
  SimulationSpec spec;
  if (!spec_path.empty()) spec = simulation_spec_from_json(read_json(spec_path));
  if (sizes.size() == 3) spec.group_sizes = {sizes[0], sizes[1], sizes[2]};
  else if (!sizes.empty()) throw ConfigError("--sizes needs three comma-separated counts");
  if (effect >= 0.0) spec.effect_size = effect;
  if (!std::isnan(confound)) spec.background_confound = confound;
  if (given(c, "seed")) spec.seed = c.seed;
  if (sessions > 0) spec.sessions = sessions;
  if (no_phone) spec.include_phone = false;
  spec.validate();
  const fs::path out = c.out;
  const StudyManifest m = simulate_cohort(spec, out, c.jobs);
  write_json(out / "simulation.json", to_json(spec));
  json meta = {{"command", "simulate"}, {"version", COUGHTB_VERSION}, {"simulation", to_json(spec)}};
  write_json(out / "run_metadata.json", meta);
  const auto totals = m.group_totals();
  std::printf("wrote %zu recordings for %zu participants (TB+ %d, OR %d, HC %d) to %s\n", m.recordings.size(),
              m.participants.size(), totals[0], totals[1], totals[2], (out / "manifest.json").c_str());
  return 0;
}

int run_segment(Common& c, const std::string& export_path) {
  const Resolved r = resolve(c);
  const StudyManifest m = require_manifest(r);
  WavRecordingSource source;
  const auto recs = segment_cohort(m, source, r.config);
  json out = json::array();
  std::size_t coughs = 0;
  for (const auto& rec : recs) {
    json segs = json::array();
    for (const auto& s : rec.coughs) segs.push_back({{"segment_id", s.id}, {"onset_s", s.onset_s}, {"offset_s", s.offset_s}});
    coughs += rec.coughs.size();
    out.push_back({{"recording", rec.key},
                   {"participant_id", m.participants[rec.participant].participant_id},
                   {"coughs", segs},
                   {"backgrounds", rec.backgrounds.size()}});
  }
  fs::create_directories(r.out);
  write_json(r.out / "segments.json", out);
  if (!export_path.empty()) {
    // Synthetic provider embeddings of the duration-fitted segments, for the file provider.
    const SyntheticProvider provider(r.config.embedding_seed, r.config.embedding_dim);
    std::map<std::string, EmbeddingSequence> seqs;
    for (const auto& rec : recs) {
      for (const auto* list : {&rec.coughs, &rec.backgrounds}) {
        for (const auto& s : *list) {
          seqs[s.id] = provider.provide(fit_duration(s, r.config.duration_s, r.config.detector));
        }
      }
    }
    write_embeddings(export_path, provider.provider_id(), seqs);
    std::printf("exported %zu embedding sequences to %s\n", seqs.size(), export_path.c_str());
  }
  write_metadata(r, "segment");
  std::printf("%zu recordings, %zu cough segments\n", recs.size(), coughs);
  return 0;
}

int run_evaluate(Common& c, const EvaluateOptions& opts, const std::string& command) {
  const Resolved r = resolve(c);
  const StudyManifest m = require_manifest(r);
  WavRecordingSource source;
  const EvaluationReport report = evaluate(m, source, r.config, opts);
  fs::create_directories(r.out);
  if (command == "sweep") {
    json j = json::object();
    for (const auto& [task, rows] : report.sweep) j[std::string(to_string(task))] = sweep_to_json(rows);
    write_json(r.out / "sweep.json", j);
    write_text(r.out / "sweep.txt", render_sweep_table(report.sweep));
    std::cout << render_sweep_table(report.sweep);
  } else if (command == "adversarial") {
    write_json(r.out / "adversarial.json", to_json(report)["adversarial"]);
    write_text(r.out / "adversarial.txt", render_adversarial_table(report.adversarial));
    std::cout << render_adversarial_table(report.adversarial);
  } else {
    write_report(r.out, report);
    std::cout << render_text(report);
  }
  write_metadata(r, command);
  return 0;
}

int run_train(Common& c) {
  const Resolved r = resolve(c);
  const StudyManifest m = require_manifest(r);
  WavRecordingSource source;
  EvaluationReport report;
  const ModelBundle b = train_bundle(m, source, r.config, &report);
  fs::create_directories(r.out);
  write_bundle(r.out / "model.json", b);
  write_report(r.out, report);
  write_metadata(r, "train", {{"model_id", b.model_id}});
  std::printf("model %s written to %s\n", b.model_id.c_str(), (r.out / "model.json").c_str());
  return 0;
}

int run_ltas(Common& c) {
  const Resolved r = resolve(c);
  const StudyManifest m = require_manifest(r);
  WavRecordingSource source;
  const auto recs = segment_cohort(m, source, r.config);
  fs::create_directories(r.out);
  for (Group g : kAllGroups) {
    std::vector<CoughSegment> segs;
    for (const auto& rec : recs) {
      if (m.participants[rec.participant].group != g) continue;
      segs.insert(segs.end(), rec.coughs.begin(), rec.coughs.end());
    }
    if (segs.empty()) continue;
    const fs::path path = r.out / ("ltas_" + std::string(to_string(g)) + ".csv");
    write_ltas_csv(path, compute_ltas(segs));
    std::printf("%s: %zu segments -> %s\n", std::string(group_label(g)).c_str(), segs.size(), path.c_str());
  }
  write_metadata(r, "ltas");
  return 0;
}

int run_score(const std::string& model, const std::vector<std::string>& wavs, int age, const std::string& gender,
              double bmi, bool symptom, const std::string& task, const std::string& threshold) {
  const ModelBundle b = load_bundle(model);
  std::vector<CoughSegment> coughs;
  int index = 0;
  for (const auto& w : wavs) {
    std::ifstream in(w, std::ios::binary);
    if (!in) throw FileNotFoundError(w);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto segs = segment_upload(b, bytes, "cli", index + 1);
    if (!segs.empty()) ++index;
    coughs.insert(coughs.end(), segs.begin(), segs.end());
  }
  if (coughs.empty()) throw DataError("no coughs detected in the supplied recordings");
  std::vector<FieldIssue> issues;
  const Demographics d = parse_demographics({{"age", age}, {"gender", gender}, {"bmi", bmi}, {"symptom", symptom}}, issues);
  if (!issues.empty()) throw ConfigError(issues.front().field + ": " + issues.front().message);
  Task t = Task::TbVsRest;
  try {
    t = parse_task(task);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  double tau = kDefaultOperatingPoint;
  if (!threshold.empty()) {
    try {
      tau = std::stod(threshold);
    } catch (const std::exception&) {
      throw ConfigError("--threshold must be a number");
    }
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("--threshold must lie in (0, 1)");
  }
  const ScoreResult res = score_segments(b, coughs, d, t);
  char hex[32];
  std::snprintf(hex, sizeof hex, "%a", res.score);
  const json out = {{"task", to_string(t)},
                    {"score", res.score},
                    {"score_hex", hex},
                    {"threshold", tau},
                    {"decision", res.score >= tau ? "refer" : "no-refer"},
                    {"model_id", b.model_id},
                    {"segments", res.segments}};
  std::cout << out.dump() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cough-audio TB screening pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", COUGHTB_VERSION);

  Common c_sim, c_seg, c_train, c_eval, c_sweep, c_adv, c_ltas;

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic cohort (WAV files + manifest)");
  add_common(simulate, c_sim, false);
  std::vector<int> sizes;
  double effect = -1.0, confound = std::nan("");
  int sessions = 0;
  bool no_phone = false;
  std::string spec_path;
  simulate->add_option("--sizes", sizes, "TB+,OR,HC group sizes")->delimiter(',');
  simulate->add_option("--effect", effect, "acoustic effect size");
  simulate->add_option("--confound", confound, "group-linked background tilt");
  simulate->add_option("--sessions", sessions, "sessions per participant");
  simulate->add_flag("--no-phone", no_phone, "microphone recordings only");
  simulate->add_option("--spec", spec_path, "simulation spec JSON");

  auto* segment = app.add_subcommand("segment", "detect coughs in every recording");
  add_common(segment, c_seg, true);
  std::string export_path;
  segment->add_option("--export-embeddings", export_path, "write synthetic-provider embeddings container");

  auto* train = app.add_subcommand("train", "fit a deployable model bundle");
  add_common(train, c_train, true);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "cross-validated evaluation report");
  add_common(evaluate_cmd, c_eval, true);
  std::string durations;
  bool with_adversarial = false;
  evaluate_cmd->add_option("--durations", durations, "duration sweep, e.g. 1,2,3 or all");
  evaluate_cmd->add_flag("--adversarial", with_adversarial, "include the four train/test conditions");

  auto* sweep = app.add_subcommand("sweep", "threshold sweep with TPP verdicts");
  add_common(sweep, c_sweep, true);

  auto* adversarial = app.add_subcommand("adversarial", "white noise / background / cough conditions");
  add_common(adversarial, c_adv, true);

  auto* ltas = app.add_subcommand("ltas", "long-term average spectrum per group");
  add_common(ltas, c_ltas, true);

  auto* serve = app.add_subcommand("serve", "HTTP screening service");
  std::string model_path, host = "127.0.0.1", audit_dir;
  int port = 8080;
  serve->add_option("--model", model_path, "model bundle JSON");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port");
  serve->add_option("--audit-dir", audit_dir, "directory for per-session JSON-lines audit logs");

  auto* score = app.add_subcommand("score", "score WAV files for one person with a model bundle");
  std::string score_model, gender = "male", task = "tb_vs_rest", threshold;
  std::vector<std::string> wavs;
  int age = 0;
  double bmi = 0.0;
  bool symptom = false;
  score->add_option("--model", score_model, "model bundle JSON")->required();
  score->add_option("--wav", wavs, "recording (repeatable)")->required();
  score->add_option("--age", age, "age in years")->required();
  score->add_option("--gender", gender, "male | female");
  score->add_option("--bmi", bmi, "body-mass index")->required();
  score->add_flag("--symptom", symptom, "symptoms present");
  score->add_option("--task", task, "tb_vs_rest | tb_vs_or | tb_vs_hc");
  score->add_option("--threshold", threshold, "decision threshold (default 0.38)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*simulate) return run_simulate(c_sim, sizes, effect, confound, sessions, no_phone, spec_path);
    if (*segment) return run_segment(c_seg, export_path);
    if (*train) return run_train(c_train);
    if (*evaluate_cmd) {
      EvaluateOptions opts;
      opts.durations = parse_durations(durations);
      opts.adversarial = with_adversarial;
      return run_evaluate(c_eval, opts, "evaluate");
    }
    if (*sweep) {
      EvaluateOptions opts;
      opts.metrics = false;
      opts.strata = false;
      return run_evaluate(c_sweep, opts, "sweep");
    }
    if (*adversarial) {
      EvaluateOptions opts;
      opts.metrics = opts.sweep = opts.strata = false;
      opts.adversarial = true;
      return run_evaluate(c_adv, opts, "adversarial");
    }
    if (*ltas) return run_ltas(c_ltas);
    if (*serve) {
      std::shared_ptr<const ModelBundle> bundle;
      if (!model_path.empty()) bundle = std::make_shared<const ModelBundle>(load_bundle(model_path));
      ScreeningService service(bundle, {audit_dir});
      std::printf("listening on %s:%d (model %s)\n", host.c_str(), port, bundle ? bundle->model_id.c_str() : "none");
      std::fflush(stdout);
      run_server(service, host, port);
      return 0;
    }
    if (*score) return run_score(score_model, wavs, age, gender, bmi, symptom, task, threshold);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 4;
  }
  return 4;
}
