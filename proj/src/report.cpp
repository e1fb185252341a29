#include "coughtb/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "coughtb/errors.hpp"

namespace coughtb {
namespace {

using nlohmann::json;

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string pct(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * *v);
  return buf;
}

std::string pct_ci(const MetricSet& m, Metric which) {
  std::string s = pct(m.get(which));
  if (const auto& ci = m.ci(which)) s += " (" + pct(ci->lo) + "-" + pct(ci->hi) + ")";
  return s;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

json stratum_json(const StratumResult& s) {
  return {{"kind", to_string(s.kind)},
          {"name", s.name},
          {"task", to_string(s.task)},
          {"n", s.n},
          {"positives", s.positives},
          {"prevalence", s.prevalence()},
          {"low_n", s.low_n},
          {"metrics", to_json(s.metrics)}};
}

json aurocs_json(const std::array<std::optional<double>, 3>& a) {
  json j = json::object();
  for (Task t : kAllTasks) j[std::string(to_string(t))] = opt(a[static_cast<std::size_t>(t)]);
  return j;
}

std::string strata_table(const char* title, const std::vector<StratumResult>& strata) {
  std::ostringstream os;
  os << title << "\n";
  os << pad("stratum", 14) << pad("task", 10) << pad("n", 5) << pad("prev%", 7) << pad("AUROC", 20)
     << pad("Sens", 20) << pad("Spec", 20) << "\n";
  for (const auto& s : strata) {
    os << pad(std::string(to_string(s.kind)) + "/" + s.name, 14) << pad(std::string(task_label(s.task)), 10)
       << pad(std::to_string(s.n) + (s.low_n ? "*" : ""), 5) << pad(pct(s.prevalence()), 7)
       << pad(pct_ci(s.metrics.metrics, Metric::Auroc), 20) << pad(pct_ci(s.metrics.metrics, Metric::Sensitivity), 20)
       << pad(pct_ci(s.metrics.metrics, Metric::Specificity), 20) << "\n";
  }
  os << "(* fewer than " << kLowN << " participants)\n";
  return os.str();
}

}  // namespace

json to_json(const MetricSet& m) {
  json j = json::object();
  for (Metric k : kAllMetrics) {
    const std::string name(to_string(k));
    j[name] = opt(m.get(k));
    const auto& ci = m.ci(k);
    j[name + "_ci95"] = ci ? json::array({ci->lo, ci->hi}) : json(nullptr);
  }
  return j;
}

json to_json(const MetricSetBootstrap& m) {
  json j = to_json(m.metrics);
  j["n_resamples"] = m.n_resamples;
  json undefined = json::object();
  for (Metric k : kAllMetrics) undefined[std::string(to_string(k))] = m.undefined[static_cast<std::size_t>(k)];
  j["undefined_resamples"] = undefined;
  return j;
}

json sweep_to_json(const std::vector<SweepRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json tpp = json::object();
    for (const auto& v : r.tpp) {
      tpp[std::string(to_string(v.profile))] = {{"pass", v.pass},
                                                {"sensitivity_margin", v.sensitivity_margin},
                                                {"specificity_margin", v.specificity_margin}};
    }
    out.push_back({{"tau", r.tau},
                   {"tp", r.counts.tp},
                   {"fp", r.counts.fp},
                   {"fn", r.counts.fn},
                   {"tn", r.counts.tn},
                   {"metrics", to_json(r.metrics)},
                   {"tpp", tpp}});
  }
  return out;
}

json to_json(const AnovaResult& a) {
  return {{"f", std::isinf(a.f) ? json("inf") : json(a.f)},
          {"p", a.p},
          {"df_between", a.df_between},
          {"df_within", a.df_within},
          {"ss_between", a.ss_between},
          {"ss_within", a.ss_within},
          {"group_means", a.group_means}};
}

json to_json(const EvaluationReport& r) {
  json j;
  j["config"] = r.config;
  j["provider_id"] = r.provider_id;
  j["group_totals"] = {{"TB+", r.group_totals[0]}, {"OR", r.group_totals[1]}, {"HC", r.group_totals[2]}};
  j["participants_included"] = r.participants_included;
  j["excluded"] = r.excluded;
  j["segment_count"] = r.segment_count;
  j["length_checks"] = r.length_checks;

  json tm = json::array();
  for (const auto& t : r.task_metrics) {
    tm.push_back({{"task", to_string(t.task)},
                  {"features", t.features ? json(std::string(to_string(*t.features))) : json("audio-only")},
                  {"n", t.n},
                  {"positives", t.positives},
                  {"prevalence", t.n > 0 ? static_cast<double>(t.positives) / t.n : 0.0},
                  {"metrics", to_json(t.metrics)}});
  }
  j["task_metrics"] = tm;

  json sweep = json::object();
  for (const auto& [task, rows] : r.sweep) sweep[std::string(to_string(task))] = sweep_to_json(rows);
  j["sweep"] = sweep;

  json sa = json::array(), sf = json::array();
  for (const auto& s : r.strata_audio) sa.push_back(stratum_json(s));
  for (const auto& s : r.strata_fused) sf.push_back(stratum_json(s));
  j["strata_audio"] = sa;
  j["strata_fused"] = sf;
  j["anova_recording_hour"] = r.anova ? to_json(*r.anova) : json(nullptr);

  json ds = json::array();
  for (const auto& d : r.duration_sweep) {
    ds.push_back({{"duration_s", d.duration_s}, {"length_checks", d.length_checks}, {"auroc", aurocs_json(d.auroc)}});
  }
  j["duration_sweep"] = ds;

  json adv = json::array();
  for (const auto& a : r.adversarial) {
    adv.push_back({{"condition", to_string(a.condition)},
                   {"train", to_string(a.train_kind)},
                   {"test", to_string(a.test_kind)},
                   {"participants", a.participants},
                   {"auroc", aurocs_json(a.auroc)}});
  }
  j["adversarial"] = adv;
  return j;
}

std::string render_duration_table(const std::vector<DurationRow>& rows) {
  std::ostringstream os;
  os << "AUROC (%) by cough duration\n" << pad("task", 10);
  for (const auto& r : rows) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%gs", r.duration_s);
    os << pad(buf, 8);
  }
  os << "\n";
  for (Task t : kAllTasks) {
    os << pad(std::string(task_label(t)), 10);
    for (const auto& r : rows) os << pad(pct(r.auroc[static_cast<std::size_t>(t)]), 8);
    os << "\n";
  }
  return os.str();
}

std::string render_adversarial_table(const std::vector<AdversarialRow>& rows) {
  std::ostringstream os;
  os << "AUROC (%) by train/test condition\n";
  os << pad("train", 12) << pad("test", 12);
  for (Task t : kAllTasks) os << pad(std::string(task_label(t)), 10);
  os << "\n";
  for (const auto& r : rows) {
    os << pad(std::string(to_string(r.train_kind)), 12) << pad(std::string(to_string(r.test_kind)), 12);
    for (Task t : kAllTasks) os << pad(pct(r.auroc[static_cast<std::size_t>(t)]), 10);
    os << "\n";
  }
  return os.str();
}

std::string render_sweep_table(const std::map<Task, std::vector<SweepRow>>& sweep) {
  std::ostringstream os;
  os << "Threshold sweep (fused audio + all info)\n";
  os << pad("task", 10) << pad("tau", 6) << pad("Sens", 20) << pad("Spec", 20) << pad("PPV", 8) << pad("NPV", 8)
     << pad("F1", 8) << "TPP 2021/2025\n";
  for (const auto& [task, rows] : sweep) {
    for (const auto& r : rows) {
      char tau[16];
      std::snprintf(tau, sizeof tau, "%.2f", r.tau);
      os << pad(std::string(task_label(task)), 10) << pad(tau, 6) << pad(pct_ci(r.metrics, Metric::Sensitivity), 20)
         << pad(pct_ci(r.metrics, Metric::Specificity), 20) << pad(pct(r.metrics.ppv), 8) << pad(pct(r.metrics.npv), 8)
         << pad(pct(r.metrics.f1), 8) << (r.tpp[0].pass ? "pass" : "fail") << "/" << (r.tpp[1].pass ? "pass" : "fail")
         << "\n";
    }
  }
  return os.str();
}

std::string render_text(const EvaluationReport& r) {
  std::ostringstream os;
  os << "provider " << r.provider_id << "; participants " << r.participants_included << " (TB+ " << r.group_totals[0]
     << ", OR " << r.group_totals[1] << ", HC " << r.group_totals[2] << "); segments " << r.segment_count << "\n";
  if (!r.excluded.empty()) os << "excluded (no usable segments): " << r.excluded.size() << "\n";
  os << "\n";
  if (!r.task_metrics.empty()) {
    os << "Participant-level metrics, tau = " << r.config.value("decision_threshold", 0.5) << "\n";
    os << pad("features", 18) << pad("task", 10) << pad("n", 5) << pad("AUROC", 20) << pad("Sens", 20)
       << pad("Spec", 20) << pad("F1", 8) << "\n";
    for (const auto& t : r.task_metrics) {
      const auto& m = t.metrics.metrics;
      os << pad(t.features ? std::string(feature_set_label(*t.features)) : "Audio (no stack)", 18)
         << pad(std::string(task_label(t.task)), 10) << pad(std::to_string(t.n), 5) << pad(pct_ci(m, Metric::Auroc), 20)
         << pad(pct_ci(m, Metric::Sensitivity), 20) << pad(pct_ci(m, Metric::Specificity), 20) << pad(pct(m.f1), 8)
         << "\n";
    }
    os << "\n";
  }
  if (!r.sweep.empty()) os << render_sweep_table(r.sweep) << "\n";
  if (!r.strata_audio.empty()) os << strata_table("Strata, audio-only scores", r.strata_audio) << "\n";
  if (!r.strata_fused.empty()) os << strata_table("Strata, fused scores", r.strata_fused) << "\n";
  if (r.anova) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "Recording hour ANOVA: F(%d, %d) = %.3f, p = %.3f\n\n", r.anova->df_between,
                  r.anova->df_within, r.anova->f, r.anova->p);
    os << buf;
  }
  if (!r.duration_sweep.empty()) os << render_duration_table(r.duration_sweep) << "\n";
  if (!r.adversarial.empty()) os << render_adversarial_table(r.adversarial) << "\n";
  return os.str();
}

void write_predictions_csv(const std::filesystem::path& path, const EvaluationReport& r) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << "participant_id,group,device_stratum,p_tb,p_or,p_hc,fused_tb_vs_rest,fused_tb_vs_or,fused_tb_vs_hc\n";
  for (const auto& row : r.predictions) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << text;
}

}  // namespace coughtb
