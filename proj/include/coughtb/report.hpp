#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "coughtb/metrics.hpp"
#include "coughtb/pipeline.hpp"

namespace coughtb {

nlohmann::json to_json(const MetricSet& m);
nlohmann::json to_json(const MetricSetBootstrap& m);
nlohmann::json sweep_to_json(const std::vector<SweepRow>& rows);
nlohmann::json to_json(const AnovaResult& a);
nlohmann::json to_json(const EvaluationReport& r);

// Plain-text tables: per-task metrics, threshold sweep with TPP verdicts,
// strata, duration sweep and adversarial conditions (sections that are empty
// are omitted).
std::string render_text(const EvaluationReport& r);
std::string render_duration_table(const std::vector<DurationRow>& rows);
std::string render_adversarial_table(const std::vector<AdversarialRow>& rows);
std::string render_sweep_table(const std::map<Task, std::vector<SweepRow>>& sweep);

void write_predictions_csv(const std::filesystem::path& path, const EvaluationReport& r);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace coughtb
