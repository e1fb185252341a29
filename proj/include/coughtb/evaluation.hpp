#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coughtb/cohort.hpp"
#include "coughtb/metrics.hpp"
#include "coughtb/statistics.hpp"
#include "coughtb/types.hpp"

namespace coughtb {

struct FoldAssignment {
  int k = 0;
  std::map<std::string, int> fold_of;

  int fold(const std::string& participant_id) const;
  std::vector<std::string> members(int fold) const;
};

// Stratified on (group, gender). Each stratum is shuffled with a seeded
// generator and dealt round-robin; the dealing position carries over from
// one stratum to the next so fold sizes stay balanced.
FoldAssignment make_folds(std::span<const Participant> participants, int k, std::uint64_t seed);

// Throws InvariantViolation if any participant sits in both sets.
void assert_disjoint(std::span<const std::string> train_ids, std::span<const std::string> test_ids);

// One-way ANOVA of recording hour across TB+, OR and HC.
AnovaResult anova_recording_hour(std::span<const Participant> participants);

// One participant-level row as it enters the stratified report.
struct ParticipantRecord {
  std::string participant_id;
  Group group = Group::TBpos;
  bool hiv_positive = false;
  DeviceFilter device_stratum = DeviceFilter::All;
  std::array<double, 3> task_scores{};  // indexed by Task
};

enum class StratumKind { Device, HivStatus, Task };
std::string_view to_string(StratumKind k);

inline constexpr int kLowN = 20;

struct StratumResult {
  StratumKind kind = StratumKind::Task;
  std::string name;
  Task task = Task::TbVsRest;
  int n = 0;
  int positives = 0;
  bool low_n = false;
  MetricSetBootstrap metrics;

  double prevalence() const { return n > 0 ? static_cast<double>(positives) / n : 0.0; }
};

// Scores of the rows taking part in `task`, labelled TB+ positive.
std::vector<ScoredLabel> task_scores(std::span<const ParticipantRecord> rows, Task task);

// Per-stratum metrics with bootstrap intervals, for every task. Device strata
// come from device-pure rows; the other kinds use rows whose stratum is
// `primary`. Requested strata with no rows raise EmptyInputError.
std::vector<StratumResult> stratified_report(std::span<const ParticipantRecord> rows,
                                             std::span<const StratumKind> kinds, double tau, int n_resamples,
                                             std::uint64_t seed, int jobs = 1,
                                             DeviceFilter primary = DeviceFilter::Mic);

}  // namespace coughtb
