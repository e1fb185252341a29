#include "coughtb/evaluation.hpp"

#include <algorithm>
#include <set>

#include "coughtb/errors.hpp"
#include "coughtb/util.hpp"

namespace coughtb {

int FoldAssignment::fold(const std::string& participant_id) const {
  const auto it = fold_of.find(participant_id);
  if (it == fold_of.end()) throw DanglingReferenceError("participant '" + participant_id + "' has no fold");
  return it->second;
}

std::vector<std::string> FoldAssignment::members(int f) const {
  std::vector<std::string> out;
  for (const auto& [id, fi] : fold_of) {
    if (fi == f) out.push_back(id);
  }
  return out;
}

FoldAssignment make_folds(std::span<const Participant> participants, int k, std::uint64_t seed) {
  if (k < 2) throw InvalidArgument("need at least two folds");
  if (static_cast<std::size_t>(k) > participants.size()) {
    throw InvalidArgument("more folds (" + std::to_string(k) + ") than participants (" +
                          std::to_string(participants.size()) + ")");
  }
  std::map<std::pair<int, int>, std::vector<std::string>> strata;
  for (const auto& p : participants) {
    strata[{class_index(p.group), static_cast<int>(p.demographics.gender)}].push_back(p.participant_id);
  }
  FoldAssignment out;
  out.k = k;
  int next = 0;
  for (auto& [key, ids] : strata) {
    std::sort(ids.begin(), ids.end());
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(key.first * 16 + key.second)));
    std::shuffle(ids.begin(), ids.end(), rng);
    for (const auto& id : ids) {
      if (!out.fold_of.emplace(id, next).second) throw DuplicateIdError("duplicate participant '" + id + "'");
      next = (next + 1) % k;
    }
  }
  return out;
}

void assert_disjoint(std::span<const std::string> train_ids, std::span<const std::string> test_ids) {
  const std::set<std::string> train(train_ids.begin(), train_ids.end());
  for (const auto& id : test_ids) {
    if (train.count(id)) {
      throw InvariantViolation("fold_disjoint", "participant '" + id + "' appears in train and test");
    }
  }
}

AnovaResult anova_recording_hour(std::span<const Participant> participants) {
  std::vector<std::vector<double>> hours(3);
  for (const auto& p : participants) {
    hours[static_cast<std::size_t>(class_index(p.group))].push_back(p.recording_hour());
  }
  return one_way_anova(hours);
}

std::string_view to_string(StratumKind k) {
  switch (k) {
    case StratumKind::Device: return "device";
    case StratumKind::HivStatus: return "hiv";
    case StratumKind::Task: return "task";
  }
  return "?";
}

std::vector<ScoredLabel> task_scores(std::span<const ParticipantRecord> rows, Task task) {
  std::vector<ScoredLabel> out;
  for (const auto& r : rows) {
    if (task_includes(task, r.group)) {
      out.push_back({r.task_scores[static_cast<std::size_t>(task)], r.group == Group::TBpos});
    }
  }
  return out;
}

std::vector<StratumResult> stratified_report(std::span<const ParticipantRecord> rows,
                                             std::span<const StratumKind> kinds, double tau, int n_resamples,
                                             std::uint64_t seed, int jobs, DeviceFilter primary) {
  struct Slice {
    StratumKind kind;
    std::string name;
    std::vector<ParticipantRecord> rows;
  };
  std::vector<Slice> slices;
  std::vector<ParticipantRecord> primary_rows;
  for (const auto& r : rows) {
    if (r.device_stratum == primary) primary_rows.push_back(r);
  }
  for (StratumKind kind : kinds) {
    switch (kind) {
      case StratumKind::Task:
        slices.push_back({kind, "all", primary_rows});
        break;
      case StratumKind::HivStatus: {
        Slice pos{kind, "HIV+", {}}, neg{kind, "HIV-", {}};
        for (const auto& r : primary_rows) (r.hiv_positive ? pos : neg).rows.push_back(r);
        slices.push_back(std::move(pos));
        slices.push_back(std::move(neg));
        break;
      }
      case StratumKind::Device: {
        for (DeviceFilter d : {DeviceFilter::Mic, DeviceFilter::Phone}) {
          Slice s{kind, std::string(to_string(d)), {}};
          for (const auto& r : rows) {
            if (r.device_stratum == d) s.rows.push_back(r);
          }
          if (!s.rows.empty()) slices.push_back(std::move(s));
        }
        break;
      }
    }
  }
  for (const auto& s : slices) {
    if (s.rows.empty()) {
      throw EmptyInputError("stratum " + std::string(to_string(s.kind)) + "/" + s.name + " has no participants");
    }
  }

  std::vector<StratumResult> out;
  for (const auto& s : slices) {
    for (Task task : kAllTasks) {
      const auto scored = task_scores(s.rows, task);
      StratumResult r;
      r.kind = s.kind;
      r.name = s.name;
      r.task = task;
      r.n = static_cast<int>(scored.size());
      r.positives = static_cast<int>(std::count_if(scored.begin(), scored.end(), [](auto& x) { return x.positive; }));
      r.low_n = r.n < kLowN;
      if (scored.empty()) {
        throw EmptyInputError("stratum " + s.name + " has no participants for " + std::string(task_label(task)));
      }
      const std::uint64_t item = derive_seed(stable_hash(s.name), static_cast<std::uint64_t>(task));
      r.metrics = bootstrap_metric_set(scored, tau, n_resamples, derive_seed(seed, item), jobs, false);
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace coughtb
