#pragma once

#include <memory>

#include "coughtb/cohort.hpp"
#include "coughtb/pipeline.hpp"

namespace testing {

inline coughtb::SimulationSpec small_spec(double effect = 2.0) {
  coughtb::SimulationSpec s;
  s.group_sizes = {10, 8, 8};
  s.sessions = 1;
  s.include_phone = false;
  s.effect_size = effect;
  s.seed = 5;
  return s;
}

inline coughtb::PipelineConfig small_config() {
  coughtb::PipelineConfig c;
  c.folds = 3;
  c.n_resamples = 50;
  return c;
}

struct SmallWorld {
  coughtb::SimulationSpec spec;
  coughtb::StudyManifest manifest;
  std::shared_ptr<const coughtb::ModelBundle> bundle;
};

// Trained once per test binary.
inline const SmallWorld& small_world() {
  static const SmallWorld w = [] {
    SmallWorld x;
    x.spec = small_spec();
    x.manifest = coughtb::simulate_manifest(x.spec);
    const coughtb::SimulatedRecordingSource src(x.spec);
    x.bundle = std::make_shared<const coughtb::ModelBundle>(coughtb::train_bundle(x.manifest, src, small_config()));
    return x;
  }();
  return w;
}

}  // namespace testing
