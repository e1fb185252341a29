#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

#include "coughtb/audio_io.hpp"
#include "coughtb/cough_segmenter.hpp"

namespace testing {

inline coughtb::AudioClip silence(double seconds, int rate = 16000) {
  coughtb::AudioClip c;
  c.sample_rate = rate;
  c.samples = coughtb::Samples::Zero(static_cast<Eigen::Index>(std::lround(seconds * rate)));
  c.participant_id = "T1";
  c.source_device = coughtb::Device::HighFidelityMic;
  return c;
}

// Adds a sine of `amplitude` over [t0, t1).
inline void add_tone(coughtb::AudioClip& c, double t0, double t1, double hz, double amplitude) {
  const auto a = static_cast<Eigen::Index>(std::lround(t0 * c.sample_rate));
  const auto b = static_cast<Eigen::Index>(std::lround(t1 * c.sample_rate));
  for (Eigen::Index i = a; i < b && i < c.samples.size(); ++i) {
    c.samples[i] += static_cast<float>(amplitude * std::sin(2.0 * std::numbers::pi * hz * i / c.sample_rate));
  }
}

// Noise burst on [t0, t1) over a very quiet noise floor.
inline coughtb::AudioClip burst_clip(double total_s, std::initializer_list<std::pair<double, double>> bursts,
                                     unsigned seed = 3) {
  coughtb::AudioClip c = silence(total_s);
  std::mt19937 rng(seed);
  std::normal_distribution<float> floor(0.0f, 1e-4f), loud(0.0f, 0.2f);
  for (Eigen::Index i = 0; i < c.samples.size(); ++i) c.samples[i] = floor(rng);
  for (const auto& [t0, t1] : bursts) {
    const auto a = static_cast<Eigen::Index>(std::lround(t0 * 16000));
    const auto b = static_cast<Eigen::Index>(std::lround(t1 * 16000));
    for (Eigen::Index i = a; i < b; ++i) c.samples[i] = loud(rng);
  }
  return c;
}

inline std::filesystem::path tmp_dir(const std::string& name) {
  const auto p = std::filesystem::path(COUGHTB_TEST_TMP) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
