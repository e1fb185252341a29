#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "coughtb/audio_io.hpp"
#include "coughtb/types.hpp"

namespace coughtb {

struct DetectorConfig {
  double frame_s = 0.025;
  double hop_s = 0.010;
  double k = 0.25;            // threshold = median + k * (p95 - median)
  double merge_gap_s = 0.150;
  double min_event_s = 0.060;
  double pad_s = 0.200;
};

struct CoughSegment {
  std::string id;
  Samples samples;
  double onset_s = 0.0;
  double offset_s = 0.0;
  double context_pad_s = 0.0;
  std::string participant_id;
  int session_index = 1;
  Device source_device = Device::Synthetic;
  SegmentKind kind = SegmentKind::Cough;

  double duration_s() const { return static_cast<double>(samples.size()) / kCanonicalRate; }
};

// "<participant>-s<session>-<device>", the prefix of every segment id cut from a recording.
std::string recording_key(const std::string& participant_id, int session_index, Device device);

// Energy detector with an adaptive (gain-invariant) threshold. Returned spans
// are padded, disjoint and sorted by onset.
std::vector<CoughSegment> detect_coughs(const AudioClip& clip, const DetectorConfig& config = {});

// As above, but events are searched for (and the threshold estimated) only in
// samples [active.begin, active.end); context padding may reach outside it.
std::vector<CoughSegment> detect_coughs(const AudioClip& clip, SampleRange active, const DetectorConfig& config);

// Non-overlapping windows of target_s cut from the complement of the cough spans.
std::vector<CoughSegment> extract_background(const AudioClip& clip,
                                             std::span<const CoughSegment> cough_segments,
                                             double target_s);

// I.i.d. uniform samples in [-0.5, 0.5].
CoughSegment generate_white_noise(double duration_s, std::uint64_t seed);

// Crops around the peak-energy frame or zero-pads symmetrically to exactly
// round(target_s * 16000) samples.
CoughSegment fit_duration(const CoughSegment& segment, double target_s,
                          const DetectorConfig& framing = {});

// Linear-interpolated percentile (q in [0, 1]) of an unsorted sample.
double percentile(std::vector<double> values, double q);

}  // namespace coughtb
