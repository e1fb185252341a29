#include "coughtb/cough_segmenter.hpp"

#include <algorithm>
#include <cmath>

#include "coughtb/errors.hpp"
#include "coughtb/util.hpp"

namespace coughtb {
namespace {

struct Span {
  Eigen::Index begin;  // samples, half-open
  Eigen::Index end;
};

constexpr std::string_view device_tag(Device d) {
  switch (d) {
    case Device::HighFidelityMic: return "mic";
    case Device::Smartphone: return "phone";
    case Device::Synthetic: return "syn";
  }
  return "dev";
}

CoughSegment make_segment(const AudioClip& clip, Span span, SegmentKind kind, std::string id) {
  CoughSegment seg;
  seg.id = std::move(id);
  seg.samples = clip.samples.segment(span.begin, span.end - span.begin);
  seg.onset_s = static_cast<double>(span.begin) / kCanonicalRate;
  seg.offset_s = static_cast<double>(span.end) / kCanonicalRate;
  seg.participant_id = clip.participant_id;
  seg.session_index = clip.session_index;
  seg.source_device = clip.source_device;
  seg.kind = kind;
  return seg;
}

void require_canonical(const AudioClip& clip) {
  if (clip.sample_rate != kCanonicalRate) {
    throw InvalidArgument("expected a 16 kHz clip, got " + std::to_string(clip.sample_rate) + " Hz");
  }
}

}  // namespace

std::string recording_key(const std::string& participant_id, int session_index, Device device) {
  return participant_id + "-s" + std::to_string(session_index) + "-" + std::string(device_tag(device));
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw EmptyInputError("percentile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<CoughSegment> detect_coughs(const AudioClip& clip, const DetectorConfig& config) {
  return detect_coughs(clip, SampleRange{0, clip.samples.size()}, config);
}

std::vector<CoughSegment> detect_coughs(const AudioClip& clip, SampleRange active, const DetectorConfig& config) {
  require_canonical(clip);
  if (active.begin < 0 || active.end > clip.samples.size() || active.end < active.begin) {
    throw InvalidArgument("detection range outside the clip");
  }
  const int frame = static_cast<int>(std::lround(config.frame_s * kCanonicalRate));
  const int hop = static_cast<int>(std::lround(config.hop_s * kCanonicalRate));
  const Eigen::VectorXd rms = frame_rms(clip.samples.segment(active.begin, active.end - active.begin), frame, hop);
  if (rms.size() == 0) return {};

  std::vector<double> energies(rms.data(), rms.data() + rms.size());
  const double median = percentile(energies, 0.5);
  const double p95 = percentile(energies, 0.95);
  const double threshold = median + config.k * (p95 - median);

  // Runs of supra-threshold frames, as inclusive frame index pairs.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> runs;
  for (Eigen::Index i = 0; i < rms.size(); ++i) {
    if (!(rms[i] > threshold)) continue;
    if (!runs.empty() && runs.back().second == i - 1) {
      runs.back().second = i;
    } else {
      runs.emplace_back(i, i);
    }
  }

  std::vector<std::pair<Eigen::Index, Eigen::Index>> merged;
  for (const auto& run : runs) {
    if (!merged.empty()) {
      const double gap_s = static_cast<double>(run.first - merged.back().second - 1) * config.hop_s;
      if (gap_s < config.merge_gap_s) {
        merged.back().second = run.second;
        continue;
      }
    }
    merged.push_back(run);
  }

  const Eigen::Index n = clip.samples.size();
  const auto pad = static_cast<Eigen::Index>(std::lround(config.pad_s * kCanonicalRate));
  struct Event {
    Span span;
    Eigen::Index core_begin;
    Eigen::Index core_end;
  };
  std::vector<Event> events;
  for (const auto& [first, last] : merged) {
    const double length_s = static_cast<double>(last - first + 1) * config.hop_s;
    if (length_s < config.min_event_s) continue;
    const Eigen::Index core_begin = active.begin + first * hop + frame / 2;
    const Eigen::Index core_end = active.begin + last * hop + frame / 2;
    Span span{std::max<Eigen::Index>(0, core_begin - pad), std::min(n, core_end + pad)};
    if (!events.empty() && span.begin < events.back().span.end) {
      events.back().span.end = span.end;
      events.back().core_end = core_end;
      continue;
    }
    events.push_back({span, core_begin, core_end});
  }

  const std::string key = recording_key(clip.participant_id, clip.session_index, clip.source_device);
  std::vector<CoughSegment> segments;
  segments.reserve(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& ev = events[i];
    if (ev.span.end <= ev.span.begin) continue;
    CoughSegment seg = make_segment(clip, ev.span, SegmentKind::Cough, key + "/c" + std::to_string(i));
    const Eigen::Index lead = ev.core_begin - ev.span.begin;
    const Eigen::Index trail = ev.span.end - ev.core_end;
    seg.context_pad_s = static_cast<double>(std::min(lead, trail)) / kCanonicalRate;
    segments.push_back(std::move(seg));
  }
  return segments;
}

std::vector<CoughSegment> extract_background(const AudioClip& clip,
                                             std::span<const CoughSegment> cough_segments,
                                             double target_s) {
  require_canonical(clip);
  if (!(target_s > 0.0)) throw InvalidArgument("background target duration must be positive");
  const Eigen::Index n = clip.samples.size();
  const auto window = static_cast<Eigen::Index>(std::lround(target_s * kCanonicalRate));

  std::vector<Span> covered;
  for (const auto& seg : cough_segments) {
    const auto b = static_cast<Eigen::Index>(std::lround(seg.onset_s * kCanonicalRate));
    const auto e = static_cast<Eigen::Index>(std::lround(seg.offset_s * kCanonicalRate));
    covered.push_back({std::clamp<Eigen::Index>(b, 0, n), std::clamp<Eigen::Index>(e, 0, n)});
  }
  std::sort(covered.begin(), covered.end(), [](Span a, Span b) { return a.begin < b.begin; });

  std::vector<Span> gaps;
  Eigen::Index cursor = 0;
  for (const Span& s : covered) {
    if (s.begin > cursor) gaps.push_back({cursor, s.begin});
    cursor = std::max(cursor, s.end);
  }
  if (cursor < n) gaps.push_back({cursor, n});

  const std::string key = recording_key(clip.participant_id, clip.session_index, clip.source_device);
  std::vector<CoughSegment> out;
  for (const Span& g : gaps) {
    for (Eigen::Index b = g.begin; b + window <= g.end; b += window) {
      out.push_back(make_segment(clip, {b, b + window}, SegmentKind::Background,
                                 key + "/b" + std::to_string(out.size())));
    }
  }
  return out;
}

CoughSegment generate_white_noise(double duration_s, std::uint64_t seed) {
  if (!(duration_s > 0.0)) throw InvalidArgument("white-noise duration must be positive");
  const auto n = static_cast<Eigen::Index>(std::lround(duration_s * kCanonicalRate));
  Rng rng(seed);
  std::uniform_real_distribution<double> uniform(-0.5, 0.5);
  CoughSegment seg;
  seg.id = "noise/" + std::to_string(seed);
  seg.samples.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) seg.samples[i] = static_cast<float>(uniform(rng));
  seg.onset_s = 0.0;
  seg.offset_s = static_cast<double>(n) / kCanonicalRate;
  seg.kind = SegmentKind::WhiteNoise;
  return seg;
}

CoughSegment fit_duration(const CoughSegment& segment, double target_s, const DetectorConfig& framing) {
  const Eigen::Index n = segment.samples.size();
  if (n == 0) throw EmptyInputError("cannot fit the duration of an empty segment");
  if (!(target_s > 0.0)) throw InvalidArgument("target duration must be positive");
  const auto target = static_cast<Eigen::Index>(std::lround(target_s * kCanonicalRate));
  if (n == target) return segment;

  CoughSegment out = segment;
  if (n > target) {
    const int frame = static_cast<int>(std::lround(framing.frame_s * kCanonicalRate));
    const int hop = static_cast<int>(std::lround(framing.hop_s * kCanonicalRate));
    const Eigen::VectorXd rms = frame_rms(segment.samples, frame, hop);
    Eigen::Index peak_centre = n / 2;
    if (rms.size() > 0) {
      Eigen::Index peak = 0;
      rms.maxCoeff(&peak);
      peak_centre = peak * hop + frame / 2;
    }
    const Eigen::Index start = std::clamp<Eigen::Index>(peak_centre - target / 2, 0, n - target);
    out.samples = segment.samples.segment(start, target);
    out.onset_s = segment.onset_s + static_cast<double>(start) / kCanonicalRate;
  } else {
    const Eigen::Index left = (target - n) / 2;
    out.samples = Samples::Zero(target);
    out.samples.segment(left, n) = segment.samples;
    out.onset_s = segment.onset_s - static_cast<double>(left) / kCanonicalRate;
  }
  out.offset_s = out.onset_s + static_cast<double>(target) / kCanonicalRate;
  return out;
}

}  // namespace coughtb
