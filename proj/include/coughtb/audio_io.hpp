#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <string_view>

#include "coughtb/types.hpp"

namespace coughtb {

using Samples = Eigen::VectorXf;

struct AudioClip {
  Samples samples;
  int sample_rate = kCanonicalRate;
  Device source_device = Device::Synthetic;
  std::string participant_id;
  int session_index = 1;
  std::string recorded_at;  // "YYYY-MM-DDTHH"

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

enum class WavEncoding { Pcm8, Pcm16, Pcm24, Pcm32, Float32 };

// Decodes a RIFF/WAVE byte buffer. Multi-channel input is averaged to mono and
// integer PCM is scaled by full-scale division (16-bit: /32768).
AudioClip decode_wav(std::string_view bytes);
AudioClip load_wav(const std::filesystem::path& path);

// Mono encoders. Pcm16 quantises with round(x * 32768) clamped to int16.
std::string encode_wav(const AudioClip& clip, WavEncoding encoding = WavEncoding::Pcm16);
void write_wav(const std::filesystem::path& path, const AudioClip& clip,
               WavEncoding encoding = WavEncoding::Pcm16);

// Snaps samples onto the 16-bit grid so that a Pcm16 write/read is lossless.
Samples quantise_pcm16(const Samples& samples);

// Windowed-sinc (Kaiser, beta 8.6) band-limited resampling to 16 kHz.
// 16 kHz input is returned unchanged.
AudioClip resample_to_16k(const AudioClip& clip);

struct TrimConfig {
  double floor_db = -40.0;
  double frame_s = 0.025;
  double hop_s = 0.010;
};

// Removes leading/trailing frames whose RMS is more than |floor_db| below the
// loudest frame. Applied until stable, so it is idempotent.
AudioClip trim_silence(const AudioClip& clip, double floor_db = -40.0);
AudioClip trim_silence(const AudioClip& clip, const TrimConfig& config);

// The sample range [begin, end) that trim_silence keeps.
struct SampleRange {
  Eigen::Index begin = 0;
  Eigen::Index end = 0;
};
SampleRange trim_range(const AudioClip& clip, const TrimConfig& config = {});

// resample_to_16k followed by trim_silence.
AudioClip canonicalise(const AudioClip& clip, const TrimConfig& config = {});

// RMS of frames [i*hop, i*hop + frame) fully inside the signal.
Eigen::VectorXd frame_rms(const Samples& samples, int frame, int hop);

}  // namespace coughtb
