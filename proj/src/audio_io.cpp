#include "coughtb/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "coughtb/errors.hpp"

namespace coughtb {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct FormatChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t block_align = 0;
  std::uint16_t bits = 0;
};

double decode_sample(const unsigned char* p, const FormatChunk& fmt) {
  if (fmt.format == kFormatFloat) {
    if (fmt.bits == 32) {
      float f;
      std::uint32_t u = read_u32(p);
      std::memcpy(&f, &u, sizeof f);
      return f;
    }
    std::uint64_t u = static_cast<std::uint64_t>(read_u32(p)) |
                      (static_cast<std::uint64_t>(read_u32(p + 4)) << 32);
    double d;
    std::memcpy(&d, &u, sizeof d);
    return d;
  }
  switch (fmt.bits) {
    case 8: return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16: return static_cast<std::int16_t>(read_u16(p)) / 32768.0;
    case 24: {
      std::int32_t v = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    case 32: return static_cast<std::int32_t>(read_u32(p)) / 2147483648.0;
    default: return 0.0;
  }
}

double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

AudioClip with_samples(const AudioClip& like, Samples samples, int rate) {
  AudioClip out;
  out.samples = std::move(samples);
  out.sample_rate = rate;
  out.source_device = like.source_device;
  out.participant_id = like.participant_id;
  out.session_index = like.session_index;
  out.recorded_at = like.recorded_at;
  return out;
}

}  // namespace

AudioClip decode_wav(std::string_view bytes) {
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();
  if (size < 12 || std::memcmp(data, "RIFF", 4) != 0 || std::memcmp(data + 8, "WAVE", 4) != 0) {
    throw MalformedWavError("missing RIFF/WAVE header");
  }

  FormatChunk fmt;
  bool have_fmt = false;
  const unsigned char* payload = nullptr;
  std::size_t payload_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= size) {
    const unsigned char* chunk = data + pos;
    const std::uint32_t chunk_size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (chunk_size < 16 || body + chunk_size > size) throw MalformedWavError("truncated fmt chunk");
      fmt.format = read_u16(data + body);
      fmt.channels = read_u16(data + body + 2);
      fmt.sample_rate = read_u32(data + body + 4);
      fmt.block_align = read_u16(data + body + 12);
      fmt.bits = read_u16(data + body + 14);
      if (fmt.format == kFormatExtensible) {
        if (chunk_size < 40) throw MalformedWavError("truncated WAVE_FORMAT_EXTENSIBLE chunk");
        fmt.format = read_u16(data + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (body + chunk_size > size) throw MalformedWavError("truncated data chunk");
      payload = data + body;
      payload_size = chunk_size;
      break;
    }
    pos = body + chunk_size + (chunk_size & 1U);
  }

  if (!have_fmt) throw MalformedWavError("missing fmt chunk");
  if (payload == nullptr) throw MalformedWavError("missing data chunk");
  if (fmt.channels == 0 || fmt.sample_rate == 0) throw MalformedWavError("zero channels or sample rate");

  const bool int_ok = fmt.format == kFormatPcm &&
                      (fmt.bits == 8 || fmt.bits == 16 || fmt.bits == 24 || fmt.bits == 32);
  const bool float_ok = fmt.format == kFormatFloat && (fmt.bits == 32 || fmt.bits == 64);
  if (!int_ok && !float_ok) {
    throw UnsupportedEncodingError("unsupported WAV encoding (format " + std::to_string(fmt.format) +
                                   ", " + std::to_string(fmt.bits) + " bits)");
  }
  const std::size_t bytes_per_sample = fmt.bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * fmt.channels;
  if (fmt.block_align != 0 && fmt.block_align != frame_bytes) {
    throw MalformedWavError("block_align inconsistent with channels and bit depth");
  }
  const std::size_t frames = payload_size / frame_bytes;
  if (frames == 0) throw MalformedWavError("data chunk holds no sample frames");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(fmt.sample_rate);
  clip.samples.resize(static_cast<Eigen::Index>(frames));
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < fmt.channels; ++c) {
      acc += decode_sample(payload + i * frame_bytes + c * bytes_per_sample, fmt);
    }
    const double mono = std::clamp(acc / fmt.channels, -1.0, 1.0);
    clip.samples[static_cast<Eigen::Index>(i)] = static_cast<float>(mono);
  }
  return clip;
}

AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileNotFoundError(path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

std::string encode_wav(const AudioClip& clip, WavEncoding encoding) {
  std::uint16_t format = kFormatPcm;
  std::uint16_t bits = 16;
  switch (encoding) {
    case WavEncoding::Pcm8: bits = 8; break;
    case WavEncoding::Pcm16: bits = 16; break;
    case WavEncoding::Pcm24: bits = 24; break;
    case WavEncoding::Pcm32: bits = 32; break;
    case WavEncoding::Float32: bits = 32; format = kFormatFloat; break;
  }
  const std::uint32_t bytes_per_sample = bits / 8;
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  const std::uint32_t data_bytes = n * bytes_per_sample;

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, format);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * bytes_per_sample);
  put_u16(out, static_cast<std::uint16_t>(bytes_per_sample));
  put_u16(out, bits);
  out += "data";
  put_u32(out, data_bytes);

  for (std::uint32_t i = 0; i < n; ++i) {
    const double x = std::clamp(static_cast<double>(clip.samples[i]), -1.0, 1.0);
    switch (encoding) {
      case WavEncoding::Pcm8: {
        const long v = std::clamp(std::lround(x * 128.0) + 128, 0L, 255L);
        out.push_back(static_cast<char>(v));
        break;
      }
      case WavEncoding::Pcm16: {
        const long v = std::clamp(std::lround(x * 32768.0), -32768L, 32767L);
        put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
        break;
      }
      case WavEncoding::Pcm24: {
        const long v = std::clamp(std::lround(x * 8388608.0), -8388608L, 8388607L);
        const auto u = static_cast<std::uint32_t>(v);
        for (int b = 0; b < 3; ++b) out.push_back(static_cast<char>((u >> (8 * b)) & 0xFF));
        break;
      }
      case WavEncoding::Pcm32: {
        const long long v =
            std::clamp(std::llround(x * 2147483648.0), -2147483648LL, 2147483647LL);
        put_u32(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(v)));
        break;
      }
      case WavEncoding::Float32: {
        const float f = static_cast<float>(x);
        std::uint32_t u;
        std::memcpy(&u, &f, sizeof u);
        put_u32(out, u);
        break;
      }
    }
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip, WavEncoding encoding) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  const std::string bytes = encode_wav(clip, encoding);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Samples quantise_pcm16(const Samples& samples) {
  Samples out(samples.size());
  for (Eigen::Index i = 0; i < samples.size(); ++i) {
    const double x = std::clamp(static_cast<double>(samples[i]), -1.0, 1.0);
    const long v = std::clamp(std::lround(x * 32768.0), -32768L, 32767L);
    out[i] = static_cast<float>(v / 32768.0);
  }
  return out;
}

AudioClip resample_to_16k(const AudioClip& clip) {
  if (clip.sample_rate < 8000) {
    throw UnsupportedRateError("sample rate " + std::to_string(clip.sample_rate) +
                               " Hz is below the supported minimum of 8000 Hz");
  }
  if (clip.sample_rate == kCanonicalRate) return clip;

  constexpr double kBeta = 8.6;
  constexpr double kHalfTaps = 32.0;
  const double rate_in = clip.sample_rate;
  const double ratio = kCanonicalRate / rate_in;
  const double cutoff = std::min(1.0, ratio);  // relative to input Nyquist
  const double half_width = kHalfTaps / cutoff;
  const double i0_beta = bessel_i0(kBeta);

  const Eigen::Index n_in = clip.samples.size();
  const auto n_out = static_cast<Eigen::Index>(std::llround(n_in * ratio));
  Samples out(n_out);
  for (Eigen::Index n = 0; n < n_out; ++n) {
    const double t = static_cast<double>(n) * rate_in / kCanonicalRate;
    const auto k_lo = static_cast<Eigen::Index>(std::ceil(t - half_width));
    const auto k_hi = static_cast<Eigen::Index>(std::floor(t + half_width));
    double acc = 0.0, gain = 0.0;
    for (Eigen::Index k = k_lo; k <= k_hi; ++k) {
      const double tau = t - static_cast<double>(k);
      const double u = tau / half_width;
      if (std::abs(u) > 1.0) continue;
      const double w = bessel_i0(kBeta * std::sqrt(1.0 - u * u)) / i0_beta;
      const double h = cutoff * sinc(cutoff * tau) * w;
      gain += h;
      if (k >= 0 && k < n_in) acc += h * clip.samples[k];
    }
    out[n] = static_cast<float>(std::clamp(acc / gain, -1.0, 1.0));
  }
  return with_samples(clip, std::move(out), kCanonicalRate);
}

Eigen::VectorXd frame_rms(const Samples& samples, int frame, int hop) {
  const Eigen::Index n = samples.size();
  if (frame <= 0 || hop <= 0 || n < frame) return Eigen::VectorXd();
  const Eigen::Index count = (n - frame) / hop + 1;
  Eigen::VectorXd rms(count);
  for (Eigen::Index i = 0; i < count; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < frame; ++j) {
      const double x = samples[i * hop + j];
      acc += x * x;
    }
    rms[i] = std::sqrt(acc / frame);
  }
  return rms;
}

AudioClip trim_silence(const AudioClip& clip, double floor_db) {
  TrimConfig config;
  config.floor_db = floor_db;
  return trim_silence(clip, config);
}

SampleRange trim_range(const AudioClip& clip, const TrimConfig& config) {
  if (!(config.floor_db < 0.0)) throw InvalidArgument("trim floor must be negative dB");
  const int frame = static_cast<int>(std::lround(config.frame_s * clip.sample_rate));
  const int hop = static_cast<int>(std::lround(config.hop_s * clip.sample_rate));
  const double ratio = std::pow(10.0, config.floor_db / 20.0);

  // A loud edge frame usually only grazes the signal, so the cut sits one hop
  // inside its outer edge. Repeating the pass until nothing changes makes the
  // operation a projection.
  SampleRange kept{0, clip.samples.size()};
  for (;;) {
    const Eigen::Index n = kept.end - kept.begin;
    if (n == 0) break;
    const Samples current = clip.samples.segment(kept.begin, n);
    if (n < frame) {
      if (current.cwiseAbs().maxCoeff() == 0.0f) kept.end = kept.begin;
      break;
    }
    const Eigen::VectorXd rms = frame_rms(current, frame, hop);
    const double peak = rms.maxCoeff();
    if (peak <= 0.0) {
      kept.end = kept.begin;
      break;
    }
    const double threshold = peak * ratio;
    Eigen::Index first = 0, last = rms.size() - 1;
    while (rms[first] < threshold) ++first;
    while (rms[last] < threshold) --last;
    Eigen::Index start = first == 0 ? 0 : first * hop + (frame - hop);
    Eigen::Index end = last == rms.size() - 1 ? n : std::min<Eigen::Index>(n, last * hop + hop);
    if (end - start < hop) {
      start = first * hop;
      end = std::min<Eigen::Index>(n, last * hop + frame);
    }
    if (start == 0 && end == n) break;
    kept = {kept.begin + start, kept.begin + end};
  }
  return kept;
}

AudioClip trim_silence(const AudioClip& clip, const TrimConfig& config) {
  const SampleRange r = trim_range(clip, config);
  return with_samples(clip, clip.samples.segment(r.begin, r.end - r.begin), clip.sample_rate);
}

AudioClip canonicalise(const AudioClip& clip, const TrimConfig& config) {
  return trim_silence(resample_to_16k(clip), config);
}

}  // namespace coughtb
