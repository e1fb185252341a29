#include "coughtb/dsp_features.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <unsupported/Eigen/FFT>

#include "coughtb/errors.hpp"

namespace coughtb {
namespace {

Eigen::FFT<double>& thread_fft() {
  thread_local Eigen::FFT<double> fft = [] {
    Eigen::FFT<double> f;
    f.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    return f;
  }();
  return fft;
}

Eigen::VectorXd hann(int n) {
  Eigen::VectorXd w(n);
  if (n == 1) {
    w[0] = 1.0;
    return w;
  }
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (n - 1));
  return w;
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

Eigen::VectorXd mel_edges_hz(const SpectralConfig& c) {
  const double lo = hz_to_mel(c.f_min);
  const double hi = hz_to_mel(c.f_max);
  Eigen::VectorXd edges(c.n_mels + 2);
  for (int i = 0; i < c.n_mels + 2; ++i) edges[i] = mel_to_hz(lo + (hi - lo) * i / (c.n_mels + 1));
  return edges;
}

}  // namespace

Eigen::VectorXd mel_centres_hz(const SpectralConfig& config) {
  return mel_edges_hz(config).segment(1, config.n_mels);
}

Eigen::MatrixXd mel_filterbank(const SpectralConfig& config) {
  const int bins = config.fft_size / 2 + 1;
  const Eigen::VectorXd edges = mel_edges_hz(config);
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(config.n_mels, bins);
  for (int m = 0; m < config.n_mels; ++m) {
    const double lo = edges[m], centre = edges[m + 1], hi = edges[m + 2];
    const double norm = 2.0 / (hi - lo);
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * config.sample_rate / config.fft_size;
      double w = 0.0;
      if (f > lo && f <= centre) {
        w = (f - lo) / (centre - lo);
      } else if (f > centre && f < hi) {
        w = (hi - f) / (hi - centre);
      }
      fb(m, k) = w * norm;
    }
  }
  return fb;
}

Eigen::MatrixXd magnitude_spectra(const Samples& samples, const SpectralConfig& config) {
  const Eigen::Index n = samples.size();
  if (n == 0) throw EmptyInputError("cannot compute spectra of an empty signal");
  const Eigen::Index frames = n < config.frame ? 1 : (n - config.frame) / config.hop + 1;
  const int bins = config.fft_size / 2 + 1;
  const Eigen::VectorXd window = hann(config.frame);

  Eigen::MatrixXd spectra(frames, bins);
  std::vector<double> buffer(config.fft_size);
  std::vector<std::complex<double>> spectrum;
  Eigen::VectorXd x(config.frame);
  for (Eigen::Index f = 0; f < frames; ++f) {
    const Eigen::Index start = f * config.hop;
    const Eigen::Index avail = std::min<Eigen::Index>(config.frame, n - start);
    x.setZero();
    x.head(avail) = samples.segment(start, avail).cast<double>();
    x.array() -= x.mean();
    for (Eigen::Index i = config.frame - 1; i > 0; --i) x[i] -= config.preemphasis * x[i - 1];
    x[0] -= config.preemphasis * x[0];
    std::fill(buffer.begin(), buffer.end(), 0.0);
    for (int i = 0; i < config.frame; ++i) buffer[i] = x[i] * window[i];
    thread_fft().fwd(spectrum, buffer);
    for (int k = 0; k < bins; ++k) spectra(f, k) = std::abs(spectrum[k]);
  }
  return spectra;
}

Eigen::MatrixXd log_mel_energies(const Samples& samples, const SpectralConfig& config) {
  const Eigen::MatrixXd fb = mel_filterbank(config);
  const Eigen::MatrixXd mel = magnitude_spectra(samples, config) * fb.transpose();
  return mel.array().max(config.floor).log().matrix();
}

Eigen::MatrixXd deltas(const Eigen::MatrixXd& trajectory, int window) {
  const Eigen::Index t = trajectory.rows();
  double denom = 0.0;
  for (int k = 1; k <= window; ++k) denom += 2.0 * k * k;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(t, trajectory.cols());
  for (Eigen::Index i = 0; i < t; ++i) {
    for (int k = 1; k <= window; ++k) {
      const Eigen::Index ahead = std::min<Eigen::Index>(t - 1, i + k);
      const Eigen::Index behind = std::max<Eigen::Index>(0, i - k);
      out.row(i) += k * (trajectory.row(ahead) - trajectory.row(behind));
    }
  }
  return out / denom;
}

Eigen::MatrixXd dct_matrix(int n_out, int n_in) {
  Eigen::MatrixXd d(n_out, n_in);
  for (int k = 0; k < n_out; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n_in) : std::sqrt(2.0 / n_in);
    for (int i = 0; i < n_in; ++i) {
      d(k, i) = scale * std::cos(std::numbers::pi * k * (2.0 * i + 1.0) / (2.0 * n_in));
    }
  }
  return d;
}

FeatureMatrix compute_mfcc(const CoughSegment& segment, const MfccConfig& config) {
  if (segment.samples.size() < config.spectral.frame) {
    throw InvalidArgument("segment '" + segment.id + "' is shorter than one analysis frame");
  }
  const Eigen::MatrixXd log_mel = log_mel_energies(segment.samples, config.spectral);
  const Eigen::MatrixXd ceps = log_mel * dct_matrix(config.n_ceps, config.spectral.n_mels).transpose();
  const Eigen::MatrixXd d1 = deltas(ceps, config.delta_window);
  const Eigen::MatrixXd d2 = deltas(d1, config.delta_window);

  FeatureMatrix m;
  m.frames.resize(ceps.rows(), 3 * config.n_ceps);
  m.frames << ceps, d1, d2;
  m.coeffs_per_frame = 3 * config.n_ceps;
  m.frame_hop_s = static_cast<double>(config.spectral.hop) / config.spectral.sample_rate;
  m.descriptor = Descriptor::Mfcc40DeltaDelta;
  return m;
}

Eigen::VectorXd summarize_features(const FeatureMatrix& m) {
  if (m.frames.rows() == 0) throw EmptyInputError("cannot summarise an empty feature matrix");
  const Eigen::RowVectorXd mean = m.frames.colwise().mean();
  const Eigen::RowVectorXd var =
      (m.frames.rowwise() - mean).array().square().colwise().mean().matrix();
  Eigen::VectorXd out(2 * m.frames.cols());
  out << mean.transpose(), var.cwiseSqrt().transpose();
  return out;
}

LtasAccumulator::LtasAccumulator(int fft_size)
    : fft_size_(fft_size), sum_(Eigen::VectorXd::Zero(fft_size / 2 + 1)) {}

void LtasAccumulator::add(const Samples& samples) {
  const Eigen::Index n = samples.size();
  if (n == 0) return;
  const int hop = fft_size_ / 2;
  const Eigen::VectorXd window = hann(fft_size_);
  std::vector<double> buffer(fft_size_);
  std::vector<std::complex<double>> spectrum;
  const Eigen::Index count = n < fft_size_ ? 1 : (n - fft_size_) / hop + 1;
  for (Eigen::Index w = 0; w < count; ++w) {
    const Eigen::Index start = w * hop;
    const Eigen::Index avail = std::min<Eigen::Index>(fft_size_, n - start);
    std::fill(buffer.begin(), buffer.end(), 0.0);
    for (Eigen::Index i = 0; i < avail; ++i) buffer[i] = samples[start + i] * window[i];
    thread_fft().fwd(spectrum, buffer);
    for (Eigen::Index k = 0; k < sum_.size(); ++k) sum_[k] += std::norm(spectrum[k]);
    ++windows_;
  }
}

void LtasAccumulator::merge(const LtasAccumulator& other) {
  if (other.fft_size_ != fft_size_) throw DimensionMismatch("LTAS accumulators differ in FFT size");
  sum_ += other.sum_;
  windows_ += other.windows_;
}

Eigen::VectorXd LtasAccumulator::mean_power() const {
  if (windows_ == 0) throw EmptyInputError("LTAS accumulator holds no windows");
  return sum_ / static_cast<double>(windows_);
}

LtasCurve LtasAccumulator::curve() const {
  const Eigen::VectorXd power = mean_power();
  LtasCurve c;
  c.fft_size = fft_size_;
  c.freqs_hz.resize(power.size());
  c.power_db.resize(power.size());
  const double peak = power.maxCoeff();
  for (Eigen::Index k = 0; k < power.size(); ++k) {
    c.freqs_hz[k] = static_cast<double>(k) * kCanonicalRate / fft_size_;
    c.power_db[k] = peak > 0.0 ? std::max(kLtasFloorDb, 10.0 * std::log10(power[k] / peak))
                               : kLtasFloorDb;
  }
  return c;
}

LtasCurve compute_ltas(std::span<const CoughSegment> segments) {
  if (segments.empty()) throw EmptyInputError("LTAS needs at least one segment");
  LtasAccumulator acc;
  for (const auto& s : segments) acc.add(s.samples);
  if (acc.window_count() == 0) throw EmptyInputError("LTAS needs at least one non-empty segment");
  return acc.curve();
}

void write_ltas_csv(const std::filesystem::path& path, const LtasCurve& curve) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << "freq_hz,power_db\n" << std::setprecision(10);
  for (Eigen::Index k = 0; k < curve.freqs_hz.size(); ++k) {
    out << curve.freqs_hz[k] << ',' << curve.power_db[k] << '\n';
  }
}

}  // namespace coughtb
