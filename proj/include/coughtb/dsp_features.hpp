#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <span>
#include <vector>

#include "coughtb/cough_segmenter.hpp"

namespace coughtb {

enum class Descriptor { Mfcc40, Mfcc40DeltaDelta, Ltas };

struct FeatureMatrix {
  Eigen::MatrixXd frames;  // one row per frame
  int coeffs_per_frame = 0;
  double frame_hop_s = 0.0;
  Descriptor descriptor = Descriptor::Mfcc40DeltaDelta;

  Eigen::Index frame_count() const { return frames.rows(); }
};

struct SpectralConfig {
  int sample_rate = kCanonicalRate;
  int frame = 400;      // 25 ms
  int hop = 160;        // 10 ms
  int fft_size = 512;
  int n_mels = 40;
  double f_min = 0.0;
  double f_max = 8000.0;
  double preemphasis = 0.97;
  double floor = 1e-10;  // spectral floor before the log
};

struct MfccConfig {
  SpectralConfig spectral;
  int n_ceps = 40;
  int delta_window = 2;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// n_mels x (fft_size/2 + 1) triangular, area-normalised filters on the HTK mel scale.
Eigen::MatrixXd mel_filterbank(const SpectralConfig& config);
// Centre frequency of every filter, in Hz.
Eigen::VectorXd mel_centres_hz(const SpectralConfig& config);

// Per frame: DC removal, pre-emphasis, Hann window, |DFT|. A signal shorter
// than one frame is zero-padded into a single frame.
Eigen::MatrixXd magnitude_spectra(const Samples& samples, const SpectralConfig& config);
Eigen::MatrixXd log_mel_energies(const Samples& samples, const SpectralConfig& config);

// Regression-based deltas over +/- window frames with edge replication.
Eigen::MatrixXd deltas(const Eigen::MatrixXd& trajectory, int window);

// Orthonormal DCT-II matrix (n_out x n_in).
Eigen::MatrixXd dct_matrix(int n_out, int n_in);

// 40 cepstra plus delta and delta-delta: 120 coefficients per frame.
FeatureMatrix compute_mfcc(const CoughSegment& segment, const MfccConfig& config = {});

// Per-coefficient mean then population standard deviation.
Eigen::VectorXd summarize_features(const FeatureMatrix& m);

struct LtasCurve {
  Eigen::VectorXd freqs_hz;
  Eigen::VectorXd power_db;  // dB re the loudest bin
  int fft_size = 1024;
};

inline constexpr double kLtasFloorDb = -120.0;

// Welch accumulator: 1024-point Hann windows with 50% overlap.
class LtasAccumulator {
 public:
  explicit LtasAccumulator(int fft_size = 1024);

  void add(const Samples& samples);
  void merge(const LtasAccumulator& other);

  long window_count() const { return windows_; }
  Eigen::VectorXd mean_power() const;
  LtasCurve curve() const;

 private:
  int fft_size_;
  Eigen::VectorXd sum_;
  long windows_ = 0;
};

LtasCurve compute_ltas(std::span<const CoughSegment> segments);

void write_ltas_csv(const std::filesystem::path& path, const LtasCurve& curve);

}  // namespace coughtb
