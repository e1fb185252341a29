#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "coughtb/cough_segmenter.hpp"
#include "coughtb/errors.hpp"

namespace coughtb {

struct EmbeddingSequence {
  Eigen::MatrixXf vectors;  // time-steps x dim
  std::string provider_id;

  Eigen::Index steps() const { return vectors.rows(); }
  Eigen::Index dim() const { return vectors.cols(); }
};

// Mean over time-steps (rows).
template <typename Derived>
Eigen::Matrix<double, Eigen::Dynamic, 1> global_average_pool(const Eigen::MatrixBase<Derived>& seq) {
  if (seq.rows() == 0 || seq.cols() == 0) throw EmptyInputError("cannot pool an empty sequence");
  return seq.template cast<double>().colwise().mean().transpose();
}

inline Eigen::VectorXd global_average_pool(const EmbeddingSequence& e) {
  return global_average_pool(e.vectors);
}

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual EmbeddingSequence provide(const CoughSegment& segment) const = 0;
  virtual std::string provider_id() const = 0;
};

// Stand-in for a speech foundation model: 40 log-mel energies per 20 ms frame
// projected through a seeded random 40 -> dim matrix, then tanh.
class SyntheticProvider final : public EmbeddingProvider {
 public:
  static constexpr int kFrame = 320;  // 20 ms at 16 kHz

  explicit SyntheticProvider(std::uint64_t seed = 1234, int dim = 64);

  EmbeddingSequence provide(const CoughSegment& segment) const override;
  std::string provider_id() const override { return "synthetic"; }

  const Eigen::MatrixXd& projection() const { return projection_; }
  std::uint64_t seed() const { return seed_; }
  int dim() const { return static_cast<int>(projection_.rows()); }

 private:
  std::uint64_t seed_;
  Eigen::MatrixXd projection_;  // dim x 40
};

EmbeddingSequence synthetic_embed(const CoughSegment& segment, const Eigen::MatrixXd& projection);
Eigen::MatrixXd synthetic_projection(std::uint64_t seed, int dim, int n_mels = 40);

// Container layout: "CTBEMB01", u64 LE index length, JSON index
// {"provider_id", "segments": {id: {"offset", "count", "dim"}}}, then the
// little-endian float32 payload (offset in bytes from payload start).
void write_embeddings(const std::filesystem::path& path, const std::string& provider_id,
                      const std::map<std::string, EmbeddingSequence>& sequences);

class FileEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit FileEmbeddingProvider(std::filesystem::path path);

  EmbeddingSequence provide(const CoughSegment& segment) const override;
  EmbeddingSequence provide_id(const std::string& segment_id) const;
  std::string provider_id() const override;
  std::vector<std::string> ids() const;
  bool contains(const std::string& segment_id) const;

 private:
  struct Entry {
    std::uint64_t offset;
    std::uint64_t count;
    std::uint64_t dim;
  };
  void load_index() const;

  std::filesystem::path path_;
  mutable std::once_flag once_;
  mutable std::string stored_provider_id_;
  mutable std::map<std::string, Entry> index_;
  mutable std::uint64_t payload_start_ = 0;
};

}  // namespace coughtb
