#include "coughtb/embedding.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "coughtb/dsp_features.hpp"
#include "coughtb/util.hpp"

namespace coughtb {
namespace {

constexpr char kMagic[8] = {'C', 'T', 'B', 'E', 'M', 'B', '0', '1'};

// Scale keeps typical log-mel inputs inside tanh's responsive range.
constexpr double kProjectionGain = 0.25;

SpectralConfig embedding_spectral_config() {
  SpectralConfig c;
  c.frame = SyntheticProvider::kFrame;
  c.hop = SyntheticProvider::kFrame;
  return c;
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(const unsigned char* b) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

Eigen::MatrixXd synthetic_projection(std::uint64_t seed, int dim, int n_mels) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, kProjectionGain / std::sqrt(static_cast<double>(n_mels)));
  Eigen::MatrixXd w(dim, n_mels);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < n_mels; ++j) w(i, j) = normal(rng);
  return w;
}

EmbeddingSequence synthetic_embed(const CoughSegment& segment, const Eigen::MatrixXd& projection) {
  if (segment.samples.size() == 0) throw EmptyInputError("cannot embed an empty segment");
  const Eigen::MatrixXd log_mel = log_mel_energies(segment.samples, embedding_spectral_config());
  EmbeddingSequence e;
  e.vectors = (log_mel * projection.transpose()).array().tanh().matrix().cast<float>();
  e.provider_id = "synthetic";
  return e;
}

SyntheticProvider::SyntheticProvider(std::uint64_t seed, int dim)
    : seed_(seed), projection_(synthetic_projection(seed, dim)) {
  if (dim <= 0) throw InvalidArgument("embedding dimension must be positive");
}

EmbeddingSequence SyntheticProvider::provide(const CoughSegment& segment) const {
  return synthetic_embed(segment, projection_);
}

void write_embeddings(const std::filesystem::path& path, const std::string& provider_id,
                      const std::map<std::string, EmbeddingSequence>& sequences) {
  nlohmann::json index;
  index["provider_id"] = provider_id;
  index["segments"] = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto& [id, seq] : sequences) {
    if (seq.steps() == 0 || seq.dim() == 0) throw EmptyInputError("embedding '" + id + "' is empty");
    index["segments"][id] = {{"offset", offset},
                             {"count", static_cast<std::uint64_t>(seq.steps())},
                             {"dim", static_cast<std::uint64_t>(seq.dim())}};
    offset += static_cast<std::uint64_t>(seq.steps() * seq.dim()) * 4U;
  }
  const std::string header = index.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(kMagic, sizeof kMagic);
  put_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [id, seq] : sequences) {
    for (Eigen::Index t = 0; t < seq.steps(); ++t) {
      for (Eigen::Index d = 0; d < seq.dim(); ++d) {
        const float f = seq.vectors(t, d);
        std::uint32_t u;
        std::memcpy(&u, &f, sizeof u);
        unsigned char b[4] = {static_cast<unsigned char>(u & 0xFF),
                              static_cast<unsigned char>((u >> 8) & 0xFF),
                              static_cast<unsigned char>((u >> 16) & 0xFF),
                              static_cast<unsigned char>((u >> 24) & 0xFF)};
        out.write(reinterpret_cast<const char*>(b), 4);
      }
    }
  }
}

FileEmbeddingProvider::FileEmbeddingProvider(std::filesystem::path path) : path_(std::move(path)) {}

void FileEmbeddingProvider::load_index() const {
  std::call_once(once_, [this] {
    std::ifstream in(path_, std::ios::binary);
    if (!in) throw FileNotFoundError(path_.string());
    char magic[8];
    unsigned char len[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
      throw DataError("not an embedding container: " + path_.string());
    }
    if (!in.read(reinterpret_cast<char*>(len), 8)) throw DataError("truncated embedding container");
    const std::uint64_t header_size = get_u64(len);
    std::string header(header_size, '\0');
    if (!in.read(header.data(), static_cast<std::streamsize>(header_size))) {
      throw DataError("truncated embedding index");
    }
    nlohmann::json index;
    try {
      index = nlohmann::json::parse(header);
      stored_provider_id_ = index.at("provider_id").get<std::string>();
      for (const auto& [id, entry] : index.at("segments").items()) {
        index_[id] = Entry{entry.at("offset").get<std::uint64_t>(), entry.at("count").get<std::uint64_t>(),
                           entry.at("dim").get<std::uint64_t>()};
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed embedding index in " + path_.string() + ": " + e.what());
    }
    payload_start_ = 16 + header_size;
  });
}

std::string FileEmbeddingProvider::provider_id() const {
  load_index();
  return "file:" + stored_provider_id_;
}

std::vector<std::string> FileEmbeddingProvider::ids() const {
  load_index();
  std::vector<std::string> out;
  out.reserve(index_.size());
  for (const auto& [id, _] : index_) out.push_back(id);
  return out;
}

bool FileEmbeddingProvider::contains(const std::string& segment_id) const {
  load_index();
  return index_.count(segment_id) > 0;
}

EmbeddingSequence FileEmbeddingProvider::provide(const CoughSegment& segment) const {
  return provide_id(segment.id);
}

EmbeddingSequence FileEmbeddingProvider::provide_id(const std::string& segment_id) const {
  load_index();
  const auto it = index_.find(segment_id);
  if (it == index_.end()) {
    throw DataError("segment '" + segment_id + "' not present in " + path_.string());
  }
  const Entry& e = it->second;
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw FileNotFoundError(path_.string());
  in.seekg(static_cast<std::streamoff>(payload_start_ + e.offset));
  std::vector<unsigned char> raw(e.count * e.dim * 4);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw DataError("truncated embedding payload for '" + segment_id + "'");
  }
  EmbeddingSequence seq;
  seq.provider_id = "file:" + stored_provider_id_;
  seq.vectors.resize(static_cast<Eigen::Index>(e.count), static_cast<Eigen::Index>(e.dim));
  std::size_t p = 0;
  for (Eigen::Index t = 0; t < seq.vectors.rows(); ++t) {
    for (Eigen::Index d = 0; d < seq.vectors.cols(); ++d, p += 4) {
      const std::uint32_t u = static_cast<std::uint32_t>(raw[p]) | (static_cast<std::uint32_t>(raw[p + 1]) << 8) |
                              (static_cast<std::uint32_t>(raw[p + 2]) << 16) |
                              (static_cast<std::uint32_t>(raw[p + 3]) << 24);
      float f;
      std::memcpy(&f, &u, sizeof f);
      seq.vectors(t, d) = f;
    }
  }
  return seq;
}

}  // namespace coughtb
