#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "panoptic/image.hpp"

namespace panoptic {

/// Open-vocabulary embedding; unit norm wherever it is stored or compared.
using Embedding = Eigen::VectorXd;

struct SemanticsConfig {
  static constexpr std::size_t kCap = 3;

  double sim_threshold = 0.85;
  std::size_t emb_dim = 512;

  void validate() const;
};

struct BankEntry {
  Embedding embedding;
  double confidence = 0.0;
};

/// Up to three (embedding, accumulated confidence) hypotheses for one instance.
struct EmbeddingBank {
  std::vector<BankEntry> entries;

  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }
};

/// Dense per-pixel features, row-major, `dim` floats per pixel.
struct FeatureMap {
  int width = 0;
  int height = 0;
  std::size_t dim = 0;
  std::vector<float> data;

  const float* at(int u, int v) const { return data.data() + (static_cast<std::size_t>(v) * width + u) * dim; }
};

double cosine_similarity(const Embedding& a, const Embedding& b);

/// Mean of the masked features, renormalized to unit length. Throws
/// EmbeddingError for an empty mask or a zero mean.
Embedding pool_embedding(const FeatureMap& features, const MaskImage& mask);

/// Fuses one observation into the bank. The most similar entry absorbs it
/// when the cosine exceeds the threshold; otherwise it is appended, or, on a
/// full bank, replaces the least confident entry if it is more confident.
EmbeddingBank bank_update(const EmbeddingBank& bank, const Embedding& e_new, double c_new,
                          const SemanticsConfig& cfg);

/// Maximum cosine over the bank entries. Throws EmbeddingError if empty.
double bank_similarity(const EmbeddingBank& bank, const Embedding& query);

/// Largest accumulated confidence c squashed to c / (c + 1); 0 when empty.
double bank_confidence(const EmbeddingBank& bank);

/// Minimum Euclidean distance between `e` and any bank entry (2 when empty).
double bank_distance(const EmbeddingBank& bank, const Embedding& e);

/// Throws EmbeddingError unless `e` is finite with unit norm within 1e-5.
void require_unit(const Embedding& e);

Embedding normalized_or_throw(const Embedding& e);

// "EMB1" files: magic, emb_dim u32, count u64, then count * emb_dim f32,
// little-endian.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::uint64_t declared_count = 0;
  std::vector<Embedding> rows;  // complete rows actually present

  bool truncated() const { return rows.size() < declared_count; }
};

/// Reads complete rows; a short file is reported through truncated() rather
/// than an exception so callers can still use the rows that exist.
EmbeddingTable read_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, std::size_t dim, const std::vector<Embedding>& rows);

}  // namespace panoptic
