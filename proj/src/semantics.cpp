#include "panoptic/semantics.hpp"

#include <cmath>
#include <string>

#include "binary_io.hpp"
#include "panoptic/errors.hpp"

namespace panoptic {
namespace {
constexpr double kUnitTolerance = 1e-5;
}

void SemanticsConfig::validate() const {
  if (!(sim_threshold > -1.0 && sim_threshold < 1.0)) {
    throw ConfigError("semantics.sim_threshold must lie in (-1, 1)");
  }
  if (emb_dim == 0) throw ConfigError("semantics.emb_dim must be > 0");
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
  const double denom = a.norm() * b.norm();
  return denom > 0.0 ? a.dot(b) / denom : 0.0;
}

void require_unit(const Embedding& e) {
  if (e.size() == 0 || !e.allFinite()) throw EmbeddingError("embedding is empty or non-finite");
  const double n = e.norm();
  if (std::abs(n - 1.0) > kUnitTolerance) {
    throw EmbeddingError("embedding norm " + std::to_string(n) + " is not 1");
  }
}

Embedding normalized_or_throw(const Embedding& e) {
  if (e.size() == 0 || !e.allFinite()) throw EmbeddingError("embedding is empty or non-finite");
  const double n = e.norm();
  if (!(n > 1e-12)) throw EmbeddingError("embedding has zero length");
  return e / n;
}

Embedding pool_embedding(const FeatureMap& features, const MaskImage& mask) {
  if (mask.width() != features.width || mask.height() != features.height) {
    throw EmbeddingError("mask and feature map sizes differ");
  }
  Embedding sum = Embedding::Zero(static_cast<Eigen::Index>(features.dim));
  std::size_t n = 0;
  for (int v = 0; v < mask.height(); ++v) {
    for (int u = 0; u < mask.width(); ++u) {
      if (!mask.at(u, v)) continue;
      const float* f = features.at(u, v);
      for (std::size_t k = 0; k < features.dim; ++k) sum[static_cast<Eigen::Index>(k)] += f[k];
      ++n;
    }
  }
  if (n == 0) throw EmbeddingError("cannot pool an empty mask");
  return normalized_or_throw(sum / static_cast<double>(n));
}

EmbeddingBank bank_update(const EmbeddingBank& bank, const Embedding& e_new, double c_new,
                          const SemanticsConfig& cfg) {
  require_unit(e_new);
  if (!(c_new > 0.0) || !std::isfinite(c_new)) throw EmbeddingError("confidence must be positive");

  EmbeddingBank out = bank;
  if (out.entries.empty()) {
    out.entries.push_back({e_new, c_new});
    return out;
  }

  std::size_t best = 0;
  double best_sim = -2.0;
  for (std::size_t j = 0; j < out.entries.size(); ++j) {
    const double s = cosine_similarity(e_new, out.entries[j].embedding);
    if (s > best_sim) {
      best_sim = s;
      best = j;
    }
  }

  if (best_sim > cfg.sim_threshold) {
    BankEntry& entry = out.entries[best];
    const Embedding mixed = (entry.confidence * entry.embedding + c_new * e_new) / (entry.confidence + c_new);
    if (mixed.norm() > 1e-12) entry.embedding = mixed.normalized();
    entry.confidence += c_new;
    return out;
  }
  if (out.entries.size() < SemanticsConfig::kCap) {
    out.entries.push_back({e_new, c_new});
    return out;
  }
  std::size_t weakest = 0;
  for (std::size_t j = 1; j < out.entries.size(); ++j) {
    if (out.entries[j].confidence < out.entries[weakest].confidence) weakest = j;
  }
  if (c_new > out.entries[weakest].confidence) out.entries[weakest] = {e_new, c_new};
  return out;
}

double bank_similarity(const EmbeddingBank& bank, const Embedding& query) {
  if (bank.empty()) throw EmbeddingError("similarity against an empty bank");
  double best = -1.0;
  for (const BankEntry& entry : bank.entries) best = std::max(best, cosine_similarity(query, entry.embedding));
  return best;
}

double bank_confidence(const EmbeddingBank& bank) {
  double c = 0.0;
  for (const BankEntry& entry : bank.entries) c = std::max(c, entry.confidence);
  return c / (c + 1.0);
}

double bank_distance(const EmbeddingBank& bank, const Embedding& e) {
  double best = 2.0;
  for (const BankEntry& entry : bank.entries) best = std::min(best, (entry.embedding - e).norm());
  return best;
}

EmbeddingTable read_embeddings(const std::filesystem::path& path) {
  auto in = detail::ByteReader::from_file(path);
  if (in.bytes(4) != "EMB1") in.fail("bad magic");
  EmbeddingTable table;
  table.dim = in.u32();
  table.declared_count = in.u64();
  if (table.dim == 0) in.fail("zero embedding dimension");
  const std::size_t row_bytes = 4 * table.dim;
  const std::uint64_t available = in.remaining() / row_bytes;
  const std::uint64_t n = std::min(available, table.declared_count);
  table.rows.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    Embedding e(static_cast<Eigen::Index>(table.dim));
    for (std::size_t k = 0; k < table.dim; ++k) e[static_cast<Eigen::Index>(k)] = in.f32();
    table.rows.push_back(std::move(e));
  }
  return table;
}

void write_embeddings(const std::filesystem::path& path, std::size_t dim, const std::vector<Embedding>& rows) {
  detail::ByteWriter out;
  out.bytes("EMB1");
  out.u32(static_cast<std::uint32_t>(dim));
  out.u64(rows.size());
  for (const Embedding& e : rows) {
    if (static_cast<std::size_t>(e.size()) != dim) throw IoError("embedding row has wrong dimension");
    for (Eigen::Index k = 0; k < e.size(); ++k) out.f32(static_cast<float>(e[k]));
  }
  out.save(path);
}

}  // namespace panoptic
