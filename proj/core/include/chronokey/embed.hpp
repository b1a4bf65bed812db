#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "chronokey/errors.hpp"

namespace chronokey {

/// Fixed per-text dense vectors (float32 rows, one per id).
struct EmbeddingMatrix {
  int H = 0;
  std::vector<std::string> ids;
  std::vector<float> data;  // row-major, ids.size() x H
  std::unordered_map<std::string, size_t> index;

  size_t count() const { return ids.size(); }
  const float* vec(size_t i) const { return data.data() + i * static_cast<size_t>(H); }
  float* vec(size_t i) { return data.data() + i * static_cast<size_t>(H); }

  /// Row index for an id, or throws.
  size_t at(const std::string& id) const;
  void rebuild_index();

  /// Binary format: magic "CQEMB1", u32 H, u64 count, id table
  /// (u32 length + bytes each), then count*H little-endian float32 rows.
  void save(const std::string& path) const;
  static EmbeddingMatrix load(const std::string& path);
};

/// Deterministic stand-in for a frozen text encoder: FNV-1a 64 feature
/// hashing of character unigrams+bigrams, projected by a seeded random sign
/// matrix into R^H and scaled by 1/sqrt(nnz). Empty text gives a zero vector.
std::vector<double> hash_encode(const std::string& text, int H, uint64_t seed);

/// Encodes a batch of texts; rows are L2-normalized unless disabled (the
/// temperature-scaled dot product is scale-sensitive).
EmbeddingMatrix hash_encode_all(const std::vector<std::string>& ids,
                                const std::vector<std::string>& texts, int H, uint64_t seed,
                                bool l2_normalize = true);

}  // namespace chronokey
