#pragma once
// Frozen entity embeddings: either hash-seeded Gaussians keyed by entity name,
// or a name-joined embedding file. Never updated by training.

#include <cstdint>
#include <string>

#include "tkg/dataset.hpp"
#include "tkg/tensor.hpp"

namespace tkg {

struct EmbeddingSource {
  std::size_t d = 0;
  Tensor table; // |E| x d

  const double* row(uint32_t e) const { return &table.data[std::size_t(e) * d]; }
  uint64_t checksum() const;
};

// unit-normalized Gaussian per entity, seeded by a stable hash of the name
EmbeddingSource hash_embeddings(const TkgDataset& ds, std::size_t d, uint64_t seed);

// TSV: entity name, then d decimal floats; every vocabulary entity must appear
EmbeddingSource file_embeddings(const TkgDataset& ds, const std::string& path, std::size_t d);

} // namespace tkg
