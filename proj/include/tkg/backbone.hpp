#pragma once
// Inductive backbone state: per-entity interaction chains, cluster prototypes
// maintained as running means, and the k-means++ codebook used to assign
// entities to prototype clusters.

#include <cstdint>
#include <vector>

#include "tkg/rng.hpp"
#include "tkg/tensor.hpp"

namespace tkg {

struct ChainEntry {
  uint32_t neighbor = 0;
  uint32_t relation = 0;
  int64_t t = 0;
};

// Per-entity bounded history of observed facts, most recent last.
class ChainStore {
public:
  void init(std::size_t n_entities, std::size_t max_len);
  void reset();
  void append(uint32_t entity, const ChainEntry& e);
  const std::vector<ChainEntry>& chain(uint32_t entity) const { return chains_[entity]; }
  std::size_t max_len() const { return max_len_; }

private:
  std::size_t max_len_ = 10;
  std::vector<std::vector<ChainEntry>> chains_;
};

// Streaming per-cluster mean of encoded facts. Grows monotonically within an
// epoch; reset clears values and counts together.
struct PrototypeTable {
  std::size_t d = 0;
  Tensor values; // K x d
  std::vector<uint64_t> counts;

  void init(std::size_t k, std::size_t dim);
  void reset();
  void add(std::size_t cluster, const double* enc);
  const double* row(std::size_t cluster) const { return &values.data[cluster * d]; }
};

// nearest center by squared distance, smallest index wins ties
std::size_t nearest_center(const Tensor& centers, const double* v);
std::vector<std::size_t> assign_all(const Tensor& centers, const Tensor& points);

// k-means++ seeding over the rows of `points` named by `members`, followed by
// one refinement pass; empty clusters are re-seeded to the farthest point.
Tensor kmeans_centers(const Tensor& points, const std::vector<uint32_t>& members,
                      std::size_t k, Rng& rng);

// indices into `chain` of the `top` entries whose relation embedding is most
// cosine-similar to the query relation, kept in chronological order
std::vector<std::size_t> filter_chain_by_relation(const std::vector<ChainEntry>& chain,
                                                  const Tensor& rel_emb, uint32_t query_rel,
                                                  std::size_t top);

} // namespace tkg
