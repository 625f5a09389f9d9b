#include "tkg/backbone.hpp"

#include "tkg/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace tkg {

void ChainStore::init(std::size_t n_entities, std::size_t max_len) {
  max_len_ = max_len;
  chains_.assign(n_entities, {});
}

void ChainStore::reset() {
  for (auto& c : chains_) c.clear();
}

void ChainStore::append(uint32_t entity, const ChainEntry& e) {
  auto& c = chains_[entity];
  c.push_back(e);
  if (c.size() > max_len_) c.erase(c.begin());
}

void PrototypeTable::init(std::size_t k, std::size_t dim) {
  d = dim;
  values = Tensor({k, dim});
  counts.assign(k, 0);
}

void PrototypeTable::reset() {
  std::fill(values.data.begin(), values.data.end(), 0.0);
  std::fill(counts.begin(), counts.end(), 0);
}

void PrototypeTable::add(std::size_t cluster, const double* enc) {
  uint64_t& n = counts[cluster];
  n += 1;
  double* p = &values.data[cluster * d];
  const double inv = 1.0 / double(n);
  for (std::size_t i = 0; i < d; ++i) p[i] += (enc[i] - p[i]) * inv;
}

static double sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

std::size_t nearest_center(const Tensor& centers, const double* v) {
  const std::size_t k = centers.rows(), d = centers.cols();
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    const double dist = sq_dist(&centers.data[c * d], v, d);
    if (dist < best_d) {
      best_d = dist;
      best = c;
    }
  }
  return best;
}

std::vector<std::size_t> assign_all(const Tensor& centers, const Tensor& points) {
  std::vector<std::size_t> out(points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i)
    out[i] = nearest_center(centers, &points.data[i * points.cols()]);
  return out;
}

Tensor kmeans_centers(const Tensor& points, const std::vector<uint32_t>& members,
                      std::size_t k, Rng& rng) {
  const std::size_t d = points.cols();
  if (k == 0) throw std::invalid_argument("kmeans_centers: k must be positive");
  Tensor centers({k, d});
  const std::size_t m = members.size();
  if (m == 0) {
    // degenerate input; fall back to small random centers so downstream
    // assignment stays well defined
    for (auto& v : centers.data) v = rng.next_normal() * 0.01;
    return centers;
  }

  auto point = [&](std::size_t mi) { return &points.data[std::size_t(members[mi]) * d]; };

  // k-means++ seeding
  std::vector<std::size_t> chosen;
  chosen.push_back(rng.next_below(m));
  std::vector<double> d2(m);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const std::size_t j : chosen)
        best = std::min(best, sq_dist(point(i), point(j), d));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      chosen.push_back(rng.next_below(m));
      continue;
    }
    const double r = rng.next_double() * total;
    double acc = 0.0;
    std::size_t pick = m - 1;
    for (std::size_t i = 0; i < m; ++i) {
      acc += d2[i];
      if (acc >= r) {
        pick = i;
        break;
      }
    }
    chosen.push_back(pick);
  }
  for (std::size_t c = 0; c < k; ++c)
    std::copy(point(chosen[c]), point(chosen[c]) + d, &centers.data[c * d]);

  // one refinement pass
  std::vector<std::size_t> assign(m);
  for (std::size_t i = 0; i < m; ++i) assign[i] = nearest_center(centers, point(i));
  Tensor sums({k, d});
  std::vector<uint64_t> counts(k, 0);
  for (std::size_t i = 0; i < m; ++i) {
    counts[assign[i]] += 1;
    kern::axpy(1.0, point(i), &sums.data[assign[i] * d], d);
  }
  for (std::size_t c = 0; c < k; ++c)
    if (counts[c] > 0)
      for (std::size_t i = 0; i < d; ++i)
        centers.data[c * d + i] = sums.data[c * d + i] / double(counts[c]);

  // empty clusters grab the point farthest from its own center
  std::vector<bool> used(m, false);
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] > 0) continue;
    double best = -1.0;
    std::size_t pick = 0;
    bool found = false;
    for (std::size_t i = 0; i < m; ++i) {
      if (used[i]) continue;
      const double dist = sq_dist(point(i), &centers.data[assign[i] * d], d);
      if (dist > best) {
        best = dist;
        pick = i;
        found = true;
      }
    }
    if (!found) continue; // fewer distinct points than clusters
    std::copy(point(pick), point(pick) + d, &centers.data[c * d]);
    used[pick] = true;
  }
  return centers;
}

std::vector<std::size_t> filter_chain_by_relation(const std::vector<ChainEntry>& chain,
                                                  const Tensor& rel_emb, uint32_t query_rel,
                                                  std::size_t top) {
  const std::size_t n = chain.size();
  if (top == 0 || n <= top) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  const std::size_t d = rel_emb.cols();
  auto cosine = [&](uint32_t a, uint32_t b) {
    const double* x = &rel_emb.data[std::size_t(a) * d];
    const double* y = &rel_emb.data[std::size_t(b) * d];
    const double num = kern::dot(x, y, d);
    const double nx = std::sqrt(kern::dot(x, x, d));
    const double ny = std::sqrt(kern::dot(y, y, d));
    const double den = nx * ny;
    return den > 0.0 ? num / den : 0.0;
  };
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cosine(chain[a].relation, query_rel) > cosine(chain[b].relation, query_rel);
  });
  order.resize(top);
  std::sort(order.begin(), order.end()); // back to chronological order
  return order;
}

} // namespace tkg
