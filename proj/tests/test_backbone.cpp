#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "tkg/backbone.hpp"

using namespace tkg;

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t({rows, cols});
  for (double& x : t.data) x = rng.next_normal();
  return t;
}

// quadratic-scan oracle for the nearest center with smallest-index ties
std::size_t nearest_oracle(const Tensor& centers, const double* v) {
  const std::size_t k = centers.shape[0], d = centers.shape[1];
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    double dist = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = centers.data[c * d + j] - v[j];
      dist += diff * diff;
    }
    if (dist < best_d) { // strict: first minimum wins
      best_d = dist;
      best = c;
    }
  }
  return best;
}

} // namespace

TEST_CASE("nearest_center agrees with a brute-force scan") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng.next_below(8), d = 1 + rng.next_below(6);
    const Tensor centers = random_matrix(k, d, rng);
    Tensor v({d});
    for (double& x : v.data) x = rng.next_normal();
    CHECK(nearest_center(centers, v.data.data()) == nearest_oracle(centers, v.data.data()));
  }
}

TEST_CASE("nearest_center breaks exact ties toward the smallest index") {
  Tensor centers({3, 2});
  centers.data = {1.0, 0.0, 5.0, 5.0, 1.0, 0.0}; // rows 0 and 2 identical
  const double v[2] = {1.0, 0.25};
  CHECK(nearest_center(centers, v) == 0);

  Tensor sym({2, 1});
  sym.data = {-1.0, 1.0}; // equidistant from 0
  const double origin[1] = {0.0};
  CHECK(nearest_center(sym, origin) == 0);
}

TEST_CASE("assign_all maps every row through nearest_center") {
  Rng rng(7);
  const Tensor centers = random_matrix(5, 3, rng);
  const Tensor points = random_matrix(40, 3, rng);
  const auto assign = assign_all(centers, points);
  REQUIRE(assign.size() == 40);
  for (std::size_t i = 0; i < 40; ++i)
    CHECK(assign[i] == nearest_oracle(centers, &points.data[i * 3]));
}

TEST_CASE("prototype running mean equals the batch mean") {
  Rng rng(11);
  const std::size_t k = 3, d = 4;
  PrototypeTable protos;
  protos.init(k, d);

  std::vector<std::vector<double>> sums(k, std::vector<double>(d, 0.0));
  std::vector<std::size_t> counts(k, 0);
  for (int i = 0; i < 500; ++i) {
    const std::size_t c = rng.next_below(k);
    double enc[d];
    for (std::size_t j = 0; j < d; ++j) enc[j] = rng.next_normal() * 3.0;
    protos.add(c, enc);
    for (std::size_t j = 0; j < d; ++j) sums[c][j] += enc[j];
    ++counts[c];
  }
  for (std::size_t c = 0; c < k; ++c) {
    CHECK(protos.counts[c] == counts[c]);
    for (std::size_t j = 0; j < d; ++j) {
      const double batch_mean = counts[c] ? sums[c][j] / double(counts[c]) : 0.0;
      CHECK(protos.row(c)[j] == doctest::Approx(batch_mean).epsilon(1e-12));
    }
  }

  protos.reset();
  for (std::size_t c = 0; c < k; ++c) {
    CHECK(protos.counts[c] == 0);
    for (std::size_t j = 0; j < d; ++j) CHECK(protos.row(c)[j] == 0.0);
  }
}

TEST_CASE("untouched prototype rows stay zero") {
  PrototypeTable protos;
  protos.init(4, 2);
  const double enc[2] = {1.0, -1.0};
  protos.add(2, enc);
  for (std::size_t c : {0u, 1u, 3u})
    for (std::size_t j = 0; j < 2; ++j) CHECK(protos.row(c)[j] == 0.0);
  CHECK(protos.row(2)[0] == 1.0);
  CHECK(protos.row(2)[1] == -1.0);
}

TEST_CASE("kmeans_centers is deterministic for a fixed rng seed") {
  Rng data_rng(5);
  const Tensor points = random_matrix(30, 4, data_rng);
  std::vector<uint32_t> members;
  for (uint32_t i = 0; i < 30; ++i) members.push_back(i);

  Rng r1(123), r2(123), r3(124);
  const Tensor a = kmeans_centers(points, members, 6, r1);
  const Tensor b = kmeans_centers(points, members, 6, r2);
  REQUIRE(a.data.size() == b.data.size());
  CHECK(a.data == b.data);

  const Tensor c = kmeans_centers(points, members, 6, r3);
  CHECK(a.data != c.data);
}

TEST_CASE("kmeans_centers separates well-separated blobs") {
  // three tight blobs far apart; 3 centers must land one per blob
  Rng rng(17);
  Tensor points({30, 2});
  const double blob_x[3] = {0.0, 100.0, -100.0};
  for (std::size_t i = 0; i < 30; ++i) {
    const std::size_t blob = i % 3;
    points.data[i * 2] = blob_x[blob] + 0.01 * rng.next_normal();
    points.data[i * 2 + 1] = 0.01 * rng.next_normal();
  }
  std::vector<uint32_t> members;
  for (uint32_t i = 0; i < 30; ++i) members.push_back(i);
  Rng krng(9);
  const Tensor centers = kmeans_centers(points, members, 3, krng);

  std::set<int> hit;
  for (std::size_t c = 0; c < 3; ++c) {
    const double x = centers.data[c * 2];
    for (int b = 0; b < 3; ++b)
      if (std::fabs(x - blob_x[b]) < 1.0) hit.insert(b);
  }
  CHECK(hit.size() == 3);
}

TEST_CASE("kmeans_centers with more centers than points leaves no duplicate picks") {
  Tensor points({2, 2});
  points.data = {0.0, 0.0, 10.0, 10.0};
  const std::vector<uint32_t> members = {0, 1};
  Rng rng(3);
  const Tensor centers = kmeans_centers(points, members, 4, rng);
  REQUIRE(centers.shape[0] == 4);
  // every center must be finite
  for (double x : centers.data) CHECK(std::isfinite(x));
}

TEST_CASE("kmeans_centers with no members still produces usable centers") {
  Tensor points({0, 3});
  const std::vector<uint32_t> members;
  Rng rng(8);
  const Tensor centers = kmeans_centers(points, members, 5, rng);
  REQUIRE(centers.shape[0] == 5);
  REQUIRE(centers.shape[1] == 3);
  bool any_nonzero = false;
  for (double x : centers.data) {
    CHECK(std::isfinite(x));
    if (x != 0.0) any_nonzero = true;
  }
  CHECK(any_nonzero); // small random jitter, not all-zero rows
}

TEST_CASE("chain store keeps at most max_len entries, oldest dropped first") {
  ChainStore chains;
  chains.init(3, 4);
  for (uint32_t i = 0; i < 10; ++i) chains.append(1, {i, i % 2, int64_t(i)});
  const auto& c = chains.chain(1);
  REQUIRE(c.size() == 4);
  // entries 6..9 survive, in order
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(c[i].neighbor == 6 + i);
    CHECK(c[i].t == int64_t(6 + i));
  }
  CHECK(chains.chain(0).empty());
  CHECK(chains.chain(2).empty());

  chains.reset();
  CHECK(chains.chain(1).empty());
}

TEST_CASE("chain entries stay in append order within a timestamp") {
  ChainStore chains;
  chains.init(1, 10);
  chains.append(0, {5, 0, 3});
  chains.append(0, {6, 1, 3});
  chains.append(0, {7, 0, 3});
  const auto& c = chains.chain(0);
  REQUIRE(c.size() == 3);
  CHECK(c[0].neighbor == 5);
  CHECK(c[1].neighbor == 6);
  CHECK(c[2].neighbor == 7);
}

TEST_CASE("filter_chain_by_relation: top=0 and short chains are identity") {
  std::vector<ChainEntry> chain = {{0, 0, 1}, {1, 1, 2}, {2, 2, 3}};
  Tensor rel_emb({3, 2});
  rel_emb.data = {1, 0, 0, 1, -1, 0};

  for (std::size_t top : {std::size_t(0), std::size_t(3), std::size_t(8)}) {
    const auto idx = filter_chain_by_relation(chain, rel_emb, 0, top);
    REQUIRE(idx.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(idx[i] == i);
  }
}

TEST_CASE("filter_chain_by_relation keeps the most similar entries chronologically") {
  // relations: 0 = +x (query), 1 = +y (orthogonal), 2 = -x (opposite),
  // 3 = nearly +x
  Tensor rel_emb({4, 2});
  rel_emb.data = {1, 0, 0, 1, -1, 0, 0.9, 0.1};
  std::vector<ChainEntry> chain = {
      {10, 1, 1}, // orthogonal
      {11, 0, 2}, // exact match
      {12, 2, 3}, // opposite
      {13, 3, 4}, // near match
      {14, 1, 5}, // orthogonal
  };
  const auto idx = filter_chain_by_relation(chain, rel_emb, 0, 2);
  REQUIRE(idx.size() == 2);
  // the two best by cosine are entries 1 and 3; chronological order preserved
  CHECK(idx[0] == 1);
  CHECK(idx[1] == 3);

  // top=4 drops only the opposite-direction entry
  const auto idx4 = filter_chain_by_relation(chain, rel_emb, 0, 4);
  REQUIRE(idx4.size() == 4);
  CHECK(std::is_sorted(idx4.begin(), idx4.end()));
  CHECK(std::find(idx4.begin(), idx4.end(), 2) == idx4.end());
}

TEST_CASE("filter_chain_by_relation tie handling is stable") {
  // two entries with identical relations compete for the last slot; the
  // earlier one wins because the sort is stable on descending similarity
  Tensor rel_emb({2, 2});
  rel_emb.data = {1, 0, 1, 0};
  std::vector<ChainEntry> chain = {{0, 1, 1}, {1, 1, 2}, {2, 0, 3}};
  const auto idx = filter_chain_by_relation(chain, rel_emb, 0, 2);
  REQUIRE(idx.size() == 2);
  CHECK(idx[0] == 0);
  CHECK(idx[1] == 1);
}
