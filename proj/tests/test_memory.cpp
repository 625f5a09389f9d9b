#include <cmath>
#include <cstring>
#include <filesystem>

#include "doctest.h"
#include "tkg/memory.hpp"
#include "tkg/rng.hpp"

using namespace tkg;

namespace {

MemoryBank filled_bank(std::size_t n, std::size_t d, std::size_t kb, bool buffers,
                       uint64_t seed) {
  MemoryBank bank;
  bank.init(n, d, kb, buffers);
  Rng rng(seed);
  for (uint32_t e = 0; e < n; ++e) {
    const std::size_t updates = rng.next_below(2 * kb + 2); // some entities exceed k_buf
    for (std::size_t u = 0; u < updates; ++u) {
      for (std::size_t i = 0; i < d; ++i) bank.m(e)[i] = rng.next_normal();
      if (buffers) {
        double* slot = bank.buffer_slot(e, bank.tau(e) % kb);
        for (std::size_t i = 0; i < d; ++i) slot[i] = rng.next_normal();
      }
      bank.bump_tau(e);
    }
  }
  return bank;
}

} // namespace

TEST_CASE("bank starts zeroed and reset returns it there") {
  MemoryBank bank;
  bank.init(4, 3, 2, true);
  CHECK(bank.size() == 4);
  CHECK(bank.dim() == 3);
  CHECK(bank.k_buf() == 2);
  CHECK(bank.with_buffers());
  const uint64_t fresh = bank.checksum();
  for (uint32_t e = 0; e < 4; ++e) {
    CHECK(bank.tau(e) == 0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(bank.m(e)[i] == 0.0);
  }

  bank.m(1)[0] = 2.5;
  bank.bump_tau(1);
  CHECK(bank.checksum() != fresh);
  bank.reset();
  CHECK(bank.checksum() == fresh);
  CHECK(bank.tau(1) == 0);
}

TEST_CASE("occupied saturates at k_buf") {
  MemoryBank bank;
  bank.init(2, 1, 4, true);
  CHECK(bank.occupied(0) == 0);
  for (int u = 1; u <= 10; ++u) {
    bank.bump_tau(0);
    CHECK(bank.occupied(0) == std::size_t(std::min(u, 4)));
  }
  CHECK(bank.tau(0) == 10);
  CHECK(bank.occupied(1) == 0); // untouched entity
}

TEST_CASE("fifo slot addressing wraps tau modulo k_buf") {
  MemoryBank bank;
  bank.init(1, 2, 3, true);
  // write 7 signals through the wraparound discipline
  for (uint64_t u = 0; u < 7; ++u) {
    double* slot = bank.buffer_slot(0, bank.tau(0) % 3);
    slot[0] = double(u);
    slot[1] = -double(u);
    bank.bump_tau(0);
  }
  // updates 0..6 land in slots 0,1,2,0,1,2,0: survivors are 6 (slot 0),
  // 4 (slot 1), 5 (slot 2)
  CHECK(bank.buffer_slot(0, 0)[0] == 6.0);
  CHECK(bank.buffer_slot(0, 1)[0] == 4.0);
  CHECK(bank.buffer_slot(0, 2)[0] == 5.0);
  CHECK(bank.occupied(0) == 3);
}

TEST_CASE("checksum reacts to every component of the state") {
  MemoryBank bank = filled_bank(5, 3, 2, true, 42);
  const uint64_t base = bank.checksum();

  MemoryBank b2 = filled_bank(5, 3, 2, true, 42);
  CHECK(b2.checksum() == base); // same construction, same checksum

  b2.m(3)[1] += 1e-9;
  CHECK(b2.checksum() != base);

  MemoryBank b3 = filled_bank(5, 3, 2, true, 42);
  b3.bump_tau(0);
  CHECK(b3.checksum() != base);

  MemoryBank b4 = filled_bank(5, 3, 2, true, 42);
  b4.buffer_slot(2, 0)[0] += 1.0;
  CHECK(b4.checksum() != base);
}

TEST_CASE("snapshot and restore round-trip bit-exactly") {
  for (bool buffers : {true, false}) {
    CAPTURE(buffers);
    MemoryBank bank = filled_bank(8, 4, 3, buffers, 7);
    const uint64_t sum = bank.checksum();
    const auto blob = bank.snapshot();

    MemoryBank other;
    other.init(8, 4, 3, buffers);
    // dirty the target first so restore must overwrite everything
    other.m(0)[0] = 99.0;
    other.bump_tau(5);
    other.restore(blob);
    CHECK(other.checksum() == sum);
    for (uint32_t e = 0; e < 8; ++e) {
      CHECK(other.tau(e) == bank.tau(e));
      CHECK(std::memcmp(other.m(e), bank.m(e), 4 * sizeof(double)) == 0);
    }
    CHECK(other.snapshot() == blob);
  }
}

TEST_CASE("entities never updated are skipped by the snapshot") {
  MemoryBank bank;
  bank.init(100, 8, 4, true);
  bank.m(17)[0] = 1.5;
  bank.bump_tau(17);
  const auto blob = bank.snapshot();
  // header (5 u64 + magic) plus exactly one record
  const std::size_t expect = 8 + 4 * 8 + (8 + 8 + 8 * 8 + 8 + 1 * 8 * 8);
  CHECK(blob.size() == expect);
}

TEST_CASE("restore into a larger bank leaves new entities zeroed") {
  MemoryBank small = filled_bank(4, 3, 2, false, 13);
  const auto blob = small.snapshot();

  MemoryBank big;
  big.init(10, 3, 2, false);
  big.m(9)[2] = 7.0; // must be wiped by restore
  big.bump_tau(9);
  big.restore(blob);
  for (uint32_t e = 0; e < 4; ++e) {
    CHECK(big.tau(e) == small.tau(e));
    CHECK(std::memcmp(big.m(e), small.m(e), 3 * sizeof(double)) == 0);
  }
  for (uint32_t e = 4; e < 10; ++e) {
    CHECK(big.tau(e) == 0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(big.m(e)[i] == 0.0);
  }
}

TEST_CASE("save_file and load_file round-trip through disk") {
  MemoryBank bank = filled_bank(6, 5, 3, true, 99);
  const auto path = (std::filesystem::temp_directory_path() / "tkg_bank.bin").string();
  bank.save_file(path);

  MemoryBank loaded;
  loaded.init(6, 5, 3, true);
  loaded.load_file(path);
  CHECK(loaded.checksum() == bank.checksum());

  CHECK_THROWS_AS(loaded.load_file("/nonexistent/bank.bin"), SnapshotError);
}

TEST_CASE("restore rejects malformed blobs") {
  MemoryBank bank = filled_bank(4, 2, 2, true, 21);
  const auto good = bank.snapshot();
  MemoryBank target;
  target.init(4, 2, 2, true);

  SUBCASE("bad magic") {
    auto blob = good;
    blob[0] = 'X';
    CHECK_THROWS_WITH_AS(target.restore(blob), doctest::Contains("magic"), SnapshotError);
  }
  SUBCASE("unsupported version") {
    auto blob = good;
    blob[8] = 99;
    CHECK_THROWS_WITH_AS(target.restore(blob), doctest::Contains("version"), SnapshotError);
  }
  SUBCASE("dimension mismatch") {
    MemoryBank wrong_d;
    wrong_d.init(4, 3, 2, true);
    CHECK_THROWS_WITH_AS(wrong_d.restore(good), doctest::Contains("dimension"), SnapshotError);
  }
  SUBCASE("buffer size mismatch") {
    MemoryBank wrong_kb;
    wrong_kb.init(4, 2, 5, true);
    CHECK_THROWS_WITH_AS(wrong_kb.restore(good), doctest::Contains("buffer size"), SnapshotError);
  }
  SUBCASE("entity id out of range") {
    MemoryBank src;
    src.init(4, 2, 2, true);
    src.m(3)[0] = 1.0;
    src.bump_tau(3); // the only record names entity 3
    MemoryBank tiny;
    tiny.init(2, 2, 2, true);
    CHECK_THROWS_WITH_AS(tiny.restore(src.snapshot()), doctest::Contains("out of range"),
                         SnapshotError);
  }
  SUBCASE("truncated") {
    auto blob = good;
    blob.resize(blob.size() - 5);
    CHECK_THROWS_WITH_AS(target.restore(blob), doctest::Contains("truncated"), SnapshotError);
  }
  SUBCASE("trailing bytes") {
    auto blob = good;
    blob.push_back(0);
    // one stray byte: either trailing-junk or a truncated extra record
    CHECK_THROWS_AS(target.restore(blob), SnapshotError);
  }
  SUBCASE("buffered blob into a bufferless bank") {
    MemoryBank plain;
    plain.init(4, 2, 2, false);
    CHECK_THROWS_WITH_AS(plain.restore(good), doctest::Contains("without"), SnapshotError);
  }
  SUBCASE("empty blob") {
    CHECK_THROWS_AS(target.restore({}), SnapshotError);
  }
}

TEST_CASE("a failed restore does not leave stale state behind") {
  MemoryBank bank = filled_bank(4, 2, 2, false, 33);
  auto blob = bank.snapshot();
  blob.resize(blob.size() - 3); // truncate mid-record

  MemoryBank target;
  target.init(4, 2, 2, false);
  CHECK_THROWS_AS(target.restore(blob), SnapshotError);
  // restore resets before reading records, so nothing half-written survives
  // beyond what the blob carried; the bank is still structurally sound
  CHECK(target.size() == 4);
  target.reset();
  MemoryBank fresh;
  fresh.init(4, 2, 2, false);
  CHECK(target.checksum() == fresh.checksum());
}

TEST_CASE("exponential decay recurrence matches its closed form") {
  // m_tau = alpha * m_{tau-1} + (1 - alpha) * x_tau starting from zero equals
  // (1 - alpha) * sum_k alpha^(tau-k) x_k; this pins the update convention the
  // memory operators implement
  Rng rng(4);
  for (double alpha : {0.05, 0.31, 0.5, 0.77, 0.99}) {
    std::vector<double> xs;
    double m = 0.0;
    for (int tau = 1; tau <= 64; ++tau) {
      const double x = rng.next_normal();
      xs.push_back(x);
      m = alpha * m + (1.0 - alpha) * x;

      double closed = 0.0;
      for (int k = 1; k <= tau; ++k)
        closed += std::pow(alpha, double(tau - k)) * xs[std::size_t(k - 1)];
      closed *= (1.0 - alpha);
      CHECK(std::fabs(m - closed) < 1e-10);
    }
  }
}
