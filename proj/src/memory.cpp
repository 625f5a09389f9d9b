#include "tkg/memory.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "tkg/rng.hpp"

namespace tkg {

namespace {

constexpr char kMagic[8] = {'T', 'K', 'G', 'M', 'E', 'M', 'R', 'Y'};
constexpr uint64_t kVersion = 1;

void push_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

void push_f64(std::vector<uint8_t>& out, double d) {
  push_u64(out, std::bit_cast<uint64_t>(d));
}

struct BlobReader {
  const std::vector<uint8_t>& blob;
  std::size_t pos = 0;

  uint64_t u64() {
    if (pos + 8 > blob.size()) throw SnapshotError("truncated memory snapshot");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(blob[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
};

} // namespace

void MemoryBank::init(std::size_t n_entities, std::size_t d, std::size_t k_buf,
                      bool with_buffers) {
  n_ = n_entities;
  d_ = d;
  kb_ = k_buf;
  buffers_ = with_buffers;
  m_.assign(n_ * d_, 0.0);
  tau_.assign(n_, 0);
  buf_.assign(buffers_ ? n_ * kb_ * d_ : 0, 0.0);
}

void MemoryBank::reset() {
  std::fill(m_.begin(), m_.end(), 0.0);
  std::fill(tau_.begin(), tau_.end(), 0);
  std::fill(buf_.begin(), buf_.end(), 0.0);
}

uint64_t MemoryBank::checksum() const {
  uint64_t h = 14695981039346656037ull;
  auto mix = [&h](const void* p, std::size_t bytes) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  mix(m_.data(), m_.size() * sizeof(double));
  mix(tau_.data(), tau_.size() * sizeof(uint64_t));
  mix(buf_.data(), buf_.size() * sizeof(double));
  return h;
}

std::vector<uint8_t> MemoryBank::snapshot() const {
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 8);
  push_u64(out, kVersion);
  push_u64(out, d_);
  push_u64(out, kb_);

  uint64_t count = 0;
  for (std::size_t e = 0; e < n_; ++e)
    if (tau_[e] > 0) ++count;
  push_u64(out, count);

  for (std::size_t e = 0; e < n_; ++e) {
    if (tau_[e] == 0) continue;
    push_u64(out, uint64_t(e));
    push_u64(out, tau_[e]);
    const double* mv = &m_[e * d_];
    for (std::size_t i = 0; i < d_; ++i) push_f64(out, mv[i]);
    const uint64_t occ = buffers_ ? occupied(uint32_t(e)) : 0;
    push_u64(out, occ);
    for (uint64_t s = 0; s < occ; ++s) {
      const double* slot = buffer_slot(uint32_t(e), std::size_t(s));
      for (std::size_t i = 0; i < d_; ++i) push_f64(out, slot[i]);
    }
  }
  return out;
}

void MemoryBank::restore(const std::vector<uint8_t>& blob) {
  if (blob.size() < 8 || std::memcmp(blob.data(), kMagic, 8) != 0)
    throw SnapshotError("not a memory snapshot (bad magic)");
  BlobReader r{blob, 8};
  const uint64_t version = r.u64();
  if (version != kVersion)
    throw SnapshotError("unsupported memory snapshot version " + std::to_string(version));
  const uint64_t d = r.u64();
  if (d != d_)
    throw SnapshotError("memory snapshot dimension " + std::to_string(d) +
                        " does not match bank dimension " + std::to_string(d_));
  const uint64_t kb = r.u64();
  if (kb != kb_)
    throw SnapshotError("memory snapshot buffer size " + std::to_string(kb) +
                        " does not match bank buffer size " + std::to_string(kb_));

  reset();
  const uint64_t count = r.u64();
  for (uint64_t rec = 0; rec < count; ++rec) {
    const uint64_t id = r.u64();
    if (id >= n_)
      throw SnapshotError("memory snapshot entity id " + std::to_string(id) +
                          " out of range for bank of " + std::to_string(n_));
    tau_[id] = r.u64();
    double* mv = &m_[std::size_t(id) * d_];
    for (std::size_t i = 0; i < d_; ++i) mv[i] = r.f64();
    const uint64_t occ = r.u64();
    if (occ > kb_) throw SnapshotError("memory snapshot slot count exceeds buffer size");
    if (occ > 0 && !buffers_)
      throw SnapshotError("memory snapshot has buffers but bank was built without them");
    for (uint64_t s = 0; s < occ; ++s) {
      double* slot = buffer_slot(uint32_t(id), std::size_t(s));
      for (std::size_t i = 0; i < d_; ++i) slot[i] = r.f64();
    }
  }
  if (r.pos != blob.size()) throw SnapshotError("trailing bytes after memory snapshot");
}

void MemoryBank::save_file(const std::string& path) const {
  const auto blob = snapshot();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SnapshotError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(blob.data()), std::streamsize(blob.size()));
  if (!out) throw SnapshotError("failed writing memory snapshot to " + path);
}

void MemoryBank::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SnapshotError("cannot open memory snapshot " + path);
  std::vector<uint8_t> blob((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
  restore(blob);
}

} // namespace tkg
