#pragma once
// Per-entity online memory: a state vector m_e, an update counter tau_e, and
// (for the attention operator) a bounded FIFO buffer of recent input signals.
// Serializes to a versioned little-endian blob for mid-stream persistence.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tkg {

enum class OperatorKind { ema, gru, attention };
enum class EmaVariant { shared, per_entity, per_dim };
enum class Timing { before, after };

struct SnapshotError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class MemoryBank {
public:
  void init(std::size_t n_entities, std::size_t d, std::size_t k_buf, bool with_buffers);
  void reset();

  std::size_t size() const { return n_; }
  std::size_t dim() const { return d_; }
  std::size_t k_buf() const { return kb_; }
  bool with_buffers() const { return buffers_; }

  double* m(uint32_t e) { return &m_[std::size_t(e) * d_]; }
  const double* m(uint32_t e) const { return &m_[std::size_t(e) * d_]; }
  uint64_t tau(uint32_t e) const { return tau_[e]; }
  void bump_tau(uint32_t e) { tau_[e] += 1; }

  // slot s of entity e's FIFO buffer; slots are addressed tau mod k_buf
  double* buffer_slot(uint32_t e, std::size_t s) {
    return &buf_[(std::size_t(e) * kb_ + s) * d_];
  }
  const double* buffer_slot(uint32_t e, std::size_t s) const {
    return &buf_[(std::size_t(e) * kb_ + s) * d_];
  }
  std::size_t occupied(uint32_t e) const {
    const uint64_t t = tau_[e];
    return std::size_t(t < kb_ ? t : kb_);
  }

  uint64_t checksum() const;

  std::vector<uint8_t> snapshot() const;
  void restore(const std::vector<uint8_t>& blob); // bank must already be init'd
  void save_file(const std::string& path) const;
  void load_file(const std::string& path);

private:
  std::size_t n_ = 0, d_ = 0, kb_ = 0;
  bool buffers_ = false;
  std::vector<double> m_;
  std::vector<double> buf_;
  std::vector<uint64_t> tau_;
};

} // namespace tkg
