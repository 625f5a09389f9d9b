#pragma once
// Quadruple streams: ingestion, inverse augmentation, chronological splits,
// first-appearance bookkeeping, and time-ordered iteration.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace tkg {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Quadruple {
  uint32_t subject = 0;
  uint32_t relation = 0;
  uint32_t object = 0;
  int64_t timestamp = 0;
};

struct SliceTag {
  bool is_emerging = false;
  bool is_unknown = false;
};

enum class Split { train, valid, test };

// half-open index range into TkgDataset::facts covering one timestamp
struct Snapshot {
  int64_t t = 0;
  std::size_t lo = 0;
  std::size_t hi = 0;
};

struct TkgDataset {
  std::vector<Quadruple> facts; // sorted by timestamp, stable within one
  std::vector<std::string> entity_names;
  std::vector<std::string> relation_names;
  std::unordered_map<std::string, uint32_t> entity_ids;
  std::unordered_map<std::string, uint32_t> relation_ids;
  bool augmented = false;
  bool has_splits = false;
  int64_t t_train_end = 0;
  int64_t t_valid_end = 0;
  std::vector<int64_t> first_appearance; // entity id -> earliest timestamp
  std::vector<Snapshot> snapshots;

  std::size_t num_entities() const { return entity_names.size(); }
  std::size_t num_relations() const { return relation_names.size(); }
  Split split_of(int64_t t) const {
    if (!has_splits) throw std::logic_error("split_of: no split boundaries assigned");
    if (t <= t_train_end) return Split::train;
    if (t <= t_valid_end) return Split::valid;
    return Split::test;
  }

  // rebuild snapshots and first-appearance from the fact list
  void reindex();
};

TkgDataset load_tsv(const std::string& path, bool has_header = false);

// append (object, relation + |R|, subject, t) for every fact
TkgDataset augment_inverse(TkgDataset d);

// timestamp-granular boundaries with cumulative counts nearest the ratios
TkgDataset chronological_split(TkgDataset d, double train_ratio, double valid_ratio,
                               double test_ratio);

// per-fact tags, populated for test facts only
std::vector<SliceTag> tag_slices(const TkgDataset& d);

std::vector<Snapshot> stream(const TkgDataset& d, Split split);
std::vector<Snapshot> stream_window(const TkgDataset& d, int64_t t_lo, int64_t t_hi);
std::vector<Snapshot> stream_all(const TkgDataset& d);

// keep only the most recent k percent of training timestamps
TkgDataset truncate_horizon(TkgDataset d, double k_percent);

void write_vocab_tsv(const std::vector<std::string>& names, const std::string& path);
void write_slice_tags_csv(const TkgDataset& d, const std::vector<SliceTag>& tags,
                          const std::string& path);

} // namespace tkg
