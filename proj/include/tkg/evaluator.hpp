#pragma once
// Chronological evaluation with filtered ranking. The model state is advanced
// query by query exactly as in training; candidate scores come from the bank
// state at the start of each timestamp. Per-query records carry the slice
// labels and update-depth counters used for stratified reporting.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "tkg/dataset.hpp"
#include "tkg/model.hpp"

namespace tkg {

// (subject, relation, timestamp) -> all true objects, over every split
class FilterIndex {
public:
  void build(const TkgDataset& ds);
  const std::vector<uint32_t>* objects_at(uint32_t s, uint32_t r, int64_t t) const;
  const std::vector<uint32_t>* objects_any(uint32_t s, uint32_t r) const;

private:
  // key is (subject << 32) | relation
  std::unordered_map<uint64_t, std::unordered_map<int64_t, std::vector<uint32_t>>> at_t_;
  std::unordered_map<uint64_t, std::vector<uint32_t>> any_t_;
};

// Competitors are all entities except the true object and except the filter
// set. Rank is 1 + (strictly better) + (tied competitors): ties are broken
// pessimistically against the true object.
std::size_t filtered_rank(const std::vector<double>& scores, uint32_t true_obj,
                          const std::vector<uint32_t>& filter_objects);

enum class EvalMode { full, zero_gate };

struct QueryRecord {
  std::size_t query_index = 0;
  uint32_t subject = 0, relation = 0, object = 0;
  int64_t t = 0;
  std::size_t rank = 0;
  double rr = 0.0;
  bool emerging = false, unknown = false;
  uint64_t train_depth = 0;   // subject's directed fact count in the train split
  uint64_t test_updates = 0;  // subject updates earlier in this evaluated split
  uint64_t interactions = 0;  // subject's update counter at scoring time
  double gate_mean = 0.0;
};

struct SliceAgg {
  double mrr = 0.0, hits3 = 0.0, hits10 = 0.0;
  std::size_t n = 0;
};

struct RankReport {
  std::vector<QueryRecord> rows;
  SliceAgg all, emerging, unknown;
  void compute_aggregates();
};

struct EvalOptions {
  EvalMode mode = EvalMode::full;
  bool filter_all_timestamps = false; // filter (s,r,*) instead of (s,r,t)
};

// Evaluates one split; the caller positions model state at the split start
// (reset_state + replay of earlier splits, or a memory snapshot restore).
RankReport evaluate(Model& model, Split split, const FilterIndex& fidx,
                    const EvalOptions& opts);

// advance model state over a split without scoring
void replay_split(Model& model, Split split);
void replay_window(Model& model, const std::vector<Snapshot>& snaps);
std::vector<Snapshot> split_snapshots(const TkgDataset& ds, Split split);

struct DeltaBin {
  std::string label;
  double mean_delta = 0.0;
  std::size_t count = 0;
};

// Mean per-query reciprocal-rank difference between two runs over the same
// query stream, binned by an update-depth axis. Throws if the runs do not
// cover the same queries.
std::vector<DeltaBin> delta_rr_by(const RankReport& a, const RankReport& b,
                                  const std::string& axis,
                                  const std::vector<uint64_t>& edges);

extern const std::vector<uint64_t> kDefaultDepthEdges; // {1, 2, 4, 8}

void write_report_csv(const RankReport& r, const std::string& path);
// inverse of write_report_csv; aggregates are recomputed
RankReport read_report_csv(const std::string& path);
void write_aggregates_json(const RankReport& r, const std::string& path);
void write_gate_trace_csv(const RankReport& r, const TkgDataset& ds, const std::string& path);
void write_entity_gate_series_csv(const RankReport& r, const TkgDataset& ds,
                                  const std::vector<std::string>& entity_names,
                                  const std::string& path);
void write_delta_bins_csv(const std::vector<DeltaBin>& bins, const std::string& path);

} // namespace tkg
