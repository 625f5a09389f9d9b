#pragma once
// Synthetic temporal-graph streams with type structure, per-entity behavioral
// drift after an onset time, and entities that first appear inside the test
// window. Deterministic given the seed.

#include <cstdint>
#include <string>
#include <vector>

#include "tkg/dataset.hpp"

namespace tkg {

struct SyntheticSpec {
  std::size_t types = 4;
  std::size_t entities_per_type = 50;
  std::size_t relations_per_type = 3;
  std::size_t timestamps = 60;
  double drift_fraction = 0.3;
  double emerging_fraction = 0.2;
  double noise = 0.05;                 // uniform object floor
  std::size_t facts_per_timestamp = 0; // 0 = scale with entity count
  uint64_t seed = 7;
};

struct SynthEntity {
  std::string name;
  std::size_t type = 0;
  bool drift = false;
  int64_t onset = -1; // first drifting timestamp, -1 when not drifting
  bool emerging = false;
  int64_t debut = 0; // first possible appearance
};

struct RawFact {
  std::string subject, relation, object;
  int64_t t = 0;
};

struct SyntheticResult {
  SyntheticSpec spec;
  std::vector<RawFact> facts;
  std::vector<SynthEntity> entities;
};

SyntheticResult generate(const SyntheticSpec& spec);

void write_tsv(const SyntheticResult& r, const std::string& path);
void write_annotations_csv(const SyntheticResult& r, const std::string& path);

// Same interning and ordering semantics as loading the TSV from disk.
TkgDataset to_dataset(const SyntheticResult& r);

} // namespace tkg
