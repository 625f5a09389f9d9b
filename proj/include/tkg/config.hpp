#pragma once
// Run configuration shared by all CLI commands, plus the key=value config
// file format. Precedence: built-in defaults < config file < TKG_OUTPUT_DIR
// (output dir only) < explicit command-line flags.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tkg/model.hpp"
#include "tkg/synth.hpp"
#include "tkg/trainer.hpp"

namespace tkg {

struct RunConfig {
  // data
  std::string data;
  std::string embeddings; // optional file; hash-seeded embeddings otherwise
  std::string out = "out";
  std::string checkpoint;
  std::string memory_snapshot;
  std::string config_file;
  double ratio_train = 0.5, ratio_valid = 0.2, ratio_test = 0.3;
  double horizon_pct = 100.0;
  bool filter_all_timestamps = false;
  std::string eval_split = "test";
  std::string trace_entities; // comma separated names for gate series
  bool save_memory = false;

  // model
  std::size_t d = 32;
  std::size_t k_code = 16;
  std::size_t chain_len = 10;
  std::size_t relation_filter_top = 0;
  bool chain_attention_pool = false;
  std::string op = "ema";
  std::string ema_variant = "shared";
  std::string timing = "before";
  std::string decoder = "conv";
  std::size_t conv_filters = 32;
  std::size_t conv_width = 3;
  std::size_t attn_heads = 4;
  std::size_t k_buf = 16;
  double lambda_vq = 0.1;
  bool disable_memory = false;
  bool disable_prior = false;
  bool constant_gate = false;
  double constant_gate_value = 0.5;
  bool no_detach = false;

  // training
  std::size_t epochs = 200;
  std::size_t patience = 10;
  double lr = 1e-3;
  std::string early_metric = "all";
  uint64_t seed = 42;

  // synthetic generation
  std::size_t synth_types = 4;
  std::size_t synth_entities_per_type = 50;
  std::size_t synth_relations_per_type = 3;
  std::size_t synth_timestamps = 60;
  std::size_t synth_facts_per_timestamp = 0;
  double synth_drift = 0.3;
  double synth_emerging = 0.2;
  double synth_noise = 0.05;

  // analysis
  std::string report_full;
  std::string report_zero;
  std::string axis = "test_updates";
  std::string bins; // comma-separated edges, empty = defaults
};

ModelConfig to_model_config(const RunConfig& rc);
TrainConfig to_train_config(const RunConfig& rc);
SyntheticSpec to_synth_spec(const RunConfig& rc);

// key=value lines, '#' comments; returns pairs in file order
std::vector<std::pair<std::string, std::string>> parse_config_file(const std::string& path);

bool parse_bool(const std::string& v, const std::string& key);
std::vector<uint64_t> parse_bin_edges(const std::string& csv);
std::vector<std::string> split_csv_list(const std::string& csv);

} // namespace tkg
