#include "tkg/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <stdexcept>

namespace tkg {

ModelConfig to_model_config(const RunConfig& rc) {
  ModelConfig mc;
  mc.d = rc.d;
  mc.k_code = rc.k_code;
  mc.chain_len = rc.chain_len;
  mc.relation_filter_top = rc.relation_filter_top;
  mc.chain_attention_pool = rc.chain_attention_pool;
  mc.op = parse_operator(rc.op);
  mc.ema_variant = parse_ema_variant(rc.ema_variant);
  mc.timing = parse_timing(rc.timing);
  mc.decoder = parse_decoder(rc.decoder);
  mc.conv_filters = rc.conv_filters;
  mc.conv_width = rc.conv_width;
  mc.attn_heads = rc.attn_heads;
  mc.k_buf = rc.k_buf;
  mc.lambda_vq = rc.lambda_vq;
  mc.disable_memory = rc.disable_memory;
  mc.disable_prior = rc.disable_prior;
  mc.constant_gate = rc.constant_gate;
  mc.constant_gate_value = rc.constant_gate_value;
  mc.detach_memory = !rc.no_detach;
  mc.seed = rc.seed;
  return mc;
}

TrainConfig to_train_config(const RunConfig& rc) {
  TrainConfig tc;
  tc.max_epochs = rc.epochs;
  tc.patience = rc.patience;
  tc.lr = rc.lr;
  tc.early_metric = rc.early_metric;
  return tc;
}

SyntheticSpec to_synth_spec(const RunConfig& rc) {
  SyntheticSpec s;
  s.types = rc.synth_types;
  s.entities_per_type = rc.synth_entities_per_type;
  s.relations_per_type = rc.synth_relations_per_type;
  s.timestamps = rc.synth_timestamps;
  s.facts_per_timestamp = rc.synth_facts_per_timestamp;
  s.drift_fraction = rc.synth_drift;
  s.emerging_fraction = rc.synth_emerging;
  s.noise = rc.synth_noise;
  s.seed = rc.seed;
  return s;
}

std::vector<std::pair<std::string, std::string>> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return std::string();
    const auto b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + " line " + std::to_string(lineno) +
                                  ": expected key=value");
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

bool parse_bool(const std::string& v, const std::string& key) {
  std::string s = v;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw std::invalid_argument("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<uint64_t> parse_bin_edges(const std::string& csv) {
  std::vector<uint64_t> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto comma = csv.find(',', start);
    const std::string tok = csv.substr(start, comma == std::string::npos ? std::string::npos
                                                                         : comma - start);
    if (!tok.empty()) {
      uint64_t v = 0;
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
        throw std::invalid_argument("bad bin edge '" + tok + "'");
      out.push_back(v);
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (!std::is_sorted(out.begin(), out.end()) ||
      std::adjacent_find(out.begin(), out.end()) != out.end())
    throw std::invalid_argument("bin edges must be strictly increasing");
  return out;
}

std::vector<std::string> split_csv_list(const std::string& csv) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto comma = csv.find(',', start);
    const std::string tok = csv.substr(start, comma == std::string::npos ? std::string::npos
                                                                         : comma - start);
    if (!tok.empty()) out.push_back(tok);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

} // namespace tkg
