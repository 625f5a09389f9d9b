#include "tkg/embedding.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <vector>

#include "tkg/rng.hpp"

namespace tkg {

uint64_t EmbeddingSource::checksum() const {
  const auto* p = reinterpret_cast<const unsigned char*>(table.data.data());
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(p),
                                  table.data.size() * sizeof(double)));
}

EmbeddingSource hash_embeddings(const TkgDataset& ds, std::size_t d, uint64_t seed) {
  EmbeddingSource src;
  src.d = d;
  src.table = Tensor({ds.num_entities(), d});
  for (std::size_t e = 0; e < ds.num_entities(); ++e) {
    Rng rng{derive_seed(seed, ds.entity_names[e])};
    double* row = &src.table.data[e * d];
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      row[i] = rng.next_normal();
      norm_sq += row[i] * row[i];
    }
    // zero norm is unreachable in practice; guard keeps the row finite anyway
    const double inv = norm_sq > 0.0 ? 1.0 / std::sqrt(norm_sq) : 1.0;
    for (std::size_t i = 0; i < d; ++i) row[i] *= inv;
  }
  return src;
}

EmbeddingSource file_embeddings(const TkgDataset& ds, const std::string& path, std::size_t d) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open embedding file: " + path);

  EmbeddingSource src;
  src.d = d;
  src.table = Tensor({ds.num_entities(), d});
  std::vector<bool> seen(ds.num_entities(), false);

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::vector<std::string_view> fields;
    std::string_view sv(line);
    std::size_t start = 0;
    for (std::size_t i = 0; i <= sv.size(); ++i) {
      if (i == sv.size() || sv[i] == '\t') {
        fields.push_back(sv.substr(start, i - start));
        start = i + 1;
      }
    }
    if (fields.size() != d + 1)
      throw ParseError(path + " line " + std::to_string(lineno) + ": expected " +
                       std::to_string(d + 1) + " tab-separated fields, got " +
                       std::to_string(fields.size()));

    auto it = ds.entity_ids.find(std::string(fields[0]));
    if (it == ds.entity_ids.end()) continue; // extra rows are allowed
    const uint32_t e = it->second;
    double* row = &src.table.data[std::size_t(e) * d];
    for (std::size_t i = 0; i < d; ++i) {
      const auto f = fields[i + 1];
      double v = 0.0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc{} || res.ptr != f.data() + f.size())
        throw ParseError(path + " line " + std::to_string(lineno) +
                         ": bad float in column " + std::to_string(i + 2));
      row[i] = v;
    }
    seen[e] = true;
  }

  for (std::size_t e = 0; e < ds.num_entities(); ++e)
    if (!seen[e])
      throw ParseError(path + ": no embedding for entity '" + ds.entity_names[e] + "'");
  return src;
}

} // namespace tkg
