#include "tkg/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

namespace tkg {

void TkgDataset::reindex() {
  snapshots.clear();
  for (std::size_t i = 0; i < facts.size(); ++i) {
    if (snapshots.empty() || snapshots.back().t != facts[i].timestamp)
      snapshots.push_back({facts[i].timestamp, i, i + 1});
    else
      snapshots.back().hi = i + 1;
  }
  first_appearance.assign(entity_names.size(), std::numeric_limits<int64_t>::max());
  for (const Quadruple& f : facts) {
    first_appearance[f.subject] = std::min(first_appearance[f.subject], f.timestamp);
    first_appearance[f.object] = std::min(first_appearance[f.object], f.timestamp);
  }
}

namespace {

uint32_t intern(std::unordered_map<std::string, uint32_t>& ids,
                std::vector<std::string>& names, const std::string& name) {
  auto [it, fresh] = ids.emplace(name, static_cast<uint32_t>(names.size()));
  if (fresh) names.push_back(name);
  return it->second;
}

} // namespace

TkgDataset load_tsv(const std::string& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");

  TkgDataset d;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && has_header) continue;
    if (line.empty()) continue;

    std::string field[4];
    std::size_t n_fields = 0, start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == '\t') {
        if (n_fields < 4) field[n_fields] = line.substr(start, i - start);
        ++n_fields;
        start = i + 1;
      }
    }
    if (n_fields != 4)
      throw ParseError(path + " line " + std::to_string(line_no) + ": expected 4 tab-separated fields, got " +
                       std::to_string(n_fields));

    int64_t ts = 0;
    const std::string& tf = field[3];
    auto [ptr, ec] = std::from_chars(tf.data(), tf.data() + tf.size(), ts);
    if (ec != std::errc{} || ptr != tf.data() + tf.size() || ts < 0)
      throw ParseError(path + " line " + std::to_string(line_no) +
                       ": timestamp must be a non-negative integer, got '" + tf + "'");

    Quadruple q;
    q.subject = intern(d.entity_ids, d.entity_names, field[0]);
    q.relation = intern(d.relation_ids, d.relation_names, field[1]);
    q.object = intern(d.entity_ids, d.entity_names, field[2]);
    q.timestamp = ts;
    d.facts.push_back(q);
  }

  std::stable_sort(d.facts.begin(), d.facts.end(),
                   [](const Quadruple& a, const Quadruple& b) { return a.timestamp < b.timestamp; });
  d.reindex();
  return d;
}

TkgDataset augment_inverse(TkgDataset d) {
  if (d.augmented) throw std::logic_error("augment_inverse: dataset is already augmented");
  const uint32_t r_base = static_cast<uint32_t>(d.relation_names.size());
  const std::size_t n = d.facts.size();
  d.facts.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const Quadruple& f = d.facts[i];
    d.facts.push_back({f.object, f.relation + r_base, f.subject, f.timestamp});
  }
  d.relation_names.reserve(2 * r_base);
  for (uint32_t r = 0; r < r_base; ++r) {
    std::string inv = "inverse:" + d.relation_names[r];
    d.relation_names.push_back(inv);
    d.relation_ids.emplace(std::move(inv), r_base + r);
  }
  std::stable_sort(d.facts.begin(), d.facts.end(),
                   [](const Quadruple& a, const Quadruple& b) { return a.timestamp < b.timestamp; });
  d.augmented = true;
  d.reindex();
  return d;
}

TkgDataset chronological_split(TkgDataset d, double train_ratio, double valid_ratio,
                               double test_ratio) {
  if (train_ratio <= 0 || valid_ratio <= 0 || test_ratio <= 0)
    throw std::invalid_argument("chronological_split: ratios must be positive");
  if (std::fabs(train_ratio + valid_ratio + test_ratio - 1.0) > 1e-9)
    throw std::invalid_argument("chronological_split: ratios must sum to 1");

  std::vector<int64_t> ts;
  for (const Snapshot& s : d.snapshots) ts.push_back(s.t);
  const std::size_t n = ts.size();
  if (n < 3) throw std::invalid_argument("chronological_split: need at least 3 distinct timestamps, have " +
                                         std::to_string(n));

  // enumerate cut pairs over distinct-timestamp counts; earlier cuts win ties
  const double target1 = train_ratio * double(n);
  const double target2 = (train_ratio + valid_ratio) * double(n);
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_c1 = 1, best_c2 = 2;
  for (std::size_t c1 = 1; c1 + 1 < n; ++c1)
    for (std::size_t c2 = c1 + 1; c2 < n; ++c2) {
      double cost = std::fabs(double(c1) - target1) + std::fabs(double(c2) - target2);
      if (cost < best) {
        best = cost;
        best_c1 = c1;
        best_c2 = c2;
      }
    }
  d.t_train_end = ts[best_c1 - 1];
  d.t_valid_end = ts[best_c2 - 1];
  d.has_splits = true;
  return d;
}

std::vector<SliceTag> tag_slices(const TkgDataset& d) {
  if (!d.has_splits) throw std::logic_error("tag_slices: split boundaries not assigned");
  std::vector<char> in_train(d.num_entities(), 0);
  for (const Quadruple& f : d.facts) {
    if (f.timestamp > d.t_train_end) break;
    in_train[f.subject] = 1;
    in_train[f.object] = 1;
  }
  std::vector<SliceTag> tags(d.facts.size());
  for (std::size_t i = 0; i < d.facts.size(); ++i) {
    const Quadruple& f = d.facts[i];
    if (f.timestamp <= d.t_valid_end) continue;
    tags[i].is_emerging = d.first_appearance[f.subject] == f.timestamp;
    tags[i].is_unknown = !in_train[f.subject] || !in_train[f.object];
  }
  return tags;
}

std::vector<Snapshot> stream_window(const TkgDataset& d, int64_t t_lo, int64_t t_hi) {
  std::vector<Snapshot> out;
  for (const Snapshot& s : d.snapshots)
    if (s.t >= t_lo && s.t <= t_hi) out.push_back(s);
  return out;
}

std::vector<Snapshot> stream(const TkgDataset& d, Split split) {
  if (!d.has_splits) throw std::logic_error("stream: split boundaries not assigned");
  const int64_t lo = std::numeric_limits<int64_t>::min();
  const int64_t hi = std::numeric_limits<int64_t>::max();
  switch (split) {
    case Split::train: return stream_window(d, lo, d.t_train_end);
    case Split::valid: return stream_window(d, d.t_train_end + 1, d.t_valid_end);
    case Split::test: return stream_window(d, d.t_valid_end + 1, hi);
  }
  return {};
}

std::vector<Snapshot> stream_all(const TkgDataset& d) { return d.snapshots; }

TkgDataset truncate_horizon(TkgDataset d, double k_percent) {
  if (!(k_percent > 0.0) || k_percent > 100.0)
    throw std::invalid_argument("truncate_horizon: k must be in (0, 100]");
  if (!d.has_splits) throw std::logic_error("truncate_horizon: split boundaries not assigned");

  std::vector<int64_t> train_ts;
  for (const Snapshot& s : d.snapshots) {
    if (s.t > d.t_train_end) break;
    train_ts.push_back(s.t);
  }
  if (train_ts.empty()) return d;
  const std::size_t n = train_ts.size();
  std::size_t keep = static_cast<std::size_t>(std::lround(k_percent / 100.0 * double(n)));
  keep = std::clamp<std::size_t>(keep, 1, n);
  const int64_t cutoff = train_ts[n - keep];

  std::vector<Quadruple> kept;
  kept.reserve(d.facts.size());
  for (const Quadruple& f : d.facts)
    if (f.timestamp >= cutoff) kept.push_back(f);
  d.facts = std::move(kept);
  d.reindex();
  return d;
}

void write_vocab_tsv(const std::vector<std::string>& names, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open for writing");
  for (std::size_t i = 0; i < names.size(); ++i) out << i << '\t' << names[i] << '\n';
}

void write_slice_tags_csv(const TkgDataset& d, const std::vector<SliceTag>& tags,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open for writing");
  out << "fact_index,is_emerging,is_unknown\n";
  for (std::size_t i = 0; i < d.facts.size(); ++i)
    if (d.facts[i].timestamp > d.t_valid_end)
      out << i << ',' << int(tags[i].is_emerging) << ',' << int(tags[i].is_unknown) << '\n';
}

} // namespace tkg
