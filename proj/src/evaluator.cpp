#include "tkg/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace tkg {

const std::vector<uint64_t> kDefaultDepthEdges = {1, 2, 4, 8};

static uint64_t sr_key(uint32_t s, uint32_t r) { return (uint64_t(s) << 32) | uint64_t(r); }

void FilterIndex::build(const TkgDataset& ds) {
  at_t_.clear();
  any_t_.clear();
  for (const auto& f : ds.facts) {
    const uint64_t k = sr_key(f.subject, f.relation);
    at_t_[k][f.timestamp].push_back(f.object);
    any_t_[k].push_back(f.object);
  }
  for (auto& [k, by_t] : at_t_)
    for (auto& [t, v] : by_t) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
  for (auto& [k, v] : any_t_) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
}

const std::vector<uint32_t>* FilterIndex::objects_at(uint32_t s, uint32_t r, int64_t t) const {
  const auto it = at_t_.find(sr_key(s, r));
  if (it == at_t_.end()) return nullptr;
  const auto jt = it->second.find(t);
  return jt == it->second.end() ? nullptr : &jt->second;
}

const std::vector<uint32_t>* FilterIndex::objects_any(uint32_t s, uint32_t r) const {
  const auto it = any_t_.find(sr_key(s, r));
  return it == any_t_.end() ? nullptr : &it->second;
}

std::size_t filtered_rank(const std::vector<double>& scores, uint32_t true_obj,
                          const std::vector<uint32_t>& filter_objects) {
  const double st = scores[true_obj];
  std::vector<char> skip(scores.size(), 0);
  skip[true_obj] = 1;
  for (const uint32_t f : filter_objects) skip[f] = 1;
  std::size_t rank = 1;
  for (std::size_t e = 0; e < scores.size(); ++e) {
    if (skip[e]) continue;
    if (scores[e] >= st) ++rank; // pessimistic: tied competitors outrank
  }
  return rank;
}

void RankReport::compute_aggregates() {
  all = emerging = unknown = SliceAgg{};
  auto fold = [](SliceAgg& a, const QueryRecord& r) {
    a.mrr += r.rr;
    a.hits3 += r.rank <= 3 ? 1.0 : 0.0;
    a.hits10 += r.rank <= 10 ? 1.0 : 0.0;
    a.n += 1;
  };
  for (const auto& r : rows) {
    fold(all, r);
    if (r.emerging) fold(emerging, r);
    if (r.unknown) fold(unknown, r);
  }
  auto finish = [](SliceAgg& a) {
    if (a.n == 0) return;
    a.mrr /= double(a.n);
    a.hits3 /= double(a.n);
    a.hits10 /= double(a.n);
  };
  finish(all);
  finish(emerging);
  finish(unknown);
}

std::vector<Snapshot> split_snapshots(const TkgDataset& ds, Split split) {
  std::vector<Snapshot> out;
  for (const auto& s : ds.snapshots)
    if (ds.split_of(s.t) == split) out.push_back(s);
  return out;
}

void replay_window(Model& model, const std::vector<Snapshot>& snaps) {
  StepOptions so;
  so.score = false;
  so.grads = false;
  for (const auto& snap : snaps) {
    model.process_timestamp(snap, so);
    model.commit_timestamp(snap);
  }
}

void replay_split(Model& model, Split split) {
  replay_window(model, split_snapshots(*model.ds, split));
}

RankReport evaluate(Model& model, Split split, const FilterIndex& fidx,
                    const EvalOptions& opts) {
  const TkgDataset& ds = *model.ds;
  if (!ds.has_splits) throw std::logic_error("evaluate requires split boundaries");
  const std::size_t n = ds.num_entities();

  std::vector<uint64_t> train_depth(n, 0);
  std::vector<char> in_train(n, 0);
  for (const auto& f : ds.facts) {
    if (f.timestamp > ds.t_train_end) break;
    train_depth[f.subject] += 1;
    in_train[f.subject] = 1;
    in_train[f.object] = 1;
  }

  RankReport rep;
  std::vector<uint64_t> split_updates(n, 0);
  std::size_t qidx = 0;
  static const std::vector<uint32_t> kNoFilter;

  StepOptions so;
  so.score = true;
  so.grads = false;
  so.zero_gate = opts.mode == EvalMode::zero_gate;
  so.capture_scores = true;

  for (const auto& snap : split_snapshots(ds, split)) {
    StepResult sr = model.process_timestamp(snap, so);
    for (const auto& q : sr.queries) {
      const Quadruple& f = ds.facts[q.fact_index];
      QueryRecord rec;
      rec.query_index = qidx++;
      rec.subject = f.subject;
      rec.relation = f.relation;
      rec.object = f.object;
      rec.t = f.timestamp;
      const std::vector<uint32_t>* filt = opts.filter_all_timestamps
                                              ? fidx.objects_any(f.subject, f.relation)
                                              : fidx.objects_at(f.subject, f.relation, f.timestamp);
      rec.rank = filtered_rank(q.scores, f.object, filt ? *filt : kNoFilter);
      rec.rr = 1.0 / double(rec.rank);
      rec.emerging = ds.first_appearance[f.subject] == f.timestamp;
      rec.unknown = !in_train[f.subject] || !in_train[f.object];
      rec.train_depth = train_depth[f.subject];
      rec.test_updates = split_updates[f.subject];
      rec.interactions = q.tau_at_scoring;
      rec.gate_mean = q.gate_mean;
      rep.rows.push_back(rec);
      split_updates[f.subject] += 1; // the query's own update lands right after scoring
    }
    model.commit_timestamp(snap);
  }
  rep.compute_aggregates();
  return rep;
}

std::vector<DeltaBin> delta_rr_by(const RankReport& a, const RankReport& b,
                                  const std::string& axis,
                                  const std::vector<uint64_t>& edges) {
  if (a.rows.size() != b.rows.size())
    throw std::invalid_argument("delta_rr: reports cover different query sets");
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto& x = a.rows[i];
    const auto& y = b.rows[i];
    if (x.subject != y.subject || x.relation != y.relation || x.object != y.object ||
        x.t != y.t)
      throw std::invalid_argument("delta_rr: reports cover different query sets");
  }
  const bool by_updates = axis == "test_updates";
  if (!by_updates && axis != "train_depth")
    throw std::invalid_argument("delta_rr: unknown axis '" + axis + "'");

  // edges e1<e2<...<ek make bins [0,e1), [e1,e2), ..., [ek, inf)
  std::vector<DeltaBin> bins;
  auto label = [](uint64_t lo, uint64_t hi, bool open) {
    if (open) return std::to_string(lo) + "+";
    if (hi == lo + 1) return std::to_string(lo);
    return std::to_string(lo) + "-" + std::to_string(hi - 1);
  };
  uint64_t lo = 0;
  for (const uint64_t e : edges) {
    bins.push_back(DeltaBin{label(lo, e, false), 0.0, 0});
    lo = e;
  }
  bins.push_back(DeltaBin{label(lo, 0, true), 0.0, 0});

  auto bin_of = [&edges](uint64_t v) {
    std::size_t i = 0;
    while (i < edges.size() && v >= edges[i]) ++i;
    return i;
  };
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const uint64_t v = by_updates ? a.rows[i].test_updates : a.rows[i].train_depth;
    DeltaBin& bin = bins[bin_of(v)];
    bin.mean_delta += a.rows[i].rr - b.rows[i].rr;
    bin.count += 1;
  }
  for (auto& bin : bins)
    if (bin.count > 0) bin.mean_delta /= double(bin.count);
  return bins;
}

// ==================== writers ====================

static std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  return out;
}

static std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_report_csv(const RankReport& r, const std::string& path) {
  auto out = open_out(path);
  out << "query_index,subject,relation,object,t,rank,rr,emerging,unknown,"
         "train_depth,test_updates,gate_mean\n";
  for (const auto& q : r.rows)
    out << q.query_index << ',' << q.subject << ',' << q.relation << ',' << q.object << ','
        << q.t << ',' << q.rank << ',' << fmt(q.rr) << ',' << int(q.emerging) << ','
        << int(q.unknown) << ',' << q.train_depth << ',' << q.test_updates << ','
        << fmt(q.gate_mean) << '\n';
}

RankReport read_report_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open report: " + path);
  RankReport rep;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue; // header
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i)
      if (i == line.size() || line[i] == ',') {
        f.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    if (f.size() != 12)
      throw ParseError(path + " line " + std::to_string(lineno) +
                       ": expected 12 columns, got " + std::to_string(f.size()));
    try {
      QueryRecord q;
      q.query_index = std::stoull(f[0]);
      q.subject = uint32_t(std::stoul(f[1]));
      q.relation = uint32_t(std::stoul(f[2]));
      q.object = uint32_t(std::stoul(f[3]));
      q.t = std::stoll(f[4]);
      q.rank = std::stoull(f[5]);
      q.rr = std::stod(f[6]);
      q.emerging = f[7] == "1";
      q.unknown = f[8] == "1";
      q.train_depth = std::stoull(f[9]);
      q.test_updates = std::stoull(f[10]);
      q.gate_mean = std::stod(f[11]);
      rep.rows.push_back(q);
    } catch (const std::exception&) {
      throw ParseError(path + " line " + std::to_string(lineno) + ": bad field value");
    }
  }
  rep.compute_aggregates();
  return rep;
}

void write_aggregates_json(const RankReport& r, const std::string& path) {
  auto slice = [](const SliceAgg& a) {
    return nlohmann::json{{"mrr", a.mrr}, {"hits3", a.hits3}, {"hits10", a.hits10}, {"n", a.n}};
  };
  const nlohmann::json j{
      {"all", slice(r.all)}, {"emerging", slice(r.emerging)}, {"unknown", slice(r.unknown)}};
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

void write_gate_trace_csv(const RankReport& r, const TkgDataset& ds, const std::string& path) {
  auto out = open_out(path);
  out << "query_index,subject,t,interactions,gate_mean\n";
  for (const auto& q : r.rows)
    out << q.query_index << ',' << ds.entity_names[q.subject] << ',' << q.t << ','
        << q.interactions << ',' << fmt(q.gate_mean) << '\n';
}

void write_entity_gate_series_csv(const RankReport& r, const TkgDataset& ds,
                                  const std::vector<std::string>& entity_names,
                                  const std::string& path) {
  std::vector<uint32_t> ids;
  for (const auto& name : entity_names) {
    const auto it = ds.entity_ids.find(name);
    if (it == ds.entity_ids.end())
      throw std::invalid_argument("gate series: unknown entity '" + name + "'");
    ids.push_back(it->second);
  }
  auto out = open_out(path);
  out << "entity,t,query_index,gate_mean\n";
  for (const auto& q : r.rows)
    for (const uint32_t id : ids)
      if (q.subject == id)
        out << ds.entity_names[id] << ',' << q.t << ',' << q.query_index << ','
            << fmt(q.gate_mean) << '\n';
}

void write_delta_bins_csv(const std::vector<DeltaBin>& bins, const std::string& path) {
  auto out = open_out(path);
  out << "bin,mean_delta_rr,count\n";
  for (const auto& b : bins) out << b.label << ',' << fmt(b.mean_delta) << ',' << b.count << '\n';
}

} // namespace tkg
