#include "tkg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "tkg/rng.hpp"

namespace tkg {

namespace {

// nearest cumulative timestamp count for a fractional target, ties toward the
// earlier boundary (the same rule the chronological split applies)
std::size_t nearest_count(double x, std::size_t lo, std::size_t hi) {
  const double f = std::floor(x);
  std::size_t c = (x - f <= 0.5) ? std::size_t(f) : std::size_t(f) + 1;
  return std::clamp(c, lo, hi);
}

} // namespace

SyntheticResult generate(const SyntheticSpec& spec) {
  if (spec.types == 0 || spec.entities_per_type == 0 || spec.relations_per_type == 0)
    throw std::invalid_argument("synthetic spec: counts must be positive");
  if (spec.timestamps == 0)
    throw std::invalid_argument("synthetic spec: need at least one timestamp");
  if (spec.drift_fraction < 0 || spec.drift_fraction > 1 || spec.emerging_fraction < 0 ||
      spec.emerging_fraction > 1 || spec.noise < 0 || spec.noise > 1)
    throw std::invalid_argument("synthetic spec: fractions must lie in [0,1]");

  const std::size_t total = spec.types * spec.entities_per_type;
  const int64_t T = int64_t(spec.timestamps);

  SyntheticResult res;
  res.spec = spec;
  res.entities.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    res.entities[i].type = i / spec.entities_per_type;
    res.entities[i].name =
        "t" + std::to_string(res.entities[i].type) + "_e" + std::to_string(i);
    res.entities[i].debut = 1;
  }

  Rng roles{derive_seed(spec.seed, "roles")};
  Rng pattern{derive_seed(spec.seed, "pattern")};
  Rng stream{derive_seed(spec.seed, "stream")};

  // role assignment from one shuffled order: emerging first, then drift
  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < total; ++i) order[i] = i;
  for (std::size_t i = total; i > 1; --i)
    std::swap(order[i - 1], order[roles.next_below(i)]);

  const std::size_t n_emerging =
      std::min<std::size_t>(total, std::size_t(std::llround(spec.emerging_fraction * double(total))));
  std::size_t n_drift = std::size_t(std::llround(spec.drift_fraction * double(total)));
  n_drift = std::min(n_drift, total - n_emerging);

  // boundary timestamps the default 5:2:3 split will choose
  const std::size_t c_train = nearest_count(0.5 * double(T), 1, spec.timestamps - 1);
  const std::size_t c_valid = nearest_count(0.7 * double(T), c_train + 1, spec.timestamps);
  const int64_t test_start = int64_t(c_valid) + 1 <= T ? int64_t(c_valid) + 1 : T;

  for (std::size_t i = 0; i < n_emerging; ++i) {
    SynthEntity& e = res.entities[order[i]];
    e.emerging = true;
    e.debut = test_start + int64_t(roles.next_below(uint64_t(T - test_start + 1)));
  }

  std::vector<std::size_t> non_emerging;
  for (std::size_t i = n_emerging; i < total; ++i) non_emerging.push_back(order[i]);

  // onsets span train, valid and test windows: early onsets make the
  // copy-from-memory behavior learnable in training, late onsets keep a pool
  // of switches no static fit can memorize, so online adaptation is measurable
  const int64_t onset_lo = std::max<int64_t>(1, std::llround(0.2 * double(T)));
  const int64_t onset_hi = std::max(onset_lo, int64_t(std::llround(0.9 * double(T))));
  // partners rotate in phases: concentration is sharp within a phase but the
  // pooled post-onset histogram stays mixed, so a memorized static mapping
  // cannot follow the entity while a recency-tracking memory can; a phase is
  // long enough for the subject's recent-fact window to refill with the
  // current partner before the next switch
  const int64_t phase_len = std::max<int64_t>(4, std::llround(0.2 * double(T)));
  std::vector<std::vector<std::vector<std::size_t>>> partner_phases(total);
  for (std::size_t i = 0; i < n_drift; ++i) {
    SynthEntity& e = res.entities[non_emerging[i]];
    e.drift = true;
    e.onset = onset_lo + int64_t(roles.next_below(uint64_t(onset_hi - onset_lo + 1)));
    const std::size_t phases = std::size_t((T - e.onset) / phase_len) + 1;
    auto& sched = partner_phases[non_emerging[i]];
    sched.resize(phases);
    // one partner per phase, never repeating the previous phase's partner,
    // so each switch invalidates whatever a static fit might have latched onto
    std::size_t prev = non_emerging[i];
    for (auto& ps : sched) {
      for (;;) {
        const std::size_t cand = non_emerging[roles.next_below(non_emerging.size())];
        if (cand == non_emerging[i] || cand == prev) continue;
        ps.push_back(cand);
        prev = cand;
        break;
      }
    }
  }

  // type pattern: per (type, relation) a target type and a relation weight
  std::vector<std::vector<std::size_t>> target_type(spec.types);
  std::vector<std::vector<double>> rel_cum(spec.types);
  for (std::size_t k = 0; k < spec.types; ++k) {
    double sum = 0.0;
    for (std::size_t j = 0; j < spec.relations_per_type; ++j) {
      target_type[k].push_back(std::size_t(pattern.next_below(spec.types)));
      sum += 0.5 + pattern.next_double();
      rel_cum[k].push_back(sum);
    }
  }

  const std::size_t fpt = spec.facts_per_timestamp > 0
                              ? spec.facts_per_timestamp
                              : std::max<std::size_t>(8, std::size_t(std::llround(0.3 * double(total))));

  // every non-emerging entity is guaranteed a training-window subject fact
  std::vector<std::vector<std::size_t>> guaranteed(spec.timestamps + 1);
  for (std::size_t i = 0; i < non_emerging.size(); ++i)
    guaranteed[(i % c_train) + 1].push_back(non_emerging[i]);

  auto eligible = [&](std::size_t e, int64_t t) { return res.entities[e].debut <= t; };

  auto pick_uniform_object = [&](std::size_t subj, int64_t t) {
    for (int tries = 0; tries < 200; ++tries) {
      const std::size_t cand = std::size_t(stream.next_below(total));
      if (cand != subj && eligible(cand, t)) return cand;
    }
    return (subj + 1) % total; // unreachable for any sane spec
  };

  auto pick_typed_object = [&](std::size_t subj, std::size_t tt, int64_t t) {
    for (int tries = 0; tries < 200; ++tries) {
      const std::size_t cand =
          tt * spec.entities_per_type + std::size_t(stream.next_below(spec.entities_per_type));
      if (cand != subj && eligible(cand, t)) return cand;
    }
    return pick_uniform_object(subj, t);
  };

  auto sample_fact = [&](std::size_t subj, int64_t t) {
    const SynthEntity& se = res.entities[subj];
    const std::size_t k = se.type;
    const double rr = stream.next_double() * rel_cum[k].back();
    std::size_t j = 0;
    while (j + 1 < spec.relations_per_type && rr > rel_cum[k][j]) ++j;

    std::size_t obj;
    if (stream.next_double() < spec.noise) {
      obj = pick_uniform_object(subj, t);
    } else if (se.drift && t >= se.onset) {
      const auto& sched = partner_phases[subj];
      const std::size_t phase =
          std::min(sched.size() - 1, std::size_t((t - se.onset) / phase_len));
      const auto& ps = sched[phase];
      if (stream.next_double() < 0.95)
        obj = ps[stream.next_below(ps.size())];
      else
        obj = pick_typed_object(subj, target_type[k][j], t);
    } else {
      obj = pick_typed_object(subj, target_type[k][j], t);
    }
    res.facts.push_back(RawFact{se.name, "t" + std::to_string(k) + "_r" + std::to_string(j),
                                res.entities[obj].name, t});
  };

  for (int64_t t = 1; t <= T; ++t) {
    std::size_t emitted = 0;
    for (const std::size_t s : guaranteed[std::size_t(t)]) {
      sample_fact(s, t);
      ++emitted;
    }
    for (std::size_t e = 0; e < total; ++e)
      if (res.entities[e].emerging && res.entities[e].debut == t) {
        sample_fact(e, t);
        ++emitted;
      }
    while (emitted < fpt) {
      // weighted subject pick: drifting entities appear 6x as often, dense
      // enough that their recent-fact window tracks the current phase
      std::vector<std::size_t> pool;
      std::vector<double> cum;
      double sum = 0.0;
      for (std::size_t e = 0; e < total; ++e) {
        if (!eligible(e, t)) continue;
        pool.push_back(e);
        sum += res.entities[e].drift ? 6.0 : 1.0;
        cum.push_back(sum);
      }
      const double r = stream.next_double() * sum;
      std::size_t idx = 0;
      while (idx + 1 < pool.size() && r > cum[idx]) ++idx;
      sample_fact(pool[idx], t);
      ++emitted;
    }
  }
  return res;
}

void write_tsv(const SyntheticResult& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& f : r.facts)
    out << f.subject << '\t' << f.relation << '\t' << f.object << '\t' << f.t << '\n';
}

void write_annotations_csv(const SyntheticResult& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "entity,type,drift,onset\n";
  for (const auto& e : r.entities)
    out << e.name << ',' << e.type << ',' << int(e.drift) << ',' << e.onset << '\n';
}

TkgDataset to_dataset(const SyntheticResult& r) {
  TkgDataset d;
  auto intern = [](std::vector<std::string>& names,
                   std::unordered_map<std::string, uint32_t>& ids, const std::string& s) {
    const auto it = ids.find(s);
    if (it != ids.end()) return it->second;
    const uint32_t id = uint32_t(names.size());
    names.push_back(s);
    ids.emplace(s, id);
    return id;
  };
  for (const auto& f : r.facts) {
    Quadruple q;
    q.subject = intern(d.entity_names, d.entity_ids, f.subject);
    q.relation = intern(d.relation_names, d.relation_ids, f.relation);
    q.object = intern(d.entity_names, d.entity_ids, f.object);
    q.timestamp = f.t;
    d.facts.push_back(q);
  }
  std::stable_sort(d.facts.begin(), d.facts.end(),
                   [](const Quadruple& a, const Quadruple& b) { return a.timestamp < b.timestamp; });
  d.reindex();
  return d;
}

} // namespace tkg
