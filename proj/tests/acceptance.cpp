// End-to-end acceptance suite. Each criterion prints one [PASS]/[FAIL] line;
// the process exits nonzero if any criterion fails. Progress goes to stderr.
#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tkg/evaluator.hpp"
#include "tkg/rng.hpp"
#include "tkg/synth.hpp"
#include "tkg/trainer.hpp"

using namespace tkg;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string text;
};

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

bool bits_equal(double a, double b) {
  return std::bit_cast<uint64_t>(a) == std::bit_cast<uint64_t>(b);
}

fs::path work_dir() {
  const fs::path p = fs::temp_directory_path() / "tkg_accept";
  fs::create_directories(p);
  return p;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return std::string(buf);
}

TkgDataset dataset_from_lines(const std::string& tag, const std::string& body) {
  const fs::path p = work_dir() / (tag + ".tsv");
  std::ofstream(p) << body;
  return augment_inverse(load_tsv(p.string()));
}

// ==================== criterion 1 ====================
// every parameter entry of the training gradient against high-order central
// differences of the per-timestamp loss, with the incoming state held fixed
Verdict criterion1() {
  const double t0 = now_s();
  SyntheticSpec sp;
  sp.types = 1;
  sp.entities_per_type = 5;
  sp.relations_per_type = 3;
  sp.timestamps = 10;
  sp.drift_fraction = 0.2;
  sp.emerging_fraction = 0.0;
  sp.noise = 0.1;
  sp.facts_per_timestamp = 5;
  sp.seed = 12;
  const TkgDataset ds = augment_inverse(to_dataset(generate(sp)));
  const EmbeddingSource emb = hash_embeddings(ds, 16, 99);

  ModelConfig mc;
  mc.d = 16;
  mc.k_code = 4;
  mc.conv_filters = 8;
  mc.seed = 13;
  Model m(mc, &ds, &emb);
  m.reset_state();

  StepOptions silent;
  silent.score = false;
  for (std::size_t i = 0; i < 7; ++i) {
    m.process_timestamp(ds.snapshots[i], silent);
    m.commit_timestamp(ds.snapshots[i]);
  }
  const Snapshot& snap = ds.snapshots[7];
  const auto blob = m.bank.snapshot();

  StepOptions wg;
  wg.grads = true;
  const StepResult base = m.process_timestamp(snap, wg);
  m.bank.restore(blob);

  auto loss_at = [&]() {
    const StepResult r = m.process_timestamp(snap, {});
    m.bank.restore(blob);
    return r.loss;
  };

  double worst = 0.0;
  std::string worst_at = "-";
  std::size_t checked = 0;
  for (std::size_t pi = 0; pi < m.params.size(); ++pi) {
    auto& data = m.params[pi].value.data;
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double orig = data[j];
      const double h = 1e-3 * std::max(1.0, std::abs(orig));
      data[j] = orig + h;
      const double l1 = loss_at();
      data[j] = orig - h;
      const double l2 = loss_at();
      data[j] = orig + 2 * h;
      const double l3 = loss_at();
      data[j] = orig - 2 * h;
      const double l4 = loss_at();
      data[j] = orig;
      const double fd = (8.0 * (l1 - l2) - (l3 - l4)) / (12.0 * h);
      const double g = base.grads[pi].data[j];
      const double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-6});
      if (rel > worst) {
        worst = rel;
        worst_at = m.params[pi].name + "[" + std::to_string(j) + "]";
      }
      ++checked;
    }
  }
  const double secs = now_s() - t0;
  const bool ok = worst < 1e-4 && secs < 60.0;
  return {ok, fmt("all %zu parameter entries match central differences, worst rel %.2e at %s "
                  "(limit 1e-4, %.1fs)",
                  checked, worst, worst_at.c_str(), secs)};
}

// ==================== criterion 2 ====================
// first timestamp of 20 random streams: full vs zero-gate scores bit-equal
Verdict criterion2() {
  const double t0 = now_s();
  std::size_t queries = 0;
  for (int i = 0; i < 20; ++i) {
    SyntheticSpec sp;
    sp.types = 2;
    sp.entities_per_type = 3 + std::size_t(i % 3);
    sp.relations_per_type = 2;
    sp.timestamps = 5;
    sp.drift_fraction = 0.2;
    sp.emerging_fraction = 0.0;
    sp.noise = 0.1;
    sp.facts_per_timestamp = 6;
    sp.seed = 1000 + uint64_t(i);
    const TkgDataset ds = augment_inverse(to_dataset(generate(sp)));
    const EmbeddingSource emb = hash_embeddings(ds, 16, 7000 + uint64_t(i));
    ModelConfig mc;
    mc.d = 16;
    mc.k_code = 4;
    mc.conv_filters = 8;
    mc.seed = 500 + uint64_t(i);
    Model m(mc, &ds, &emb);
    m.reset_state();
    const auto blob = m.bank.snapshot();

    StepOptions full;
    full.capture_scores = true;
    const StepResult a = m.process_timestamp(ds.snapshots[0], full);
    m.bank.restore(blob);
    StepOptions zg = full;
    zg.zero_gate = true;
    const StepResult b = m.process_timestamp(ds.snapshots[0], zg);
    m.bank.restore(blob);

    if (a.queries.size() != b.queries.size())
      return {false, fmt("stream %d produced different query counts", i)};
    for (std::size_t q = 0; q < a.queries.size(); ++q) {
      if (a.queries[q].tau_at_scoring != 0)
        return {false, fmt("stream %d query %zu was not cold", i, q)};
      if (!bits_equal(a.queries[q].ce, b.queries[q].ce))
        return {false, fmt("stream %d query %zu: loss bits differ", i, q)};
      const auto& sa = a.queries[q].scores;
      const auto& sb = b.queries[q].scores;
      if (sa.size() != sb.size() ||
          std::memcmp(sa.data(), sb.data(), sa.size() * sizeof(double)) != 0)
        return {false, fmt("stream %d query %zu: score bits differ", i, q)};
      ++queries;
    }
  }
  return {true, fmt("%zu cold queries across 20 streams score bit-equal in full and "
                    "zero-gate modes (%.1fs)",
                    queries, now_s() - t0)};
}

// ==================== criterion 3 ====================
// memory recurrence vs the explicit weighted sum over measured signals
Verdict criterion3() {
  const double t0 = now_s();
  const std::size_t n_seq = 100, T = 64, d = 8;
  std::string body;
  for (std::size_t t = 1; t <= T; ++t)
    for (std::size_t i = 0; i < n_seq; ++i)
      body += "a" + std::to_string(i) + "\tr\tb" + std::to_string((i + t) % n_seq) + "\t" +
              std::to_string(t) + "\n";
  const TkgDataset ds = dataset_from_lines("closed_form", body);
  const EmbeddingSource emb = hash_embeddings(ds, d, 31);

  ModelConfig mc;
  mc.d = d;
  mc.k_code = 4;
  mc.conv_filters = 4;
  mc.seed = 77;
  Model main(mc, &ds, &emb);
  Model probe(mc, &ds, &emb);
  const int rho_i = main.find_param("decay_logit");
  probe.params[rho_i].value.data[0] = 0.0; // probe decay 1/2: update = x/2 exactly

  std::vector<uint32_t> subj(n_seq);
  for (std::size_t i = 0; i < n_seq; ++i) subj[i] = ds.entity_ids.at("a" + std::to_string(i));

  // measure the signal sequence x_t per subject once; it does not depend on rho
  std::vector<double> xs(n_seq * T * d);
  StepOptions silent;
  silent.score = false;
  probe.reset_state();
  for (std::size_t k = 0; k < T; ++k) {
    probe.bank.reset();
    probe.process_timestamp(ds.snapshots[k], silent);
    for (std::size_t i = 0; i < n_seq; ++i)
      for (std::size_t j = 0; j < d; ++j)
        xs[(i * T + k) * d + j] = 2.0 * probe.bank.m(subj[i])[j];
    probe.commit_timestamp(ds.snapshots[k]);
  }

  const double rhos[] = {-4, -3, -2, -1, -0.5, 0, 0.5, 1, 2, 4};
  double worst = 0.0;
  for (const double rho : rhos) {
    main.params[rho_i].value.data[0] = rho;
    const double alpha = 1.0 / (1.0 + std::exp(-rho));
    main.reset_state();
    for (std::size_t k = 0; k < T; ++k) {
      main.process_timestamp(ds.snapshots[k], silent);
      for (std::size_t i = 0; i < n_seq; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          double sum = 0.0; // (1-a) * sum_i a^(k-i) x_i, powers computed directly
          for (std::size_t u = 0; u <= k; ++u)
            sum += std::pow(alpha, double(k - u)) * xs[(i * T + u) * d + j];
          sum *= (1.0 - alpha);
          worst = std::max(worst, std::abs(main.bank.m(subj[i])[j] - sum));
        }
      }
      main.commit_timestamp(ds.snapshots[k]);
    }
  }
  const double secs = now_s() - t0;
  const bool ok = worst < 1e-10 && secs < 60.0;
  return {ok, fmt("recurrence matches the unrolled weighted sum, worst abs dev %.2e over "
                  "100 sequences x 10 decays x tau<=64 (limit 1e-10, %.1fs)",
                  worst, secs)};
}

// ==================== criterion 4 ====================
// deleting facts after a cut leaves earlier losses and scores bit-unchanged
Verdict criterion4() {
  const double t0 = now_s();
  SyntheticSpec sp;
  sp.types = 2;
  sp.entities_per_type = 5;
  sp.relations_per_type = 2;
  sp.timestamps = 20;
  sp.drift_fraction = 0.3;
  sp.emerging_fraction = 0.0;
  sp.noise = 0.1;
  sp.facts_per_timestamp = 8;
  sp.seed = 44;
  const TkgDataset ds = augment_inverse(to_dataset(generate(sp)));
  const EmbeddingSource emb = hash_embeddings(ds, 16, 71);
  ModelConfig mc;
  mc.d = 16;
  mc.k_code = 4;
  mc.conv_filters = 8;
  mc.seed = 21;

  struct TsRecord {
    double loss;
    std::vector<double> ces;
    std::vector<std::vector<double>> scores;
  };
  auto run_stream = [&](const TkgDataset& dset) {
    Model m(mc, &dset, &emb);
    m.reset_state();
    StepOptions so;
    so.capture_scores = true;
    std::vector<TsRecord> recs;
    for (const auto& snap : dset.snapshots) {
      const StepResult r = m.process_timestamp(snap, so);
      TsRecord rec;
      rec.loss = r.loss;
      for (const auto& q : r.queries) {
        rec.ces.push_back(q.ce);
        rec.scores.push_back(q.scores);
      }
      recs.push_back(std::move(rec));
      m.commit_timestamp(snap);
    }
    return recs;
  };

  const auto base = run_stream(ds);
  std::size_t compared = 0;
  for (const int64_t cut : {3, 7, 11, 15, 18}) {
    TkgDataset trunc = ds;
    std::erase_if(trunc.facts, [&](const Quadruple& f) { return f.timestamp > cut; });
    trunc.reindex();
    const auto got = run_stream(trunc);
    for (std::size_t k = 0; k < got.size(); ++k) {
      if (ds.snapshots[k].t > cut) break;
      if (!bits_equal(base[k].loss, got[k].loss))
        return {false, fmt("cut %lld: loss bits changed at t=%lld", (long long)cut,
                           (long long)ds.snapshots[k].t)};
      if (base[k].ces.size() != got[k].ces.size())
        return {false, fmt("cut %lld: query count changed", (long long)cut)};
      for (std::size_t q = 0; q < got[k].ces.size(); ++q) {
        if (!bits_equal(base[k].ces[q], got[k].ces[q]) ||
            base[k].scores[q].size() != got[k].scores[q].size() ||
            std::memcmp(base[k].scores[q].data(), got[k].scores[q].data(),
                        got[k].scores[q].size() * sizeof(double)) != 0)
          return {false, fmt("cut %lld: scores changed at t=%lld query %zu", (long long)cut,
                             (long long)ds.snapshots[k].t, q)};
        ++compared;
      }
    }
  }
  return {true, fmt("%zu queries before 5 cut points keep bit-identical losses and scores "
                    "after deleting later facts (%.1fs)",
                    compared, now_s() - t0)};
}

// ==================== criterion 5 ====================
// truncated decay gradient vs an analytic oracle; removing the truncation
// changes the gradient
Verdict criterion5() {
  const double t0 = now_s();
  const TkgDataset ds = dataset_from_lines("detach", "a\tr\tb\t1\nc\tr\td\t1\n"
                                                     "a\tr\tb\t2\nc\tr\td\t2\n"
                                                     "a\tr\tb\t3\nc\tr\td\t3\n");
  const std::size_t n = ds.num_entities(), d = 8;
  const EmbeddingSource emb = hash_embeddings(ds, d, 3);

  ModelConfig mc;
  mc.d = d;
  mc.k_code = 2;
  mc.decoder = DecoderKind::bilinear;
  mc.disable_prior = true;
  mc.constant_gate = true;
  mc.constant_gate_value = 0.6;
  mc.lambda_vq = 0.0;
  mc.seed = 33;
  const double c = mc.constant_gate_value;
  const double rho = 0.3;
  const double alpha = 1.0 / (1.0 + std::exp(-rho));
  const double sig_prime = alpha * (1.0 - alpha);

  Model m(mc, &ds, &emb);
  const int rho_i = m.find_param("decay_logit");
  m.params[rho_i].value.data[0] = rho;

  // tape gradient: accumulate the per-timestamp decay gradient
  m.reset_state();
  double g_tape = 0.0;
  StepOptions wg;
  wg.grads = true;
  for (const auto& snap : ds.snapshots) {
    const StepResult r = m.process_timestamp(snap, wg);
    g_tape += r.grads[rho_i].data[0];
    m.commit_timestamp(snap);
  }

  // analytic pass, measuring signals with a probe whose decay is exactly 1/2
  Model probe(mc, &ds, &emb);
  probe.params[rho_i].value.data[0] = 0.0;
  m.reset_state();
  probe.reset_state();
  const int rel_i = m.find_param("relation_emb");
  double g_ana = 0.0;
  StepOptions cap;
  cap.capture_scores = true;
  StepOptions silent;
  silent.score = false;
  for (const auto& snap : ds.snapshots) {
    std::vector<double> m0(n * d);
    std::copy(m.bank.m(0), m.bank.m(0) + n * d, m0.data());

    probe.bank.reset();
    probe.process_timestamp(snap, silent);
    std::map<uint32_t, std::vector<double>> x_of;
    for (std::size_t fi = snap.lo; fi < snap.hi; ++fi) {
      const uint32_t s = ds.facts[fi].subject;
      x_of[s] = std::vector<double>(probe.bank.m(s), probe.bank.m(s) + d);
      for (double& v : x_of[s]) v *= 2.0;
    }
    probe.commit_timestamp(snap);

    const StepResult r = m.process_timestamp(snap, cap);
    const double qn = double(r.queries.size());
    for (const auto& q : r.queries) {
      const Quadruple& f = ds.facts[q.fact_index];
      const uint32_t s = f.subject;
      // softmax over the captured logits
      std::vector<double> p = q.scores;
      const double mx = *std::max_element(p.begin(), p.end());
      double z = 0.0;
      for (double& v : p) z += (v = std::exp(v - mx));
      for (double& v : p) v /= z;
      p[f.object] -= 1.0;

      const double* h_r = &m.params[rel_i].value.data[std::size_t(f.relation) * d];
      const double* m_new = m.bank.m(s); // one fact per subject per timestamp
      std::vector<double> zs(d), u(d);
      for (std::size_t j = 0; j < d; ++j) {
        zs[j] = (1 - c) * emb.row(s)[j] + c * m_new[j];
        u[j] = zs[j] * h_r[j];
      }
      double contrib = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        double acc = p[s] * zs[j];
        for (uint32_t e = 0; e < n; ++e) {
          if (e == s) continue;
          acc += p[e] * ((1 - c) * emb.row(e)[j] + c * m0[e * d + j]);
        }
        const double dz = h_r[j] * acc + p[s] * u[j];
        contrib += c * dz * (m0[s * d + j] - x_of[s][j]);
      }
      g_ana += sig_prime * contrib / qn;
    }
    m.commit_timestamp(snap);
  }

  // the same gradient from a single unrolled tape, and the untruncated variant
  m.reset_state();
  const double g_unrolled = m.unrolled_decay_grad(ds.snapshots, true);
  m.reset_state();
  const double g_full = m.unrolled_decay_grad(ds.snapshots, false);

  const double dev_ana = std::abs(g_tape - g_ana);
  const double dev_unrolled = std::abs(g_tape - g_unrolled);
  const double dev_detach = std::abs(g_full - g_tape);
  const bool ok = dev_ana < 1e-10 && dev_unrolled < 1e-10 && dev_detach > 1e-9;
  return {ok, fmt("decay gradient %.6f matches the analytic oracle (dev %.1e) and the "
                  "unrolled tape (dev %.1e); without truncation it moves by %.1e (%.1fs)",
                  g_tape, dev_ana, dev_unrolled, dev_detach, now_s() - t0)};
}

// ==================== criterion 6 ====================
std::size_t rank_oracle(const std::vector<double>& scores, uint32_t true_obj,
                        const std::vector<uint32_t>& filter) {
  std::vector<double> comp;
  for (uint32_t e = 0; e < scores.size(); ++e) {
    if (e == true_obj) continue;
    if (std::find(filter.begin(), filter.end(), e) != filter.end()) continue;
    comp.push_back(scores[e]);
  }
  std::sort(comp.begin(), comp.end(), std::greater<double>());
  std::size_t pos = 0;
  while (pos < comp.size() && comp[pos] >= scores[true_obj]) ++pos;
  return pos + 1;
}

Verdict criterion6() {
  const double t0 = now_s();
  Rng rng(999);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.next_below(7);
    std::vector<double> scores(n);
    for (auto& s : scores)
      s = rng.next_below(2) == 0 ? double(rng.next_below(4)) * 0.5 : rng.next_normal();
    const uint32_t true_obj = uint32_t(rng.next_below(n));
    std::vector<uint32_t> filter;
    for (uint32_t e = 0; e < n; ++e)
      if (e != true_obj && rng.next_below(4) == 0) filter.push_back(e);
    if (filtered_rank(scores, true_obj, filter) != rank_oracle(scores, true_obj, filter))
      return {false, fmt("trial %d disagrees with the re-ranking oracle", trial)};
  }
  return {true, fmt("1000 randomized configurations match the brute-force re-ranking "
                    "oracle exactly (%.1fs)",
                    now_s() - t0)};
}

// ==================== criteria 7, 8, 9, 12: shared experiment suite =========
struct SeedPack {
  SyntheticResult raw;
  TkgDataset ds;
  EmbeddingSource emb;
};

SeedPack make_drift(uint64_t seed) {
  SyntheticSpec sp; // defaults are the drift-task shape: 4x50 entities, 60 steps
  sp.seed = seed;
  SeedPack p;
  p.raw = generate(sp);
  p.ds = chronological_split(augment_inverse(to_dataset(p.raw)), 0.5, 0.2, 0.3);
  p.emb = hash_embeddings(p.ds, 32, derive_seed(seed, "emb"));
  return p;
}

struct FitEval {
  RankReport full, zero;
  double seconds = 0.0;
  uint64_t bank_checksum = 0;
};

FitEval run_one(const SeedPack& pk, ModelConfig mc, std::size_t epochs, bool want_zero,
                bool want_checksum) {
  const double t0 = now_s();
  Model m(mc, &pk.ds, &pk.emb);
  TrainConfig tc;
  tc.max_epochs = epochs;
  tc.patience = epochs; // fixed-budget fits; best-epoch restore still applies
  tc.lr = 3e-3; // the copy circuit through the chain encoder needs the larger step to form within the epoch budget
  tc.early_metric = "all";
  fit(m, tc);

  FilterIndex fidx;
  fidx.build(pk.ds);
  EvalOptions eo;
  auto position = [&] {
    m.reset_state();
    replay_split(m, Split::train);
    replay_split(m, Split::valid);
  };
  FitEval out;
  position();
  eo.mode = EvalMode::full;
  out.full = evaluate(m, Split::test, fidx, eo);
  if (want_zero) {
    position();
    eo.mode = EvalMode::zero_gate;
    out.zero = evaluate(m, Split::test, fidx, eo);
  }
  if (want_checksum) {
    m.reset_state();
    replay_window(m, pk.ds.snapshots);
    out.bank_checksum = m.bank.checksum();
  }
  out.seconds = now_s() - t0;
  return out;
}

FitEval run_horizon(const SeedPack& pk, const TkgDataset& dsh, ModelConfig mc,
                    std::size_t epochs) {
  SeedPack view;
  view.ds = dsh;
  view.emb = pk.emb; // vocabulary is preserved by horizon truncation
  return run_one(view, mc, epochs, false, false);
}

struct DriftSuite {
  std::vector<uint64_t> seeds = {301, 302, 303};
  std::vector<SeedPack> packs;
  std::vector<FitEval> ai, si, gru, attn;
  std::vector<FitEval> h25_ai, h25_si, h50_ai, h50_si;
  double seed_seconds_max = 0.0; // slowest ai+si pair
  double op_seconds = 0.0;       // gru+attention portion
  double horizon_seconds = 0.0;  // 25/50 percent portion
  uint64_t checksum_before = 0, checksum_after = 0;
};

DriftSuite run_drift_suite() {
  DriftSuite s;
  for (const uint64_t seed : s.seeds) s.packs.push_back(make_drift(seed));

  for (std::size_t i = 0; i < s.seeds.size(); ++i) {
    ModelConfig mc;
    mc.seed = s.seeds[i];
    const FitEval a = run_one(s.packs[i], mc, 50, true, false);
    ModelConfig mcs = mc;
    mcs.disable_memory = true;
    const FitEval b = run_one(s.packs[i], mcs, 50, false, false);
    std::fprintf(stderr, "[info] drift seed %llu: adaptive mrr %.4f, static mrr %.4f "
                         "(%.0fs + %.0fs)\n",
                 (unsigned long long)s.seeds[i], a.full.all.mrr, b.full.all.mrr, a.seconds,
                 b.seconds);
    s.seed_seconds_max = std::max(s.seed_seconds_max, a.seconds + b.seconds);
    s.ai.push_back(a);
    s.si.push_back(b);
  }

  const double t_op = now_s();
  for (std::size_t i = 0; i < s.seeds.size(); ++i) {
    ModelConfig mc;
    mc.seed = s.seeds[i];
    mc.op = OperatorKind::gru;
    s.gru.push_back(run_one(s.packs[i], mc, 50, false, false));
    mc.op = OperatorKind::attention;
    s.attn.push_back(run_one(s.packs[i], mc, 50, false, false));
    std::fprintf(stderr, "[info] operators seed %llu: gru mrr %.4f, attention mrr %.4f\n",
                 (unsigned long long)s.seeds[i], s.gru.back().full.all.mrr,
                 s.attn.back().full.all.mrr);
  }
  s.op_seconds = now_s() - t_op;

  {
    ModelConfig mc;
    mc.seed = s.seeds[0];
    mc.timing = Timing::before;
    s.checksum_before = run_one(s.packs[0], mc, 10, false, true).bank_checksum;
    mc.timing = Timing::after;
    s.checksum_after = run_one(s.packs[0], mc, 10, false, true).bank_checksum;
  }

  const double t_h = now_s();
  for (std::size_t i = 0; i < s.seeds.size(); ++i) {
    for (const double pct : {25.0, 50.0}) {
      const TkgDataset dsh = truncate_horizon(s.packs[i].ds, pct);
      ModelConfig mc;
      mc.seed = s.seeds[i];
      const FitEval a = run_horizon(s.packs[i], dsh, mc, 50);
      ModelConfig mcs = mc;
      mcs.disable_memory = true;
      const FitEval b = run_horizon(s.packs[i], dsh, mcs, 50);
      std::fprintf(stderr, "[info] horizon %.0f%% seed %llu: adaptive %.4f, static %.4f\n",
                   pct, (unsigned long long)s.seeds[i], a.full.all.mrr, b.full.all.mrr);
      (pct == 25.0 ? s.h25_ai : s.h50_ai).push_back(a);
      (pct == 25.0 ? s.h25_si : s.h50_si).push_back(b);
    }
  }
  s.horizon_seconds = now_s() - t_h;
  return s;
}

double mean_gap(const std::vector<FitEval>& a, const std::vector<FitEval>& b) {
  double g = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) g += a[i].full.all.mrr - b[i].full.all.mrr;
  return g / double(a.size());
}

Verdict criterion7(const DriftSuite& s) {
  const double gap = mean_gap(s.ai, s.si);

  // pooled per-bin reciprocal-rank deltas between full and zero-gate ranking
  std::vector<double> dsum(kDefaultDepthEdges.size() + 1, 0.0);
  std::vector<std::size_t> dcnt(kDefaultDepthEdges.size() + 1, 0);
  std::vector<std::string> labels(dsum.size());
  for (const auto& fe : s.ai) {
    const auto bins = delta_rr_by(fe.full, fe.zero, "test_updates", kDefaultDepthEdges);
    for (std::size_t b = 0; b < bins.size(); ++b) {
      dsum[b] += bins[b].mean_delta * double(bins[b].count);
      dcnt[b] += bins[b].count;
      labels[b] = bins[b].label;
    }
  }
  bool bins_ok = true;
  std::string bins_txt;
  int deepest = -1;
  for (std::size_t b = 0; b < dsum.size(); ++b) {
    if (dcnt[b] == 0) continue;
    const double mean = dsum[b] / double(dcnt[b]);
    if (mean < 0.0) bins_ok = false;
    bins_txt += (bins_txt.empty() ? "" : " ") + labels[b] + ":" + fmt("%+.4f", mean);
    deepest = int(b);
  }
  const bool deepest_pos = deepest >= 0 && dsum[deepest] / double(dcnt[deepest]) > 0.0;

  // gate contrast: drifting subjects after onset vs non-drifting subjects
  double gd = 0.0, gn = 0.0;
  std::size_t nd = 0, nn = 0;
  for (std::size_t i = 0; i < s.packs.size(); ++i) {
    const auto& pk = s.packs[i];
    std::vector<char> is_drift(pk.ds.num_entities(), 0);
    std::vector<int64_t> onset(pk.ds.num_entities(), 0);
    for (const auto& e : pk.raw.entities) {
      const uint32_t id = pk.ds.entity_ids.at(e.name);
      is_drift[id] = e.drift;
      onset[id] = e.onset;
    }
    for (const auto& q : s.ai[i].full.rows) {
      if (is_drift[q.subject]) {
        if (q.t >= onset[q.subject]) {
          gd += q.gate_mean;
          ++nd;
        }
      } else {
        gn += q.gate_mean;
        ++nn;
      }
    }
  }
  const double drift_gate = nd ? gd / double(nd) : 0.0;
  const double other_gate = nn ? gn / double(nn) : 0.0;

  const bool ok = gap >= 0.02 && bins_ok && deepest_pos && drift_gate > other_gate &&
                  s.seed_seconds_max < 900.0;
  return {ok, fmt("adaptive-static MRR gap %.4f (>=0.02), update-bin deltas [%s] all "
                  ">=0 with deepest >0, drift gate %.3f > other %.3f, slowest seed %.0fs",
                  gap, bins_txt.c_str(), drift_gate, other_gate, s.seed_seconds_max)};
}

Verdict criterion8(const DriftSuite& s) {
  const double g_ema = mean_gap(s.ai, s.si);
  const double g_gru = mean_gap(s.gru, s.si);
  const double g_attn = mean_gap(s.attn, s.si);
  const bool ok = g_ema >= 0.02 && g_gru >= 0.02 && g_attn >= 0.02 && s.op_seconds < 2700.0;
  return {ok, fmt("MRR gaps over the zero-gate ablation: ema %.4f, gru %.4f, attention "
                  "%.4f (all >=0.02, extra runs %.0fs)",
                  g_ema, g_gru, g_attn, s.op_seconds)};
}

Verdict criterion9(const DriftSuite& s) {
  const bool ok = s.checksum_before != s.checksum_after && s.checksum_before != 0;
  return {ok, fmt("memory banks after training diverge between update timings "
                  "(checksums %016llx vs %016llx)",
                  (unsigned long long)s.checksum_before, (unsigned long long)s.checksum_after)};
}

Verdict criterion12(const DriftSuite& s) {
  const double d100 = mean_gap(s.ai, s.si);
  const double d50 = mean_gap(s.h50_ai, s.h50_si);
  const double d25 = mean_gap(s.h25_ai, s.h25_si);
  const bool ok = d25 >= 0.0 && d50 >= 0.0 && d100 >= 0.0 && s.horizon_seconds < 2700.0;
  return {ok, fmt("adaptive-static MRR margins at 25/50/100%% horizons: %+.4f / %+.4f / "
                  "%+.4f (all >=0, horizon runs %.0fs)",
                  d25, d50, d100, s.horizon_seconds)};
}

// ==================== criterion 10 ====================
Verdict criterion10() {
  SyntheticSpec sp;
  sp.types = 4;
  sp.entities_per_type = 25;
  sp.relations_per_type = 3;
  sp.timestamps = 12;
  sp.facts_per_timestamp = 30;
  sp.seed = 11;
  const TkgDataset dsA = augment_inverse(to_dataset(generate(sp)));
  sp.entities_per_type = 50;
  const TkgDataset dsB = augment_inverse(to_dataset(generate(sp)));
  if (dsA.num_relations() != dsB.num_relations())
    return {false, "relation vocabularies differ between the two streams"};

  const std::size_t d = 32;
  const EmbeddingSource embA = hash_embeddings(dsA, d, 1);
  const EmbeddingSource embB = hash_embeddings(dsB, d, 2);
  ModelConfig mc;
  mc.seed = 5;

  Model emaA(mc, &dsA, &embA), emaB(mc, &dsB, &embB);
  ModelConfig gc = mc;
  gc.op = OperatorKind::gru;
  Model gruA(gc, &dsA, &embA);

  std::size_t op_scalars = 0;
  for (const auto& [group, count] : emaA.audit())
    if (group == "memory-op") op_scalars = count;

  const bool one_scalar = op_scalars == 1;
  const bool gru_delta = gruA.param_count() == emaA.param_count() + 3 * d * d + 3 * d;
  const bool size_free = emaA.param_count() == emaB.param_count();
  const bool ok = one_scalar && gru_delta && size_free;
  return {ok, fmt("memory-op group holds exactly %zu scalar, gru adds %zu (=3d^2+3d), and "
                  "counts are identical for 100 vs 200 entities (%zu)",
                  op_scalars, gruA.param_count() - emaA.param_count(), emaA.param_count())};
}

// ==================== criterion 11 ====================
Verdict criterion11() {
  const double t0 = now_s();
  SyntheticSpec sp;
  sp.types = 2;
  sp.entities_per_type = 5;
  sp.relations_per_type = 2;
  sp.timestamps = 16;
  sp.facts_per_timestamp = 8;
  sp.seed = 5;
  const TkgDataset ds =
      chronological_split(augment_inverse(to_dataset(generate(sp))), 0.5, 0.2, 0.3);
  const EmbeddingSource emb = hash_embeddings(ds, 16, 17);
  ModelConfig mc;
  mc.d = 16;
  mc.k_code = 4;
  mc.conv_filters = 8;
  mc.seed = 9;

  Model a(mc, &ds, &emb);
  TrainConfig tc;
  tc.max_epochs = 3;
  tc.patience = 3;
  fit(a, tc);

  const auto ckpt = (work_dir() / "roundtrip.ckpt").string();
  const auto bankf = (work_dir() / "roundtrip.mem").string();
  a.save_checkpoint(ckpt);
  a.reset_state();
  replay_split(a, Split::train);
  replay_split(a, Split::valid);
  a.bank.save_file(bankf);

  FilterIndex fidx;
  fidx.build(ds);
  const RankReport want = evaluate(a, Split::test, fidx, {});

  Model b(mc, &ds, &emb);
  b.load_checkpoint(ckpt);
  b.reset_state();
  for (const auto& snap : split_snapshots(ds, Split::train)) b.commit_timestamp(snap);
  for (const auto& snap : split_snapshots(ds, Split::valid)) b.commit_timestamp(snap);
  b.bank.load_file(bankf);
  const RankReport got = evaluate(b, Split::test, fidx, {});

  if (got.rows.size() != want.rows.size())
    return {false, "restored evaluation produced a different query count"};
  for (std::size_t i = 0; i < want.rows.size(); ++i) {
    const auto& w = want.rows[i];
    const auto& g = got.rows[i];
    if (w.rank != g.rank || !bits_equal(w.rr, g.rr) || !bits_equal(w.gate_mean, g.gate_mean) ||
        w.subject != g.subject || w.t != g.t)
      return {false, fmt("row %zu differs after the restore", i)};
  }
  if (!bits_equal(want.all.mrr, got.all.mrr))
    return {false, "aggregate MRR bits differ after the restore"};
  return {true, fmt("checkpoint plus memory snapshot reproduce all %zu evaluation rows "
                    "bit-exactly (%.1fs)",
                    want.rows.size(), now_s() - t0)};
}

} // namespace

int main() {
  std::vector<Verdict> v(12);
  auto guard = [&](int idx, const std::function<Verdict()>& f) {
    try {
      v[idx] = f();
    } catch (const std::exception& e) {
      v[idx] = {false, std::string("exception: ") + e.what()};
    }
  };

  guard(0, criterion1);
  std::fprintf(stderr, "[info] criterion 1 done\n");
  guard(1, criterion2);
  guard(2, criterion3);
  guard(3, criterion4);
  guard(4, criterion5);
  guard(5, criterion6);
  std::fprintf(stderr, "[info] fast criteria done, starting the drift experiment suite\n");

  try {
    const DriftSuite suite = run_drift_suite();
    guard(6, [&] { return criterion7(suite); });
    guard(7, [&] { return criterion8(suite); });
    guard(8, [&] { return criterion9(suite); });
    guard(11, [&] { return criterion12(suite); });
  } catch (const std::exception& e) {
    const std::string why = std::string("drift suite exception: ") + e.what();
    for (const int i : {6, 7, 8, 11}) v[i] = {false, why};
  }

  guard(9, criterion10);
  guard(10, criterion11);

  const char* names[12] = {
      "gradient correctness",     "cold-start parity",      "memory closed form",
      "protocol causality",       "detached update",        "filtered-rank oracle",
      "adaptivity gain",          "operator agnosticism",   "update-timing sensitivity",
      "parameter accounting",     "persistence round-trip", "horizon robustness",
  };
  bool all = true;
  for (int i = 0; i < 12; ++i) {
    all = all && v[i].pass;
    std::printf("[%s] criterion %d: %s: %s\n", v[i].pass ? "PASS" : "FAIL", i + 1, names[i],
                v[i].text.c_str());
  }
  std::printf("%s\n", all ? "acceptance suite: all criteria passed"
                          : "acceptance suite: FAILURES present");
  return all ? 0 : 1;
}
