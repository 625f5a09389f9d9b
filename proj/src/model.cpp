#include "tkg/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "tkg/kernels.hpp"
#include "tkg/rng.hpp"

namespace tkg {

// ==================== names ====================

std::string operator_name(OperatorKind k) {
  switch (k) {
    case OperatorKind::ema: return "ema";
    case OperatorKind::gru: return "gru";
    case OperatorKind::attention: return "attention";
  }
  return "?";
}

std::string ema_variant_name(EmaVariant v) {
  switch (v) {
    case EmaVariant::shared: return "shared";
    case EmaVariant::per_entity: return "per-entity";
    case EmaVariant::per_dim: return "per-dim";
  }
  return "?";
}

std::string timing_name(Timing t) { return t == Timing::before ? "before" : "after"; }

std::string decoder_name(DecoderKind k) { return k == DecoderKind::conv ? "conv" : "bilinear"; }

OperatorKind parse_operator(const std::string& s) {
  if (s == "ema") return OperatorKind::ema;
  if (s == "gru") return OperatorKind::gru;
  if (s == "attention") return OperatorKind::attention;
  throw std::invalid_argument("unknown memory operator: " + s);
}

EmaVariant parse_ema_variant(const std::string& s) {
  if (s == "shared") return EmaVariant::shared;
  if (s == "per-entity") return EmaVariant::per_entity;
  if (s == "per-dim") return EmaVariant::per_dim;
  throw std::invalid_argument("unknown decay variant: " + s);
}

Timing parse_timing(const std::string& s) {
  if (s == "before") return Timing::before;
  if (s == "after") return Timing::after;
  throw std::invalid_argument("unknown update timing: " + s);
}

DecoderKind parse_decoder(const std::string& s) {
  if (s == "conv") return DecoderKind::conv;
  if (s == "bilinear") return DecoderKind::bilinear;
  throw std::invalid_argument("unknown decoder: " + s);
}

// ==================== construction ====================

int Model::register_param(const std::string& name, const std::string& group,
                          std::vector<std::size_t> shape, double init_scale) {
  Tensor t(shape);
  if (init_scale != 0.0) {
    Rng rng{derive_seed(cfg.seed, "init:" + name)};
    for (auto& v : t.data) v = rng.next_normal() * init_scale;
  }
  params.push_back(Param{name, group, std::move(t)});
  return int(params.size()) - 1;
}

Model::Model(ModelConfig config, const TkgDataset* dataset, const EmbeddingSource* embeddings)
    : cfg(config), ds(dataset), emb(embeddings) {
  const std::size_t d = cfg.d;
  if (d == 0) throw std::invalid_argument("model dimension must be positive");
  if (emb->d != d) throw std::invalid_argument("embedding dimension does not match model");
  if (cfg.op == OperatorKind::attention && d % cfg.attn_heads != 0)
    throw std::invalid_argument("dimension must be divisible by attention head count");
  if (cfg.decoder == DecoderKind::conv && cfg.conv_width % 2 == 0)
    throw std::invalid_argument("conv decoder width must be odd");
  if (cfg.k_code == 0) throw std::invalid_argument("prototype cluster count must be positive");

  const std::size_t n = ds->num_entities();
  const std::size_t r2 = ds->num_relations();
  const double sd = 1.0 / std::sqrt(double(d));
  const double sd2 = 1.0 / std::sqrt(double(2 * d));

  // The decay logit exists in every configuration so that switching the
  // update operator changes the parameter count only by the operator's own
  // weights. Non-decay operators simply never read it.
  switch (cfg.ema_variant) {
    case EmaVariant::shared: p_rho_ = register_param("decay_logit", "memory-op", {1}, 0.0); break;
    case EmaVariant::per_entity:
      p_rho_ = register_param("decay_logit", "memory-op", {n}, 0.0);
      break;
    case EmaVariant::per_dim: p_rho_ = register_param("decay_logit", "memory-op", {d}, 0.0); break;
  }
  if (cfg.op == OperatorKind::gru) {
    p_gru_wr_ = register_param("gru_w_reset", "memory-op", {d, d}, sd);
    p_gru_br_ = register_param("gru_b_reset", "memory-op", {d}, 0.0);
    p_gru_wu_ = register_param("gru_w_update", "memory-op", {d, d}, sd);
    p_gru_bu_ = register_param("gru_b_update", "memory-op", {d}, 0.0);
    p_gru_wn_ = register_param("gru_w_cand", "memory-op", {d, d}, sd);
    p_gru_bn_ = register_param("gru_b_cand", "memory-op", {d}, 0.0);
  } else if (cfg.op == OperatorKind::attention) {
    p_att_wq_ = register_param("attn_w_query", "memory-op", {d, d}, sd);
    p_att_wk_ = register_param("attn_w_key", "memory-op", {d, d}, sd);
    p_att_wv_ = register_param("attn_w_value", "memory-op", {d, d}, sd);
    p_att_wo_ = register_param("attn_w_out", "memory-op", {d, d}, sd);
  }

  p_wg_ = register_param("gate_w", "gate", {d, 2 * d}, sd2);
  p_wpsi_ = register_param("proto_mix_w", "prior", {d, 2 * d}, sd2);
  p_bpsi_ = register_param("proto_mix_b", "prior", {d}, 0.0);

  p_fact_w_ = register_param("fact_enc_w1", "chain-encoder", {d, 2 * d}, sd2);
  p_fact_b_ = register_param("fact_enc_b1", "chain-encoder", {d}, 0.0);
  p_fact_w2_ = register_param("fact_enc_w2", "chain-encoder", {d, d}, sd);
  p_fact_b2_ = register_param("fact_enc_b2", "chain-encoder", {d}, 0.0);
  if (cfg.chain_attention_pool) {
    p_pool_wq_ = register_param("chain_pool_wq", "chain-encoder", {d, d}, sd);
    p_pool_wk_ = register_param("chain_pool_wk", "chain-encoder", {d, d}, sd);
    p_pool_wv_ = register_param("chain_pool_wv", "chain-encoder", {d, d}, sd);
  }

  p_sig_w1_ = register_param("signal_w1", "signal", {d, 2 * d}, sd2);
  p_sig_w2_ = register_param("signal_w2", "signal", {d, d}, sd);

  p_rel_ = register_param("relation_emb", "relations", {r2, d}, sd);
  p_centers_ = register_param("codebook", "codebook", {cfg.k_code, d}, 0.0);

  if (cfg.decoder == DecoderKind::conv) {
    p_conv_w_ = register_param("dec_conv_w", "decoder", {cfg.conv_filters, 2 * cfg.conv_width},
                               1.0 / std::sqrt(double(2 * cfg.conv_width)));
    p_conv_b_ = register_param("dec_conv_b", "decoder", {cfg.conv_filters}, 0.0);
    p_proj_w_ = register_param("dec_proj_w", "decoder", {d, cfg.conv_filters * d},
                               1.0 / std::sqrt(double(cfg.conv_filters * d)));
    p_proj_b_ = register_param("dec_proj_b", "decoder", {d}, 0.0);
  }

  bank.init(n, d, cfg.k_buf, cfg.op == OperatorKind::attention);
  chains.init(n, cfg.chain_len);
  protos.init(cfg.k_code, d);
  assign.assign(n, 0);
  cluster_decay.assign(cfg.k_code, 0.0);

  decay_is_trained.assign(n, true);
  if (ds->has_splits) {
    std::fill(decay_is_trained.begin(), decay_is_trained.end(), false);
    for (const auto& f : ds->facts) {
      if (f.timestamp > ds->t_train_end) break;
      decay_is_trained[f.subject] = true;
    }
  }

  init_codebook();
}

int Model::find_param(const std::string& name) const {
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].name == name) return int(i);
  return -1;
}

void Model::reset_state() {
  bank.reset();
  chains.reset();
  protos.reset();
}

void Model::refresh_assignments() {
  assign = assign_all(params[p_centers_].value, emb->table);
}

void Model::init_codebook() {
  std::vector<uint32_t> members;
  const std::size_t n = ds->num_entities();
  if (ds->has_splits) {
    for (std::size_t e = 0; e < n; ++e)
      if (ds->first_appearance[e] <= ds->t_train_end) members.push_back(uint32_t(e));
  } else {
    for (std::size_t e = 0; e < n; ++e) members.push_back(uint32_t(e));
  }
  Rng rng{derive_seed(cfg.seed, "kmeans")};
  params[p_centers_].value = kmeans_centers(emb->table, members, cfg.k_code, rng);
  refresh_assignments();
}

void Model::refresh_cluster_decays() {
  if (cfg.ema_variant != EmaVariant::per_entity) return;
  const auto& rho = params[p_rho_].value.data;
  std::vector<double> sum(cfg.k_code, 0.0);
  std::vector<uint64_t> cnt(cfg.k_code, 0);
  for (std::size_t e = 0; e < rho.size(); ++e) {
    if (!decay_is_trained[e]) continue;
    sum[assign[e]] += rho[e];
    cnt[assign[e]] += 1;
  }
  for (std::size_t k = 0; k < cfg.k_code; ++k)
    cluster_decay[k] = cnt[k] > 0 ? sum[k] / double(cnt[k]) : 0.0;
}

// ==================== tape builders ====================

VId Model::fact_encoder_rows(Tape& tape, const std::vector<VId>& pl,
                             const std::vector<std::size_t>& keep,
                             const std::vector<ChainEntry>& chain) const {
  const std::size_t d = cfg.d;
  Tensor nb({keep.size(), d});
  std::vector<std::size_t> rel_ids;
  rel_ids.reserve(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const ChainEntry& ce = chain[keep[i]];
    std::copy(emb->row(ce.neighbor), emb->row(ce.neighbor) + d, &nb.data[i * d]);
    rel_ids.push_back(ce.relation);
  }
  const VId nb_node = tape.constant(std::move(nb));
  const VId rel_rows = tape.gather_rows(pl[p_rel_], std::move(rel_ids));
  const VId cat = tape.concat(nb_node, rel_rows);
  const VId hidden = tape.gelu(
      tape.add_rowvec(tape.matmul_nt(cat, pl[p_fact_w_]), pl[p_fact_b_]));
  return tape.add_rowvec(tape.matmul_nt(hidden, pl[p_fact_w2_]), pl[p_fact_b2_]);
}

VId Model::build_signal(Tape& tape, const std::vector<VId>& pl, uint32_t subject,
                        uint32_t relation) const {
  const std::size_t d = cfg.d;
  const auto& chain = chains.chain(subject);
  VId h_ic;
  if (chain.empty()) {
    h_ic = tape.constant(Tensor({d}));
  } else {
    const auto keep =
        filter_chain_by_relation(chain, params[p_rel_].value, relation, cfg.relation_filter_top);
    const VId enc = fact_encoder_rows(tape, pl, keep, chain);
    if (cfg.chain_attention_pool) {
      Tensor hs({d});
      std::copy(emb->row(subject), emb->row(subject) + d, hs.data.data());
      const VId q = tape.matvec(pl[p_pool_wq_], tape.constant(std::move(hs)));
      const VId keys = tape.matmul_nt(enc, pl[p_pool_wk_]);
      const VId vals = tape.matmul_nt(enc, pl[p_pool_wv_]);
      const VId attn = tape.softmax(tape.scale(tape.matvec(keys, q), 1.0 / std::sqrt(double(d))));
      h_ic = tape.tmatvec(vals, attn);
    } else {
      h_ic = tape.mean_rows(enc);
    }
  }
  const VId h_r = tape.row_slice(pl[p_rel_], relation);
  const VId cat = tape.concat(h_ic, h_r);
  return tape.matvec(pl[p_sig_w2_], tape.gelu(tape.matvec(pl[p_sig_w1_], cat)));
}

double Model::decay_logit_value(uint32_t entity, std::size_t) const {
  // constant fallback for entities whose own decay logit was never trained
  return cluster_decay[assign[entity]];
}

VId Model::build_update(Tape& tape, const std::vector<VId>& pl, uint32_t subject, VId m_in,
                        VId x, uint64_t tau_pre) {
  const std::size_t d = cfg.d;
  switch (cfg.op) {
    case OperatorKind::ema: {
      if (cfg.ema_variant == EmaVariant::per_dim) {
        const VId alpha = tape.sigmoid(pl[p_rho_]);
        const VId ones = tape.constant(Tensor({d}, 1.0));
        return tape.add(tape.mul(alpha, m_in), tape.mul(tape.sub(ones, alpha), x));
      }
      VId alpha;
      if (cfg.ema_variant == EmaVariant::shared) {
        alpha = tape.sigmoid(pl[p_rho_]);
      } else if (decay_is_trained[subject]) {
        alpha = tape.sigmoid(tape.index_scalar(pl[p_rho_], subject));
      } else {
        alpha = tape.constant(Tensor({1}, 1.0 / (1.0 + std::exp(-decay_logit_value(subject, 0)))));
      }
      const VId one = tape.constant(Tensor({1}, 1.0));
      const VId one_minus = tape.sub(one, alpha);
      return tape.add(tape.mul_scalar_t(alpha, m_in), tape.mul_scalar_t(one_minus, x));
    }
    case OperatorKind::gru: {
      const VId ones = tape.constant(Tensor({d}, 1.0));
      const VId r = tape.sigmoid(
          tape.add(tape.add(x, tape.matvec(pl[p_gru_wr_], m_in)), pl[p_gru_br_]));
      const VId u = tape.sigmoid(
          tape.add(tape.add(x, tape.matvec(pl[p_gru_wu_], m_in)), pl[p_gru_bu_]));
      const VId cand = tape.tanh_fn(
          tape.add(tape.add(x, tape.mul(r, tape.matvec(pl[p_gru_wn_], m_in))), pl[p_gru_bn_]));
      return tape.add(tape.mul(tape.sub(ones, u), cand), tape.mul(u, m_in));
    }
    case OperatorKind::attention: {
      // read over the FIFO buffer with the incoming signal written in place;
      // stored slots are committed values, so only x carries gradient here
      const std::size_t slot = std::size_t(tau_pre % cfg.k_buf);
      const std::size_t occ = std::size_t(std::min<uint64_t>(tau_pre + 1, cfg.k_buf));
      Tensor base({occ, d});
      for (std::size_t s = 0; s < occ; ++s)
        std::copy(bank.buffer_slot(subject, s), bank.buffer_slot(subject, s) + d,
                  &base.data[s * d]);
      const VId buf = tape.compose_rows(std::move(base), {{slot, x}});
      Tensor hs({d});
      std::copy(emb->row(subject), emb->row(subject) + d, hs.data.data());
      const VId q = tape.matvec(pl[p_att_wq_], tape.constant(std::move(hs)));
      const VId keys = tape.matmul_nt(buf, pl[p_att_wk_]);
      const VId vals = tape.matmul_nt(buf, pl[p_att_wv_]);
      const std::size_t heads = cfg.attn_heads, dh = d / heads;
      VId ctx = -1;
      for (std::size_t h = 0; h < heads; ++h) {
        const VId qh = tape.slice_vec(q, h * dh, dh);
        const VId kh = tape.col_range(keys, h * dh, dh);
        const VId vh = tape.col_range(vals, h * dh, dh);
        const VId sc = tape.scale(tape.matvec(kh, qh), 1.0 / std::sqrt(double(dh)));
        const VId w = tape.softmax(sc);
        const VId ch = tape.tmatvec(vh, w);
        ctx = h == 0 ? ch : tape.concat(ctx, ch);
      }
      return tape.matvec(pl[p_att_wo_], ctx);
    }
  }
  throw std::logic_error("unreachable operator kind");
}

// ==================== timestamp processing ====================

StepResult Model::process_timestamp(const Snapshot& snap, const StepOptions& opts,
                                    UnrollContext* uc) {
  StepResult res;
  const std::size_t d = cfg.d;
  const std::size_t n = ds->num_entities();
  const bool want_grads = opts.grads || uc != nullptr;

  Tape local_tape;
  Tape& tape = uc ? uc->tape : local_tape;

  // parameter leaves
  std::vector<VId>* plp;
  std::vector<VId> local_pl;
  if (uc) {
    if (uc->param_leaves.empty())
      for (const auto& p : params) uc->param_leaves.push_back(tape.leaf(p.value, true));
    plp = &uc->param_leaves;
  } else {
    for (const auto& p : params) local_pl.push_back(tape.leaf(p.value, want_grads));
    plp = &local_pl;
  }
  const std::vector<VId>& pl = *plp;

  std::unordered_map<uint32_t, VId> local_fresh;
  std::unordered_map<uint32_t, VId>& fresh = uc ? uc->fresh : local_fresh;

  const bool gate_off = opts.zero_gate || cfg.disable_memory;

  // shared per-timestamp nodes
  const VId zeros_d = tape.constant(Tensor({d}));
  VId H = -1, Htil = -1, Zc = -1, const_gate_d = -1;
  if (opts.score) {
    H = tape.constant(emb->table);
    if (cfg.disable_prior) {
      Htil = H;
    } else {
      Tensor cpick({n, d});
      for (std::size_t e = 0; e < n; ++e)
        std::copy(protos.row(assign[e]), protos.row(assign[e]) + d, &cpick.data[e * d]);
      const VId cp = tape.constant(std::move(cpick));
      const VId om = tape.sigmoid(tape.add_rowvec(
          tape.matmul_nt(tape.concat(H, cp), pl[p_wpsi_]), pl[p_bpsi_]));
      Htil = tape.add(H, tape.mul(om, cp));
    }

    // candidate-side fusion from the bank state at the start of the timestamp
    Tensor m0({n, d});
    std::copy(bank.m(0), bank.m(0) + n * d, m0.data.data());
    const VId m0n = tape.constant(std::move(m0));
    VId gmat;
    if (gate_off) {
      gmat = tape.constant(Tensor({n, d}));
    } else if (cfg.constant_gate) {
      gmat = tape.constant(Tensor({n, d}, cfg.constant_gate_value));
      const_gate_d = tape.constant(Tensor({d}, cfg.constant_gate_value));
    } else {
      Tensor mask({n, d});
      for (std::size_t e = 0; e < n; ++e)
        if (bank.tau(uint32_t(e)) > 0)
          std::fill(&mask.data[e * d], &mask.data[e * d] + d, 1.0);
      gmat = tape.mul(tape.constant(std::move(mask)),
                      tape.sigmoid(tape.matmul_nt(tape.concat(H, m0n), pl[p_wg_])));
    }
    const VId ones_nd = tape.constant(Tensor({n, d}, 1.0));
    Zc = tape.add(tape.mul(tape.sub(ones_nd, gmat), Htil), tape.mul(gmat, m0n));
  }

  std::vector<VId> ce_nodes;
  std::vector<double> vq_vecs;
  std::vector<std::size_t> vq_assign;

  for (std::size_t fi = snap.lo; fi < snap.hi; ++fi) {
    const Quadruple& f = ds->facts[fi];
    const uint32_t s = f.subject, r = f.relation, o = f.object;
    const uint64_t tau_pre = bank.tau(s);

    const VId x = build_signal(tape, pl, s, r);

    VId prev;
    if (auto it = fresh.find(s); it != fresh.end()) {
      prev = it->second;
    } else {
      Tensor mv({d});
      std::copy(bank.m(s), bank.m(s) + d, mv.data.data());
      prev = tape.constant(std::move(mv));
    }

    VId m_new = -1, m_read = -1;
    if (cfg.timing == Timing::before) {
      const VId m_in = cfg.detach_memory ? tape.detach(prev) : prev;
      m_new = build_update(tape, pl, s, m_in, x, tau_pre);
      m_read = m_new;
    } else {
      m_read = prev;
    }

    if (opts.score) {
      VId g;
      if (gate_off) {
        g = zeros_d;
      } else if (cfg.constant_gate) {
        g = const_gate_d;
      } else if (tau_pre == 0) {
        // no update has ever been applied at scoring time: mask the memory
        g = zeros_d;
      } else {
        const VId h_s = tape.row_slice(H, s);
        g = tape.sigmoid(tape.matvec(pl[p_wg_], tape.concat(h_s, m_read)));
      }
      const VId ones = tape.constant(Tensor({d}, 1.0));
      const VId htil_s = tape.row_slice(Htil, s);
      const VId z_s = tape.add(tape.mul(tape.sub(ones, g), htil_s), tape.mul(g, m_read));

      const VId h_r = tape.row_slice(pl[p_rel_], r);
      VId u;
      if (cfg.decoder == DecoderKind::conv) {
        const VId x2 = tape.stack2(z_s, h_r);
        const VId co = tape.conv1d(x2, pl[p_conv_w_], pl[p_conv_b_], cfg.conv_width);
        const VId flat = tape.reshape(tape.gelu(co), {cfg.conv_filters * d});
        u = tape.add(tape.matvec(pl[p_proj_w_], flat), pl[p_proj_b_]);
      } else {
        u = tape.mul(z_s, h_r);
      }

      const VId all_logits = tape.matvec(Zc, u);
      const VId own = tape.sum_all(tape.mul(z_s, u));
      const VId logits = tape.replace_elem(all_logits, s, own);
      const VId ce = tape.softmax_xent(logits, o);
      ce_nodes.push_back(ce);

      QueryScore q;
      q.fact_index = fi;
      q.ce = tape.val(ce).data[0];
      q.tau_at_scoring = tau_pre;
      const Tensor& gv = tape.val(g);
      double gm = 0.0;
      for (const double v : gv.data) gm += v;
      q.gate_mean = gm / double(gv.numel());
      if (opts.capture_scores) q.scores = tape.val(logits).data;
      res.queries.push_back(std::move(q));

      vq_vecs.insert(vq_vecs.end(), emb->row(s), emb->row(s) + d);
      vq_assign.push_back(assign[s]);
    }

    if (cfg.timing == Timing::after) {
      const VId m_in = cfg.detach_memory ? tape.detach(prev) : prev;
      m_new = build_update(tape, pl, s, m_in, x, tau_pre);
    }

    // live state commit in fact order
    const Tensor& mnv = tape.val(m_new);
    std::copy(mnv.data.begin(), mnv.data.end(), bank.m(s));
    if (bank.with_buffers()) {
      const Tensor& xv = tape.val(x);
      std::copy(xv.data.begin(), xv.data.end(),
                bank.buffer_slot(s, std::size_t(tau_pre % cfg.k_buf)));
    }
    fresh[s] = m_new;
    bank.bump_tau(s);
  }

  if (opts.score && !ce_nodes.empty()) {
    VId acc = ce_nodes[0];
    for (std::size_t i = 1; i < ce_nodes.size(); ++i) acc = tape.add(acc, ce_nodes[i]);
    VId loss = tape.scale(acc, 1.0 / double(ce_nodes.size()));
    if (cfg.lambda_vq != 0.0) {
      const VId vq = tape.vq_commit(pl[p_centers_], std::move(vq_vecs), std::move(vq_assign));
      loss = tape.add(loss, tape.scale(vq, cfg.lambda_vq));
    }
    res.loss = tape.val(loss).data[0];
    res.has_loss = true;
    if (uc) {
      uc->losses.push_back(loss);
    } else if (opts.grads) {
      tape.backward(loss);
      res.grads.reserve(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) res.grads.push_back(tape.grad(pl[i]));
    }
  }
  return res;
}

void Model::encode_fact(uint32_t neighbor, uint32_t relation, double* out) const {
  const std::size_t d = cfg.d;
  std::vector<double> cat(2 * d);
  std::copy(emb->row(neighbor), emb->row(neighbor) + d, cat.data());
  const double* hr = &params[p_rel_].value.data[std::size_t(relation) * d];
  std::copy(hr, hr + d, cat.data() + d);

  std::vector<double> hidden(d);
  const auto& w1 = params[p_fact_w_].value;
  const auto& b1 = params[p_fact_b_].value;
  for (std::size_t j = 0; j < d; ++j)
    hidden[j] = kern::dot(&w1.data[j * 2 * d], cat.data(), 2 * d) + b1.data[j];
  kern::gelu(hidden.data(), hidden.data(), d);

  const auto& w2 = params[p_fact_w2_].value;
  const auto& b2 = params[p_fact_b2_].value;
  for (std::size_t j = 0; j < d; ++j)
    out[j] = kern::dot(&w2.data[j * d], hidden.data(), d) + b2.data[j];
}

void Model::commit_timestamp(const Snapshot& snap) {
  std::vector<double> enc(cfg.d);
  for (std::size_t fi = snap.lo; fi < snap.hi; ++fi) {
    const Quadruple& f = ds->facts[fi];
    encode_fact(f.object, f.relation, enc.data());
    protos.add(assign[f.subject], enc.data());
    chains.append(f.subject, ChainEntry{f.object, f.relation, f.timestamp});
  }
}

double Model::unrolled_decay_grad(const std::vector<Snapshot>& window, bool with_detach) {
  const bool saved = cfg.detach_memory;
  cfg.detach_memory = with_detach;
  UnrollContext uc;
  StepOptions opts;
  opts.score = true;
  opts.grads = false;
  for (const auto& snap : window) {
    process_timestamp(snap, opts, &uc);
    commit_timestamp(snap);
  }
  cfg.detach_memory = saved;
  if (uc.losses.empty()) return 0.0;
  VId total = uc.losses[0];
  for (std::size_t i = 1; i < uc.losses.size(); ++i) total = uc.tape.add(total, uc.losses[i]);
  uc.tape.backward(total);
  const Tensor g = uc.tape.grad(uc.param_leaves[p_rho_]);
  double sum = 0.0;
  for (const double v : g.data) sum += v;
  return sum;
}

// ==================== accounting ====================

std::size_t Model::param_count() const {
  std::size_t total = 0;
  for (const auto& p : params) total += p.value.numel();
  return total;
}

std::vector<std::pair<std::string, std::size_t>> Model::audit() const {
  std::vector<std::pair<std::string, std::size_t>> out;
  for (const auto& p : params) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const auto& e) { return e.first == p.group; });
    if (it == out.end())
      out.emplace_back(p.group, p.value.numel());
    else
      it->second += p.value.numel();
  }
  return out;
}

// ==================== persistence ====================

uint64_t Model::structural_fingerprint() const {
  std::string s;
  auto field = [&s](const std::string& k, const std::string& v) { s += k + "=" + v + ";"; };
  field("d", std::to_string(cfg.d));
  field("k_code", std::to_string(cfg.k_code));
  field("chain_len", std::to_string(cfg.chain_len));
  field("rel_filter", std::to_string(cfg.relation_filter_top));
  field("pool", cfg.chain_attention_pool ? "attn" : "mean");
  field("op", operator_name(cfg.op));
  field("variant", ema_variant_name(cfg.ema_variant));
  field("timing", timing_name(cfg.timing));
  field("k_buf", std::to_string(cfg.k_buf));
  field("heads", std::to_string(cfg.attn_heads));
  field("decoder", decoder_name(cfg.decoder));
  field("conv_filters", std::to_string(cfg.conv_filters));
  field("conv_width", std::to_string(cfg.conv_width));
  field("lambda_vq", std::to_string(cfg.lambda_vq));
  field("no_memory", cfg.disable_memory ? "1" : "0");
  field("no_prior", cfg.disable_prior ? "1" : "0");
  field("const_gate", cfg.constant_gate ? std::to_string(cfg.constant_gate_value) : "off");
  field("entities", std::to_string(ds->num_entities()));
  field("relations", std::to_string(ds->num_relations()));
  return fnv1a64(s);
}

namespace {

constexpr char kCkptMagic[8] = {'T', 'K', 'G', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ofstream& out, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = char(v >> (8 * i));
  out.write(b, 8);
}

uint64_t get_u64(std::ifstream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw CheckpointError("truncated checkpoint");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
  return v;
}

} // namespace

void Model::save_checkpoint(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path + " for writing");
  out.write(kCkptMagic, 8);
  put_u64(out, 1);
  put_u64(out, structural_fingerprint());
  put_u64(out, params.size());
  for (const auto& p : params) {
    put_u64(out, p.name.size());
    out.write(p.name.data(), std::streamsize(p.name.size()));
    put_u64(out, p.value.rank());
    for (const std::size_t dim : p.value.shape) put_u64(out, dim);
    for (const double v : p.value.data) put_u64(out, std::bit_cast<uint64_t>(v));
  }
  if (!out) throw CheckpointError("failed writing checkpoint to " + path);
}

CheckpointInfo inspect_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw CheckpointError("not a model checkpoint (bad magic)");
  CheckpointInfo info;
  info.version = get_u64(in);
  if (info.version != 1)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(info.version));
  info.fingerprint = get_u64(in);
  const uint64_t count = get_u64(in);
  for (uint64_t i = 0; i < count; ++i) {
    CheckpointParamInfo p;
    const uint64_t len = get_u64(in);
    p.name.resize(len);
    in.read(p.name.data(), std::streamsize(len));
    if (!in) throw CheckpointError("truncated checkpoint");
    const uint64_t rank = get_u64(in);
    p.numel = 1;
    for (uint64_t r = 0; r < rank; ++r) {
      p.shape.push_back(std::size_t(get_u64(in)));
      p.numel *= p.shape.back();
    }
    in.seekg(std::streamoff(p.numel * 8), std::ios::cur);
    if (!in) throw CheckpointError("truncated checkpoint");
    info.total += p.numel;
    info.params.push_back(std::move(p));
  }
  return info;
}

void Model::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw CheckpointError("not a model checkpoint (bad magic)");
  const uint64_t version = get_u64(in);
  if (version != 1)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const uint64_t fp = get_u64(in);
  if (fp != structural_fingerprint())
    throw CheckpointError("checkpoint was written by a structurally different model");
  const uint64_t count = get_u64(in);
  if (count != params.size())
    throw CheckpointError("checkpoint parameter count does not match model");
  for (uint64_t i = 0; i < count; ++i) {
    const uint64_t len = get_u64(in);
    std::string name(len, '\0');
    in.read(name.data(), std::streamsize(len));
    if (!in) throw CheckpointError("truncated checkpoint");
    const int idx = find_param(name);
    if (idx < 0) throw CheckpointError("checkpoint has unknown parameter '" + name + "'");
    const uint64_t rank = get_u64(in);
    std::vector<std::size_t> shape(rank);
    for (auto& s : shape) s = std::size_t(get_u64(in));
    if (shape != params[idx].value.shape)
      throw CheckpointError("checkpoint shape mismatch for parameter '" + name + "'");
    for (auto& v : params[idx].value.data) v = std::bit_cast<double>(get_u64(in));
  }
  refresh_assignments();
  refresh_cluster_decays();
}

} // namespace tkg
