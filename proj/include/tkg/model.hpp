#pragma once
// Temporal link-prediction model over entity streams. A static-inductive
// prior (frozen embeddings + cluster prototypes + chain-encoded interaction
// signals) is fused with an online per-entity memory through an adaptive gate
// that is forced to zero for entities with no observed updates yet.
//
// Facts at one timestamp are processed on a single differentiable tape.
// Candidate representations are built once per timestamp from the bank state
// at the start of the timestamp, so scoring never sees updates made by other
// queries at the same timestamp; the query subject itself reads the freshest
// state sequentially.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "tkg/backbone.hpp"
#include "tkg/dataset.hpp"
#include "tkg/embedding.hpp"
#include "tkg/memory.hpp"
#include "tkg/tape.hpp"

namespace tkg {

enum class DecoderKind { conv, bilinear };

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  std::size_t d = 32;
  std::size_t k_code = 16;    // prototype clusters
  std::size_t chain_len = 10; // facts kept per entity chain
  std::size_t relation_filter_top = 0; // 0 = keep whole chain
  bool chain_attention_pool = false;   // mean pooling otherwise

  OperatorKind op = OperatorKind::ema;
  EmaVariant ema_variant = EmaVariant::shared;
  Timing timing = Timing::before;
  std::size_t k_buf = 16;    // attention buffer slots
  std::size_t attn_heads = 4;
  bool detach_memory = true; // one-step gradient truncation at the update input

  DecoderKind decoder = DecoderKind::conv;
  std::size_t conv_filters = 32;
  std::size_t conv_width = 3;

  double lambda_vq = 0.1;

  // ablation switches
  bool disable_memory = false; // gate forced to zero everywhere
  bool disable_prior = false;  // prototype enrichment off
  bool constant_gate = false;  // fixed gate value, no zero mask
  double constant_gate_value = 0.5;

  uint64_t seed = 42;
};

struct Param {
  std::string name;
  std::string group;
  Tensor value;
};

struct QueryScore {
  std::size_t fact_index = 0; // index into dataset facts
  double ce = 0.0;
  double gate_mean = 0.0;
  uint64_t tau_at_scoring = 0;
  std::vector<double> scores; // per-entity logits, filled when captured
};

struct StepOptions {
  bool score = true;          // build scoring subgraphs and the loss
  bool grads = false;         // run backward over the timestamp loss
  bool zero_gate = false;     // force the gate to zero for this pass
  bool capture_scores = false;
};

struct StepResult {
  double loss = 0.0;
  bool has_loss = false;
  std::vector<QueryScore> queries;
  std::vector<Tensor> grads; // parallel to params when requested
};

// carries one tape across several timestamps (used for replay analysis)
struct UnrollContext {
  Tape tape;
  std::vector<VId> param_leaves;
  std::unordered_map<uint32_t, VId> fresh; // latest update node per entity
  std::vector<VId> losses;
};

class Model {
public:
  Model(ModelConfig config, const TkgDataset* ds, const EmbeddingSource* emb);

  ModelConfig cfg;
  const TkgDataset* ds = nullptr;
  const EmbeddingSource* emb = nullptr;

  std::vector<Param> params;

  MemoryBank bank;
  ChainStore chains;
  PrototypeTable protos;
  std::vector<std::size_t> assign;       // entity -> cluster
  std::vector<double> cluster_decay;     // mean trained decay logit per cluster
  std::vector<bool> decay_is_trained;    // per entity, for the per-entity variant

  // clears memory, chains, prototypes and counters; parameters are untouched
  void reset_state();
  // recompute entity->cluster assignments from the current codebook
  void refresh_assignments();
  // k-means++ codebook over training entities, then refresh assignments
  void init_codebook();
  // mean decay logit per cluster over trained member entities
  void refresh_cluster_decays();

  StepResult process_timestamp(const Snapshot& snap, const StepOptions& opts,
                               UnrollContext* uc = nullptr);
  // advance chains and prototypes with the facts of a finished timestamp;
  // call after the optimizer step so encodings see updated parameters
  void commit_timestamp(const Snapshot& snap);

  std::size_t param_count() const;
  std::vector<std::pair<std::string, std::size_t>> audit() const; // (group, scalars)

  uint64_t structural_fingerprint() const;
  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

  // gradient of the summed loss over `window` w.r.t. the decay logit, computed
  // on one tape; with_detach toggles the one-step truncation at update inputs
  double unrolled_decay_grad(const std::vector<Snapshot>& window, bool with_detach);

  int find_param(const std::string& name) const;

private:
  // named indices into params (-1 when absent in this configuration)
  int p_rho_ = -1;
  int p_gru_wr_ = -1, p_gru_br_ = -1, p_gru_wu_ = -1, p_gru_bu_ = -1;
  int p_gru_wn_ = -1, p_gru_bn_ = -1;
  int p_att_wq_ = -1, p_att_wk_ = -1, p_att_wv_ = -1, p_att_wo_ = -1;
  int p_wg_ = -1;
  int p_wpsi_ = -1, p_bpsi_ = -1;
  int p_fact_w_ = -1, p_fact_b_ = -1, p_fact_w2_ = -1, p_fact_b2_ = -1;
  int p_pool_wq_ = -1, p_pool_wk_ = -1, p_pool_wv_ = -1;
  int p_sig_w1_ = -1, p_sig_w2_ = -1;
  int p_rel_ = -1;
  int p_centers_ = -1;
  int p_conv_w_ = -1, p_conv_b_ = -1, p_proj_w_ = -1, p_proj_b_ = -1;

  int register_param(const std::string& name, const std::string& group,
                     std::vector<std::size_t> shape, double init_scale);

  // tape builders
  VId build_signal(Tape& tape, const std::vector<VId>& pl, uint32_t subject,
                   uint32_t relation) const;
  VId build_update(Tape& tape, const std::vector<VId>& pl, uint32_t subject,
                   VId m_in, VId x, uint64_t tau_pre);
  VId fact_encoder_rows(Tape& tape, const std::vector<VId>& pl,
                        const std::vector<std::size_t>& keep,
                        const std::vector<ChainEntry>& chain) const;
  double decay_logit_value(uint32_t entity, std::size_t dim_unused) const;

  // off-tape fact encoding used for prototype commits
  void encode_fact(uint32_t neighbor, uint32_t relation, double* out) const;
};

struct CheckpointParamInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t numel = 0;
};
struct CheckpointInfo {
  uint64_t version = 0;
  uint64_t fingerprint = 0;
  std::vector<CheckpointParamInfo> params;
  std::size_t total = 0;
};
// reads headers and shapes without needing a model
CheckpointInfo inspect_checkpoint(const std::string& path);

std::string operator_name(OperatorKind k);
std::string ema_variant_name(EmaVariant v);
std::string timing_name(Timing t);
std::string decoder_name(DecoderKind k);
OperatorKind parse_operator(const std::string& s);
EmaVariant parse_ema_variant(const std::string& s);
Timing parse_timing(const std::string& s);
DecoderKind parse_decoder(const std::string& s);

} // namespace tkg
