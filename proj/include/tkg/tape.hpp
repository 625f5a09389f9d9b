#pragma once
// Reverse-mode automatic differentiation over Tensor values.
//
// The tape is rebuilt for every optimizer step: the chronological protocol
// makes each step's graph different (variable chain lengths, per-query gate
// masks, fresh memory writes), so there is nothing to gain from a static
// graph. Construction order is topological order; backward() walks the node
// list in reverse exactly once, accumulating gradients into lazily allocated
// per-node buffers. A node built through detach() contributes its forward
// value but propagates no gradient to its producers, which is how the
// training protocol keeps recurrence gradients out of the memory chain.

#include <cstdint>
#include <utility>
#include <vector>

#include "tkg/tensor.hpp"

namespace tkg {

using VId = int32_t;

enum class Op : uint8_t {
  leaf,
  add,
  sub,
  mul,          // elementwise, equal shapes
  scale,        // by a compile-time scalar (aux)
  mul_scalar_t, // by a [1] tensor node, gradient flows into both
  sigmoid,
  tanh_fn,
  gelu,
  concat,       // last axis
  matmul,       // A[m,k] * B[k,n]
  matmul_nt,    // A[m,k] * B[n,k]^T
  matvec,       // A[m,n] * x[n]
  tmatvec,      // A[m,n]^T * x[m]
  add_rowvec,   // A[m,n] + b[n] per row
  compose_rows, // constant base matrix with tape-node row overrides
  gather_rows,  // rows of a node by index list (duplicates allowed)
  row_slice,
  slice_vec,
  col_range,
  mean_rows,
  sum_all,
  softmax,      // rank-1, or row-wise on rank-2
  softmax_xent, // scalar loss vs integer target
  stack2,       // two [d] vectors to [2,d]
  reshape,
  conv1d,       // SAME-padded 1-D conv over channel rows
  index_scalar, // one element of a rank-1 node
  replace_elem, // rank-1 copy with one element substituted by a scalar node
  vq_commit,    // mean squared distance of frozen vectors to their centers
  detach,
};

struct TapeNode {
  Op op = Op::leaf;
  VId in0 = -1, in1 = -1, in2 = -1;
  bool needs_grad = false;
  Tensor val;
  Tensor grad;   // allocated on first touch during backward
  Tensor extra;  // op-specific cache (softmax_xent probabilities)
  double aux = 0.0;
  std::size_t iaux = 0, iaux2 = 0, iaux3 = 0;
  std::vector<std::pair<std::size_t, VId>> row_overrides; // compose_rows
  std::vector<std::size_t> indices;                       // gather_rows
  std::vector<double> vq_vectors;                         // vq_commit, packed rows
  std::vector<std::size_t> vq_assign;
};

class Tape {
 public:
  // -------- graph construction --------
  VId leaf(Tensor v, bool needs_grad);
  VId constant(Tensor v) { return leaf(std::move(v), false); }

  VId add(VId a, VId b);
  VId sub(VId a, VId b);
  VId mul(VId a, VId b);
  VId scale(VId a, double c);
  VId mul_scalar_t(VId s, VId x);
  VId sigmoid(VId a);
  VId tanh_fn(VId a);
  VId gelu(VId a);
  VId concat(VId a, VId b);
  VId matmul(VId a, VId b);
  VId matmul_nt(VId a, VId b);
  VId matvec(VId a, VId x);
  VId tmatvec(VId a, VId x);
  VId add_rowvec(VId a, VId b);
  VId compose_rows(Tensor base, std::vector<std::pair<std::size_t, VId>> rows);
  VId gather_rows(VId src, std::vector<std::size_t> idxs);
  VId row_slice(VId a, std::size_t row);
  VId slice_vec(VId a, std::size_t off, std::size_t len);
  VId col_range(VId a, std::size_t off, std::size_t len);
  VId mean_rows(VId a);
  VId sum_all(VId a);
  VId softmax(VId a);
  VId softmax_xent(VId logits, std::size_t target);
  VId stack2(VId a, VId b);
  VId reshape(VId a, std::vector<std::size_t> shape);
  // x[cin,n], w[nf, cin*kw], b[nf] -> [nf, n], SAME padding, kw odd
  VId conv1d(VId x, VId w, VId b, std::size_t kw);
  VId index_scalar(VId v, std::size_t i);
  VId replace_elem(VId v, std::size_t i, VId scalar);
  // centers[K,d]; items are frozen vectors with their center assignment
  VId vq_commit(VId centers, std::vector<double> vectors, std::vector<std::size_t> assign);
  VId detach(VId a);

  // -------- execution --------
  void backward(VId root);

  const Tensor& val(VId id) const { return nodes_[id].val; }
  // Zero tensor of the node's shape if backward never touched it.
  Tensor grad(VId id) const;
  bool needs_grad(VId id) const { return nodes_[id].needs_grad; }

  std::size_t size() const { return nodes_.size(); }
  void reset() { nodes_.clear(); }

 private:
  std::vector<TapeNode> nodes_;

  VId push(TapeNode n);
  Tensor& grad_buf(VId id);
  TapeNode& at(VId id) { return nodes_[id]; }
};

} // namespace tkg
