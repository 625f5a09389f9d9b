#include "tkg/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tkg/kernels.hpp"

namespace tkg {

VId Tape::push(TapeNode n) {
  nodes_.push_back(std::move(n));
  return static_cast<VId>(nodes_.size() - 1);
}

Tensor& Tape::grad_buf(VId id) {
  TapeNode& n = nodes_[id];
  if (n.grad.data.empty()) n.grad = Tensor::zeros(n.val.shape);
  return n.grad;
}

Tensor Tape::grad(VId id) const {
  const TapeNode& n = nodes_[id];
  if (n.grad.data.empty()) return Tensor::zeros(n.val.shape);
  return n.grad;
}

VId Tape::leaf(Tensor v, bool needs_grad) {
  TapeNode n;
  n.op = Op::leaf;
  n.needs_grad = needs_grad;
  n.val = std::move(v);
  return push(n);
}

static bool any_grad(const Tape& t, VId a, VId b = -1, VId c = -1) {
  if (a >= 0 && t.needs_grad(a)) return true;
  if (b >= 0 && t.needs_grad(b)) return true;
  if (c >= 0 && t.needs_grad(c)) return true;
  return false;
}

VId Tape::add(VId a, VId b) {
  require_same_shape(val(a), val(b), "add");
  TapeNode n;
  n.op = Op::add;
  n.in0 = a;
  n.in1 = b;
  n.needs_grad = any_grad(*this, a, b);
  n.val = Tensor::zeros(val(a).shape);
  kern::add(val(a).data.data(), val(b).data.data(), n.val.data.data(), n.val.numel());
  return push(std::move(n));
}

VId Tape::sub(VId a, VId b) {
  require_same_shape(val(a), val(b), "sub");
  TapeNode n;
  n.op = Op::sub;
  n.in0 = a;
  n.in1 = b;
  n.needs_grad = any_grad(*this, a, b);
  n.val = Tensor::zeros(val(a).shape);
  kern::sub(val(a).data.data(), val(b).data.data(), n.val.data.data(), n.val.numel());
  return push(std::move(n));
}

VId Tape::mul(VId a, VId b) {
  require_same_shape(val(a), val(b), "mul");
  TapeNode n;
  n.op = Op::mul;
  n.in0 = a;
  n.in1 = b;
  n.needs_grad = any_grad(*this, a, b);
  n.val = Tensor::zeros(val(a).shape);
  kern::mul(val(a).data.data(), val(b).data.data(), n.val.data.data(), n.val.numel());
  return push(std::move(n));
}

VId Tape::scale(VId a, double c) {
  TapeNode n;
  n.op = Op::scale;
  n.in0 = a;
  n.aux = c;
  n.needs_grad = any_grad(*this, a);
  n.val = Tensor::zeros(val(a).shape);
  kern::scale(val(a).data.data(), c, n.val.data.data(), n.val.numel());
  return push(std::move(n));
}

VId Tape::mul_scalar_t(VId s, VId x) {
  if (val(s).numel() != 1) throw ShapeError("mul_scalar_t: scalar operand must have one element");
  TapeNode n;
  n.op = Op::mul_scalar_t;
  n.in0 = s;
  n.in1 = x;
  n.needs_grad = any_grad(*this, s, x);
  n.val = Tensor::zeros(val(x).shape);
  kern::scale(val(x).data.data(), val(s).data[0], n.val.data.data(), n.val.numel());
  return push(std::move(n));
}

VId Tape::sigmoid(VId a) {
  TapeNode n;
  n.op = Op::sigmoid;
  n.in0 = a;
  n.needs_grad = any_grad(*this, a);
  n.val = Tensor::zeros(val(a).shape);
  kern::sigmoid(val(a).data.data(), n.val.data.data(), n.val.numel());
  return push(std::move(n));
}

VId Tape::tanh_fn(VId a) {
  TapeNode n;
  n.op = Op::tanh_fn;
  n.in0 = a;
  n.needs_grad = any_grad(*this, a);
  n.val = Tensor::zeros(val(a).shape);
  kern::tanh_(val(a).data.data(), n.val.data.data(), n.val.numel());
  return push(std::move(n));
}

VId Tape::gelu(VId a) {
  TapeNode n;
  n.op = Op::gelu;
  n.in0 = a;
  n.needs_grad = any_grad(*this, a);
  n.val = Tensor::zeros(val(a).shape);
  kern::gelu(val(a).data.data(), n.val.data.data(), n.val.numel());
  return push(std::move(n));
}

VId Tape::concat(VId a, VId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  TapeNode n;
  n.op = Op::concat;
  n.in0 = a;
  n.in1 = b;
  n.needs_grad = any_grad(*this, a, b);
  if (ta.rank() == 1 && tb.rank() == 1) {
    n.val = Tensor::zeros({ta.shape[0] + tb.shape[0]});
    std::copy(ta.data.begin(), ta.data.end(), n.val.data.begin());
    std::copy(tb.data.begin(), tb.data.end(), n.val.data.begin() + ta.shape[0]);
  } else if (ta.rank() == 2 && tb.rank() == 2 && ta.shape[0] == tb.shape[0]) {
    std::size_t m = ta.shape[0], ca = ta.shape[1], cb = tb.shape[1];
    n.val = Tensor::zeros({m, ca + cb});
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(&ta.data[i * ca], ca, &n.val.data[i * (ca + cb)]);
      std::copy_n(&tb.data[i * cb], cb, &n.val.data[i * (ca + cb) + ca]);
    }
  } else {
    throw ShapeError("concat: incompatible shapes " + ta.shape_str() + " vs " + tb.shape_str());
  }
  return push(std::move(n));
}

VId Tape::matmul(VId a, VId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[0])
    throw ShapeError("matmul: inner dimensions disagree, " + ta.shape_str() + " vs " + tb.shape_str());
  TapeNode n;
  n.op = Op::matmul;
  n.in0 = a;
  n.in1 = b;
  n.needs_grad = any_grad(*this, a, b);
  n.val = Tensor::zeros({ta.shape[0], tb.shape[1]});
  kern::matmul(ta.data.data(), tb.data.data(), n.val.data.data(),
               ta.shape[0], ta.shape[1], tb.shape[1]);
  return push(std::move(n));
}

VId Tape::matmul_nt(VId a, VId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[1])
    throw ShapeError("matmul_nt: inner dimensions disagree, " + ta.shape_str() + " vs " +
                     tb.shape_str());
  TapeNode n;
  n.op = Op::matmul_nt;
  n.in0 = a;
  n.in1 = b;
  n.needs_grad = any_grad(*this, a, b);
  n.val = Tensor::zeros({ta.shape[0], tb.shape[0]});
  kern::matmul_nt(ta.data.data(), tb.data.data(), n.val.data.data(),
                  ta.shape[0], ta.shape[1], tb.shape[0]);
  return push(std::move(n));
}

VId Tape::matvec(VId a, VId x) {
  const Tensor& ta = val(a);
  const Tensor& tx = val(x);
  if (ta.rank() != 2 || tx.rank() != 1 || ta.shape[1] != tx.shape[0])
    throw ShapeError("matvec: shapes disagree, " + ta.shape_str() + " vs " + tx.shape_str());
  TapeNode n;
  n.op = Op::matvec;
  n.in0 = a;
  n.in1 = x;
  n.needs_grad = any_grad(*this, a, x);
  n.val = Tensor::zeros({ta.shape[0]});
  kern::matvec(ta.data.data(), tx.data.data(), n.val.data.data(), ta.shape[0], ta.shape[1]);
  return push(std::move(n));
}

VId Tape::tmatvec(VId a, VId x) {
  const Tensor& ta = val(a);
  const Tensor& tx = val(x);
  if (ta.rank() != 2 || tx.rank() != 1 || ta.shape[0] != tx.shape[0])
    throw ShapeError("tmatvec: shapes disagree, " + ta.shape_str() + " vs " + tx.shape_str());
  TapeNode n;
  n.op = Op::tmatvec;
  n.in0 = a;
  n.in1 = x;
  n.needs_grad = any_grad(*this, a, x);
  n.val = Tensor::zeros({ta.shape[1]});
  kern::tmatvec(ta.data.data(), tx.data.data(), n.val.data.data(), ta.shape[0], ta.shape[1]);
  return push(std::move(n));
}

VId Tape::add_rowvec(VId a, VId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.rank() != 2 || tb.rank() != 1 || ta.shape[1] != tb.shape[0])
    throw ShapeError("add_rowvec: shapes disagree, " + ta.shape_str() + " vs " + tb.shape_str());
  TapeNode n;
  n.op = Op::add_rowvec;
  n.in0 = a;
  n.in1 = b;
  n.needs_grad = any_grad(*this, a, b);
  n.val = ta;
  for (std::size_t i = 0; i < ta.shape[0]; ++i)
    kern::add(&ta.data[i * ta.shape[1]], tb.data.data(), &n.val.data[i * ta.shape[1]],
              ta.shape[1]);
  return push(std::move(n));
}

VId Tape::compose_rows(Tensor base, std::vector<std::pair<std::size_t, VId>> rows) {
  if (base.rank() != 2) throw ShapeError("compose_rows: base must be rank 2");
  TapeNode n;
  n.op = Op::compose_rows;
  n.val = std::move(base);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j)
      if (rows[i].first == rows[j].first)
        throw std::logic_error("compose_rows: duplicate override for row " +
                               std::to_string(rows[i].first));
  for (auto& [r, vid] : rows) {
    const Tensor& tv = val(vid);
    if (r >= n.val.shape[0] || tv.rank() != 1 || tv.shape[0] != n.val.shape[1])
      throw ShapeError("compose_rows: override row " + std::to_string(r) + " shape " +
                       tv.shape_str() + " vs base " + n.val.shape_str());
    std::copy(tv.data.begin(), tv.data.end(), n.val.data.begin() + r * n.val.shape[1]);
    if (needs_grad(vid)) n.needs_grad = true;
  }
  n.row_overrides = std::move(rows);
  return push(std::move(n));
}

VId Tape::gather_rows(VId src, std::vector<std::size_t> idxs) {
  const Tensor& ts = val(src);
  if (ts.rank() != 2) throw ShapeError("gather_rows: source must be rank 2");
  TapeNode n;
  n.op = Op::gather_rows;
  n.in0 = src;
  n.needs_grad = any_grad(*this, src);
  n.val = Tensor::zeros({idxs.size(), ts.shape[1]});
  for (std::size_t i = 0; i < idxs.size(); ++i) {
    if (idxs[i] >= ts.shape[0]) throw std::out_of_range("gather_rows: row index out of range");
    std::copy_n(&ts.data[idxs[i] * ts.shape[1]], ts.shape[1], &n.val.data[i * ts.shape[1]]);
  }
  n.indices = std::move(idxs);
  return push(std::move(n));
}

VId Tape::row_slice(VId a, std::size_t row) {
  const Tensor& ta = val(a);
  if (ta.rank() != 2 || row >= ta.shape[0])
    throw std::out_of_range("row_slice: row " + std::to_string(row) + " of " + ta.shape_str());
  TapeNode n;
  n.op = Op::row_slice;
  n.in0 = a;
  n.iaux = row;
  n.needs_grad = any_grad(*this, a);
  n.val = Tensor::zeros({ta.shape[1]});
  std::copy_n(&ta.data[row * ta.shape[1]], ta.shape[1], n.val.data.begin());
  return push(std::move(n));
}

VId Tape::slice_vec(VId a, std::size_t off, std::size_t len) {
  const Tensor& ta = val(a);
  if (ta.rank() != 1 || off + len > ta.shape[0])
    throw std::out_of_range("slice_vec: range out of bounds for " + ta.shape_str());
  TapeNode n;
  n.op = Op::slice_vec;
  n.in0 = a;
  n.iaux = off;
  n.iaux2 = len;
  n.needs_grad = any_grad(*this, a);
  n.val = Tensor::zeros({len});
  std::copy_n(&ta.data[off], len, n.val.data.begin());
  return push(std::move(n));
}

VId Tape::col_range(VId a, std::size_t off, std::size_t len) {
  const Tensor& ta = val(a);
  if (ta.rank() != 2 || off + len > ta.shape[1])
    throw std::out_of_range("col_range: range out of bounds for " + ta.shape_str());
  TapeNode n;
  n.op = Op::col_range;
  n.in0 = a;
  n.iaux = off;
  n.iaux2 = len;
  n.needs_grad = any_grad(*this, a);
  n.val = Tensor::zeros({ta.shape[0], len});
  for (std::size_t i = 0; i < ta.shape[0]; ++i)
    std::copy_n(&ta.data[i * ta.shape[1] + off], len, &n.val.data[i * len]);
  return push(std::move(n));
}

VId Tape::mean_rows(VId a) {
  const Tensor& ta = val(a);
  if (ta.rank() != 2 || ta.shape[0] == 0)
    throw ShapeError("mean_rows: need a non-empty rank-2 input, got " + ta.shape_str());
  TapeNode n;
  n.op = Op::mean_rows;
  n.in0 = a;
  n.needs_grad = any_grad(*this, a);
  n.val = Tensor::zeros({ta.shape[1]});
  for (std::size_t i = 0; i < ta.shape[0]; ++i)
    kern::add(n.val.data.data(), &ta.data[i * ta.shape[1]], n.val.data.data(), ta.shape[1]);
  kern::scale(n.val.data.data(), 1.0 / double(ta.shape[0]), n.val.data.data(), ta.shape[1]);
  return push(std::move(n));
}

VId Tape::sum_all(VId a) {
  TapeNode n;
  n.op = Op::sum_all;
  n.in0 = a;
  n.needs_grad = any_grad(*this, a);
  double s = 0.0;
  for (double v : val(a).data) s += v;
  n.val = Tensor({1}, {s});
  return push(std::move(n));
}

static void softmax_row(const double* x, double* y, std::size_t n) {
  double mx = x[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - mx);
    z += y[i];
  }
  for (std::size_t i = 0; i < n; ++i) y[i] /= z;
}

VId Tape::softmax(VId a) {
  const Tensor& ta = val(a);
  TapeNode n;
  n.op = Op::softmax;
  n.in0 = a;
  n.needs_grad = any_grad(*this, a);
  n.val = Tensor::zeros(ta.shape);
  if (ta.rank() == 1) {
    softmax_row(ta.data.data(), n.val.data.data(), ta.shape[0]);
  } else if (ta.rank() == 2) {
    for (std::size_t i = 0; i < ta.shape[0]; ++i)
      softmax_row(&ta.data[i * ta.shape[1]], &n.val.data[i * ta.shape[1]], ta.shape[1]);
  } else {
    throw ShapeError("softmax: rank must be 1 or 2");
  }
  return push(std::move(n));
}

VId Tape::softmax_xent(VId logits, std::size_t target) {
  const Tensor& tl = val(logits);
  if (tl.rank() != 1) throw ShapeError("softmax_xent: logits must be rank 1");
  if (target >= tl.shape[0])
    throw std::out_of_range("softmax_xent: target " + std::to_string(target) +
                            " out of range for " + tl.shape_str());
  TapeNode n;
  n.op = Op::softmax_xent;
  n.in0 = logits;
  n.iaux = target;
  n.needs_grad = any_grad(*this, logits);
  // log-sum-exp with the max-subtraction trick, probabilities cached for backward
  std::size_t nn = tl.shape[0];
  n.extra = Tensor::zeros({nn});
  double mx = tl.data[0];
  for (std::size_t i = 1; i < nn; ++i) mx = std::max(mx, tl.data[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < nn; ++i) {
    n.extra.data[i] = std::exp(tl.data[i] - mx);
    z += n.extra.data[i];
  }
  for (std::size_t i = 0; i < nn; ++i) n.extra.data[i] /= z;
  double loss = std::log(z) + mx - tl.data[target];
  n.val = Tensor({1}, {loss});
  return push(std::move(n));
}

VId Tape::stack2(VId a, VId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.rank() != 1 || tb.rank() != 1 || ta.shape[0] != tb.shape[0])
    throw ShapeError("stack2: need equal-length vectors, " + ta.shape_str() + " vs " +
                     tb.shape_str());
  TapeNode n;
  n.op = Op::stack2;
  n.in0 = a;
  n.in1 = b;
  n.needs_grad = any_grad(*this, a, b);
  n.val = Tensor::zeros({2, ta.shape[0]});
  std::copy(ta.data.begin(), ta.data.end(), n.val.data.begin());
  std::copy(tb.data.begin(), tb.data.end(), n.val.data.begin() + ta.shape[0]);
  return push(std::move(n));
}

VId Tape::reshape(VId a, std::vector<std::size_t> shape) {
  if (Tensor::numel_of(shape) != val(a).numel())
    throw ShapeError("reshape: element count changes");
  TapeNode n;
  n.op = Op::reshape;
  n.in0 = a;
  n.needs_grad = any_grad(*this, a);
  n.val = Tensor(std::move(shape), val(a).data);
  return push(std::move(n));
}

VId Tape::conv1d(VId x, VId w, VId b, std::size_t kw) {
  const Tensor& tx = val(x);
  const Tensor& tw = val(w);
  const Tensor& tb = val(b);
  if (tx.rank() != 2 || tw.rank() != 2 || tb.rank() != 1)
    throw ShapeError("conv1d: bad ranks");
  std::size_t cin = tx.shape[0], len = tx.shape[1], nf = tw.shape[0];
  if (tw.shape[1] != cin * kw || tb.shape[0] != nf || kw % 2 == 0)
    throw ShapeError("conv1d: filter bank " + tw.shape_str() + " does not match input " +
                     tx.shape_str());
  TapeNode n;
  n.op = Op::conv1d;
  n.in0 = x;
  n.in1 = w;
  n.in2 = b;
  n.iaux = kw;
  n.needs_grad = any_grad(*this, x, w, b);
  n.val = Tensor::zeros({nf, len});
  std::size_t pad = (kw - 1) / 2;
  for (std::size_t f = 0; f < nf; ++f) {
    for (std::size_t j = 0; j < len; ++j) {
      double s = tb.data[f];
      for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t t = 0; t < kw; ++t) {
          std::size_t jj = j + t;
          if (jj < pad || jj - pad >= len) continue;
          s += tx.data[ci * len + (jj - pad)] * tw.data[f * (cin * kw) + ci * kw + t];
        }
      n.val.data[f * len + j] = s;
    }
  }
  return push(std::move(n));
}

VId Tape::index_scalar(VId v, std::size_t i) {
  const Tensor& tv = val(v);
  if (tv.rank() != 1 || i >= tv.shape[0])
    throw std::out_of_range("index_scalar: index " + std::to_string(i) + " of " + tv.shape_str());
  TapeNode n;
  n.op = Op::index_scalar;
  n.in0 = v;
  n.iaux = i;
  n.needs_grad = any_grad(*this, v);
  n.val = Tensor({1}, {tv.data[i]});
  return push(std::move(n));
}

VId Tape::replace_elem(VId v, std::size_t i, VId scalar) {
  const Tensor& tv = val(v);
  if (tv.rank() != 1 || i >= tv.shape[0])
    throw std::out_of_range("replace_elem: index " + std::to_string(i) + " of " + tv.shape_str());
  if (val(scalar).numel() != 1) throw ShapeError("replace_elem: substitute must be scalar");
  TapeNode n;
  n.op = Op::replace_elem;
  n.in0 = v;
  n.in1 = scalar;
  n.iaux = i;
  n.needs_grad = any_grad(*this, v, scalar);
  n.val = tv;
  n.val.data[i] = val(scalar).data[0];
  return push(std::move(n));
}

VId Tape::vq_commit(VId centers, std::vector<double> vectors, std::vector<std::size_t> assign) {
  const Tensor& tc = val(centers);
  if (tc.rank() != 2) throw ShapeError("vq_commit: centers must be rank 2");
  std::size_t d = tc.shape[1];
  if (vectors.size() != assign.size() * d)
    throw ShapeError("vq_commit: packed vectors do not match assignment count");
  TapeNode n;
  n.op = Op::vq_commit;
  n.in0 = centers;
  n.needs_grad = any_grad(*this, centers) && !assign.empty();
  double loss = 0.0;
  for (std::size_t i = 0; i < assign.size(); ++i) {
    if (assign[i] >= tc.shape[0]) throw std::out_of_range("vq_commit: center index out of range");
    const double* h = &vectors[i * d];
    const double* c = &tc.data[assign[i] * d];
    for (std::size_t j = 0; j < d; ++j) {
      double diff = h[j] - c[j];
      loss += diff * diff;
    }
  }
  if (!assign.empty()) loss /= double(assign.size());
  n.val = Tensor({1}, {loss});
  n.vq_vectors = std::move(vectors);
  n.vq_assign = std::move(assign);
  return push(std::move(n));
}

VId Tape::detach(VId a) {
  TapeNode n;
  n.op = Op::detach;
  n.in0 = a;
  n.needs_grad = false;
  n.val = val(a);
  return push(std::move(n));
}

// ============================================================
// backward
// ============================================================

void Tape::backward(VId root) {
  if (root < 0 || std::size_t(root) >= nodes_.size())
    throw std::logic_error("backward: bad root id");
  if (nodes_[root].val.numel() != 1)
    throw std::logic_error("backward: root must be scalar, got " + nodes_[root].val.shape_str());

  // propagate into scratch buffers so each call contributes exactly one unit
  // seed; results fold into the persistent grads at the end
  std::vector<Tensor> local(std::size_t(root) + 1);
  auto lbuf = [&](VId id) -> Tensor& {
    Tensor& t = local[id];
    if (t.data.empty()) t = Tensor::zeros(nodes_[id].val.shape);
    return t;
  };
  lbuf(root).data[0] = 1.0;

  for (VId id = root; id >= 0; --id) {
    TapeNode& n = nodes_[id];
    if (!n.needs_grad || local[id].data.empty()) continue;
    const Tensor& g = local[id];
    const std::size_t ne = g.numel();

    auto gin = [&](VId in) -> double* { return lbuf(in).data.data(); };
    auto want = [&](VId in) { return in >= 0 && nodes_[in].needs_grad; };

    switch (n.op) {
      case Op::leaf:
      case Op::detach:
        break;
      case Op::add:
        if (want(n.in0)) kern::axpy(1.0, g.data.data(), gin(n.in0), ne);
        if (want(n.in1)) kern::axpy(1.0, g.data.data(), gin(n.in1), ne);
        break;
      case Op::sub:
        if (want(n.in0)) kern::axpy(1.0, g.data.data(), gin(n.in0), ne);
        if (want(n.in1)) kern::axpy(-1.0, g.data.data(), gin(n.in1), ne);
        break;
      case Op::mul: {
        if (want(n.in0)) {
          double* d = gin(n.in0);
          const double* b = nodes_[n.in1].val.data.data();
          for (std::size_t i = 0; i < ne; ++i) d[i] += g.data[i] * b[i];
        }
        if (want(n.in1)) {
          double* d = gin(n.in1);
          const double* a = nodes_[n.in0].val.data.data();
          for (std::size_t i = 0; i < ne; ++i) d[i] += g.data[i] * a[i];
        }
        break;
      }
      case Op::scale:
        if (want(n.in0)) kern::axpy(n.aux, g.data.data(), gin(n.in0), ne);
        break;
      case Op::mul_scalar_t: {
        if (want(n.in0))
          gin(n.in0)[0] += kern::dot(g.data.data(), nodes_[n.in1].val.data.data(), ne);
        if (want(n.in1))
          kern::axpy(nodes_[n.in0].val.data[0], g.data.data(), gin(n.in1), ne);
        break;
      }
      case Op::sigmoid: {
        if (want(n.in0)) {
          double* d = gin(n.in0);
          for (std::size_t i = 0; i < ne; ++i) {
            double y = n.val.data[i];
            d[i] += g.data[i] * y * (1.0 - y);
          }
        }
        break;
      }
      case Op::tanh_fn: {
        if (want(n.in0)) {
          double* d = gin(n.in0);
          for (std::size_t i = 0; i < ne; ++i) {
            double y = n.val.data[i];
            d[i] += g.data[i] * (1.0 - y * y);
          }
        }
        break;
      }
      case Op::gelu: {
        if (want(n.in0)) {
          std::vector<double> dg(ne);
          kern::gelu_grad(nodes_[n.in0].val.data.data(), dg.data(), ne);
          double* d = gin(n.in0);
          for (std::size_t i = 0; i < ne; ++i) d[i] += g.data[i] * dg[i];
        }
        break;
      }
      case Op::concat: {
        const Tensor& ta = nodes_[n.in0].val;
        const Tensor& tb = nodes_[n.in1].val;
        if (ta.rank() == 1) {
          if (want(n.in0)) kern::axpy(1.0, g.data.data(), gin(n.in0), ta.shape[0]);
          if (want(n.in1)) kern::axpy(1.0, g.data.data() + ta.shape[0], gin(n.in1), tb.shape[0]);
        } else {
          std::size_t m = ta.shape[0], ca = ta.shape[1], cb = tb.shape[1];
          if (want(n.in0)) {
            double* d = gin(n.in0);
            for (std::size_t i = 0; i < m; ++i)
              kern::axpy(1.0, &g.data[i * (ca + cb)], d + i * ca, ca);
          }
          if (want(n.in1)) {
            double* d = gin(n.in1);
            for (std::size_t i = 0; i < m; ++i)
              kern::axpy(1.0, &g.data[i * (ca + cb) + ca], d + i * cb, cb);
          }
        }
        break;
      }
      case Op::matmul: {
        const Tensor& ta = nodes_[n.in0].val;
        const Tensor& tb = nodes_[n.in1].val;
        std::size_t m = ta.shape[0], k = ta.shape[1], nn = tb.shape[1];
        if (want(n.in0)) {
          // a_grad += g * b^T
          Tensor scratch = Tensor::zeros({m, k});
          kern::matmul_nt(g.data.data(), tb.data.data(), scratch.data.data(), m, nn, k);
          kern::axpy(1.0, scratch.data.data(), gin(n.in0), m * k);
        }
        if (want(n.in1))
          // b_grad += a^T * g
          kern::matmul_tn_acc(ta.data.data(), g.data.data(), gin(n.in1), k, m, nn);
        break;
      }
      case Op::matmul_nt: {
        const Tensor& ta = nodes_[n.in0].val;
        const Tensor& tb = nodes_[n.in1].val;
        std::size_t m = ta.shape[0], k = ta.shape[1], nn = tb.shape[0];
        if (want(n.in0))
          // a_grad += g * b
          kern::matmul_acc(g.data.data(), tb.data.data(), gin(n.in0), m, nn, k);
        if (want(n.in1))
          // b_grad += g^T * a
          kern::matmul_tn_acc(g.data.data(), ta.data.data(), gin(n.in1), nn, m, k);
        break;
      }
      case Op::matvec: {
        const Tensor& ta = nodes_[n.in0].val;
        const Tensor& tx = nodes_[n.in1].val;
        std::size_t m = ta.shape[0], nn = ta.shape[1];
        if (want(n.in0)) {
          double* d = gin(n.in0);
          for (std::size_t i = 0; i < m; ++i)
            kern::axpy(g.data[i], tx.data.data(), d + i * nn, nn);
        }
        if (want(n.in1)) {
          double* d = gin(n.in1);
          for (std::size_t i = 0; i < m; ++i)
            kern::axpy(g.data[i], &ta.data[i * nn], d, nn);
        }
        break;
      }
      case Op::tmatvec: {
        const Tensor& ta = nodes_[n.in0].val;
        const Tensor& tx = nodes_[n.in1].val;
        std::size_t m = ta.shape[0], nn = ta.shape[1];
        if (want(n.in0)) {
          double* d = gin(n.in0);
          for (std::size_t i = 0; i < m; ++i)
            kern::axpy(tx.data[i], g.data.data(), d + i * nn, nn);
        }
        if (want(n.in1)) {
          double* d = gin(n.in1);
          for (std::size_t i = 0; i < m; ++i) d[i] += kern::dot(&ta.data[i * nn], g.data.data(), nn);
        }
        break;
      }
      case Op::add_rowvec: {
        const Tensor& ta = nodes_[n.in0].val;
        std::size_t m = ta.shape[0], nn = ta.shape[1];
        if (want(n.in0)) kern::axpy(1.0, g.data.data(), gin(n.in0), m * nn);
        if (want(n.in1)) {
          double* d = gin(n.in1);
          for (std::size_t i = 0; i < m; ++i) kern::axpy(1.0, &g.data[i * nn], d, nn);
        }
        break;
      }
      case Op::compose_rows: {
        std::size_t nn = n.val.shape[1];
        for (auto& [r, vid] : n.row_overrides)
          if (want(vid)) kern::axpy(1.0, &g.data[r * nn], gin(vid), nn);
        break;
      }
      case Op::gather_rows: {
        if (want(n.in0)) {
          std::size_t nn = n.val.shape[1];
          double* d = gin(n.in0);
          for (std::size_t i = 0; i < n.indices.size(); ++i)
            kern::axpy(1.0, &g.data[i * nn], d + n.indices[i] * nn, nn);
        }
        break;
      }
      case Op::row_slice: {
        if (want(n.in0)) {
          std::size_t nn = n.val.shape[0];
          kern::axpy(1.0, g.data.data(), gin(n.in0) + n.iaux * nn, nn);
        }
        break;
      }
      case Op::slice_vec:
        if (want(n.in0)) kern::axpy(1.0, g.data.data(), gin(n.in0) + n.iaux, n.iaux2);
        break;
      case Op::col_range: {
        if (want(n.in0)) {
          const Tensor& ta = nodes_[n.in0].val;
          double* d = gin(n.in0);
          for (std::size_t i = 0; i < ta.shape[0]; ++i)
            kern::axpy(1.0, &g.data[i * n.iaux2], d + i * ta.shape[1] + n.iaux, n.iaux2);
        }
        break;
      }
      case Op::mean_rows: {
        if (want(n.in0)) {
          const Tensor& ta = nodes_[n.in0].val;
          double inv = 1.0 / double(ta.shape[0]);
          double* d = gin(n.in0);
          for (std::size_t i = 0; i < ta.shape[0]; ++i)
            kern::axpy(inv, g.data.data(), d + i * ta.shape[1], ta.shape[1]);
        }
        break;
      }
      case Op::sum_all: {
        if (want(n.in0)) {
          double g0 = g.data[0];
          double* d = gin(n.in0);
          std::size_t cnt = nodes_[n.in0].val.numel();
          for (std::size_t i = 0; i < cnt; ++i) d[i] += g0;
        }
        break;
      }
      case Op::softmax: {
        if (want(n.in0)) {
          const Tensor& y = n.val;
          double* d = gin(n.in0);
          std::size_t rows = y.rank() == 1 ? 1 : y.shape[0];
          std::size_t cols = y.rank() == 1 ? y.shape[0] : y.shape[1];
          for (std::size_t i = 0; i < rows; ++i) {
            const double* yr = &y.data[i * cols];
            const double* gr = &g.data[i * cols];
            double s = kern::dot(gr, yr, cols);
            for (std::size_t j = 0; j < cols; ++j) d[i * cols + j] += yr[j] * (gr[j] - s);
          }
        }
        break;
      }
      case Op::softmax_xent: {
        if (want(n.in0)) {
          double g0 = g.data[0];
          double* d = gin(n.in0);
          std::size_t cnt = n.extra.numel();
          for (std::size_t i = 0; i < cnt; ++i) d[i] += g0 * n.extra.data[i];
          d[n.iaux] -= g0;
        }
        break;
      }
      case Op::stack2: {
        std::size_t dd = n.val.shape[1];
        if (want(n.in0)) kern::axpy(1.0, g.data.data(), gin(n.in0), dd);
        if (want(n.in1)) kern::axpy(1.0, g.data.data() + dd, gin(n.in1), dd);
        break;
      }
      case Op::reshape:
        if (want(n.in0)) kern::axpy(1.0, g.data.data(), gin(n.in0), ne);
        break;
      case Op::conv1d: {
        const Tensor& tx = nodes_[n.in0].val;
        const Tensor& tw = nodes_[n.in1].val;
        std::size_t cin = tx.shape[0], len = tx.shape[1], nf = tw.shape[0], kw = n.iaux;
        std::size_t pad = (kw - 1) / 2;
        double* dx = want(n.in0) ? gin(n.in0) : nullptr;
        double* dw = want(n.in1) ? gin(n.in1) : nullptr;
        double* db = want(n.in2) ? gin(n.in2) : nullptr;
        for (std::size_t f = 0; f < nf; ++f) {
          for (std::size_t j = 0; j < len; ++j) {
            double gv = g.data[f * len + j];
            if (gv == 0.0) continue;
            if (db) db[f] += gv;
            for (std::size_t ci = 0; ci < cin; ++ci)
              for (std::size_t t = 0; t < kw; ++t) {
                std::size_t jj = j + t;
                if (jj < pad || jj - pad >= len) continue;
                std::size_t xi = ci * len + (jj - pad);
                std::size_t wi = f * (cin * kw) + ci * kw + t;
                if (dw) dw[wi] += gv * tx.data[xi];
                if (dx) dx[xi] += gv * tw.data[wi];
              }
          }
        }
        break;
      }
      case Op::index_scalar:
        if (want(n.in0)) gin(n.in0)[n.iaux] += g.data[0];
        break;
      case Op::replace_elem: {
        if (want(n.in0)) {
          double* d = gin(n.in0);
          for (std::size_t i = 0; i < ne; ++i)
            if (i != n.iaux) d[i] += g.data[i];
        }
        if (want(n.in1)) gin(n.in1)[0] += g.data[n.iaux];
        break;
      }
      case Op::vq_commit: {
        if (want(n.in0) && !n.vq_assign.empty()) {
          const Tensor& tc = nodes_[n.in0].val;
          std::size_t d = tc.shape[1];
          double coef = 2.0 * g.data[0] / double(n.vq_assign.size());
          double* dc = gin(n.in0);
          for (std::size_t i = 0; i < n.vq_assign.size(); ++i) {
            const double* h = &n.vq_vectors[i * d];
            const double* c = &tc.data[n.vq_assign[i] * d];
            double* t = dc + n.vq_assign[i] * d;
            for (std::size_t j = 0; j < d; ++j) t[j] += coef * (c[j] - h[j]);
          }
        }
        break;
      }
    }
  }

  for (VId id = 0; id <= root; ++id)
    if (!local[id].data.empty()) {
      Tensor& pg = grad_buf(id);
      kern::add(pg.data.data(), local[id].data.data(), pg.data.data(), pg.numel());
    }
}

} // namespace tkg
