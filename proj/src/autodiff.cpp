#include "hypertta/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "hypertta/kernels.hpp"
#include "hypertta/parallel.hpp"

namespace hypertta {

Parameter::Parameter(Tensor v, std::string t, bool train)
    : value(std::move(v)), grad(value.shape), trainable(train), tag(std::move(t)) {}

void Parameter::zero_grad() {
  grad.fill(0.0);
}

bool is_ln_affine(const Parameter& p) {
  return p.tag.rfind("ln", 0) == 0;
}

struct Tape::Node {
  enum class Op {
    Input,
    Param,
    Linear,
    Conv2d,
    Relu,
    Add,
    AddTiled,
    MulTiled,
    Scale,
    Concat,
    Softmax,
    LayerNorm,
    TokensFromMaps,
    MapsFromTokens,
    SplitHeads,
    MergeHeads,
    BmmNN,
    BmmNT,
    SelectToken,
    SumAll,
    SmoothedCE,
    MeanEntropy,
  };

  Op op;
  Tensor value;
  std::vector<std::int32_t> inputs;
  Parameter* bound = nullptr;
  bool leaf_needs_grad = false;
  Tensor saved_a, saved_b;  // layernorm: xhat, inv_std; smoothed_ce: targets
  std::vector<int> rows;    // mean_entropy selection
  double x0 = 0.0;          // scale factor / eps / log clamp
  std::int64_t i0 = 0;      // heads / target token / map height
  std::int64_t i1 = 0;      // map width
  Tensor grad;              // adjoint, allocated on first contribution
};

namespace {

using Op = Tape::Node::Op;

std::int64_t last_dim(const Tensor& t) {
  if (t.rank() == 0) throw ConfigError("operation needs a non-scalar tensor");
  return t.shape.back();
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw ConfigError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                    b.shape_str());
}

}  // namespace

Tape::Tape() = default;
Tape::~Tape() = default;

Tape::Node& Tape::node(Var v) {
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::check(Var v) const {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw ConfigError("invalid tape variable");
  }
  return v;
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

std::size_t Tape::size() const {
  return nodes_.size();
}

const Tensor& Tape::value(Var v) const {
  return node(check(v)).value;
}

const Tensor* Tape::grad_of(Var v) const {
  const Node& n = node(check(v));
  return n.grad.data.empty() ? nullptr : &n.grad;
}

Var Tape::input(Tensor value, bool needs_grad) {
  Node n;
  n.op = Op::Input;
  n.value = std::move(value);
  n.leaf_needs_grad = needs_grad;
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  Node n;
  n.op = Op::Param;
  n.value = p.value;
  n.bound = &p;
  return push(std::move(n));
}

Var Tape::linear(Var x, Var w) {
  return linear(x, w, Var{});
}

Var Tape::linear(Var x, Var w, Var b) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  if (wv.rank() != 2 || last_dim(xv) != wv.shape[0]) shape_error("linear", xv, wv);
  const std::int64_t K = wv.shape[0];
  const std::int64_t N = wv.shape[1];
  const std::int64_t R = xv.numel() / K;
  const double* bias = nullptr;
  if (b.valid()) {
    const Tensor& bv = value(b);
    if (bv.numel() != N) shape_error("linear bias", wv, bv);
    bias = bv.ptr();
  }
  Node n;
  n.op = Op::Linear;
  n.inputs = b.valid() ? std::vector<std::int32_t>{x.id, w.id, b.id}
                       : std::vector<std::int32_t>{x.id, w.id};
  std::vector<std::int64_t> shape = xv.shape;
  shape.back() = N;
  n.value = Tensor(std::move(shape));
  kern::matmul_nn(xv.ptr(), wv.ptr(), n.value.ptr(), R, K, N, bias);
  return push(std::move(n));
}

Var Tape::conv2d_reflect(Var x, Var k, Var b) {
  const Tensor& xv = value(x);
  const Tensor& kv = value(k);
  if (xv.rank() != 4 || kv.rank() != 4 || xv.shape[1] != kv.shape[1]) {
    shape_error("conv2d", xv, kv);
  }
  const std::int64_t kh = kv.shape[2];
  const std::int64_t kw = kv.shape[3];
  if (kh % 2 == 0 || kw % 2 == 0) throw ConfigError("conv2d: kernel must be odd");
  if (kh > 2 * xv.shape[2] - 1 || kw > 2 * xv.shape[3] - 1) {
    throw ConfigError("conv2d: kernel too large for reflect padding");
  }
  const double* bias = nullptr;
  if (b.valid()) {
    const Tensor& bv = value(b);
    if (bv.numel() != kv.shape[0]) shape_error("conv2d bias", kv, bv);
    bias = bv.ptr();
  }
  Node n;
  n.op = Op::Conv2d;
  n.inputs = b.valid() ? std::vector<std::int32_t>{x.id, k.id, b.id}
                       : std::vector<std::int32_t>{x.id, k.id};
  n.value = Tensor({xv.shape[0], kv.shape[0], xv.shape[2], xv.shape[3]});
  kern::conv2d_reflect(xv.ptr(), kv.ptr(), bias, n.value.ptr(), xv.shape[0], xv.shape[1],
                       xv.shape[2], xv.shape[3], kv.shape[0], kh, kw);
  return push(std::move(n));
}

Var Tape::relu(Var x) {
  const Tensor& xv = value(x);
  Node n;
  n.op = Op::Relu;
  n.inputs = {x.id};
  n.value = Tensor(xv.shape);
  kern::relu_forward(xv.ptr(), n.value.ptr(), xv.numel());
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) shape_error("add", av, bv);
  Node n;
  n.op = Op::Add;
  n.inputs = {a.id, b.id};
  n.value = Tensor(av.shape);
  kern::add_same(av.ptr(), bv.ptr(), n.value.ptr(), av.numel());
  return push(std::move(n));
}

Var Tape::add_tiled(Var x, Var v) {
  const Tensor& xv = value(x);
  const Tensor& vv = value(v);
  if (vv.numel() == 0 || xv.numel() % vv.numel() != 0) shape_error("add_tiled", xv, vv);
  Node n;
  n.op = Op::AddTiled;
  n.inputs = {x.id, v.id};
  n.value = Tensor(xv.shape);
  kern::add_tiled(xv.ptr(), vv.ptr(), n.value.ptr(), xv.numel(), vv.numel());
  return push(std::move(n));
}

Var Tape::mul_tiled(Var x, Var v) {
  const Tensor& xv = value(x);
  const Tensor& vv = value(v);
  if (vv.numel() == 0 || xv.numel() % vv.numel() != 0) shape_error("mul_tiled", xv, vv);
  Node n;
  n.op = Op::MulTiled;
  n.inputs = {x.id, v.id};
  n.value = Tensor(xv.shape);
  kern::mul_tiled(xv.ptr(), vv.ptr(), n.value.ptr(), xv.numel(), vv.numel());
  return push(std::move(n));
}

Var Tape::scale(Var x, double s) {
  const Tensor& xv = value(x);
  Node n;
  n.op = Op::Scale;
  n.inputs = {x.id};
  n.x0 = s;
  n.value = Tensor(xv.shape);
  kern::scale(xv.ptr(), s, n.value.ptr(), xv.numel());
  return push(std::move(n));
}

Var Tape::concat_lastdim(const std::vector<Var>& xs) {
  if (xs.empty()) throw ConfigError("concat_lastdim: empty input list");
  const Tensor& first = value(xs[0]);
  std::int64_t total = 0;
  for (Var v : xs) {
    const Tensor& t = value(v);
    if (t.rank() != first.rank()) shape_error("concat_lastdim", first, t);
    for (int i = 0; i + 1 < t.rank(); ++i) {
      if (t.shape[i] != first.shape[i]) shape_error("concat_lastdim", first, t);
    }
    total += last_dim(t);
  }
  Node n;
  n.op = Op::Concat;
  for (Var v : xs) n.inputs.push_back(v.id);
  std::vector<std::int64_t> shape = first.shape;
  shape.back() = total;
  n.value = Tensor(std::move(shape));
  const std::int64_t rows = n.value.numel() / total;
  std::int64_t off = 0;
  for (Var v : xs) {
    const Tensor& t = value(v);
    const std::int64_t d = last_dim(t);
    const double* src = t.ptr();
    double* dst = n.value.ptr();
    const std::int64_t at = off;
    parallel_for(rows, [&, at, d](std::int64_t r) {
      std::copy(src + r * d, src + (r + 1) * d, dst + r * total + at);
    });
    off += d;
  }
  return push(std::move(n));
}

Var Tape::softmax_lastdim(Var x) {
  const Tensor& xv = value(x);
  const std::int64_t d = last_dim(xv);
  Node n;
  n.op = Op::Softmax;
  n.inputs = {x.id};
  n.value = Tensor(xv.shape);
  kern::softmax_forward(xv.ptr(), n.value.ptr(), xv.numel() / d, d);
  return push(std::move(n));
}

Var Tape::layernorm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = value(x);
  const std::int64_t d = last_dim(xv);
  if (d == 0) throw ConfigError("layernorm: last dimension is zero");
  const Tensor& gv = value(gamma);
  const Tensor& bv = value(beta);
  if (gv.numel() != d || bv.numel() != d) shape_error("layernorm", xv, gv);
  const std::int64_t R = xv.numel() / d;
  Node n;
  n.op = Op::LayerNorm;
  n.inputs = {x.id, gamma.id, beta.id};
  n.x0 = eps;
  n.value = Tensor(xv.shape);
  n.saved_a = Tensor(xv.shape);   // xhat
  n.saved_b = Tensor({R});        // inv_std
  kern::layernorm_forward(xv.ptr(), gv.ptr(), bv.ptr(), n.value.ptr(), n.saved_a.ptr(),
                          n.saved_b.ptr(), R, d, eps);
  return push(std::move(n));
}

Var Tape::tokens_from_maps(Var x) {
  const Tensor& xv = value(x);
  if (xv.rank() != 4) throw ConfigError("tokens_from_maps: expects [B,C,H,W]");
  Node n;
  n.op = Op::TokensFromMaps;
  n.inputs = {x.id};
  n.value = Tensor({xv.shape[0], xv.shape[2] * xv.shape[3], xv.shape[1]});
  kern::tokens_from_maps(xv.ptr(), n.value.ptr(), xv.shape[0], xv.shape[1], xv.shape[2],
                         xv.shape[3]);
  return push(std::move(n));
}

Var Tape::maps_from_tokens(Var t, std::int64_t h, std::int64_t w) {
  const Tensor& tv = value(t);
  if (tv.rank() != 3 || tv.shape[1] != h * w) {
    throw ConfigError("maps_from_tokens: token count must equal h*w");
  }
  Node n;
  n.op = Op::MapsFromTokens;
  n.inputs = {t.id};
  n.i0 = h;
  n.i1 = w;
  n.value = Tensor({tv.shape[0], tv.shape[2], h, w});
  kern::maps_from_tokens(tv.ptr(), n.value.ptr(), tv.shape[0], tv.shape[2], h, w);
  return push(std::move(n));
}

Var Tape::split_heads(Var x, int heads) {
  const Tensor& xv = value(x);
  if (xv.rank() != 3 || heads <= 0 || xv.shape[2] % heads != 0) {
    throw ConfigError("split_heads: model dim must divide by heads");
  }
  Node n;
  n.op = Op::SplitHeads;
  n.inputs = {x.id};
  n.i0 = heads;
  n.value = Tensor({xv.shape[0] * heads, xv.shape[1], xv.shape[2] / heads});
  kern::split_heads(xv.ptr(), n.value.ptr(), xv.shape[0], xv.shape[1], xv.shape[2], heads);
  return push(std::move(n));
}

Var Tape::merge_heads(Var x, int heads) {
  const Tensor& xv = value(x);
  if (xv.rank() != 3 || heads <= 0 || xv.shape[0] % heads != 0) {
    throw ConfigError("merge_heads: batch dim must divide by heads");
  }
  const std::int64_t B = xv.shape[0] / heads;
  Node n;
  n.op = Op::MergeHeads;
  n.inputs = {x.id};
  n.i0 = heads;
  n.value = Tensor({B, xv.shape[1], xv.shape[2] * heads});
  kern::merge_heads(xv.ptr(), n.value.ptr(), B, xv.shape[1], xv.shape[2] * heads, heads);
  return push(std::move(n));
}

Var Tape::bmm_nn(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.rank() != 3 || bv.rank() != 3 || av.shape[0] != bv.shape[0] ||
      av.shape[2] != bv.shape[1]) {
    shape_error("bmm_nn", av, bv);
  }
  Node n;
  n.op = Op::BmmNN;
  n.inputs = {a.id, b.id};
  n.value = Tensor({av.shape[0], av.shape[1], bv.shape[2]});
  kern::bmm_nn(av.ptr(), bv.ptr(), n.value.ptr(), av.shape[0], av.shape[1], av.shape[2],
               bv.shape[2]);
  return push(std::move(n));
}

Var Tape::bmm_nt(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.rank() != 3 || bv.rank() != 3 || av.shape[0] != bv.shape[0] ||
      av.shape[2] != bv.shape[2]) {
    shape_error("bmm_nt", av, bv);
  }
  Node n;
  n.op = Op::BmmNT;
  n.inputs = {a.id, b.id};
  n.value = Tensor({av.shape[0], av.shape[1], bv.shape[1]});
  kern::bmm_nt(av.ptr(), bv.ptr(), n.value.ptr(), av.shape[0], av.shape[1], av.shape[2],
               bv.shape[1]);
  return push(std::move(n));
}

Var Tape::select_token(Var x, std::int64_t token) {
  const Tensor& xv = value(x);
  if (xv.rank() != 3 || token < 0 || token >= xv.shape[1]) {
    throw ConfigError("select_token: token index out of range");
  }
  Node n;
  n.op = Op::SelectToken;
  n.inputs = {x.id};
  n.i0 = token;
  n.value = Tensor({xv.shape[0], xv.shape[2]});
  const std::int64_t L = xv.shape[1];
  const std::int64_t D = xv.shape[2];
  const double* src = xv.ptr();
  double* dst = n.value.ptr();
  parallel_for(xv.shape[0], [&](std::int64_t b) {
    std::copy(src + (b * L + token) * D, src + (b * L + token + 1) * D, dst + b * D);
  });
  return push(std::move(n));
}

Var Tape::sum_all(Var x) {
  const Tensor& xv = value(x);
  Node n;
  n.op = Op::SumAll;
  n.inputs = {x.id};
  double s = 0.0;
  for (double v : xv.data) s += v;
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

Var Tape::smoothed_ce(Var probs, Tensor targets, double clamp) {
  const Tensor& pv = value(probs);
  if (pv.rank() != 2 || !pv.same_shape(targets)) shape_error("smoothed_ce", pv, targets);
  const std::int64_t B = pv.shape[0];
  const std::int64_t K = pv.shape[1];
  if (B == 0) throw ConfigError("smoothed_ce: empty batch");
  double loss = 0.0;
  for (std::int64_t b = 0; b < B; ++b) {
    double rowsum = 0.0;
    double acc = 0.0;
    for (std::int64_t k = 0; k < K; ++k) {
      const double p = pv.at2(b, k);
      rowsum += p;
      acc -= targets.at2(b, k) * std::log(std::max(p, clamp));
    }
    if (!(rowsum > 0.0)) throw NumericError("smoothed_ce: nonpositive probability row sum");
    loss += acc;
  }
  Node n;
  n.op = Op::SmoothedCE;
  n.inputs = {probs.id};
  n.saved_a = std::move(targets);
  n.x0 = clamp;
  n.value = Tensor::scalar(loss / static_cast<double>(B));
  return push(std::move(n));
}

Var Tape::mean_entropy(Var probs, std::vector<int> rows, double clamp) {
  const Tensor& pv = value(probs);
  if (pv.rank() != 2) throw ConfigError("mean_entropy: expects [B,K] probabilities");
  if (rows.empty()) throw ConfigError("mean_entropy: empty selection");
  const std::int64_t K = pv.shape[1];
  double loss = 0.0;
  for (int r : rows) {
    if (r < 0 || r >= pv.shape[0]) throw ConfigError("mean_entropy: row index out of range");
    for (std::int64_t k = 0; k < K; ++k) {
      const double p = pv.at2(r, k);
      loss -= p * std::log(std::max(p, clamp));
    }
  }
  Node n;
  n.op = Op::MeanEntropy;
  n.inputs = {probs.id};
  n.rows = std::move(rows);
  n.x0 = clamp;
  n.value = Tensor::scalar(loss / static_cast<double>(n.rows.size()));
  return push(std::move(n));
}

void Tape::backward(Var loss) {
  backward(loss, [](const Parameter& p) { return p.trainable; });
}

void Tape::backward(Var loss, const std::function<bool(const Parameter&)>& filter) {
  if (used_) {
    throw StaleTapeError("tape already differentiated; run the forward pass again");
  }
  used_ = true;
  check(loss);
  if (node(loss).value.numel() != 1) throw ConfigError("backward: loss must be scalar");

  // A node's adjoint is worth computing only if some leaf below it passes
  // the filter (inputs always precede their consumers on the tape).
  std::vector<char> wanted(nodes_.size(), 0);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    if (n.op == Op::Param) {
      wanted[i] = filter(*n.bound) ? 1 : 0;
    } else if (n.op == Op::Input) {
      wanted[i] = n.leaf_needs_grad ? 1 : 0;
    } else {
      for (std::int32_t in : n.inputs) {
        if (wanted[static_cast<std::size_t>(in)]) {
          wanted[i] = 1;
          break;
        }
      }
    }
  }
  if (!wanted[static_cast<std::size_t>(loss.id)]) return;

  auto grad_buf = [&](std::int32_t id) -> Tensor& {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
    return n.grad;
  };
  auto is_wanted = [&](std::int32_t id) {
    return wanted[static_cast<std::size_t>(id)] != 0;
  };
  auto accum = [&](std::int32_t id, const Tensor& contribution) {
    Tensor& buf = grad_buf(id);
    kern::accumulate(buf.ptr(), contribution.ptr(), buf.numel());
  };

  grad_buf(loss.id).fill(1.0);

  for (std::int64_t idx = static_cast<std::int64_t>(nodes_.size()) - 1; idx >= 0; --idx) {
    Node& n = nodes_[static_cast<std::size_t>(idx)];
    if (!wanted[static_cast<std::size_t>(idx)] || n.grad.data.empty()) continue;
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::Input:
        break;  // grad stays readable via grad_of
      case Op::Param:
        kern::accumulate(n.bound->grad.ptr(), g.ptr(), g.numel());
        break;
      case Op::Linear: {
        const Tensor& xv = nodes_[n.inputs[0]].value;
        const Tensor& wv = nodes_[n.inputs[1]].value;
        const std::int64_t K = wv.shape[0];
        const std::int64_t N = wv.shape[1];
        const std::int64_t R = xv.numel() / K;
        if (is_wanted(n.inputs[0])) {
          Tensor dx(xv.shape);
          kern::matmul_nt(g.ptr(), wv.ptr(), dx.ptr(), R, N, K);
          accum(n.inputs[0], dx);
        }
        if (is_wanted(n.inputs[1])) {
          Tensor dw(wv.shape);
          kern::matmul_tn(xv.ptr(), g.ptr(), dw.ptr(), K, R, N);
          accum(n.inputs[1], dw);
        }
        if (n.inputs.size() == 3 && is_wanted(n.inputs[2])) {
          Tensor db(nodes_[n.inputs[2]].value.shape);
          kern::colsum_tiled(g.ptr(), db.ptr(), R, N);
          accum(n.inputs[2], db);
        }
        break;
      }
      case Op::Conv2d: {
        const Tensor& xv = nodes_[n.inputs[0]].value;
        const Tensor& kv = nodes_[n.inputs[1]].value;
        const std::int64_t B = xv.shape[0];
        const std::int64_t C = xv.shape[1];
        const std::int64_t H = xv.shape[2];
        const std::int64_t W = xv.shape[3];
        const std::int64_t O = kv.shape[0];
        if (is_wanted(n.inputs[0])) {
          Tensor dx(xv.shape);
          kern::conv2d_reflect_dinput(g.ptr(), kv.ptr(), dx.ptr(), B, C, H, W, O, kv.shape[2],
                                      kv.shape[3]);
          accum(n.inputs[0], dx);
        }
        if (is_wanted(n.inputs[1])) {
          Tensor dk(kv.shape);
          kern::conv2d_reflect_dkernel(g.ptr(), xv.ptr(), dk.ptr(), B, C, H, W, O, kv.shape[2],
                                       kv.shape[3]);
          accum(n.inputs[1], dk);
        }
        if (n.inputs.size() == 3 && is_wanted(n.inputs[2])) {
          Tensor db(nodes_[n.inputs[2]].value.shape);
          kern::conv2d_reflect_dbias(g.ptr(), db.ptr(), B, O, H, W);
          accum(n.inputs[2], db);
        }
        break;
      }
      case Op::Relu: {
        const Tensor& xv = nodes_[n.inputs[0]].value;
        Tensor dx(xv.shape);
        kern::relu_backward(g.ptr(), xv.ptr(), dx.ptr(), xv.numel());
        accum(n.inputs[0], dx);
        break;
      }
      case Op::Add:
        if (is_wanted(n.inputs[0])) accum(n.inputs[0], g);
        if (is_wanted(n.inputs[1])) accum(n.inputs[1], g);
        break;
      case Op::AddTiled: {
        if (is_wanted(n.inputs[0])) accum(n.inputs[0], g);
        if (is_wanted(n.inputs[1])) {
          const std::int64_t tile = nodes_[n.inputs[1]].value.numel();
          Tensor dv(nodes_[n.inputs[1]].value.shape);
          kern::colsum_tiled(g.ptr(), dv.ptr(), g.numel() / tile, tile);
          accum(n.inputs[1], dv);
        }
        break;
      }
      case Op::MulTiled: {
        const Tensor& xv = nodes_[n.inputs[0]].value;
        const Tensor& vv = nodes_[n.inputs[1]].value;
        const std::int64_t tile = vv.numel();
        if (is_wanted(n.inputs[0])) {
          Tensor dx(xv.shape);
          kern::mul_tiled(g.ptr(), vv.ptr(), dx.ptr(), g.numel(), tile);
          accum(n.inputs[0], dx);
        }
        if (is_wanted(n.inputs[1])) {
          Tensor dv(vv.shape);
          for (std::int64_t j = 0; j < tile; ++j) {
            double s = 0.0;
            for (std::int64_t t = 0; t < g.numel() / tile; ++t) {
              s += g.data[t * tile + j] * xv.data[t * tile + j];
            }
            dv.data[j] = s;
          }
          accum(n.inputs[1], dv);
        }
        break;
      }
      case Op::Scale: {
        Tensor dx(n.value.shape);
        kern::scale(g.ptr(), n.x0, dx.ptr(), g.numel());
        accum(n.inputs[0], dx);
        break;
      }
      case Op::Concat: {
        const std::int64_t total = last_dim(n.value);
        const std::int64_t rows = n.value.numel() / total;
        std::int64_t off = 0;
        for (std::int32_t in : n.inputs) {
          const Tensor& iv = nodes_[in].value;
          const std::int64_t d = last_dim(iv);
          if (is_wanted(in)) {
            Tensor slice(iv.shape);
            const double* src = g.ptr();
            double* dst = slice.ptr();
            const std::int64_t at = off;
            parallel_for(rows, [&, at, d](std::int64_t r) {
              std::copy(src + r * total + at, src + r * total + at + d, dst + r * d);
            });
            accum(in, slice);
          }
          off += d;
        }
        break;
      }
      case Op::Softmax: {
        const std::int64_t d = last_dim(n.value);
        Tensor dx(n.value.shape);
        kern::softmax_backward(g.ptr(), n.value.ptr(), dx.ptr(), n.value.numel() / d, d);
        accum(n.inputs[0], dx);
        break;
      }
      case Op::LayerNorm: {
        const Tensor& xv = nodes_[n.inputs[0]].value;
        const Tensor& gv = nodes_[n.inputs[1]].value;
        const std::int64_t d = last_dim(xv);
        const std::int64_t R = xv.numel() / d;
        const bool want_x = is_wanted(n.inputs[0]);
        const bool want_affine = is_wanted(n.inputs[1]) || is_wanted(n.inputs[2]);
        Tensor dx = want_x ? Tensor(xv.shape) : Tensor();
        Tensor dgamma = want_affine ? Tensor(gv.shape) : Tensor();
        Tensor dbeta = want_affine ? Tensor(gv.shape) : Tensor();
        kern::layernorm_backward(g.ptr(), n.saved_a.ptr(), n.saved_b.ptr(), gv.ptr(),
                                 want_x ? dx.ptr() : nullptr,
                                 want_affine ? dgamma.ptr() : nullptr,
                                 want_affine ? dbeta.ptr() : nullptr, R, d);
        if (want_x) accum(n.inputs[0], dx);
        if (is_wanted(n.inputs[1])) accum(n.inputs[1], dgamma);
        if (is_wanted(n.inputs[2])) accum(n.inputs[2], dbeta);
        break;
      }
      case Op::TokensFromMaps: {
        const Tensor& xv = nodes_[n.inputs[0]].value;
        Tensor dx(xv.shape);
        kern::maps_from_tokens(g.ptr(), dx.ptr(), xv.shape[0], xv.shape[1], xv.shape[2],
                               xv.shape[3]);
        accum(n.inputs[0], dx);
        break;
      }
      case Op::MapsFromTokens: {
        const Tensor& tv = nodes_[n.inputs[0]].value;
        Tensor dt(tv.shape);
        kern::tokens_from_maps(g.ptr(), dt.ptr(), n.value.shape[0], n.value.shape[1], n.i0,
                               n.i1);
        accum(n.inputs[0], dt);
        break;
      }
      case Op::SplitHeads: {
        const Tensor& xv = nodes_[n.inputs[0]].value;
        Tensor dx(xv.shape);
        kern::merge_heads(g.ptr(), dx.ptr(), xv.shape[0], xv.shape[1], xv.shape[2],
                          n.i0);
        accum(n.inputs[0], dx);
        break;
      }
      case Op::MergeHeads: {
        const Tensor& xv = nodes_[n.inputs[0]].value;
        Tensor dx(xv.shape);
        kern::split_heads(g.ptr(), dx.ptr(), n.value.shape[0], n.value.shape[1],
                          n.value.shape[2], n.i0);
        accum(n.inputs[0], dx);
        break;
      }
      case Op::BmmNN: {
        const Tensor& av = nodes_[n.inputs[0]].value;
        const Tensor& bv = nodes_[n.inputs[1]].value;
        const std::int64_t G = av.shape[0];
        const std::int64_t M = av.shape[1];
        const std::int64_t K = av.shape[2];
        const std::int64_t N = bv.shape[2];
        if (is_wanted(n.inputs[0])) {
          Tensor da(av.shape);
          kern::bmm_nt(g.ptr(), bv.ptr(), da.ptr(), G, M, N, K);
          accum(n.inputs[0], da);
        }
        if (is_wanted(n.inputs[1])) {
          Tensor db(bv.shape);
          kern::bmm_tn(av.ptr(), g.ptr(), db.ptr(), G, K, M, N);
          accum(n.inputs[1], db);
        }
        break;
      }
      case Op::BmmNT: {
        const Tensor& av = nodes_[n.inputs[0]].value;
        const Tensor& bv = nodes_[n.inputs[1]].value;
        const std::int64_t G = av.shape[0];
        const std::int64_t M = av.shape[1];
        const std::int64_t K = av.shape[2];
        const std::int64_t N = bv.shape[1];
        if (is_wanted(n.inputs[0])) {
          Tensor da(av.shape);
          kern::bmm_nn(g.ptr(), bv.ptr(), da.ptr(), G, M, N, K);
          accum(n.inputs[0], da);
        }
        if (is_wanted(n.inputs[1])) {
          Tensor db(bv.shape);
          kern::bmm_tn(g.ptr(), av.ptr(), db.ptr(), G, N, M, K);
          accum(n.inputs[1], db);
        }
        break;
      }
      case Op::SelectToken: {
        const Tensor& xv = nodes_[n.inputs[0]].value;
        Tensor dx(xv.shape);
        const std::int64_t L = xv.shape[1];
        const std::int64_t D = xv.shape[2];
        const double* src = g.ptr();
        double* dst = dx.ptr();
        const std::int64_t token = n.i0;
        parallel_for(xv.shape[0], [&](std::int64_t b) {
          std::copy(src + b * D, src + (b + 1) * D, dst + (b * L + token) * D);
        });
        accum(n.inputs[0], dx);
        break;
      }
      case Op::SumAll: {
        const double g0 = g.data[0];
        Tensor& buf = grad_buf(n.inputs[0]);
        double* dst = buf.ptr();
        parallel_for(buf.numel(), [&](std::int64_t i) { dst[i] += g0; });
        break;
      }
      case Op::SmoothedCE: {
        const Tensor& pv = nodes_[n.inputs[0]].value;
        const std::int64_t B = pv.shape[0];
        const std::int64_t K = pv.shape[1];
        const double g0 = g.data[0];
        const double clamp = n.x0;
        Tensor dp(pv.shape);
        const Tensor& tv = n.saved_a;
        parallel_for(B, [&](std::int64_t b) {
          for (std::int64_t k = 0; k < K; ++k) {
            const double p = pv.at2(b, k);
            dp.at2(b, k) =
                p > clamp ? -g0 * tv.at2(b, k) / (p * static_cast<double>(B)) : 0.0;
          }
        });
        accum(n.inputs[0], dp);
        break;
      }
      case Op::MeanEntropy: {
        const Tensor& pv = nodes_[n.inputs[0]].value;
        const std::int64_t K = pv.shape[1];
        const double g0 = g.data[0] / static_cast<double>(n.rows.size());
        const double clamp = n.x0;
        Tensor dp(pv.shape);
        parallel_for(static_cast<std::int64_t>(n.rows.size()), [&](std::int64_t ri) {
          const std::int64_t r = n.rows[static_cast<std::size_t>(ri)];
          for (std::int64_t k = 0; k < K; ++k) {
            const double p = pv.at2(r, k);
            dp.at2(r, k) = g0 * (-std::log(std::max(p, clamp)) - (p > clamp ? 1.0 : 0.0));
          }
        });
        accum(n.inputs[0], dp);
        break;
      }
    }
  }
}

}  // namespace hypertta
