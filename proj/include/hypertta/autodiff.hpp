#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hypertta/common.hpp"
#include "hypertta/tensor.hpp"

namespace hypertta {

// Reverse-mode differentiation over a fixed graph. A Tape records every
// primitive in creation order together with the activations its backward
// rule needs; backward() walks the record once, in exact reverse order.
// There is no general broadcasting and no dynamic control flow — the model
// graph is static, which keeps the backward sweep auditable.

struct Parameter {
  Tensor value;
  Tensor grad;  // same shape, zeroed at episode start
  bool trainable = true;
  std::string tag;  // symbolic name, e.g. "ln3.gamma"

  Parameter() = default;
  Parameter(Tensor v, std::string t, bool train = true);
  void zero_grad();
};

// backward() may run once per forward; a second call finds the tape stale.
class StaleTapeError : public Error {
 public:
  using Error::Error;
};

struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves. input() copies the tensor; set needs_grad to differentiate
  // w.r.t. it (grad readable via grad_of afterwards). param() binds an
  // external Parameter whose .grad receives the accumulated gradient.
  Var input(Tensor value, bool needs_grad = false);
  Var param(Parameter& p);

  // Primitives. Shapes are validated eagerly; mismatch throws ConfigError.
  Var linear(Var x, Var w);                  // [...,K]x[K,N]
  Var linear(Var x, Var w, Var b);           // + row bias [N]
  Var conv2d_reflect(Var x, Var k, Var b);   // [B,C,H,W], [O,C,kh,kw], [O]
  Var relu(Var x);
  Var add(Var a, Var b);                     // same shape
  Var add_tiled(Var x, Var v);               // v repeats every v.numel() slots
  Var mul_tiled(Var x, Var v);
  Var scale(Var x, double s);
  Var concat_lastdim(const std::vector<Var>& xs);
  Var softmax_lastdim(Var x);
  Var layernorm(Var x, Var gamma, Var beta, double eps = 1e-5);
  Var tokens_from_maps(Var x);                       // [B,C,H,W] -> [B,H*W,C]
  Var maps_from_tokens(Var t, std::int64_t h, std::int64_t w);
  Var split_heads(Var x, int heads);                 // [B,L,D] -> [B*heads,L,D/heads]
  Var merge_heads(Var x, int heads);                 // inverse
  Var bmm_nn(Var a, Var b);                          // [G,M,K]x[G,K,N]
  Var bmm_nt(Var a, Var b);                          // [G,M,K]x[G,N,K]^T
  Var select_token(Var x, std::int64_t token);       // [B,L,D] -> [B,D]
  Var sum_all(Var x);                                // scalar

  // Losses (scalar). Targets/rows are constants, not graph nodes.
  Var smoothed_ce(Var probs, Tensor targets, double clamp = 1e-12);
  Var mean_entropy(Var probs, std::vector<int> rows, double clamp = 1e-12);

  const Tensor& value(Var v) const;
  // Leaf gradient for input(needs_grad=true) leaves; null before backward
  // or if the leaf never received one.
  const Tensor* grad_of(Var v) const;

  // Accumulates dloss/dp into p.grad for every bound Parameter passing the
  // filter. Parameters failing it get no gradient and are untouched;
  // interior propagation still flows through them where needed (gradient
  // restriction, not graph truncation).
  void backward(Var loss, const std::function<bool(const Parameter&)>& filter);
  void backward(Var loss);  // filter = Parameter::trainable

  std::size_t size() const;

  struct Node;  // defined in the implementation; one record per primitive

 private:
  std::vector<Node> nodes_;
  bool used_ = false;

  Node& node(Var v);
  const Node& node(Var v) const;
  Var push(Node n);
  Var check(Var v) const;
};

// Convenience: the LayerNorm-affine filter used by test-time adaptation.
bool is_ln_affine(const Parameter& p);

}  // namespace hypertta
