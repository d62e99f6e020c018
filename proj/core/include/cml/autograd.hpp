// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "cml/param_store.hpp"
#include "cml/tensor.hpp"

namespace cml {

/// Parameter name -> gradient of identical shape. Absent names have zero gradient.
using GradMap = std::map<std::string, Tensor>;

/// Sequence boundaries for packed (ragged) batches: offsets[b]..offsets[b+1]
/// are the rows of sequence b. Always starts at 0 and is non-decreasing.
using Segments = std::vector<std::size_t>;

class Tape;

/// Handle to a node recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Records a forward computation in creation order; creation order is a valid
/// topological order, so the backward sweep is a reverse scan. A tape only
/// reads parameter values, it never writes to the store.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::string param_name;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Input that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf bound to a store parameter; repeated calls for one name share a node.
  Var param(const NamedParamStore& store, const std::string& name);

  Var record(std::string op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient accumulator for `id`, zero-allocated on first use.
  Tensor& grad(std::size_t id);

  friend GradMap backward_pass(const Var& loss);

 private:
  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::size_t> params_;
};

/// Reverse-mode sweep from a scalar loss. Returns gradients for every store
/// parameter the loss depends on. Throws ContractViolation for a non-scalar
/// loss and NumericFault naming the first node holding a NaN/Inf.
GradMap backward_pass(const Var& loss);

namespace ops {

/// a[..., k] x b[k, n] -> [..., n]
Var matmul(Var a, Var b);
/// Elementwise sum; b may also be a vector broadcast along a's last dimension.
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// tanh-approximated GELU: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Var gelu(Var x);
Var softmax(Var x);
/// Normalizes over the last dimension, then applies gain and bias.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// Gathers rows of table [V, d] -> [ids.size(), d].
Var embedding(Var table, const std::vector<int>& ids);
/// Per-sequence multi-head scaled dot-product self-attention over packed
/// q, k, v of shape [T, d]. Built from matmul and softmax, fused for speed.
Var attention(Var q, Var k, Var v, const Segments& segments, std::size_t n_heads);
Var sum(Var x);
Var mean(Var x);
/// [T, d] -> [B, d]: mean over the rows of each segment.
Var segment_mean(Var x, const Segments& segments);
/// Mean token cross-entropy of logits [..., C] against class ids; targets of
/// -1 are ignored. At least one target must be active.
Var cross_entropy(Var logits, const std::vector<int>& targets);
Var reshape(Var x, Shape shape);

}  // namespace ops

constexpr double kGeluCoeff = 0.044715;
constexpr double kSqrt2OverPi = 0.79788456080286535588;

}  // namespace cml
