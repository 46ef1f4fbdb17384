#pragma once

#include <functional>
#include <vector>

#include "metasched/tensor.hpp"

namespace metasched {

// Reverse-mode tape over Tensor values. Ops evaluate eagerly and record a
// backward closure; nodes are appended in topological order by construction,
// so backward() is a reverse sweep over creation order. The graph is rebuilt
// per forward pass (fixed shapes, no fusion).
class Tape {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  Var input(Tensor value) { return make_leaf(std::move(value), false); }
  Var param(Tensor value) { return make_leaf(std::move(value), true); }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_rowvec(Var a, Var v);  // broadcast rank-1 v over rows of a
  Var relu(Var a);
  Var sigmoid(Var a);
  Var softmax_rows(Var a);
  Var layer_norm(Var x, Var gain, Var bias);
  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);
  Var mean_rows(Var a);            // n x d -> rank-1 d
  Var broadcast_rows(Var v, int n);  // rank-1 d -> n x d
  Var transpose(Var a);
  Var pick(Var v, int index);  // rank-1 -> scalar {1}
  Var sum(Var a);              // all elements -> scalar {1}

  // Gradients of loss (scalar node) w.r.t. every node with requires_grad.
  void backward(Var loss);

  const Tensor& value(Var v) const { return node(v).value; }
  const Tensor& grad(Var v) const { return node(v).grad; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void(Tape&)> back;
  };

  Var make_leaf(Tensor value, bool requires_grad);
  Var make_node(Tensor value, bool requires_grad, std::function<void(Tape&)> back, const char* what);
  Node& node(Var v);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
};

// Layer-norm epsilon shared with hand computations in tests.
inline constexpr double kLayerNormEps = 1e-5;

struct AttentionWeights {
  std::vector<Tape::Var> wq, wk, wv;  // one d x (d/z) matrix per head
  Tape::Var wo;                       // d x d output projection
};

// Scaled dot-product multi-head self attention over row-token matrices
// q, k, v of shape s x d. Heads are the per-head projections in `w`;
// outputs are concatenated and passed through w.wo.
Tape::Var multi_head_attention(Tape& t, Tape::Var q, Tape::Var k, Tape::Var v, const AttentionWeights& w);

}  // namespace metasched
