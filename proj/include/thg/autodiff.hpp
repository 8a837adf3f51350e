#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "thg/geometry.hpp"
#include "thg/parameter.hpp"
#include "thg/tensor.hpp"

namespace thg::ad {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kMaskFill = -1e9;

class Tape;

// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  explicit operator bool() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Per-pass adjoint buffers, indexed by node id. Buffers materialize on first
// touch so untouched subgraphs cost nothing.
class Adjoints {
 public:
  explicit Adjoints(std::size_t n) : bufs_(n) {}

  // Get-or-create the zeroed adjoint buffer for node `id`.
  Tensor& buf(std::size_t id, const std::vector<std::size_t>& shape) {
    Tensor& t = bufs_[id];
    if (t.size() == 0) t = Tensor(shape);
    return t;
  }

  bool touched(std::size_t id) const { return bufs_[id].size() != 0; }
  const Tensor& get(std::size_t id) const { return bufs_[id]; }

 private:
  std::vector<Tensor> bufs_;
};

// Propagates d(loss)/d(node) into the node's inputs given the upstream
// adjoint. Closures capture the tape pointer plus input ids.
using BackwardFn = std::function<void(Adjoints&, const Tensor& upstream)>;

// Define-by-run reverse-mode tape. Build one per forward pass; node ids are
// creation-ordered, so walking ids backwards is reverse topological order.
// backward() keeps its adjoints in a local pass buffer and only *adds* leaf
// adjoints into Parameter::grad, so repeated calls accumulate as the sum
// rule demands.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // --- leaves -------------------------------------------------------------
  Var constant(Tensor v);       // no gradient flows into it
  Var leaf(Parameter& p);       // backward adds d(loss)/d(p) into p.grad

  // --- elementwise / shape primitives --------------------------------------
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var add_rowvec(Var a, Var v);  // [m,n] + [n], broadcast over rows
  Var scalar_mul(Var a, double s);
  Var hadamard(Var a, Var b);
  Var tanh(Var a);
  Var arctanh(Var a);            // |entries| < 1 - 1e-12 or DomainError
  Var relu(Var a);
  Var l2_norm(Var a);            // Frobenius norm, scalar
  Var sum(Var a);                // scalar
  Var mean(Var a);               // scalar
  Var matmul(Var a, Var b);      // [m,k]x[k,n]
  Var linear_nt(Var x, Var w);   // x * w^T, w stored [out,in]
  Var transpose(Var a);
  Var slice_cols(Var a, std::size_t c0, std::size_t width);
  Var concat_cols(const std::vector<Var>& parts);
  Var softmax_rows(Var a);
  Var layer_norm(Var x, Var gamma, Var beta);
  // Mean over rows of lse(row) - row[target]; targets.size() == rows.
  Var cross_entropy_with_logits(Var logits, const std::vector<int>& targets);
  Var embedding_rows(Var table, const std::vector<int>& ids);

  // --- fused hyperbolic ops (hand-derived VJPs, verified by gradcheck) -----
  Var exp_map0_rows(Var v, geometry::Curvature c);
  Var log_map0_rows(Var x, geometry::Curvature c);
  Var mobius_add_rows(Var x, Var y, geometry::Curvature c);   // same shape
  Var mobius_add_bias(Var x, Var b, geometry::Curvature c);   // [m,n] (+) [n]
  // scores[i][j] = -d_c(exp0(q_i), exp0(k_j)); q [m,d], k [n,d] -> [m,n]
  Var neg_pairwise_hyperbolic_distance(Var q, Var k, geometry::Curvature c);

  // Escape hatch for tests: record an arbitrary node with a caller-supplied
  // backward rule.
  Var custom(Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

  // Seeds d(loss)/d(loss) = seed and accumulates into every reachable
  // Parameter::grad. `loss` must be a scalar node.
  void backward(Var loss, double seed = 1.0);

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;  // empty for leaves / grad-free nodes
  };

  Var push(Tensor value, bool requires_grad, BackwardFn fn,
           Parameter* param = nullptr);
  Var check_binary(Var a, Var b, const char* op) const;
  void check_mine(Var v, const char* op) const;

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value_of(id_); }

}  // namespace thg::ad
