#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "thg/autodiff.hpp"
#include "thg/geometry.hpp"
#include "thg/parameter.hpp"
#include "thg/rng.hpp"
#include "thg/tensor.hpp"

namespace thg::nn {

enum class CompatMode { DotProduct, HyperbolicDistance };
enum class ModelKind { Thg, Euclidean };

// QR-orthogonalized Gaussian, sign-fixed so the diagonal of R is nonnegative.
// Rows orthonormal when rows <= cols, columns orthonormal otherwise.
Tensor init_orthogonal(std::size_t rows, std::size_t cols, Rng& rng);

// i.i.d. normal with std sqrt(2/cols) (fan-in mode).
Tensor init_kaiming(std::size_t rows, std::size_t cols, Rng& rng);

// y = log0(exp0(x w^T) (+)_c b) per row. w is orthogonal at init, b starts at
// the origin and stays inside the ball (the optimizer re-projects it).
struct HyperbolicLinear {
  Parameter w;  // [d_out, d_in]
  Parameter b;  // [d_out], ball-constrained
  geometry::Curvature c;

  HyperbolicLinear(const std::string& name, std::size_t d_out,
                   std::size_t d_in, geometry::Curvature c, Rng& rng);
  ad::Var forward(ad::Tape& t, ad::Var x);
  void collect(std::vector<Parameter*>& out);
};

// y = x w^T + b. Kaiming w, uniform(-1/sqrt(d_in), 1/sqrt(d_in)) b.
struct EuclideanLinear {
  Parameter w;  // [d_out, d_in]
  Parameter b;  // [d_out]

  EuclideanLinear(const std::string& name, std::size_t d_out, std::size_t d_in,
                  Rng& rng);
  ad::Var forward(ad::Tape& t, ad::Var x);
  void collect(std::vector<Parameter*>& out);
};

struct EncoderConfig {
  std::size_t d_model = 60;
  std::size_t n_heads = 5;
  double curvature = 1.0;
  CompatMode compat = CompatMode::DotProduct;
  bool scale_scores = true;  // 1/sqrt(d_k) on the attention scores
  ModelKind kind = ModelKind::Thg;
};

// One encoder block of the THG model: hyperbolic Q/K projections sharing one
// curvature, Euclidean V / output / FFN, post-norm residual wiring. The
// Euclidean baseline swaps the Q/K projections for EuclideanLinear and leaves
// everything else identical.
struct ThgEncoder {
  EncoderConfig cfg;
  geometry::Curvature c;
  std::optional<HyperbolicLinear> q_h, k_h;  // engaged when kind == Thg
  std::optional<EuclideanLinear> q_e, k_e;   // engaged when kind == Euclidean
  EuclideanLinear v_proj;
  EuclideanLinear out_proj;
  EuclideanLinear ffn1;  // d_model -> 2*d_model
  EuclideanLinear ffn2;  // 2*d_model -> d_model
  Parameter ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;

  ThgEncoder(const std::string& name, const EncoderConfig& cfg, Rng& rng);
  ad::Var project_q(ad::Tape& t, ad::Var x);
  ad::Var project_k(ad::Tape& t, ad::Var x);
  void collect(std::vector<Parameter*>& out);
};

// Multi-head attention over x [seq, d_model]. mask[j] true marks key position
// j as padding; its scores get -1e9 before the softmax.
ad::Var thg_attention(ad::Tape& t, ThgEncoder& enc, ad::Var x,
                      const std::vector<std::uint8_t>* mask = nullptr);

// y2 = LN(y1 + ffn(y1)), y1 = LN(x + attention(x)).
ad::Var encoder_forward(ad::Tape& t, ThgEncoder& enc, ad::Var x);

}  // namespace thg::nn
