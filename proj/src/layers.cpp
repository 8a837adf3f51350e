#include "thg/layers.hpp"

#include <cmath>
#include <cstring>
#include <string>
#include <utility>

#include "thg/errors.hpp"
#include "thg/kernels.hpp"

namespace thg::nn {

namespace {

// Thin-Q Householder QR of an m x n Gaussian (m >= n), R-diagonal sign fix.
Tensor orthogonal_tall(std::size_t m, std::size_t n, Rng& rng) {
  std::vector<double> a(m * n);
  for (double& x : a) x = rng.normal();

  std::vector<std::vector<double>> vs(n);
  std::vector<double> rdiag(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double>& v = vs[k];
    v.resize(m - k);
    for (std::size_t i = k; i < m; ++i) v[i - k] = a[i * n + k];
    double nx = std::sqrt(kernels::norm_sq(v.data(), v.size()));
    if (nx < 1e-300) {  // unreachable for Gaussian draws; keep QR well-defined
      v.assign(m - k, 0.0);
      v[0] = 1.0;
      rdiag[k] = 0.0;
      continue;
    }
    const double alpha = v[0] >= 0.0 ? -nx : nx;
    v[0] -= alpha;
    const double vn = std::sqrt(kernels::norm_sq(v.data(), v.size()));
    kernels::scale(v.data(), 1.0 / vn, v.data(), v.size());
    for (std::size_t j = k; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = k; i < m; ++i) s += v[i - k] * a[i * n + j];
      s *= 2.0;
      for (std::size_t i = k; i < m; ++i) a[i * n + j] -= s * v[i - k];
    }
    rdiag[k] = a[k * n + k];
  }

  // Q = H_0 ... H_{n-1} applied to the m x n identity block.
  Tensor q({m, n});
  for (std::size_t j = 0; j < n; ++j) q.at(j, j) = 1.0;
  for (std::size_t k = n; k-- > 0;) {
    const std::vector<double>& v = vs[k];
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = k; i < m; ++i) s += v[i - k] * q.at(i, j);
      s *= 2.0;
      for (std::size_t i = k; i < m; ++i) q.at(i, j) -= s * v[i - k];
    }
  }
  for (std::size_t j = 0; j < n; ++j)
    if (rdiag[j] < 0.0)
      for (std::size_t i = 0; i < m; ++i) q.at(i, j) = -q.at(i, j);
  return q;
}

Tensor ones(std::size_t n) {
  Tensor t({n});
  t.fill(1.0);
  return t;
}

geometry::Curvature checked_curvature(const EncoderConfig& cfg) {
  if (cfg.d_model == 0 || cfg.n_heads == 0 || cfg.d_model % cfg.n_heads != 0)
    throw ContractError("ThgEncoder: d_model " + std::to_string(cfg.d_model) +
                        " not divisible by n_heads " +
                        std::to_string(cfg.n_heads));
  return geometry::Curvature(cfg.curvature);
}

}  // namespace

Tensor init_orthogonal(std::size_t rows, std::size_t cols, Rng& rng) {
  if (rows == 0 || cols == 0)
    throw ContractError("init_orthogonal: dims must be positive");
  if (rows >= cols) return orthogonal_tall(rows, cols, rng);
  Tensor q = orthogonal_tall(cols, rows, rng);
  Tensor w({rows, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) w.at(r, c) = q.at(c, r);
  return w;
}

Tensor init_kaiming(std::size_t rows, std::size_t cols, Rng& rng) {
  if (rows == 0 || cols == 0)
    throw ContractError("init_kaiming: dims must be positive");
  Tensor w({rows, cols});
  const double std = std::sqrt(2.0 / static_cast<double>(cols));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std * rng.normal();
  return w;
}

HyperbolicLinear::HyperbolicLinear(const std::string& name, std::size_t d_out,
                                   std::size_t d_in, geometry::Curvature curv,
                                   Rng& rng)
    : w(name + ".w", init_orthogonal(d_out, d_in, rng)),
      b(name + ".b", Tensor({d_out}), curv),
      c(curv) {}

ad::Var HyperbolicLinear::forward(ad::Tape& t, ad::Var x) {
  ad::Var z = t.linear_nt(x, t.leaf(w));
  ad::Var e = t.exp_map0_rows(z, c);
  ad::Var m = t.mobius_add_bias(e, t.leaf(b), c);
  return t.log_map0_rows(m, c);
}

void HyperbolicLinear::collect(std::vector<Parameter*>& out) {
  out.push_back(&w);
  out.push_back(&b);
}

EuclideanLinear::EuclideanLinear(const std::string& name, std::size_t d_out,
                                 std::size_t d_in, Rng& rng)
    : w(name + ".w", init_kaiming(d_out, d_in, rng)),
      b(name + ".b", Tensor({d_out})) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
  for (std::size_t i = 0; i < b.value.size(); ++i)
    b.value[i] = rng.uniform(-bound, bound);
}

ad::Var EuclideanLinear::forward(ad::Tape& t, ad::Var x) {
  return t.add_rowvec(t.linear_nt(x, t.leaf(w)), t.leaf(b));
}

void EuclideanLinear::collect(std::vector<Parameter*>& out) {
  out.push_back(&w);
  out.push_back(&b);
}

ThgEncoder::ThgEncoder(const std::string& name, const EncoderConfig& config,
                       Rng& rng)
    : cfg(config),
      c(checked_curvature(config)),
      q_h(config.kind == ModelKind::Thg
              ? std::optional<HyperbolicLinear>(
                    std::in_place, name + ".q", config.d_model, config.d_model,
                    geometry::Curvature(config.curvature), rng)
              : std::nullopt),
      k_h(config.kind == ModelKind::Thg
              ? std::optional<HyperbolicLinear>(
                    std::in_place, name + ".k", config.d_model, config.d_model,
                    geometry::Curvature(config.curvature), rng)
              : std::nullopt),
      q_e(config.kind == ModelKind::Euclidean
              ? std::optional<EuclideanLinear>(std::in_place, name + ".q",
                                               config.d_model, config.d_model,
                                               rng)
              : std::nullopt),
      k_e(config.kind == ModelKind::Euclidean
              ? std::optional<EuclideanLinear>(std::in_place, name + ".k",
                                               config.d_model, config.d_model,
                                               rng)
              : std::nullopt),
      v_proj(name + ".v", config.d_model, config.d_model, rng),
      out_proj(name + ".out", config.d_model, config.d_model, rng),
      ffn1(name + ".ffn1", 2 * config.d_model, config.d_model, rng),
      ffn2(name + ".ffn2", config.d_model, 2 * config.d_model, rng),
      ln1_gamma(name + ".ln1.gamma", ones(config.d_model)),
      ln1_beta(name + ".ln1.beta", Tensor({config.d_model})),
      ln2_gamma(name + ".ln2.gamma", ones(config.d_model)),
      ln2_beta(name + ".ln2.beta", Tensor({config.d_model})) {}

ad::Var ThgEncoder::project_q(ad::Tape& t, ad::Var x) {
  return q_h ? q_h->forward(t, x) : q_e->forward(t, x);
}

ad::Var ThgEncoder::project_k(ad::Tape& t, ad::Var x) {
  return k_h ? k_h->forward(t, x) : k_e->forward(t, x);
}

void ThgEncoder::collect(std::vector<Parameter*>& out) {
  if (q_h) q_h->collect(out);
  if (k_h) k_h->collect(out);
  if (q_e) q_e->collect(out);
  if (k_e) k_e->collect(out);
  v_proj.collect(out);
  out_proj.collect(out);
  ffn1.collect(out);
  ffn2.collect(out);
  out.push_back(&ln1_gamma);
  out.push_back(&ln1_beta);
  out.push_back(&ln2_gamma);
  out.push_back(&ln2_beta);
}

ad::Var thg_attention(ad::Tape& t, ThgEncoder& enc, ad::Var x,
                      const std::vector<std::uint8_t>* mask) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.dim(1) != enc.cfg.d_model)
    throw ContractError("thg_attention: input must be [seq, " +
                        std::to_string(enc.cfg.d_model) + "], got " +
                        xv.shape_str());
  const std::size_t seq = xv.dim(0);
  if (mask && mask->size() != seq)
    throw ContractError("thg_attention: mask length " +
                        std::to_string(mask->size()) + " for seq " +
                        std::to_string(seq));

  ad::Var q = enc.project_q(t, x);
  ad::Var k = enc.project_k(t, x);
  ad::Var v = enc.v_proj.forward(t, x);

  const std::size_t dk = enc.cfg.d_model / enc.cfg.n_heads;
  const double scale =
      enc.cfg.scale_scores ? 1.0 / std::sqrt(static_cast<double>(dk)) : 1.0;

  std::optional<ad::Var> mask_add;
  if (mask) {
    Tensor mt({seq, seq});
    for (std::size_t i = 0; i < seq; ++i)
      for (std::size_t j = 0; j < seq; ++j)
        if ((*mask)[j]) mt.at(i, j) = ad::kMaskFill;
    mask_add = t.constant(std::move(mt));
  }

  std::vector<ad::Var> heads;
  heads.reserve(enc.cfg.n_heads);
  for (std::size_t h = 0; h < enc.cfg.n_heads; ++h) {
    ad::Var qh = t.slice_cols(q, h * dk, dk);
    ad::Var kh = t.slice_cols(k, h * dk, dk);
    ad::Var vh = t.slice_cols(v, h * dk, dk);
    ad::Var scores =
        enc.cfg.compat == CompatMode::DotProduct
            ? t.linear_nt(qh, kh)  // q_i . k_j
            : t.neg_pairwise_hyperbolic_distance(qh, kh, enc.c);
    if (scale != 1.0) scores = t.scalar_mul(scores, scale);
    if (mask_add) scores = t.add(scores, *mask_add);
    heads.push_back(t.matmul(t.softmax_rows(scores), vh));
  }
  return enc.out_proj.forward(t, t.concat_cols(heads));
}

ad::Var encoder_forward(ad::Tape& t, ThgEncoder& enc, ad::Var x) {
  ad::Var y1 = t.layer_norm(t.add(x, thg_attention(t, enc, x)),
                            t.leaf(enc.ln1_gamma), t.leaf(enc.ln1_beta));
  ad::Var f = enc.ffn2.forward(t, t.relu(enc.ffn1.forward(t, y1)));
  return t.layer_norm(t.add(y1, f), t.leaf(enc.ln2_gamma),
                      t.leaf(enc.ln2_beta));
}

}  // namespace thg::nn
