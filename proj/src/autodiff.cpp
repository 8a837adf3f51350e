#include "thg/autodiff.hpp"

#include <cmath>
#include <cstring>
#include <string>
#include <utility>

#include "thg/errors.hpp"
#include "thg/kernels.hpp"

namespace thg::ad {

using geometry::Curvature;
using geometry::kNormEps;

namespace {

// --- smooth ratio helpers with series fallbacks near zero -----------------

// tanh(u)/u
double tanh_ratio(double u) {
  if (std::abs(u) < 1e-4) {
    const double u2 = u * u;
    return 1.0 - u2 / 3.0 + 2.0 * u2 * u2 / 15.0;
  }
  return std::tanh(u) / u;
}

// ((1 - tanh(u)^2)u - tanh(u)) / u^3; the radial term of the exp0 Jacobian.
double exp_radial_coeff(double u) {
  if (std::abs(u) < 1e-3) {
    return -2.0 / 3.0 + (8.0 / 15.0) * u * u;
  }
  const double t = std::tanh(u);
  return ((1.0 - t * t) * u - t) / (u * u * u);
}

// arctanh(u)/u
double atanh_ratio(double u) {
  if (std::abs(u) < 1e-4) {
    const double u2 = u * u;
    return 1.0 + u2 / 3.0 + u2 * u2 / 5.0;
  }
  return std::atanh(u) / u;
}

// (u/(1-u^2) - arctanh(u)) / u^3; the radial term of the log0 Jacobian.
double log_radial_coeff(double u) {
  if (std::abs(u) < 1e-3) {
    return 2.0 / 3.0 + (4.0 / 5.0) * u * u;
  }
  return (u / (1.0 - u * u) - std::atanh(u)) / (u * u * u);
}

// Pulls an adjoint back through the ball clip z -> R*z/|z|. `dir` is any
// vector colinear with z with norm dir_norm; scale = R/|z_preclip|. The
// sub-ulp shave multiplies of project_to_ball are ignored here.
void clip_pullback(double* g, const double* dir, double dir_norm, double scale,
                   std::size_t n) {
  const double d = kernels::dot(g, dir, n) / (dir_norm * dir_norm);
  for (std::size_t i = 0; i < n; ++i) g[i] = scale * (g[i] - d * dir[i]);
}

// --- exp0 rows -------------------------------------------------------------

struct Exp0State {
  double r = 0.0;         // |v|
  double u = 0.0;         // sqrt(c)|v|
  double f = 1.0;         // tanh(u)/u
  double pre_norm = 0.0;  // |f*v| before the clip
  bool tiny = false;
  bool clipped = false;
};

// Writes the *unclipped* exp0 of the row into out and reports the state the
// VJP needs. The caller applies geometry::project_to_ball for the value.
Exp0State exp0_row_raw(const double* v, double* out, std::size_t n,
                       Curvature c) {
  Exp0State s;
  s.r = std::sqrt(kernels::norm_sq(v, n));
  if (s.r < kNormEps) {
    for (std::size_t i = 0; i < n; ++i) out[i] = 0.0;
    s.tiny = true;
    return s;
  }
  s.u = c.sqrt_c() * s.r;
  s.f = tanh_ratio(s.u);
  kernels::scale(v, s.f, out, n);
  s.pre_norm = std::sqrt(kernels::norm_sq(out, n));
  s.clipped = s.pre_norm > c.max_norm();
  return s;
}

// g_v += J_exp0^T g, where g is the adjoint at the clipped output. scratch
// must hold n doubles.
void exp0_row_vjp(const double* v, const Exp0State& s, const double* g,
                  double* g_v, double* scratch, std::size_t n, Curvature c) {
  if (s.tiny) {  // limit Jacobian is the identity
    kernels::axpy(1.0, g, g_v, n);
    return;
  }
  if (s.clipped) {
    std::memcpy(scratch, g, n * sizeof(double));
    clip_pullback(scratch, v, s.r, c.max_norm() / s.pre_norm, n);
    g = scratch;
  }
  const double coeff = c.c() * exp_radial_coeff(s.u) * kernels::dot(g, v, n);
  kernels::axpy(s.f, g, g_v, n);
  kernels::axpy(coeff, v, g_v, n);
}

// --- log0 rows -------------------------------------------------------------

struct Log0State {
  double pre_norm = 0.0;  // |x| before the clip
  double r = 0.0;         // |x| after the clip
  double u = 0.0;
  double gscale = 1.0;    // arctanh(u)/u
  bool tiny = false;
  bool clipped = false;
};

// out <- log0(clip(x)); xc receives the clipped-but-unscaled x.
Log0State log0_row_forward(const double* x, double* out, double* xc,
                           std::size_t n, Curvature c) {
  Log0State s;
  std::memcpy(xc, x, n * sizeof(double));
  s.pre_norm = std::sqrt(kernels::norm_sq(x, n));
  s.clipped = geometry::project_to_ball({xc, n}, c);
  s.r = s.clipped ? std::sqrt(kernels::norm_sq(xc, n)) : s.pre_norm;
  if (s.r < kNormEps) {
    for (std::size_t i = 0; i < n; ++i) out[i] = 0.0;
    s.tiny = true;
    return s;
  }
  s.u = c.sqrt_c() * s.r;
  s.gscale = atanh_ratio(s.u);
  kernels::scale(xc, s.gscale, out, n);
  return s;
}

// g_x += J_log0^T h. scratch holds n doubles.
void log0_row_vjp(const double* x, const double* xc, const Log0State& s,
                  const double* h, double* g_x, double* scratch, std::size_t n,
                  Curvature c) {
  if (s.tiny) {
    kernels::axpy(1.0, h, g_x, n);
    return;
  }
  const double coeff =
      c.c() * log_radial_coeff(s.u) * kernels::dot(h, xc, n);
  for (std::size_t i = 0; i < n; ++i)
    scratch[i] = s.gscale * h[i] + coeff * xc[i];
  if (s.clipped)
    clip_pullback(scratch, x, s.pre_norm, c.max_norm() / s.pre_norm, n);
  kernels::axpy(1.0, scratch, g_x, n);
}

// --- mobius rows -----------------------------------------------------------

// out <- unclipped x (+)_c y.
void mobius_row_raw(const double* x, const double* y, double* out,
                    std::size_t n, Curvature c) {
  const double cc = c.c();
  const double xy = kernels::dot(x, y, n);
  const double x2 = kernels::norm_sq(x, n);
  const double y2 = kernels::norm_sq(y, n);
  const double a = 1.0 + 2.0 * cc * xy + cc * y2;
  const double b = 1.0 - cc * x2;
  const double den = 1.0 + 2.0 * cc * xy + cc * cc * x2 * y2;
  if (std::abs(den) < geometry::kDenomEps)
    throw NumericalError("mobius_add: denominator degenerate");
  kernels::scale(x, a / den, out, n);
  kernels::axpy(b / den, y, out, n);
}

// gz is the adjoint at the *unclipped* output z (pull it through the clip
// first). Accumulates into g_x / g_y when non-null.
void mobius_row_vjp(const double* x, const double* y, const double* z,
                    const double* gz, double* g_x, double* g_y, std::size_t n,
                    Curvature c) {
  const double cc = c.c();
  const double xy = kernels::dot(x, y, n);
  const double x2 = kernels::norm_sq(x, n);
  const double y2 = kernels::norm_sq(y, n);
  const double a = 1.0 + 2.0 * cc * xy + cc * y2;
  const double b = 1.0 - cc * x2;
  const double den = 1.0 + 2.0 * cc * xy + cc * cc * x2 * y2;
  const double gzx = kernels::dot(gz, x, n);
  const double gzy = kernels::dot(gz, y, n);
  const double gzz = kernels::dot(gz, z, n);
  if (g_x) {
    kernels::axpy(a / den, gz, g_x, n);
    kernels::axpy(2.0 * cc * (gzx - gzz) / den, y, g_x, n);
    kernels::axpy(-2.0 * cc * (gzy + cc * y2 * gzz) / den, x, g_x, n);
  }
  if (g_y) {
    kernels::axpy(b / den, gz, g_y, n);
    kernels::axpy(2.0 * cc * (gzx - gzz) / den, x, g_y, n);
    kernels::axpy(2.0 * cc * (gzx - cc * x2 * gzz) / den, y, g_y, n);
  }
}

std::size_t tensor_rows(const Tensor& t) { return t.rows(); }
std::size_t tensor_cols(const Tensor& t) { return t.cols(); }

}  // namespace

// --- tape plumbing ----------------------------------------------------------

Var Tape::push(Tensor value, bool requires_grad, BackwardFn fn,
               Parameter* param) {
  nodes_.push_back(Node{std::move(value), requires_grad, param,
                        requires_grad ? std::move(fn) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

void Tape::check_mine(Var v, const char* op) const {
  if (v.tape() != this)
    throw ContractError(std::string(op) + ": variable from another tape");
}

Var Tape::check_binary(Var a, Var b, const char* op) const {
  check_mine(a, op);
  check_mine(b, op);
  return a;
}

Var Tape::constant(Tensor v) {
  require_finite(v, "constant");
  return push(std::move(v), false, {});
}

Var Tape::leaf(Parameter& p) {
  if (!p.value.same_shape(p.grad))
    throw ContractError("leaf: parameter '" + p.name +
                        "' grad shape does not match value");
  require_finite(p.value, "leaf");
  return push(p.value, true, {}, &p);
}

void Tape::backward(Var loss, double seed) {
  check_mine(loss, "backward");
  if (loss.value().size() != 1)
    throw ContractError("backward: loss must be a scalar node");
  Adjoints adj(nodes_.size());
  adj.buf(loss.id(), loss.value().shape())[0] = seed;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !adj.touched(i)) continue;
    const Tensor& up = adj.get(i);
    if (n.backward) n.backward(adj, up);
    if (n.param)
      kernels::axpy(1.0, up.data(), n.param->grad.data(), n.param->grad.size());
  }
}

// --- elementwise / shape primitives ------------------------------------------

Var Tape::add(Var a, Var b) {
  check_binary(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor out(a.value().shape());
  kernels::add(a.value().data(), b.value().data(), out.data(), out.size());
  require_finite(out, "add");
  bool rg = needs_grad(a.id()) || needs_grad(b.id());
  return push(std::move(out), rg,
              [this, ia = a.id(), ib = b.id()](Adjoints& adj, const Tensor& up) {
                if (needs_grad(ia))
                  kernels::axpy(1.0, up.data(),
                                adj.buf(ia, up.shape()).data(), up.size());
                if (needs_grad(ib))
                  kernels::axpy(1.0, up.data(),
                                adj.buf(ib, up.shape()).data(), up.size());
              });
}

Var Tape::sub(Var a, Var b) {
  check_binary(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out(a.value().shape());
  kernels::sub(a.value().data(), b.value().data(), out.data(), out.size());
  require_finite(out, "sub");
  bool rg = needs_grad(a.id()) || needs_grad(b.id());
  return push(std::move(out), rg,
              [this, ia = a.id(), ib = b.id()](Adjoints& adj, const Tensor& up) {
                if (needs_grad(ia))
                  kernels::axpy(1.0, up.data(),
                                adj.buf(ia, up.shape()).data(), up.size());
                if (needs_grad(ib))
                  kernels::axpy(-1.0, up.data(),
                                adj.buf(ib, up.shape()).data(), up.size());
              });
}

Var Tape::add_rowvec(Var a, Var v) {
  check_binary(a, v, "add_rowvec");
  const Tensor& av = a.value();
  const Tensor& vv = v.value();
  if (vv.rank() != 1 || vv.size() != tensor_cols(av))
    throw ContractError("add_rowvec: vector must be rank-1 of width " +
                        std::to_string(tensor_cols(av)));
  Tensor out(av.shape());
  const std::size_t m = tensor_rows(av), n = tensor_cols(av);
  for (std::size_t r = 0; r < m; ++r)
    kernels::add(av.row_ptr(r), vv.data(), out.row_ptr(r), n);
  require_finite(out, "add_rowvec");
  bool rg = needs_grad(a.id()) || needs_grad(v.id());
  return push(std::move(out), rg,
              [this, ia = a.id(), iv = v.id(), m, n](Adjoints& adj,
                                                     const Tensor& up) {
                if (needs_grad(ia))
                  kernels::axpy(1.0, up.data(),
                                adj.buf(ia, up.shape()).data(), up.size());
                if (needs_grad(iv)) {
                  Tensor& gv = adj.buf(iv, {n});
                  for (std::size_t r = 0; r < m; ++r)
                    kernels::axpy(1.0, up.row_ptr(r), gv.data(), n);
                }
              });
}

Var Tape::scalar_mul(Var a, double s) {
  check_mine(a, "scalar_mul");
  Tensor out(a.value().shape());
  kernels::scale(a.value().data(), s, out.data(), out.size());
  require_finite(out, "scalar_mul");
  return push(std::move(out), needs_grad(a.id()),
              [this, ia = a.id(), s](Adjoints& adj, const Tensor& up) {
                kernels::axpy(s, up.data(), adj.buf(ia, up.shape()).data(),
                              up.size());
              });
}

Var Tape::hadamard(Var a, Var b) {
  check_binary(a, b, "hadamard");
  require_same_shape(a.value(), b.value(), "hadamard");
  Tensor out(a.value().shape());
  kernels::mul(a.value().data(), b.value().data(), out.data(), out.size());
  require_finite(out, "hadamard");
  bool rg = needs_grad(a.id()) || needs_grad(b.id());
  return push(std::move(out), rg,
              [this, ia = a.id(), ib = b.id()](Adjoints& adj, const Tensor& up) {
                const Tensor& av = value_of(ia);
                const Tensor& bv = value_of(ib);
                if (needs_grad(ia)) {
                  Tensor& g = adj.buf(ia, up.shape());
                  for (std::size_t i = 0; i < up.size(); ++i)
                    g[i] += up[i] * bv[i];
                }
                if (needs_grad(ib)) {
                  Tensor& g = adj.buf(ib, up.shape());
                  for (std::size_t i = 0; i < up.size(); ++i)
                    g[i] += up[i] * av[i];
                }
              });
}

Var Tape::tanh(Var a) {
  check_mine(a, "tanh");
  Tensor out(a.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.value()[i]);
  require_finite(out, "tanh");
  Var o = push(std::move(out), needs_grad(a.id()), {});
  if (needs_grad(a.id()))
    nodes_[o.id()].backward = [this, ia = a.id(), io = o.id()](
                                  Adjoints& adj, const Tensor& up) {
      const Tensor& y = value_of(io);
      Tensor& g = adj.buf(ia, up.shape());
      for (std::size_t i = 0; i < up.size(); ++i)
        g[i] += up[i] * (1.0 - y[i] * y[i]);
    };
  return o;
}

Var Tape::arctanh(Var a) {
  check_mine(a, "arctanh");
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (std::abs(av[i]) >= geometry::kAtanhGuard)
      throw DomainError("arctanh: operand magnitude >= 1 - 1e-12");
    out[i] = std::atanh(av[i]);
  }
  require_finite(out, "arctanh");
  return push(std::move(out), needs_grad(a.id()),
              [this, ia = a.id()](Adjoints& adj, const Tensor& up) {
                const Tensor& x = value_of(ia);
                Tensor& g = adj.buf(ia, up.shape());
                for (std::size_t i = 0; i < up.size(); ++i)
                  g[i] += up[i] / (1.0 - x[i] * x[i]);
              });
}

Var Tape::relu(Var a) {
  check_mine(a, "relu");
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = av[i] > 0.0 ? av[i] : 0.0;
  require_finite(out, "relu");
  return push(std::move(out), needs_grad(a.id()),
              [this, ia = a.id()](Adjoints& adj, const Tensor& up) {
                const Tensor& x = value_of(ia);
                Tensor& g = adj.buf(ia, up.shape());
                for (std::size_t i = 0; i < up.size(); ++i)
                  if (x[i] > 0.0) g[i] += up[i];
              });
}

Var Tape::l2_norm(Var a) {
  check_mine(a, "l2_norm");
  const double norm =
      std::sqrt(kernels::norm_sq(a.value().data(), a.value().size()));
  Tensor out = Tensor::scalar(norm);
  require_finite(out, "l2_norm");
  return push(std::move(out), needs_grad(a.id()),
              [this, ia = a.id(), norm](Adjoints& adj, const Tensor& up) {
                if (norm < kNormEps) return;  // subgradient 0 at the kink
                const Tensor& x = value_of(ia);
                kernels::axpy(up[0] / norm, x.data(),
                              adj.buf(ia, x.shape()).data(), x.size());
              });
}

Var Tape::sum(Var a) {
  check_mine(a, "sum");
  Tensor out =
      Tensor::scalar(kernels::reduce_sum(a.value().data(), a.value().size()));
  require_finite(out, "sum");
  return push(std::move(out), needs_grad(a.id()),
              [this, ia = a.id()](Adjoints& adj, const Tensor& up) {
                const Tensor& x = value_of(ia);
                Tensor& g = adj.buf(ia, x.shape());
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += up[0];
              });
}

Var Tape::mean(Var a) {
  check_mine(a, "mean");
  const double n = static_cast<double>(a.value().size());
  Tensor out = Tensor::scalar(
      kernels::reduce_sum(a.value().data(), a.value().size()) / n);
  require_finite(out, "mean");
  return push(std::move(out), needs_grad(a.id()),
              [this, ia = a.id(), n](Adjoints& adj, const Tensor& up) {
                const Tensor& x = value_of(ia);
                Tensor& g = adj.buf(ia, x.shape());
                const double s = up[0] / n;
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += s;
              });
}

Var Tape::matmul(Var a, Var b) {
  check_binary(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2)
    throw ContractError("matmul: rank-2 operands required");
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k)
    throw ContractError("matmul: inner dims differ, " + av.shape_str() +
                        " x " + bv.shape_str());
  Tensor out({m, n});
  kernels::gemm_nn(av.data(), bv.data(), out.data(), m, k, n);
  require_finite(out, "matmul");
  bool rg = needs_grad(a.id()) || needs_grad(b.id());
  return push(std::move(out), rg,
              [this, ia = a.id(), ib = b.id(), m, k, n](Adjoints& adj,
                                                        const Tensor& up) {
                const Tensor& av2 = value_of(ia);
                const Tensor& bv2 = value_of(ib);
                if (needs_grad(ia))
                  kernels::gemm_nt(up.data(), bv2.data(),
                                   adj.buf(ia, {m, k}).data(), m, n, k);
                if (needs_grad(ib))
                  kernels::gemm_tn(av2.data(), up.data(),
                                   adj.buf(ib, {k, n}).data(), k, m, n);
              });
}

Var Tape::linear_nt(Var x, Var w) {
  check_binary(x, w, "linear_nt");
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 2 || wv.rank() != 2)
    throw ContractError("linear_nt: rank-2 operands required");
  const std::size_t m = xv.dim(0), k = xv.dim(1), o = wv.dim(0);
  if (wv.dim(1) != k)
    throw ContractError("linear_nt: weight is " + wv.shape_str() +
                        ", input width " + std::to_string(k));
  Tensor out({m, o});
  kernels::gemm_nt(xv.data(), wv.data(), out.data(), m, k, o);
  require_finite(out, "linear_nt");
  bool rg = needs_grad(x.id()) || needs_grad(w.id());
  return push(std::move(out), rg,
              [this, ix = x.id(), iw = w.id(), m, k, o](Adjoints& adj,
                                                        const Tensor& up) {
                const Tensor& xv2 = value_of(ix);
                const Tensor& wv2 = value_of(iw);
                if (needs_grad(ix))
                  kernels::gemm_nn(up.data(), wv2.data(),
                                   adj.buf(ix, {m, k}).data(), m, o, k);
                if (needs_grad(iw))
                  kernels::gemm_tn(up.data(), xv2.data(),
                                   adj.buf(iw, {o, k}).data(), o, m, k);
              });
}

Var Tape::transpose(Var a) {
  check_mine(a, "transpose");
  const Tensor& av = a.value();
  if (av.rank() != 2) throw ContractError("transpose: rank-2 operand required");
  const std::size_t m = av.dim(0), n = av.dim(1);
  Tensor out({n, m});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out.at(c, r) = av.at(r, c);
  return push(std::move(out), needs_grad(a.id()),
              [this, ia = a.id(), m, n](Adjoints& adj, const Tensor& up) {
                Tensor& g = adj.buf(ia, {m, n});
                for (std::size_t r = 0; r < n; ++r)
                  for (std::size_t c = 0; c < m; ++c) g.at(c, r) += up.at(r, c);
              });
}

Var Tape::slice_cols(Var a, std::size_t c0, std::size_t width) {
  check_mine(a, "slice_cols");
  const Tensor& av = a.value();
  if (av.rank() != 2) throw ContractError("slice_cols: rank-2 operand required");
  const std::size_t m = av.dim(0), n = av.dim(1);
  if (width == 0 || c0 + width > n)
    throw ContractError("slice_cols: [" + std::to_string(c0) + ", " +
                        std::to_string(c0 + width) + ") out of width " +
                        std::to_string(n));
  Tensor out({m, width});
  for (std::size_t r = 0; r < m; ++r)
    std::memcpy(out.row_ptr(r), av.row_ptr(r) + c0, width * sizeof(double));
  return push(std::move(out), needs_grad(a.id()),
              [this, ia = a.id(), c0, width, m, n](Adjoints& adj,
                                                   const Tensor& up) {
                Tensor& g = adj.buf(ia, {m, n});
                for (std::size_t r = 0; r < m; ++r)
                  kernels::axpy(1.0, up.row_ptr(r), g.row_ptr(r) + c0, width);
              });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  check_mine(parts[0], "concat_cols");
  const std::size_t m = tensor_rows(parts[0].value());
  std::size_t total = 0;
  bool rg = false;
  for (Var p : parts) {
    check_mine(p, "concat_cols");
    const Tensor& t = p.value();
    if (t.rank() != 2 || t.dim(0) != m)
      throw ContractError("concat_cols: operands must be rank-2 with " +
                          std::to_string(m) + " rows");
    total += t.dim(1);
    rg = rg || needs_grad(p.id());
  }
  Tensor out({m, total});
  std::size_t off = 0;
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // (id, offset)
  for (Var p : parts) {
    const Tensor& t = p.value();
    for (std::size_t r = 0; r < m; ++r)
      std::memcpy(out.row_ptr(r) + off, t.row_ptr(r),
                  t.dim(1) * sizeof(double));
    spans.emplace_back(p.id(), off);
    off += t.dim(1);
  }
  return push(std::move(out), rg,
              [this, spans = std::move(spans), m, total](Adjoints& adj,
                                                         const Tensor& up) {
                for (auto [id, off2] : spans) {
                  if (!needs_grad(id)) continue;
                  const Tensor& t = value_of(id);
                  const std::size_t w = t.dim(1);
                  Tensor& g = adj.buf(id, {m, w});
                  for (std::size_t r = 0; r < m; ++r)
                    kernels::axpy(1.0, up.row_ptr(r) + off2, g.row_ptr(r), w);
                }
              });
}

Var Tape::softmax_rows(Var a) {
  check_mine(a, "softmax_rows");
  const Tensor& av = a.value();
  const std::size_t m = tensor_rows(av), n = tensor_cols(av);
  Tensor out(av.shape());
  for (std::size_t r = 0; r < m; ++r) {
    const double* x = av.row_ptr(r);
    double* y = out.row_ptr(r);
    const double mx = kernels::reduce_max(x, n);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] - mx;
    kernels::vexp(y, y, n);
    kernels::scale(y, 1.0 / kernels::reduce_sum(y, n), y, n);
  }
  require_finite(out, "softmax_rows");
  Var o = push(std::move(out), needs_grad(a.id()), {});
  if (needs_grad(a.id()))
    nodes_[o.id()].backward = [this, ia = a.id(), io = o.id(), m, n](
                                  Adjoints& adj, const Tensor& up) {
      const Tensor& y = value_of(io);
      Tensor& g = adj.buf(ia, y.shape());
      for (std::size_t r = 0; r < m; ++r) {
        const double* yr = y.row_ptr(r);
        const double* ur = up.row_ptr(r);
        const double d = kernels::dot(ur, yr, n);
        double* gr = g.row_ptr(r);
        for (std::size_t i = 0; i < n; ++i) gr[i] += yr[i] * (ur[i] - d);
      }
    };
  return o;
}

Var Tape::layer_norm(Var x, Var gamma, Var beta) {
  check_binary(x, gamma, "layer_norm");
  check_mine(beta, "layer_norm");
  const Tensor& xv = x.value();
  const std::size_t m = tensor_rows(xv), n = tensor_cols(xv);
  if (gamma.value().rank() != 1 || gamma.value().size() != n ||
      beta.value().rank() != 1 || beta.value().size() != n)
    throw ContractError("layer_norm: gamma/beta must be rank-1 of width " +
                        std::to_string(n));
  Tensor out(xv.shape());
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(m);
  const double* gv = gamma.value().data();
  const double* bv = beta.value().data();
  for (std::size_t r = 0; r < m; ++r) {
    const double* xr = xv.row_ptr(r);
    const double mu = kernels::reduce_sum(xr, n) / static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = xr[i] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std[r] = inv;
    double* hr = xhat.row_ptr(r);
    double* yr = out.row_ptr(r);
    for (std::size_t i = 0; i < n; ++i) {
      hr[i] = (xr[i] - mu) * inv;
      yr[i] = gv[i] * hr[i] + bv[i];
    }
  }
  require_finite(out, "layer_norm");
  bool rg = needs_grad(x.id()) || needs_grad(gamma.id()) ||
            needs_grad(beta.id());
  return push(
      std::move(out), rg,
      [this, ix = x.id(), ig = gamma.id(), ib = beta.id(),
       xhat = std::move(xhat), inv_std = std::move(inv_std), m,
       n](Adjoints& adj, const Tensor& up) {
        const double* gv2 = value_of(ig).data();
        std::vector<double> gxh(n);
        for (std::size_t r = 0; r < m; ++r) {
          const double* ur = up.row_ptr(r);
          const double* hr = xhat.row_ptr(r);
          if (needs_grad(ig)) {
            double* gg = adj.buf(ig, {n}).data();
            for (std::size_t i = 0; i < n; ++i) gg[i] += ur[i] * hr[i];
          }
          if (needs_grad(ib)) {
            double* gb = adj.buf(ib, {n}).data();
            for (std::size_t i = 0; i < n; ++i) gb[i] += ur[i];
          }
          if (needs_grad(ix)) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
              gxh[i] = ur[i] * gv2[i];
              m1 += gxh[i];
              m2 += gxh[i] * hr[i];
            }
            m1 /= static_cast<double>(n);
            m2 /= static_cast<double>(n);
            double* gx = adj.buf(ix, {m, n}).row_ptr(r);
            for (std::size_t i = 0; i < n; ++i)
              gx[i] += inv_std[r] * (gxh[i] - m1 - hr[i] * m2);
          }
        }
      });
}

Var Tape::cross_entropy_with_logits(Var logits,
                                    const std::vector<int>& targets) {
  check_mine(logits, "cross_entropy_with_logits");
  const Tensor& lv = logits.value();
  const std::size_t m = tensor_rows(lv), n = tensor_cols(lv);
  if (targets.size() != m)
    throw ContractError("cross_entropy_with_logits: " +
                        std::to_string(targets.size()) + " targets for " +
                        std::to_string(m) + " rows");
  Tensor probs(lv.shape());
  double total = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const int t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= n)
      throw ContractError("cross_entropy_with_logits: target out of range");
    const double* x = lv.row_ptr(r);
    const double mx = kernels::reduce_max(x, n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] - mx);
    const double lse = mx + std::log(s);
    total += lse - x[t];
    double* p = probs.row_ptr(r);
    for (std::size_t i = 0; i < n; ++i) p[i] = std::exp(x[i] - lse);
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(m));
  require_finite(out, "cross_entropy_with_logits");
  return push(std::move(out), needs_grad(logits.id()),
              [this, il = logits.id(), probs = std::move(probs), targets, m,
               n](Adjoints& adj, const Tensor& up) {
                Tensor& g = adj.buf(il, {m, n});
                const double s = up[0] / static_cast<double>(m);
                for (std::size_t r = 0; r < m; ++r) {
                  const double* p = probs.row_ptr(r);
                  double* gr = g.row_ptr(r);
                  for (std::size_t i = 0; i < n; ++i) gr[i] += s * p[i];
                  gr[targets[r]] -= s;
                }
              });
}

Var Tape::embedding_rows(Var table, const std::vector<int>& ids) {
  check_mine(table, "embedding_rows");
  const Tensor& tv = table.value();
  if (tv.rank() != 2)
    throw ContractError("embedding_rows: table must be rank-2");
  if (ids.empty()) throw ContractError("embedding_rows: empty id list");
  const std::size_t v = tv.dim(0), d = tv.dim(1);
  Tensor out({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= v)
      throw ContractError("embedding_rows: id " + std::to_string(ids[r]) +
                          " outside vocab of " + std::to_string(v));
    std::memcpy(out.row_ptr(r), tv.row_ptr(ids[r]), d * sizeof(double));
  }
  return push(std::move(out), needs_grad(table.id()),
              [this, it = table.id(), ids, v, d](Adjoints& adj,
                                                 const Tensor& up) {
                Tensor& g = adj.buf(it, {v, d});
                for (std::size_t r = 0; r < ids.size(); ++r)
                  kernels::axpy(1.0, up.row_ptr(r), g.row_ptr(ids[r]), d);
              });
}

// --- fused hyperbolic ops ----------------------------------------------------

Var Tape::exp_map0_rows(Var v, Curvature c) {
  check_mine(v, "exp_map0_rows");
  const Tensor& vv = v.value();
  require_finite(vv, "exp_map0_rows");
  const std::size_t m = tensor_rows(vv), n = tensor_cols(vv);
  Tensor out(vv.shape());
  std::vector<Exp0State> states(m);
  for (std::size_t r = 0; r < m; ++r) {
    states[r] = exp0_row_raw(vv.row_ptr(r), out.row_ptr(r), n, c);
    if (states[r].clipped) geometry::project_to_ball({out.row_ptr(r), n}, c);
  }
  require_finite(out, "exp_map0_rows");
  return push(std::move(out), needs_grad(v.id()),
              [this, iv = v.id(), states = std::move(states), m, n,
               c](Adjoints& adj, const Tensor& up) {
                const Tensor& vv2 = value_of(iv);
                Tensor& g = adj.buf(iv, vv2.shape());
                std::vector<double> scratch(n);
                for (std::size_t r = 0; r < m; ++r)
                  exp0_row_vjp(vv2.row_ptr(r), states[r], up.row_ptr(r),
                               g.row_ptr(r), scratch.data(), n, c);
              });
}

Var Tape::log_map0_rows(Var x, Curvature c) {
  check_mine(x, "log_map0_rows");
  const Tensor& xv = x.value();
  require_finite(xv, "log_map0_rows");
  const std::size_t m = tensor_rows(xv), n = tensor_cols(xv);
  Tensor out(xv.shape());
  Tensor xc(xv.shape());
  std::vector<Log0State> states(m);
  for (std::size_t r = 0; r < m; ++r)
    states[r] =
        log0_row_forward(xv.row_ptr(r), out.row_ptr(r), xc.row_ptr(r), n, c);
  require_finite(out, "log_map0_rows");
  return push(std::move(out), needs_grad(x.id()),
              [this, ix = x.id(), xc = std::move(xc),
               states = std::move(states), m, n, c](Adjoints& adj,
                                                    const Tensor& up) {
                const Tensor& xv2 = value_of(ix);
                Tensor& g = adj.buf(ix, xv2.shape());
                std::vector<double> scratch(n);
                for (std::size_t r = 0; r < m; ++r)
                  log0_row_vjp(xv2.row_ptr(r), xc.row_ptr(r), states[r],
                               up.row_ptr(r), g.row_ptr(r), scratch.data(), n,
                               c);
              });
}

Var Tape::mobius_add_rows(Var x, Var y, Curvature c) {
  check_binary(x, y, "mobius_add_rows");
  require_same_shape(x.value(), y.value(), "mobius_add_rows");
  const Tensor& xv = x.value();
  const Tensor& yv = y.value();
  require_finite(xv, "mobius_add_rows");
  require_finite(yv, "mobius_add_rows");
  const std::size_t m = tensor_rows(xv), n = tensor_cols(xv);
  Tensor out(xv.shape());
  Tensor raw(xv.shape());
  std::vector<std::uint8_t> clipped(m);
  for (std::size_t r = 0; r < m; ++r) {
    mobius_row_raw(xv.row_ptr(r), yv.row_ptr(r), raw.row_ptr(r), n, c);
    std::memcpy(out.row_ptr(r), raw.row_ptr(r), n * sizeof(double));
    clipped[r] = geometry::project_to_ball({out.row_ptr(r), n}, c) ? 1 : 0;
  }
  require_finite(out, "mobius_add_rows");
  bool rg = needs_grad(x.id()) || needs_grad(y.id());
  return push(std::move(out), rg,
              [this, ix = x.id(), iy = y.id(), raw = std::move(raw),
               clipped = std::move(clipped), m, n, c](Adjoints& adj,
                                                      const Tensor& up) {
                const Tensor& xv2 = value_of(ix);
                const Tensor& yv2 = value_of(iy);
                const bool nx = needs_grad(ix), ny = needs_grad(iy);
                Tensor* gx = nx ? &adj.buf(ix, xv2.shape()) : nullptr;
                Tensor* gy = ny ? &adj.buf(iy, yv2.shape()) : nullptr;
                std::vector<double> gz(n);
                for (std::size_t r = 0; r < m; ++r) {
                  std::memcpy(gz.data(), up.row_ptr(r), n * sizeof(double));
                  const double* zr = raw.row_ptr(r);
                  if (clipped[r]) {
                    const double zn = std::sqrt(kernels::norm_sq(zr, n));
                    clip_pullback(gz.data(), zr, zn, c.max_norm() / zn, n);
                  }
                  mobius_row_vjp(xv2.row_ptr(r), yv2.row_ptr(r), zr, gz.data(),
                                 gx ? gx->row_ptr(r) : nullptr,
                                 gy ? gy->row_ptr(r) : nullptr, n, c);
                }
              });
}

Var Tape::mobius_add_bias(Var x, Var b, Curvature c) {
  check_binary(x, b, "mobius_add_bias");
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  require_finite(xv, "mobius_add_bias");
  require_finite(bv, "mobius_add_bias");
  const std::size_t m = tensor_rows(xv), n = tensor_cols(xv);
  if (bv.rank() != 1 || bv.size() != n)
    throw ContractError("mobius_add_bias: bias must be rank-1 of width " +
                        std::to_string(n));
  Tensor out(xv.shape());
  Tensor raw(xv.shape());
  std::vector<std::uint8_t> clipped(m);
  for (std::size_t r = 0; r < m; ++r) {
    mobius_row_raw(xv.row_ptr(r), bv.data(), raw.row_ptr(r), n, c);
    std::memcpy(out.row_ptr(r), raw.row_ptr(r), n * sizeof(double));
    clipped[r] = geometry::project_to_ball({out.row_ptr(r), n}, c) ? 1 : 0;
  }
  require_finite(out, "mobius_add_bias");
  bool rg = needs_grad(x.id()) || needs_grad(b.id());
  return push(std::move(out), rg,
              [this, ix = x.id(), ib = b.id(), raw = std::move(raw),
               clipped = std::move(clipped), m, n, c](Adjoints& adj,
                                                      const Tensor& up) {
                const Tensor& xv2 = value_of(ix);
                const Tensor& bv2 = value_of(ib);
                const bool nx = needs_grad(ix), nb = needs_grad(ib);
                Tensor* gx = nx ? &adj.buf(ix, xv2.shape()) : nullptr;
                Tensor* gb = nb ? &adj.buf(ib, {n}) : nullptr;
                std::vector<double> gz(n);
                for (std::size_t r = 0; r < m; ++r) {
                  std::memcpy(gz.data(), up.row_ptr(r), n * sizeof(double));
                  const double* zr = raw.row_ptr(r);
                  if (clipped[r]) {
                    const double zn = std::sqrt(kernels::norm_sq(zr, n));
                    clip_pullback(gz.data(), zr, zn, c.max_norm() / zn, n);
                  }
                  mobius_row_vjp(xv2.row_ptr(r), bv2.data(), zr, gz.data(),
                                 gx ? gx->row_ptr(r) : nullptr,
                                 gb ? gb->data() : nullptr, n, c);
                }
              });
}

Var Tape::neg_pairwise_hyperbolic_distance(Var q, Var k, Curvature c) {
  check_binary(q, k, "neg_pairwise_hyperbolic_distance");
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  require_finite(qv, "neg_pairwise_hyperbolic_distance");
  require_finite(kv, "neg_pairwise_hyperbolic_distance");
  const std::size_t m = tensor_rows(qv), nk = tensor_rows(kv);
  const std::size_t d = tensor_cols(qv);
  if (tensor_cols(kv) != d)
    throw ContractError("neg_pairwise_hyperbolic_distance: widths differ");
  Tensor eq({m, d}), ek({nk, d});
  std::vector<Exp0State> sq(m), sk(nk);
  for (std::size_t i = 0; i < m; ++i) {
    sq[i] = exp0_row_raw(qv.row_ptr(i), eq.row_ptr(i), d, c);
    if (sq[i].clipped) geometry::project_to_ball({eq.row_ptr(i), d}, c);
  }
  for (std::size_t j = 0; j < nk; ++j) {
    sk[j] = exp0_row_raw(kv.row_ptr(j), ek.row_ptr(j), d, c);
    if (sk[j].clipped) geometry::project_to_ball({ek.row_ptr(j), d}, c);
  }
  Tensor out({m, nk});
  const double sc = c.sqrt_c();
  {
    std::vector<double> negx(d), mm(d);
    for (std::size_t i = 0; i < m; ++i) {
      kernels::scale(eq.row_ptr(i), -1.0, negx.data(), d);
      for (std::size_t j = 0; j < nk; ++j) {
        mobius_row_raw(negx.data(), ek.row_ptr(j), mm.data(), d, c);
        geometry::project_to_ball({mm.data(), d}, c);
        const double w = std::sqrt(kernels::norm_sq(mm.data(), d));
        out.at(i, j) = -(2.0 / sc) * std::atanh(sc * w);
      }
    }
  }
  require_finite(out, "neg_pairwise_hyperbolic_distance");
  bool rg = needs_grad(q.id()) || needs_grad(k.id());
  return push(
      std::move(out), rg,
      [this, iq = q.id(), ik = k.id(), eq = std::move(eq), ek = std::move(ek),
       sq = std::move(sq), sk = std::move(sk), m, nk, d,
       c](Adjoints& adj, const Tensor& up) {
        const Tensor& qv2 = value_of(iq);
        const Tensor& kv2 = value_of(ik);
        const double cc = c.c();
        Tensor g_eq({m, d}), g_ek({nk, d});
        std::vector<double> negx(d), mm_raw(d), mm(d), gm(d), gneg(d),
            scratch(d);
        for (std::size_t i = 0; i < m; ++i) {
          kernels::scale(eq.row_ptr(i), -1.0, negx.data(), d);
          for (std::size_t j = 0; j < nk; ++j) {
            const double a = up.at(i, j);
            if (a == 0.0) continue;
            mobius_row_raw(negx.data(), ek.row_ptr(j), mm_raw.data(), d, c);
            std::memcpy(mm.data(), mm_raw.data(), d * sizeof(double));
            const bool clipped = geometry::project_to_ball({mm.data(), d}, c);
            const double w = std::sqrt(kernels::norm_sq(mm.data(), d));
            if (w < kNormEps) continue;  // d(x,x): subgradient 0 at the kink
            // dS/dm = -2/(1 - c w^2) * m/w, scaled by the upstream adjoint
            const double factor = -2.0 * a / ((1.0 - cc * w * w) * w);
            kernels::scale(mm.data(), factor, gm.data(), d);
            if (clipped) {
              const double zn =
                  std::sqrt(kernels::norm_sq(mm_raw.data(), d));
              clip_pullback(gm.data(), mm_raw.data(), zn, c.max_norm() / zn,
                            d);
            }
            for (std::size_t t = 0; t < d; ++t) gneg[t] = 0.0;
            mobius_row_vjp(negx.data(), ek.row_ptr(j), mm_raw.data(),
                           gm.data(), gneg.data(), g_ek.row_ptr(j), d, c);
            kernels::axpy(-1.0, gneg.data(), g_eq.row_ptr(i), d);
          }
        }
        if (needs_grad(iq)) {
          Tensor& gq = adj.buf(iq, qv2.shape());
          for (std::size_t i = 0; i < m; ++i)
            exp0_row_vjp(qv2.row_ptr(i), sq[i], g_eq.row_ptr(i),
                         gq.row_ptr(i), scratch.data(), d, c);
        }
        if (needs_grad(ik)) {
          Tensor& gk = adj.buf(ik, kv2.shape());
          for (std::size_t j = 0; j < nk; ++j)
            exp0_row_vjp(kv2.row_ptr(j), sk[j], g_ek.row_ptr(j),
                         gk.row_ptr(j), scratch.data(), d, c);
        }
      });
}

Var Tape::custom(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  require_finite(value, "custom");
  bool rg = false;
  for (Var v : inputs) {
    check_mine(v, "custom");
    rg = rg || needs_grad(v.id());
  }
  return push(std::move(value), rg, std::move(fn));
}

}  // namespace thg::ad
