#include "thg/geometry.hpp"

#include <cmath>
#include <string>

#include "thg/errors.hpp"
#include "thg/kernels.hpp"

namespace thg::geometry {

namespace {

void require_finite(std::span<const double> v, const char* op) {
  for (double x : v)
    if (!std::isfinite(x))
      throw DomainError(std::string(op) + ": non-finite input");
}

void require_same_dim(std::size_t a, std::size_t b, const char* op) {
  if (a != b)
    throw ContractError(std::string(op) + ": dimension mismatch " +
                        std::to_string(a) + " vs " + std::to_string(b));
}

}  // namespace

Curvature::Curvature(double c) : c_(c), sqrt_c_(std::sqrt(c)) {
  if (!(std::isfinite(c) && c > 0.0))
    throw DomainError("Curvature: c must be a positive finite real");
}

BallPoint::BallPoint(std::vector<double> coords, Curvature c)
    : coords_(std::move(coords)), c_(c) {
  require_finite(coords_, "BallPoint");
  if (kernels::norm_sq(coords_.data(), coords_.size()) * c.c() >= 1.0)
    throw DomainError("BallPoint: |x|^2 >= 1/c, point not inside the ball");
}

BallPoint BallPoint::project(std::vector<double> coords, Curvature c) {
  project_to_ball({coords.data(), coords.size()}, c);
  return BallPoint(Unchecked{}, std::move(coords), c);
}

bool project_to_ball(std::span<double> x, Curvature c) {
  require_finite(x, "project_to_ball");
  const double limit = c.max_norm();
  double norm = std::sqrt(kernels::norm_sq(x.data(), x.size()));
  if (norm <= limit) return false;
  kernels::scale(x.data(), limit / norm, x.data(), x.size());
  // Rounding can leave the rescaled norm a few ulps over the limit; shave
  // until the invariant holds bitwise.
  while (std::sqrt(kernels::norm_sq(x.data(), x.size())) > limit)
    kernels::scale(x.data(), 1.0 - 1e-14, x.data(), x.size());
  return true;
}

void exp_map0(std::span<const double> v, Curvature c, std::span<double> out) {
  require_finite(v, "exp_map0");
  require_same_dim(v.size(), out.size(), "exp_map0");
  const double r = std::sqrt(kernels::norm_sq(v.data(), v.size()));
  if (r < kNormEps) {
    for (double& o : out) o = 0.0;
    return;
  }
  const double sr = c.sqrt_c() * r;
  kernels::scale(v.data(), std::tanh(sr) / sr, out.data(), out.size());
  project_to_ball(out, c);
}

void log_map0(std::span<const double> x, Curvature c, std::span<double> out) {
  require_finite(x, "log_map0");
  require_same_dim(x.size(), out.size(), "log_map0");
  if (out.data() != x.data())
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i];
  project_to_ball(out, c);
  const double r = std::sqrt(kernels::norm_sq(out.data(), out.size()));
  if (r < kNormEps) {
    for (double& o : out) o = 0.0;
    return;
  }
  const double sr = c.sqrt_c() * r;
  if (sr >= 1.0)
    throw DomainError("log_map0: arctanh singularity, |x|^2 >= 1/c");
  kernels::scale(out.data(), std::atanh(sr) / sr, out.data(), out.size());
}

void mobius_add(std::span<const double> x, std::span<const double> y,
                Curvature c, std::span<double> out) {
  require_same_dim(x.size(), y.size(), "mobius_add");
  require_same_dim(x.size(), out.size(), "mobius_add");
  const std::size_t d = x.size();
  const double cc = c.c();
  const double xy = kernels::dot(x.data(), y.data(), d);
  const double x2 = kernels::norm_sq(x.data(), d);
  const double y2 = kernels::norm_sq(y.data(), d);
  const double a = 1.0 + 2.0 * cc * xy + cc * y2;
  const double b = 1.0 - cc * x2;
  const double den = 1.0 + 2.0 * cc * xy + cc * cc * x2 * y2;
  if (std::abs(den) < kDenomEps)
    throw NumericalError("mobius_add: denominator degenerate");
  kernels::scale(x.data(), a / den, out.data(), d);
  kernels::axpy(b / den, y.data(), out.data(), d);
  project_to_ball(out, c);
}

double hyperbolic_distance(std::span<const double> x, std::span<const double> y,
                           Curvature c, std::span<double> scratch) {
  require_same_dim(x.size(), y.size(), "hyperbolic_distance");
  if (scratch.size() < 2 * x.size())
    throw ContractError("hyperbolic_distance: scratch too small");
  const std::size_t d = x.size();
  std::span<double> neg_x = scratch.subspan(0, d);
  std::span<double> m = scratch.subspan(d, d);
  kernels::scale(x.data(), -1.0, neg_x.data(), d);
  mobius_add(neg_x, y, c, m);
  const double u = c.sqrt_c() * std::sqrt(kernels::norm_sq(m.data(), d));
  if (u >= 1.0)
    throw DomainError("hyperbolic_distance: arctanh singularity");
  return 2.0 / c.sqrt_c() * std::atanh(u);
}

double hyperbolic_distance(std::span<const double> x, std::span<const double> y,
                           Curvature c) {
  std::vector<double> scratch(2 * x.size());
  return hyperbolic_distance(x, y, c, scratch);
}

double conformal_factor(std::span<const double> theta) {
  const double t = 1.0 - kernels::norm_sq(theta.data(), theta.size());
  return t * t / 4.0;
}

void riemannian_rescale(std::span<const double> grad_e,
                        std::span<const double> theta, std::span<double> out) {
  require_finite(grad_e, "riemannian_rescale");
  require_finite(theta, "riemannian_rescale");
  require_same_dim(grad_e.size(), theta.size(), "riemannian_rescale");
  require_same_dim(grad_e.size(), out.size(), "riemannian_rescale");
  kernels::scale(grad_e.data(), conformal_factor(theta), out.data(), out.size());
}

BallPoint exp_map0(const TangentVector& v, Curvature c) {
  std::vector<double> out(v.coords.size());
  exp_map0(v.coords, c, out);
  return BallPoint::project(std::move(out), c);
}

TangentVector log_map0(const BallPoint& x) {
  TangentVector out{std::vector<double>(x.dim())};
  log_map0(x.coords(), x.curvature(), out.coords);
  return out;
}

BallPoint mobius_add(const BallPoint& x, const BallPoint& y) {
  if (!(x.curvature() == y.curvature()))
    throw ContractError("mobius_add: points live in different balls");
  std::vector<double> out(x.dim());
  mobius_add(x.coords(), y.coords(), x.curvature(), out);
  return BallPoint::project(std::move(out), x.curvature());
}

double hyperbolic_distance(const BallPoint& x, const BallPoint& y) {
  if (!(x.curvature() == y.curvature()))
    throw ContractError("hyperbolic_distance: points live in different balls");
  return hyperbolic_distance(x.coords(), y.coords(), x.curvature());
}

TangentVector riemannian_rescale(const TangentVector& grad_e,
                                 const BallPoint& theta) {
  TangentVector out{std::vector<double>(grad_e.coords.size())};
  riemannian_rescale(grad_e.coords, theta.coords(), out.coords);
  return out;
}

}  // namespace thg::geometry
