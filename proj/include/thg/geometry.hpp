#pragma once

#include <span>
#include <vector>

namespace thg::geometry {

// Multiplicative clip margin off the shell. Points produced by any ball
// operation satisfy |x| <= (1 - kBallEps)/sqrt(c), which keeps arctanh
// well-conditioned (arctanh(1 - 1e-5) ~ 6.1).
inline constexpr double kBallEps = 1e-5;
// Below this norm the 0/0 maps return their analytic limit instead of dividing.
inline constexpr double kNormEps = 1e-12;
// Mobius denominator degeneracy guard; unreachable for clipped inputs.
inline constexpr double kDenomEps = 1e-15;
// arctanh operand bound, in concert with kBallEps.
inline constexpr double kAtanhGuard = 1.0 - 1e-12;

// The positive scalar c of the ball B^{d,c} with curvature -c; the ball has
// radius 1/sqrt(c).
class Curvature {
 public:
  explicit Curvature(double c);
  double c() const { return c_; }
  double sqrt_c() const { return sqrt_c_; }
  // Largest norm a clipped point may have: (1 - kBallEps)/sqrt(c).
  double max_norm() const { return (1.0 - kBallEps) / sqrt_c_; }

  friend bool operator==(Curvature a, Curvature b) { return a.c_ == b.c_; }

 private:
  double c_;
  double sqrt_c_;
};

// A direction in the tangent space at the origin; unconstrained.
struct TangentVector {
  std::vector<double> coords;
};

// A point strictly inside B^{d,c}. The checked constructor rejects outside
// points; project() clips them onto the max_norm() sphere instead.
class BallPoint {
 public:
  BallPoint(std::vector<double> coords, Curvature c);
  static BallPoint project(std::vector<double> coords, Curvature c);

  const std::vector<double>& coords() const { return coords_; }
  Curvature curvature() const { return c_; }
  std::size_t dim() const { return coords_.size(); }

 private:
  struct Unchecked {};
  BallPoint(Unchecked, std::vector<double> coords, Curvature c)
      : coords_(std::move(coords)), c_(c) {}

  std::vector<double> coords_;
  Curvature c_;
};

// --- span kernels (hot path; `out` may alias the input) ------------------

// out = tanh(sqrt(c)|v|) * v / (sqrt(c)|v|); the zero point for |v| < kNormEps.
void exp_map0(std::span<const double> v, Curvature c, std::span<double> out);

// out = arctanh(sqrt(c)|x|) * x / (sqrt(c)|x|); clips x into the ball first.
void log_map0(std::span<const double> x, Curvature c, std::span<double> out);

// Mobius addition x (+)_c y, clipped back into the ball. Non-commutative.
// `out` must not alias x or y.
void mobius_add(std::span<const double> x, std::span<const double> y,
                Curvature c, std::span<double> out);

// Geodesic distance (2/sqrt(c)) * arctanh(sqrt(c)|(-x) (+) y|).
// `scratch` needs at least 2*d doubles; the allocating overload is below.
double hyperbolic_distance(std::span<const double> x, std::span<const double> y,
                           Curvature c, std::span<double> scratch);
double hyperbolic_distance(std::span<const double> x, std::span<const double> y,
                           Curvature c);

// (1 - |theta|^2)^2 / 4, the gradient rescale factor. Stated for the unit
// ball; applied verbatim for every curvature.
double conformal_factor(std::span<const double> theta);

// out = conformal_factor(theta) * grad_e
void riemannian_rescale(std::span<const double> grad_e,
                        std::span<const double> theta, std::span<double> out);

// Clips x in place onto the max_norm() sphere when it lies outside; identity
// otherwise. Returns whether clipping happened.
bool project_to_ball(std::span<double> x, Curvature c);

// --- typed wrappers -------------------------------------------------------

BallPoint exp_map0(const TangentVector& v, Curvature c);
TangentVector log_map0(const BallPoint& x);
BallPoint mobius_add(const BallPoint& x, const BallPoint& y);
double hyperbolic_distance(const BallPoint& x, const BallPoint& y);
TangentVector riemannian_rescale(const TangentVector& grad_e,
                                 const BallPoint& theta);

}  // namespace thg::geometry
