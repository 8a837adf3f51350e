#pragma once

#include <optional>
#include <string>
#include <utility>

#include "thg/geometry.hpp"
#include "thg/tensor.hpp"

namespace thg {

// A trainable tensor with its gradient accumulator. Ball parameters live on
// the Poincare ball: their gradient gets the conformal rescale before the
// optimizer consumes it, and the value is re-projected into the ball after
// every step.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // same shape as value, zero until backward runs
  std::optional<geometry::Curvature> ball;

  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  Parameter(std::string n, Tensor v, geometry::Curvature c)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), ball(c) {}

  bool is_ball() const { return ball.has_value(); }
  void zero_grad() { grad.fill(0.0); }
};

}  // namespace thg
