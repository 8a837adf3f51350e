#pragma once

#include <vector>

#include "thg/parameter.hpp"
#include "thg/tensor.hpp"

namespace thg::optim {

enum class Kind { Adam, Rmsprop, Rsgd };

struct Hyper {
  Kind kind = Kind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;   // Adam
  double beta2 = 0.999;
  double alpha = 0.99;  // RMSprop square-average decay
  double eps = 1e-8;
  // Apply the conformal gradient rescale to ball parameters before Adam /
  // RMSprop consume the gradient. Riemannian SGD always rescales.
  bool riemannian_rescale = true;
};

// Owns the moment buffers for a fixed parameter list. Ball parameters get
// their gradient rescaled by (1 - |theta|^2)^2 / 4 (when enabled) and are
// re-projected into the ball after every update, so the ball invariant holds
// after any number of steps of any kind.
class Optimizer {
 public:
  Optimizer(Hyper h, std::vector<Parameter*> params);

  void step();
  void zero_grad();
  long step_count() const { return t_; }
  const Hyper& hyper() const { return h_; }

 private:
  Hyper h_;
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_;  // Adam first moment
  std::vector<Tensor> v_;  // Adam second moment / RMSprop square average
  long t_ = 0;
};

}  // namespace thg::optim
