#include "thg/optim.hpp"

#include <cmath>
#include <utility>
#include <vector>

#include "thg/errors.hpp"
#include "thg/geometry.hpp"
#include "thg/kernels.hpp"

namespace thg::optim {

Optimizer::Optimizer(Hyper h, std::vector<Parameter*> params)
    : h_(h), params_(std::move(params)) {
  if (params_.empty()) throw ContractError("Optimizer: empty parameter list");
  if (!(h_.lr > 0.0)) throw ContractError("Optimizer: lr must be positive");
  const bool needs_moments = h_.kind != Kind::Rsgd;
  for (Parameter* p : params_) {
    if (!p) throw ContractError("Optimizer: null parameter");
    if (!p->value.same_shape(p->grad))
      throw ContractError("Optimizer: parameter '" + p->name +
                          "' is missing a matching gradient buffer");
    if (needs_moments) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }
}

void Optimizer::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void Optimizer::step() {
  ++t_;
  std::vector<double> rescaled;
  for (std::size_t idx = 0; idx < params_.size(); ++idx) {
    Parameter& p = *params_[idx];
    const std::size_t n = p.value.size();
    const double* g = p.grad.data();
    const bool rescale =
        p.is_ball() && (h_.kind == Kind::Rsgd || h_.riemannian_rescale);
    if (rescale) {
      rescaled.resize(n);
      geometry::riemannian_rescale(p.grad.span(), p.value.span(),
                                   {rescaled.data(), n});
      g = rescaled.data();
    }
    switch (h_.kind) {
      case Kind::Adam: {
        Tensor& m = m_[idx];
        Tensor& v = v_[idx];
        const double bc1 = 1.0 - std::pow(h_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(h_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < n; ++i) {
          m[i] = h_.beta1 * m[i] + (1.0 - h_.beta1) * g[i];
          v[i] = h_.beta2 * v[i] + (1.0 - h_.beta2) * g[i] * g[i];
          p.value[i] -=
              h_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + h_.eps);
        }
        break;
      }
      case Kind::Rmsprop: {
        Tensor& v = v_[idx];
        for (std::size_t i = 0; i < n; ++i) {
          v[i] = h_.alpha * v[i] + (1.0 - h_.alpha) * g[i] * g[i];
          p.value[i] -= h_.lr * g[i] / (std::sqrt(v[i]) + h_.eps);
        }
        break;
      }
      case Kind::Rsgd:
        kernels::axpy(-h_.lr, g, p.value.data(), n);
        break;
    }
    if (p.is_ball()) geometry::project_to_ball(p.value.span(), *p.ball);
  }
}

}  // namespace thg::optim
