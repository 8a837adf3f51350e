#include "thg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "thg/layers.hpp"
#include "thg/rng.hpp"

namespace thg::gradcheck {

double max_rel_error(const LossFn& f, const std::vector<Parameter*>& inputs,
                     double h) {
  for (Parameter* p : inputs) p->zero_grad();
  {
    ad::Tape t;
    t.backward(f(t, inputs));
  }
  std::vector<Tensor> analytic;
  analytic.reserve(inputs.size());
  for (Parameter* p : inputs) analytic.push_back(p->grad);

  auto eval = [&]() {
    ad::Tape t;
    return f(t, inputs).value().item();
  };

  double worst = 0.0;
  for (std::size_t pi = 0; pi < inputs.size(); ++pi) {
    Parameter& p = *inputs[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + h;
      const double fp = eval();
      p.value[i] = orig - h;
      const double fm = eval();
      p.value[i] = orig;
      const double num = (fp - fm) / (2.0 * h);
      const double ana = analytic[pi][i];
      const double err =
          (std::isnan(num) || std::isnan(ana))
              ? std::numeric_limits<double>::infinity()
              : std::abs(ana - num) /
                    std::max({1.0, std::abs(ana), std::abs(num)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

namespace {

using geometry::Curvature;

Tensor uni(Rng& rng, std::vector<std::size_t> shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Rows sampled inside the ball: random direction, radius up to frac/sqrt(c).
Tensor ball_rows(Rng& rng, std::size_t m, std::size_t d, double frac,
                 Curvature c) {
  Tensor t({m, d});
  for (std::size_t r = 0; r < m; ++r) {
    double n2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      t.at(r, i) = rng.normal();
      n2 += t.at(r, i) * t.at(r, i);
    }
    const double radius = frac * rng.uniform() / c.sqrt_c();
    const double s = radius / std::sqrt(n2);
    for (std::size_t i = 0; i < d; ++i) t.at(r, i) *= s;
  }
  return t;
}

// Rank-1 in-ball point (for bias parameters).
Tensor ball_vec(Rng& rng, std::size_t d, double frac, Curvature c) {
  Tensor rows = ball_rows(rng, 1, d, frac, c);
  std::vector<double> v(rows.data(), rows.data() + d);
  return Tensor::vector(std::move(v));
}

Curvature pick_c(std::uint64_t seed) { return Curvature(seed % 2 ? 0.5 : 1.0); }

double check_exp_map0(std::uint64_t seed) {
  Rng rng(seed);
  const Curvature c = pick_c(seed);
  Parameter x("x", uni(rng, {4, 6}, -1.0, 1.0));
  return max_rel_error(
      [&](ad::Tape& t, const std::vector<Parameter*>& in) {
        ad::Var y = t.exp_map0_rows(t.leaf(*in[0]), c);
        return t.sum(t.hadamard(y, y));
      },
      {&x});
}

double check_log_map0(std::uint64_t seed) {
  Rng rng(seed);
  const Curvature c = pick_c(seed);
  Parameter x("x", ball_rows(rng, 4, 6, 0.8, c));
  return max_rel_error(
      [&](ad::Tape& t, const std::vector<Parameter*>& in) {
        ad::Var y = t.log_map0_rows(t.leaf(*in[0]), c);
        return t.sum(t.hadamard(y, y));
      },
      {&x});
}

double check_mobius_add(std::uint64_t seed) {
  Rng rng(seed);
  const Curvature c = pick_c(seed);
  Parameter x("x", ball_rows(rng, 4, 6, 0.7, c));
  Parameter y("y", ball_rows(rng, 4, 6, 0.7, c));
  return max_rel_error(
      [&](ad::Tape& t, const std::vector<Parameter*>& in) {
        ad::Var z = t.mobius_add_rows(t.leaf(*in[0]), t.leaf(*in[1]), c);
        return t.sum(t.hadamard(z, z));
      },
      {&x, &y});
}

double check_hyperbolic_linear(std::uint64_t seed) {
  Rng rng(seed);
  const Curvature c = pick_c(seed);
  nn::HyperbolicLinear lin("lin", 5, 4, c, rng);
  lin.b.value = ball_vec(rng, 5, 0.4, c);  // off-origin bias
  Parameter x("x", uni(rng, {3, 4}, -0.6, 0.6));
  std::vector<Parameter*> inputs{&lin.w, &lin.b, &x};
  return max_rel_error(
      [&](ad::Tape& t, const std::vector<Parameter*>&) {
        ad::Var y = lin.forward(t, t.leaf(x));
        return t.sum(t.hadamard(y, y));
      },
      inputs);
}

double check_attention(std::uint64_t seed, nn::CompatMode mode) {
  Rng rng(seed);
  nn::EncoderConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.curvature = seed % 2 ? 0.5 : 1.0;
  cfg.compat = mode;
  nn::ThgEncoder enc("enc", cfg, rng);
  enc.q_h->b.value = ball_vec(rng, 8, 0.3, enc.c);
  enc.k_h->b.value = ball_vec(rng, 8, 0.3, enc.c);
  Parameter x("x", uni(rng, {3, 8}, -0.5, 0.5));
  std::vector<Parameter*> inputs;
  enc.collect(inputs);
  inputs.push_back(&x);
  return max_rel_error(
      [&](ad::Tape& t, const std::vector<Parameter*>&) {
        ad::Var out = nn::thg_attention(t, enc, t.leaf(x));
        return t.mean(t.hadamard(out, out));
      },
      inputs);
}

double check_encoder(std::uint64_t seed) {
  Rng rng(seed);
  nn::EncoderConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.curvature = seed % 2 ? 0.5 : 1.0;
  nn::ThgEncoder enc("enc", cfg, rng);
  enc.q_h->b.value = ball_vec(rng, 8, 0.3, enc.c);
  enc.k_h->b.value = ball_vec(rng, 8, 0.3, enc.c);
  Parameter x("x", uni(rng, {3, 8}, -0.5, 0.5));
  std::vector<Parameter*> inputs;
  enc.collect(inputs);
  inputs.push_back(&x);
  return max_rel_error(
      [&](ad::Tape& t, const std::vector<Parameter*>&) {
        ad::Var out = nn::encoder_forward(t, enc, t.leaf(x));
        return t.mean(t.hadamard(out, out));
      },
      inputs);
}

double check_softmax_ce(std::uint64_t seed) {
  Rng rng(seed);
  Parameter logits("logits", uni(rng, {4, 3}, -2.0, 2.0));
  std::vector<int> targets(4);
  for (int& t : targets) t = static_cast<int>(rng.uniform_int(3));
  return max_rel_error(
      [&](ad::Tape& t, const std::vector<Parameter*>& in) {
        return t.cross_entropy_with_logits(t.leaf(*in[0]), targets);
      },
      {&logits});
}

}  // namespace

std::vector<CheckResult> run_standard_checks(std::uint64_t base_seed,
                                             int seeds) {
  struct Def {
    const char* name;
    double (*once)(std::uint64_t);
  };
  const Def defs[] = {
      {"exp_map0", check_exp_map0},
      {"log_map0", check_log_map0},
      {"mobius_add", check_mobius_add},
      {"hyperbolic_linear", check_hyperbolic_linear},
      {"attention_dot",
       [](std::uint64_t s) { return check_attention(s, nn::CompatMode::DotProduct); }},
      {"attention_distance",
       [](std::uint64_t s) {
         return check_attention(s, nn::CompatMode::HyperbolicDistance);
       }},
      {"encoder", check_encoder},
      {"softmax_ce", check_softmax_ce},
  };
  std::vector<CheckResult> results;
  for (const Def& def : defs) {
    const std::uint64_t stream = Rng::derive(base_seed, def.name);
    double worst = 0.0;
    for (int s = 0; s < seeds; ++s)
      worst = std::max(worst, def.once(stream + static_cast<std::uint64_t>(s)));
    results.push_back({def.name, worst, worst <= kTolerance});
  }
  return results;
}

}  // namespace thg::gradcheck
