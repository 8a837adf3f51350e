#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "thg/autodiff.hpp"
#include "thg/parameter.hpp"

namespace thg::gradcheck {

inline constexpr double kTolerance = 1e-4;
inline constexpr double kStep = 1e-5;

// Builds a scalar loss on the tape from the *current* values of the inputs;
// invoked repeatedly with perturbed values for the finite differences.
using LossFn =
    std::function<ad::Var(ad::Tape&, const std::vector<Parameter*>&)>;

// max over every element of every input of
//   |analytic - numeric| / max(1, |analytic|, |numeric|)
// with numeric = (f(x+h) - f(x-h)) / 2h. NaN on either side -> +infinity.
double max_rel_error(const LossFn& f, const std::vector<Parameter*>& inputs,
                     double h = kStep);

struct CheckResult {
  std::string name;
  double max_err;  // worst over all seeds
  bool pass;
};

// The named composite checks behind `thg gradcheck`: the geometry maps, the
// Eq. 6 layer, both attention compatibility modes, the full encoder, and the
// softmax/CE head, each evaluated at `seeds` random seeds.
std::vector<CheckResult> run_standard_checks(std::uint64_t base_seed = 1234,
                                             int seeds = 10);

}  // namespace thg::gradcheck
