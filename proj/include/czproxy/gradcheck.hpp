#pragma once

#include <functional>
#include <string>
#include <vector>

#include "czproxy/model.hpp"
#include "czproxy/tensor.hpp"

namespace czp {

// Central finite differences against the tape, at 64-bit. The numeric side
// only ever runs forward passes, so it stays independent of the backward
// implementation it verifies.

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
};

// Relative error between the analytic gradient in `param` and central
// differences of `forward` (which must rebuild the whole forward pass from
// current values). Perturbs every coordinate.
double finite_difference_error(const TensorPtr& param,
                               const std::function<double()>& forward);

// Per-op checks over `seeds` random instances each; every differentiable op
// in the library appears as one group.
std::vector<GradCheckResult> grad_check_ops(std::size_t seeds);

// Full-model check: a small world and batch, every learnable parameter
// verified after one backward pass.
std::vector<GradCheckResult> grad_check_model(std::uint64_t seed);

}  // namespace czp
