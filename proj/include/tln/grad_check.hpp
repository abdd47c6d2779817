#pragma once

#include <functional>
#include <vector>

#include "tln/tape.hpp"

namespace tln {

// A scalar-valued function assembled from tape primitives. Receives one Var
// per input tensor, in order.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Central-difference gradient check: returns the maximum over all input
// coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
// The numeric side uses forward evaluations only, so it stays independent of
// the backward rules it verifies.
double grad_check(const ScalarFn& f, std::vector<Tensor> inputs, double eps = 1e-5);

}  // namespace tln
