#ifndef DALAB_GRADCHECK_HPP
#define DALAB_GRADCHECK_HPP

#include <functional>

#include "dalab/tape.hpp"
#include "dalab/tensor.hpp"

namespace dalab {

// Scalar-valued function built on a fresh tape from one input leaf.
using TapeFn = std::function<ValId(Tape&, Tensor&)>;

// Compares the analytic gradient of f at `point` against central differences,
// returning max_i |analytic_i - fd_i| / max(1, |analytic_i|).
double gradcheck(const TapeFn& f, const Tensor& point, double step);

}  // namespace dalab

#endif
