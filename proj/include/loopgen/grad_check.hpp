#ifndef LOOPGEN_GRAD_CHECK_HPP
#define LOOPGEN_GRAD_CHECK_HPP

#include <functional>
#include <span>

#include "loopgen/tensor.hpp"

namespace loopgen {

// Compares the analytic gradients already stored in params against central
// finite differences of loss() and returns the max relative error seen.
// Parameter values are restored before returning.
double grad_check(const std::function<double()>& loss, std::span<Parameter* const> params,
                  double h = 1e-5);

}  // namespace loopgen

#endif
