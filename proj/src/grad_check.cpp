#include "loopgen/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace loopgen {

double grad_check(const std::function<double()>& loss, std::span<Parameter* const> params,
                  double h) {
    double worst = 0.0;
    for (Parameter* p : params) {
        for (int i = 0; i < p->value.numel(); ++i) {
            double saved = p->value.data[i];
            p->value.data[i] = saved + h;
            double up = loss();
            p->value.data[i] = saved - h;
            double down = loss();
            p->value.data[i] = saved;
            double numeric = (up - down) / (2.0 * h);
            double analytic = p->grad.data[i];
            if (!std::isfinite(numeric) || !std::isfinite(analytic)) {
                throw std::runtime_error("grad_check: non-finite value at " + p->name);
            }
            // The floor keeps dead-gradient entries (e.g. a conv bias feeding a
            // batchnorm) from measuring pure cancellation noise: central
            // differences on an O(10) loss only resolve ~1e-10 absolute.
            double denom = std::max(1e-5, std::abs(analytic) + std::abs(numeric));
            worst = std::max(worst, std::abs(analytic - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace loopgen
