#ifndef LOOPGEN_OPTIM_HPP
#define LOOPGEN_OPTIM_HPP

#include <vector>

#include "loopgen/rng.hpp"
#include "loopgen/tensor.hpp"

namespace loopgen {

// Zero-mean normal with variance 2/fan_in.
Tensor he_init(std::vector<int> shape, int fan_in, Rng& rng);

// lr_min + 0.5*(lr_max - lr_min)*(1 + cos(pi*t/T)); T = 0 gives lr_max.
double cosine_lr(long step, long total, double lr_max, double lr_min);

// Teacher-forcing probability k / (k + exp(i/k)).
double inverse_sigmoid_schedule(long epoch, double k = 20.0);

class AdamW {
public:
    explicit AdamW(std::vector<Parameter*> params, double weight_decay = 0.01,
                   double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(double lr);
    void zero_grad();

private:
    std::vector<Parameter*> params_;
    std::vector<Tensor> m_, v_;
    double weight_decay_, beta1_, beta2_, eps_;
    long t_ = 0;
};

}  // namespace loopgen

#endif
