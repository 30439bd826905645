#include "loopgen/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace loopgen {

Tensor he_init(std::vector<int> shape, int fan_in, Rng& rng) {
    if (fan_in < 1) throw std::invalid_argument("he_init: fan_in must be >= 1");
    Tensor t(std::move(shape));
    double stddev = std::sqrt(2.0 / fan_in);
    for (double& v : t.data) v = stddev * rng.normal();
    return t;
}

double cosine_lr(long step, long total, double lr_max, double lr_min) {
    if (total == 0) return lr_max;
    double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(total);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(phase));
}

double inverse_sigmoid_schedule(long epoch, double k) {
    return k / (k + std::exp(static_cast<double>(epoch) / k));
}

AdamW::AdamW(std::vector<Parameter*> params, double weight_decay, double beta1, double beta2,
             double eps)
    : params_(std::move(params)),
      weight_decay_(weight_decay),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {
    for (Parameter* p : params_) {
        m_.emplace_back(Tensor::zeros(p->value.shape));
        v_.emplace_back(Tensor::zeros(p->value.shape));
    }
}

void AdamW::step(double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        Parameter& p = *params_[pi];
        Tensor& m = m_[pi];
        Tensor& v = v_[pi];
        for (int i = 0; i < p.value.numel(); ++i) {
            double g = p.grad.data[i];
            if (!std::isfinite(g)) {
                throw std::runtime_error("AdamW: non-finite gradient in " + p.name);
            }
            m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * g;
            v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * g * g;
            double mhat = m.data[i] / bc1;
            double vhat = v.data[i] / bc2;
            p.value.data[i] -=
                lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * p.value.data[i]);
        }
    }
}

void AdamW::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

}  // namespace loopgen
