#include "loopgen/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace loopgen {

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor sigmoid(const Tensor& logits) {
    Tensor out(logits.shape);
    for (int i = 0; i < logits.numel(); ++i) out.data[i] = sigmoid_scalar(logits.data[i]);
    return out;
}

LossResult bce_with_logits(const Tensor& logits, const Tensor& targets) {
    check_same_shape(logits, targets, "bce_with_logits");
    int n = logits.numel();
    LossResult res;
    res.d_logits = Tensor(logits.shape);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double l = logits.data[i];
        double y = targets.data[i];
        // max(l,0) - l*y + log(1 + exp(-|l|))
        total += std::max(l, 0.0) - l * y + std::log1p(std::exp(-std::abs(l)));
        res.d_logits.data[i] = (sigmoid_scalar(l) - y) / n;
    }
    res.loss = total / n;
    return res;
}

LossResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
    if (logits.ndim() != 2 || static_cast<int>(targets.size()) != logits.dim(0)) {
        throw std::invalid_argument("softmax_cross_entropy: bad shapes, logits " +
                                    logits.shape_str());
    }
    int n = logits.dim(0), k = logits.dim(1);
    LossResult res;
    res.d_logits = Tensor(logits.shape);
    double total = 0.0;
    for (int s = 0; s < n; ++s) {
        if (targets[s] < 0 || targets[s] >= k) {
            throw std::invalid_argument("softmax_cross_entropy: target out of range");
        }
        double mx = logits(s, 0);
        for (int j = 1; j < k; ++j) mx = std::max(mx, logits(s, j));
        double z = 0.0;
        for (int j = 0; j < k; ++j) z += std::exp(logits(s, j) - mx);
        double log_z = std::log(z) + mx;
        total += log_z - logits(s, targets[s]);
        for (int j = 0; j < k; ++j) {
            double p = std::exp(logits(s, j) - log_z);
            res.d_logits(s, j) = (p - (j == targets[s] ? 1.0 : 0.0)) / n;
        }
    }
    res.loss = total / n;
    return res;
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
    if (!(temperature > 0.0)) throw std::invalid_argument("softmax: temperature must be > 0");
    if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
    double mx = logits[0] / temperature;
    for (double l : logits) mx = std::max(mx, l / temperature);
    std::vector<double> probs(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] / temperature - mx);
        z += probs[i];
    }
    for (double& p : probs) p /= z;
    return probs;
}

}  // namespace loopgen
