#ifndef LOOPGEN_LOSSES_HPP
#define LOOPGEN_LOSSES_HPP

#include <span>
#include <vector>

#include "loopgen/tensor.hpp"

namespace loopgen {

struct LossResult {
    double loss = 0.0;
    Tensor d_logits;
};

// Mean over all elements of -[y ln s(l) + (1-y) ln(1-s(l))] in the stable
// log-sum-exp form; gradient (s(l) - y)/numel.
LossResult bce_with_logits(const Tensor& logits, const Tensor& targets);

// Mean cross-entropy over rows of (N, K) logits against class indices;
// gradient (softmax - onehot)/N.
LossResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets);

double sigmoid_scalar(double x);
Tensor sigmoid(const Tensor& logits);

// Temperature softmax over one logit row.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

}  // namespace loopgen

#endif
