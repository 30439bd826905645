#ifndef LOOPGEN_BATCH_HPP
#define LOOPGEN_BATCH_HPP

#include <span>
#include <vector>

#include "loopgen/pianoroll.hpp"
#include "loopgen/tensor.hpp"

namespace loopgen {

// Stack loops into a (N, 128, 93) batch tensor of 0/1 values.
Tensor rolls_to_tensor(std::span<const Pianoroll> rolls);

// Threshold one batch row (probabilities or 0/1 values) back into a roll.
Pianoroll tensor_row_to_roll(const Tensor& batch, int row, double threshold = 0.5);

inline double binarize(double p, double threshold = 0.5) { return p >= threshold ? 1.0 : 0.0; }

}  // namespace loopgen

#endif
