#include "loopgen/batch.hpp"

#include <stdexcept>

namespace loopgen {

Tensor rolls_to_tensor(std::span<const Pianoroll> rolls) {
    if (rolls.empty()) throw std::invalid_argument("rolls_to_tensor: empty batch");
    int n = static_cast<int>(rolls.size());
    Tensor out({n, TrackLayout::total_steps, TrackLayout::rows});
    for (int s = 0; s < n; ++s) {
        for (int i = 0; i < TrackLayout::total_cells; ++i) {
            out.data[static_cast<std::size_t>(s) * TrackLayout::total_cells + i] =
                rolls[s].cells[i];
        }
    }
    return out;
}

Pianoroll tensor_row_to_roll(const Tensor& batch, int row, double threshold) {
    if (batch.ndim() != 3 || batch.dim(1) != TrackLayout::total_steps ||
        batch.dim(2) != TrackLayout::rows) {
        throw std::invalid_argument("tensor_row_to_roll: bad batch shape " + batch.shape_str());
    }
    if (row < 0 || row >= batch.dim(0)) {
        throw std::invalid_argument("tensor_row_to_roll: row out of range");
    }
    Pianoroll roll;
    for (int i = 0; i < TrackLayout::total_cells; ++i) {
        double v = batch.data[static_cast<std::size_t>(row) * TrackLayout::total_cells + i];
        roll.cells[i] = v >= threshold ? 1 : 0;
    }
    return roll;
}

}  // namespace loopgen
