#include "loopgen/tensor.hpp"

#include <algorithm>
#include <stdexcept>

namespace loopgen {

int shape_numel(const std::vector<int>& shape) {
    int n = 1;
    for (int d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("Tensor: nonpositive dimension");
    }
    data.assign(shape_numel(shape), fill);
}

std::string Tensor::shape_str() const {
    std::string out = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(shape[i]);
    }
    out += ")";
    return out;
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

void Tensor::add_(const Tensor& other) {
    check_same_shape(*this, other, "Tensor::add_");
    for (std::size_t i = 0; i < data.size(); ++i) data[i] += other.data[i];
}

Tensor transpose_12(const Tensor& t) {
    if (t.ndim() != 3) throw std::invalid_argument("transpose_12: need a rank-3 tensor");
    int n = t.dim(0), a = t.dim(1), b = t.dim(2);
    Tensor out({n, b, a});
    for (int s = 0; s < n; ++s) {
        for (int i = 0; i < a; ++i) {
            for (int j = 0; j < b; ++j) out(s, j, i) = t(s, i, j);
        }
    }
    return out;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (a.shape != b.shape) {
        throw std::invalid_argument(std::string(where) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
    }
}

}  // namespace loopgen
