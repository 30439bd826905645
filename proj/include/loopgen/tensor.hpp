#ifndef LOOPGEN_TENSOR_HPP
#define LOOPGEN_TENSOR_HPP

#include <string>
#include <vector>

namespace loopgen {

// Dense row-major tensor of doubles. Small and explicit; layers index into
// data directly where the inner loops matter.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, double fill = 0.0);

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[i]; }
    int numel() const { return static_cast<int>(data.size()); }

    double& operator()(int i) { return data[i]; }
    const double& operator()(int i) const { return data[i]; }
    double& operator()(int i, int j) { return data[i * shape[1] + j]; }
    const double& operator()(int i, int j) const { return data[i * shape[1] + j]; }
    double& operator()(int i, int j, int k) { return data[(i * shape[1] + j) * shape[2] + k]; }
    const double& operator()(int i, int j, int k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    std::string shape_str() const;

    void fill(double v);
    void add_(const Tensor& other);  // elementwise, shapes must match
};

int shape_numel(const std::vector<int>& shape);

// Swap the last two axes of a rank-3 tensor: (N, A, B) -> (N, B, A).
Tensor transpose_12(const Tensor& t);

// Throws std::invalid_argument naming both shapes when they differ.
void check_same_shape(const Tensor& a, const Tensor& b, const char* where);

// Trainable value with its gradient accumulator.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
        grad = Tensor::zeros(value.shape);
    }

    void zero_grad() { grad.fill(0.0); }
};

}  // namespace loopgen

#endif
