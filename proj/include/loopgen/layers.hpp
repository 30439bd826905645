#ifndef LOOPGEN_LAYERS_HPP
#define LOOPGEN_LAYERS_HPP

#include <string>
#include <utility>
#include <vector>

#include "loopgen/rng.hpp"
#include "loopgen/tensor.hpp"

namespace loopgen {

// Named persistent tensors of a module (weights plus running stats), used by
// the checkpoint reader/writer.
using StateMap = std::vector<std::pair<std::string, Tensor*>>;

// Same data, new shape (element counts must agree).
Tensor reshaped(const Tensor& t, std::vector<int> shape);

struct Linear;

// y = x W^T + b without touching the layer's backward cache (inference use).
Tensor linear_apply(const Linear& lin, const Tensor& x);

struct Linear {
    Parameter w;  // (out, in)
    Parameter b;  // (out)

    Linear(const std::string& name, int in, int out, Rng& rng);

    Tensor forward(const Tensor& x);      // (N, in) -> (N, out)
    Tensor backward(const Tensor& d_y);   // -> d_x

    void collect_params(std::vector<Parameter*>& out);
    void collect_state(StateMap& out);

private:
    Tensor x_;
};

struct Conv1d {
    Parameter w;  // (out_ch, in_ch, kernel)
    Parameter b;  // (out_ch)
    int kernel, pad, stride;

    Conv1d(const std::string& name, int in_ch, int out_ch, int kernel, int pad, int stride,
           Rng& rng);

    int out_len(int in_len) const { return (in_len + 2 * pad - kernel) / stride + 1; }

    Tensor forward(const Tensor& x);     // (N, in_ch, T) -> (N, out_ch, T_out)
    Tensor backward(const Tensor& d_y);  // -> d_x

    void collect_params(std::vector<Parameter*>& out);
    void collect_state(StateMap& out);

private:
    Tensor x_;
};

struct BatchNorm1d {
    Parameter gamma;  // (C)
    Parameter beta;   // (C)
    Tensor running_mean, running_var;
    double momentum = 0.1;
    double eps = 1e-5;
    bool train_mode = true;

    BatchNorm1d(const std::string& name, int channels);

    Tensor forward(const Tensor& x);     // (N, C, T)
    Tensor backward(const Tensor& d_y);  // train mode only

    void collect_params(std::vector<Parameter*>& out);
    void collect_state(StateMap& out);

private:
    std::string name_;
    Tensor x_, xhat_;
    std::vector<double> mean_, var_;
};

struct LayerNorm {
    Parameter gamma;  // (D)
    Parameter beta;   // (D)
    double eps = 1e-5;

    LayerNorm(const std::string& name, int dim);

    Tensor forward(const Tensor& x);     // (N, D), normalized per row
    Tensor backward(const Tensor& d_y);

    void collect_params(std::vector<Parameter*>& out);
    void collect_state(StateMap& out);

private:
    Tensor xhat_;
    std::vector<double> inv_std_;
};

struct LeakyRelu {
    double slope;

    explicit LeakyRelu(double slope = 0.2) : slope(slope) {}

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& d_y);

private:
    Tensor x_;
};

struct UpsampleNearest {
    int factor;

    explicit UpsampleNearest(int factor = 2) : factor(factor) {}

    Tensor forward(const Tensor& x);     // (N, C, T) -> (N, C, factor*T)
    Tensor backward(const Tensor& d_y);
};

// conv1d-batchnorm-leakyrelu(0.2)
struct ConvBlock {
    Conv1d conv;
    BatchNorm1d bn;
    LeakyRelu act;

    ConvBlock(const std::string& name, int in_ch, int out_ch, int kernel, int pad, int stride,
              Rng& rng);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& d_y);
    void set_train(bool train) { bn.train_mode = train; }

    void collect_params(std::vector<Parameter*>& out);
    void collect_state(StateMap& out);
};

// x + (conv1d-batchnorm-leakyrelu(0.2)-conv1d-batchnorm), shape preserving
struct ResidualBlock {
    Conv1d conv1;
    BatchNorm1d bn1;
    LeakyRelu act;
    Conv1d conv2;
    BatchNorm1d bn2;

    ResidualBlock(const std::string& name, int channels, int kernel, int pad, Rng& rng);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& d_y);
    void set_train(bool train) { bn1.train_mode = bn2.train_mode = train; }

    void collect_params(std::vector<Parameter*>& out);
    void collect_state(StateMap& out);
};

// Single unidirectional LSTM layer with explicit BPTT. Gate order i, f, g, o.
struct Lstm {
    Parameter w_ih;  // (4H, I)
    Parameter w_hh;  // (4H, H)
    Parameter b;     // (4H)
    int input_size, hidden_size;

    Lstm(const std::string& name, int input_size, int hidden_size, Rng& rng);

    // Whole-sequence forward; h0/c0 default to zeros when null.
    Tensor forward(const Tensor& x, const Tensor* h0 = nullptr, const Tensor* c0 = nullptr);

    // Incremental forward building the same caches (used by the sampled-
    // feedback decoder, which must see its own outputs step by step).
    void begin_sequence(int batch, const Tensor* h0 = nullptr, const Tensor* c0 = nullptr);
    Tensor step_forward(const Tensor& x_t);  // (N, I) -> (N, H)

    // BPTT over whatever the caches hold; optionally reports gradients at the
    // initial hidden/cell state.
    Tensor backward_sequence(const Tensor& d_out, Tensor* d_h0 = nullptr, Tensor* d_c0 = nullptr);

    Tensor final_h() const;
    Tensor final_c() const;
    int steps() const { return static_cast<int>(cache_.size()); }

    // Pure inference step; updates h and c in place, no caches touched.
    void infer_step(const Tensor& x_t, Tensor& h, Tensor& c) const;

    void collect_params(std::vector<Parameter*>& out);
    void collect_state(StateMap& out);

private:
    struct StepCache {
        Tensor x, h_prev, c_prev, i, f, g, o, c, tanh_c;
    };
    std::vector<StepCache> cache_;
    Tensor h_, c_;
    int batch_ = 0;

    void gates(const Tensor& x_t, const Tensor& h_prev, Tensor& i, Tensor& f, Tensor& g,
               Tensor& o) const;
};

// Forward and backward passes over time; exposes the concatenated final
// hidden states (width 2H).
struct BiLstm {
    Lstm fwd, bwd;

    BiLstm(const std::string& name, int input_size, int hidden_size, Rng& rng);

    Tensor encode(const Tensor& x);            // (N, T, I) -> (N, 2H)
    Tensor encode_backward(const Tensor& d_h); // (N, 2H) -> d_x

    void collect_params(std::vector<Parameter*>& out);
    void collect_state(StateMap& out);

private:
    int time_ = 0;
};

struct StackedLstm {
    std::vector<Lstm> layers;

    StackedLstm(const std::string& name, int input_size, int hidden_size, int n_layers, Rng& rng);

    Tensor forward(const Tensor& x);     // (N, T, I) -> (N, T, H)
    Tensor backward(const Tensor& d_out);

    // Inference state: one (h, c) pair per layer.
    std::vector<Tensor> make_state(int batch) const;  // 2*n_layers tensors, h0 c0 h1 c1 ...
    Tensor infer_step(const Tensor& x_t, std::vector<Tensor>& state) const;

    void collect_params(std::vector<Parameter*>& out);
    void collect_state(StateMap& out);
};

struct Embedding {
    Parameter table;  // (vocab, dim)

    Embedding(const std::string& name, int vocab, int dim, Rng& rng);

    // indices flattened row-major as (N, T) -> (N, T, dim)
    Tensor forward(const std::vector<int>& indices, int batch, int time);
    void backward(const Tensor& d_out);

    void collect_params(std::vector<Parameter*>& out);
    void collect_state(StateMap& out);

private:
    std::vector<int> indices_;
};

}  // namespace loopgen

#endif
