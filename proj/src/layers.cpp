#include "loopgen/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "loopgen/optim.hpp"

namespace loopgen {

namespace {

// C (M,N) += A (M,K) * B (K,N)
void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C (M,N) += A (M,K) * B^T, B is (N,K)
void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// C (M,N) += A^T * B, A is (K,M), B is (K,N)
void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int p = 0; p < k; ++p) {
        const double* arow = a + static_cast<std::size_t>(p) * m;
        const double* brow = b + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Tensor reshaped(const Tensor& t, std::vector<int> shape) {
    if (shape_numel(shape) != t.numel()) {
        throw std::invalid_argument("reshaped: element count mismatch " + t.shape_str());
    }
    Tensor out;
    out.shape = std::move(shape);
    out.data = t.data;
    return out;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(const std::string& name, int in, int out, Rng& rng)
    : w(name + ".w", he_init({out, in}, in, rng)), b(name + ".b", Tensor({out})) {}

Tensor Linear::forward(const Tensor& x) {
    if (x.ndim() != 2 || x.dim(1) != w.value.dim(1)) {
        throw std::invalid_argument("Linear::forward: bad input " + x.shape_str() + " for weight " +
                                    w.value.shape_str());
    }
    x_ = x;
    int n = x.dim(0), out = w.value.dim(0);
    Tensor y({n, out});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < out; ++j) y(i, j) = b.value(j);
    }
    gemm_nt(x.data.data(), w.value.data.data(), y.data.data(), n, x.dim(1), out);
    return y;
}

Tensor Linear::backward(const Tensor& d_y) {
    int n = x_.dim(0), in = w.value.dim(1), out = w.value.dim(0);
    if (d_y.ndim() != 2 || d_y.dim(0) != n || d_y.dim(1) != out) {
        throw std::invalid_argument("Linear::backward: bad gradient " + d_y.shape_str());
    }
    gemm_tn(d_y.data.data(), x_.data.data(), w.grad.data.data(), out, n, in);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < out; ++j) b.grad(j) += d_y(i, j);
    }
    Tensor d_x({n, in});
    gemm_nn(d_y.data.data(), w.value.data.data(), d_x.data.data(), n, out, in);
    return d_x;
}

void Linear::collect_params(std::vector<Parameter*>& out) {
    out.push_back(&w);
    out.push_back(&b);
}

void Linear::collect_state(StateMap& out) {
    out.push_back({w.name, &w.value});
    out.push_back({b.name, &b.value});
}

Tensor linear_apply(const Linear& lin, const Tensor& x) {
    int n = x.dim(0), in = lin.w.value.dim(1), out = lin.w.value.dim(0);
    if (x.ndim() != 2 || x.dim(1) != in) {
        throw std::invalid_argument("linear_apply: bad input " + x.shape_str());
    }
    Tensor y({n, out});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < out; ++j) y(i, j) = lin.b.value(j);
    }
    gemm_nt(x.data.data(), lin.w.value.data.data(), y.data.data(), n, in, out);
    return y;
}

// ---------------------------------------------------------------- Conv1d

Conv1d::Conv1d(const std::string& name, int in_ch, int out_ch, int kernel, int pad, int stride,
               Rng& rng)
    : w(name + ".w", he_init({out_ch, in_ch, kernel}, in_ch * kernel, rng)),
      b(name + ".b", Tensor({out_ch})),
      kernel(kernel),
      pad(pad),
      stride(stride) {}

Tensor Conv1d::forward(const Tensor& x) {
    if (x.ndim() != 3 || x.dim(1) != w.value.dim(1)) {
        throw std::invalid_argument("Conv1d::forward: bad input " + x.shape_str() + " for weight " +
                                    w.value.shape_str());
    }
    x_ = x;
    int n = x.dim(0), ci = x.dim(1), t_in = x.dim(2);
    int co = w.value.dim(0), t_out = out_len(t_in);
    if (t_out <= 0) throw std::invalid_argument("Conv1d::forward: input too short");
    Tensor y({n, co, t_out});
    for (int s = 0; s < n; ++s) {
        for (int oc = 0; oc < co; ++oc) {
            double* yrow = &y(s, oc, 0);
            for (int t = 0; t < t_out; ++t) yrow[t] = b.value(oc);
            for (int ic = 0; ic < ci; ++ic) {
                const double* xrow = &x(s, ic, 0);
                for (int j = 0; j < kernel; ++j) {
                    double wv = w.value((oc * ci + ic) * kernel + j);
                    if (wv == 0.0) continue;
                    for (int t = 0; t < t_out; ++t) {
                        int src = t * stride - pad + j;
                        if (src >= 0 && src < t_in) yrow[t] += wv * xrow[src];
                    }
                }
            }
        }
    }
    return y;
}

Tensor Conv1d::backward(const Tensor& d_y) {
    int n = x_.dim(0), ci = x_.dim(1), t_in = x_.dim(2);
    int co = w.value.dim(0), t_out = out_len(t_in);
    if (d_y.ndim() != 3 || d_y.dim(0) != n || d_y.dim(1) != co || d_y.dim(2) != t_out) {
        throw std::invalid_argument("Conv1d::backward: bad gradient " + d_y.shape_str());
    }
    Tensor d_x({n, ci, t_in});
    for (int s = 0; s < n; ++s) {
        for (int oc = 0; oc < co; ++oc) {
            const double* dyrow = &d_y(s, oc, 0);
            for (int t = 0; t < t_out; ++t) b.grad(oc) += dyrow[t];
            for (int ic = 0; ic < ci; ++ic) {
                const double* xrow = &x_(s, ic, 0);
                double* dxrow = &d_x(s, ic, 0);
                for (int j = 0; j < kernel; ++j) {
                    int wi = (oc * ci + ic) * kernel + j;
                    double wv = w.value(wi);
                    double wg = 0.0;
                    for (int t = 0; t < t_out; ++t) {
                        int src = t * stride - pad + j;
                        if (src < 0 || src >= t_in) continue;
                        wg += dyrow[t] * xrow[src];
                        dxrow[src] += wv * dyrow[t];
                    }
                    w.grad(wi) += wg;
                }
            }
        }
    }
    return d_x;
}

void Conv1d::collect_params(std::vector<Parameter*>& out) {
    out.push_back(&w);
    out.push_back(&b);
}

void Conv1d::collect_state(StateMap& out) {
    out.push_back({w.name, &w.value});
    out.push_back({b.name, &b.value});
}

// ---------------------------------------------------------------- BatchNorm1d

BatchNorm1d::BatchNorm1d(const std::string& name, int channels)
    : gamma(name + ".gamma", Tensor({channels}, 1.0)),
      beta(name + ".beta", Tensor({channels})),
      running_mean(Tensor::zeros({channels})),
      running_var(Tensor({channels}, 1.0)),
      name_(name) {}

Tensor BatchNorm1d::forward(const Tensor& x) {
    int c = gamma.value.dim(0);
    if (x.ndim() != 3 || x.dim(1) != c) {
        throw std::invalid_argument("BatchNorm1d::forward: bad input " + x.shape_str());
    }
    int n = x.dim(0), t = x.dim(2);
    double m_count = static_cast<double>(n) * t;
    Tensor y(x.shape);

    if (train_mode) {
        x_ = x;
        xhat_ = Tensor(x.shape);
        mean_.assign(c, 0.0);
        var_.assign(c, 0.0);
        for (int ch = 0; ch < c; ++ch) {
            double sum = 0.0;
            for (int s = 0; s < n; ++s) {
                const double* row = &x(s, ch, 0);
                for (int i = 0; i < t; ++i) sum += row[i];
            }
            double mu = sum / m_count;
            double sq = 0.0;
            for (int s = 0; s < n; ++s) {
                const double* row = &x(s, ch, 0);
                for (int i = 0; i < t; ++i) sq += (row[i] - mu) * (row[i] - mu);
            }
            double v = sq / m_count;
            mean_[ch] = mu;
            var_[ch] = v;
            running_mean(ch) = (1.0 - momentum) * running_mean(ch) + momentum * mu;
            running_var(ch) = (1.0 - momentum) * running_var(ch) + momentum * v;
            double inv = 1.0 / std::sqrt(v + eps);
            for (int s = 0; s < n; ++s) {
                const double* row = &x(s, ch, 0);
                double* hrow = &xhat_(s, ch, 0);
                double* yrow = &y(s, ch, 0);
                for (int i = 0; i < t; ++i) {
                    hrow[i] = (row[i] - mu) * inv;
                    yrow[i] = gamma.value(ch) * hrow[i] + beta.value(ch);
                }
            }
        }
    } else {
        for (int ch = 0; ch < c; ++ch) {
            double inv = 1.0 / std::sqrt(running_var(ch) + eps);
            for (int s = 0; s < n; ++s) {
                const double* row = &x(s, ch, 0);
                double* yrow = &y(s, ch, 0);
                for (int i = 0; i < t; ++i) {
                    yrow[i] = gamma.value(ch) * (row[i] - running_mean(ch)) * inv + beta.value(ch);
                }
            }
        }
    }
    return y;
}

Tensor BatchNorm1d::backward(const Tensor& d_y) {
    if (!train_mode) throw std::runtime_error("BatchNorm1d::backward called in eval mode");
    check_same_shape(d_y, x_, "BatchNorm1d::backward");
    int n = x_.dim(0), c = x_.dim(1), t = x_.dim(2);
    double m_count = static_cast<double>(n) * t;
    Tensor d_x(x_.shape);
    for (int ch = 0; ch < c; ++ch) {
        double inv = 1.0 / std::sqrt(var_[ch] + eps);
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int s = 0; s < n; ++s) {
            const double* dyrow = &d_y(s, ch, 0);
            const double* hrow = &xhat_(s, ch, 0);
            for (int i = 0; i < t; ++i) {
                sum_dy += dyrow[i];
                sum_dy_xhat += dyrow[i] * hrow[i];
            }
        }
        gamma.grad(ch) += sum_dy_xhat;
        beta.grad(ch) += sum_dy;
        double g = gamma.value(ch);
        for (int s = 0; s < n; ++s) {
            const double* dyrow = &d_y(s, ch, 0);
            const double* hrow = &xhat_(s, ch, 0);
            double* dxrow = &d_x(s, ch, 0);
            for (int i = 0; i < t; ++i) {
                dxrow[i] = g * inv / m_count *
                           (m_count * dyrow[i] - sum_dy - hrow[i] * sum_dy_xhat);
            }
        }
    }
    return d_x;
}

void BatchNorm1d::collect_params(std::vector<Parameter*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

void BatchNorm1d::collect_state(StateMap& out) {
    out.push_back({gamma.name, &gamma.value});
    out.push_back({beta.name, &beta.value});
    out.push_back({name_ + ".running_mean", &running_mean});
    out.push_back({name_ + ".running_var", &running_var});
}

// ---------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(const std::string& name, int dim)
    : gamma(name + ".gamma", Tensor({dim}, 1.0)), beta(name + ".beta", Tensor({dim})) {}

Tensor LayerNorm::forward(const Tensor& x) {
    int d = gamma.value.dim(0);
    if (x.ndim() != 2 || x.dim(1) != d) {
        throw std::invalid_argument("LayerNorm::forward: bad input " + x.shape_str());
    }
    int n = x.dim(0);
    xhat_ = Tensor(x.shape);
    inv_std_.assign(n, 0.0);
    Tensor y(x.shape);
    for (int s = 0; s < n; ++s) {
        double mu = 0.0;
        for (int i = 0; i < d; ++i) mu += x(s, i);
        mu /= d;
        double v = 0.0;
        for (int i = 0; i < d; ++i) v += (x(s, i) - mu) * (x(s, i) - mu);
        v /= d;
        double inv = 1.0 / std::sqrt(v + eps);
        inv_std_[s] = inv;
        for (int i = 0; i < d; ++i) {
            xhat_(s, i) = (x(s, i) - mu) * inv;
            y(s, i) = gamma.value(i) * xhat_(s, i) + beta.value(i);
        }
    }
    return y;
}

Tensor LayerNorm::backward(const Tensor& d_y) {
    check_same_shape(d_y, xhat_, "LayerNorm::backward");
    int n = xhat_.dim(0), d = xhat_.dim(1);
    Tensor d_x(xhat_.shape);
    for (int s = 0; s < n; ++s) {
        double sum_dh = 0.0, sum_dh_xhat = 0.0;
        for (int i = 0; i < d; ++i) {
            double dh = d_y(s, i) * gamma.value(i);
            sum_dh += dh;
            sum_dh_xhat += dh * xhat_(s, i);
            gamma.grad(i) += d_y(s, i) * xhat_(s, i);
            beta.grad(i) += d_y(s, i);
        }
        for (int i = 0; i < d; ++i) {
            double dh = d_y(s, i) * gamma.value(i);
            d_x(s, i) = inv_std_[s] * (dh - sum_dh / d - xhat_(s, i) * sum_dh_xhat / d);
        }
    }
    return d_x;
}

void LayerNorm::collect_params(std::vector<Parameter*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

void LayerNorm::collect_state(StateMap& out) {
    out.push_back({gamma.name, &gamma.value});
    out.push_back({beta.name, &beta.value});
}

// ---------------------------------------------------------------- activations

Tensor LeakyRelu::forward(const Tensor& x) {
    x_ = x;
    Tensor y(x.shape);
    for (int i = 0; i < x.numel(); ++i) {
        y.data[i] = x.data[i] > 0.0 ? x.data[i] : slope * x.data[i];
    }
    return y;
}

Tensor LeakyRelu::backward(const Tensor& d_y) {
    check_same_shape(d_y, x_, "LeakyRelu::backward");
    Tensor d_x(x_.shape);
    for (int i = 0; i < x_.numel(); ++i) {
        d_x.data[i] = x_.data[i] > 0.0 ? d_y.data[i] : slope * d_y.data[i];
    }
    return d_x;
}

Tensor UpsampleNearest::forward(const Tensor& x) {
    if (x.ndim() != 3) throw std::invalid_argument("UpsampleNearest: need (N, C, T) input");
    int n = x.dim(0), c = x.dim(1), t = x.dim(2);
    Tensor y({n, c, t * factor});
    for (int s = 0; s < n; ++s) {
        for (int ch = 0; ch < c; ++ch) {
            const double* row = &x(s, ch, 0);
            double* yrow = &y(s, ch, 0);
            for (int i = 0; i < t; ++i) {
                for (int j = 0; j < factor; ++j) yrow[i * factor + j] = row[i];
            }
        }
    }
    return y;
}

Tensor UpsampleNearest::backward(const Tensor& d_y) {
    if (d_y.ndim() != 3 || d_y.dim(2) % factor != 0) {
        throw std::invalid_argument("UpsampleNearest::backward: bad gradient " + d_y.shape_str());
    }
    int n = d_y.dim(0), c = d_y.dim(1), t = d_y.dim(2) / factor;
    Tensor d_x({n, c, t});
    for (int s = 0; s < n; ++s) {
        for (int ch = 0; ch < c; ++ch) {
            const double* dyrow = &d_y(s, ch, 0);
            double* dxrow = &d_x(s, ch, 0);
            for (int i = 0; i < t; ++i) {
                double acc = 0.0;
                for (int j = 0; j < factor; ++j) acc += dyrow[i * factor + j];
                dxrow[i] = acc;
            }
        }
    }
    return d_x;
}

// ---------------------------------------------------------------- blocks

ConvBlock::ConvBlock(const std::string& name, int in_ch, int out_ch, int kernel, int pad,
                     int stride, Rng& rng)
    : conv(name + ".conv", in_ch, out_ch, kernel, pad, stride, rng),
      bn(name + ".bn", out_ch),
      act(0.2) {}

Tensor ConvBlock::forward(const Tensor& x) { return act.forward(bn.forward(conv.forward(x))); }

Tensor ConvBlock::backward(const Tensor& d_y) {
    return conv.backward(bn.backward(act.backward(d_y)));
}

void ConvBlock::collect_params(std::vector<Parameter*>& out) {
    conv.collect_params(out);
    bn.collect_params(out);
}

void ConvBlock::collect_state(StateMap& out) {
    conv.collect_state(out);
    bn.collect_state(out);
}

ResidualBlock::ResidualBlock(const std::string& name, int channels, int kernel, int pad, Rng& rng)
    : conv1(name + ".conv1", channels, channels, kernel, pad, 1, rng),
      bn1(name + ".bn1", channels),
      act(0.2),
      conv2(name + ".conv2", channels, channels, kernel, pad, 1, rng),
      bn2(name + ".bn2", channels) {}

Tensor ResidualBlock::forward(const Tensor& x) {
    Tensor branch = bn2.forward(conv2.forward(act.forward(bn1.forward(conv1.forward(x)))));
    check_same_shape(branch, x, "ResidualBlock::forward");
    Tensor y = x;
    y.add_(branch);
    return y;
}

Tensor ResidualBlock::backward(const Tensor& d_y) {
    Tensor d_branch = conv1.backward(bn1.backward(act.backward(conv2.backward(bn2.backward(d_y)))));
    Tensor d_x = d_y;
    d_x.add_(d_branch);
    return d_x;
}

void ResidualBlock::collect_params(std::vector<Parameter*>& out) {
    conv1.collect_params(out);
    bn1.collect_params(out);
    conv2.collect_params(out);
    bn2.collect_params(out);
}

void ResidualBlock::collect_state(StateMap& out) {
    conv1.collect_state(out);
    bn1.collect_state(out);
    conv2.collect_state(out);
    bn2.collect_state(out);
}

// ---------------------------------------------------------------- Lstm

Lstm::Lstm(const std::string& name, int input_size, int hidden_size, Rng& rng)
    : w_ih(name + ".w_ih", he_init({4 * hidden_size, input_size}, input_size, rng)),
      w_hh(name + ".w_hh", he_init({4 * hidden_size, hidden_size}, hidden_size, rng)),
      b(name + ".b", Tensor({4 * hidden_size})),
      input_size(input_size),
      hidden_size(hidden_size) {
    // Start the forget gate open so early cell state survives long enough
    // for credit to flow across the sequence.
    for (int i = hidden_size; i < 2 * hidden_size; ++i) {
        b.value.data[i] = 1.0;
    }
}

void Lstm::begin_sequence(int batch, const Tensor* h0, const Tensor* c0) {
    batch_ = batch;
    cache_.clear();
    h_ = h0 ? *h0 : Tensor::zeros({batch, hidden_size});
    c_ = c0 ? *c0 : Tensor::zeros({batch, hidden_size});
    if (h_.ndim() != 2 || h_.dim(0) != batch || h_.dim(1) != hidden_size) {
        throw std::invalid_argument("Lstm: bad initial hidden shape " + h_.shape_str());
    }
    check_same_shape(h_, c_, "Lstm::begin_sequence");
}

Tensor Lstm::step_forward(const Tensor& x_t) {
    if (x_t.ndim() != 2 || x_t.dim(0) != batch_ || x_t.dim(1) != input_size) {
        throw std::invalid_argument("Lstm::step_forward: bad input " + x_t.shape_str());
    }
    StepCache sc;
    sc.x = x_t;
    sc.h_prev = h_;
    sc.c_prev = c_;

    int n = batch_, h = hidden_size;
    Tensor a({n, 4 * h});
    for (int s = 0; s < n; ++s) {
        for (int j = 0; j < 4 * h; ++j) a(s, j) = b.value(j);
    }
    gemm_nt(x_t.data.data(), w_ih.value.data.data(), a.data.data(), n, input_size, 4 * h);
    gemm_nt(h_.data.data(), w_hh.value.data.data(), a.data.data(), n, h, 4 * h);

    sc.i = Tensor({n, h});
    sc.f = Tensor({n, h});
    sc.g = Tensor({n, h});
    sc.o = Tensor({n, h});
    sc.c = Tensor({n, h});
    sc.tanh_c = Tensor({n, h});
    Tensor h_new({n, h});
    for (int s = 0; s < n; ++s) {
        for (int j = 0; j < h; ++j) {
            double iv = sigmoid(a(s, j));
            double fv = sigmoid(a(s, h + j));
            double gv = std::tanh(a(s, 2 * h + j));
            double ov = sigmoid(a(s, 3 * h + j));
            double cv = fv * sc.c_prev(s, j) + iv * gv;
            double tc = std::tanh(cv);
            sc.i(s, j) = iv;
            sc.f(s, j) = fv;
            sc.g(s, j) = gv;
            sc.o(s, j) = ov;
            sc.c(s, j) = cv;
            sc.tanh_c(s, j) = tc;
            h_new(s, j) = ov * tc;
        }
    }
    h_ = h_new;
    c_ = sc.c;
    cache_.push_back(std::move(sc));
    return h_;
}

Tensor Lstm::forward(const Tensor& x, const Tensor* h0, const Tensor* c0) {
    if (x.ndim() != 3 || x.dim(2) != input_size) {
        throw std::invalid_argument("Lstm::forward: bad input " + x.shape_str());
    }
    int n = x.dim(0), t_len = x.dim(1);
    begin_sequence(n, h0, c0);
    Tensor out({n, t_len, hidden_size});
    Tensor x_t({n, input_size});
    for (int t = 0; t < t_len; ++t) {
        for (int s = 0; s < n; ++s) {
            for (int i = 0; i < input_size; ++i) x_t(s, i) = x(s, t, i);
        }
        Tensor h = step_forward(x_t);
        for (int s = 0; s < n; ++s) {
            for (int j = 0; j < hidden_size; ++j) out(s, t, j) = h(s, j);
        }
    }
    return out;
}

Tensor Lstm::backward_sequence(const Tensor& d_out, Tensor* d_h0, Tensor* d_c0) {
    int t_len = steps();
    int n = batch_, h = hidden_size;
    if (d_out.ndim() != 3 || d_out.dim(0) != n || d_out.dim(1) != t_len || d_out.dim(2) != h) {
        throw std::invalid_argument("Lstm::backward_sequence: bad gradient " + d_out.shape_str());
    }
    Tensor d_x({n, t_len, input_size});
    Tensor dh_next = Tensor::zeros({n, h});
    Tensor dc_next = Tensor::zeros({n, h});
    Tensor da({n, 4 * h});
    Tensor dx_t({n, input_size});

    for (int t = t_len - 1; t >= 0; --t) {
        const StepCache& sc = cache_[t];
        for (int s = 0; s < n; ++s) {
            for (int j = 0; j < h; ++j) {
                double dh = d_out(s, t, j) + dh_next(s, j);
                double dc = dc_next(s, j) +
                            dh * sc.o(s, j) * (1.0 - sc.tanh_c(s, j) * sc.tanh_c(s, j));
                double di = dc * sc.g(s, j);
                double df = dc * sc.c_prev(s, j);
                double dg = dc * sc.i(s, j);
                double dov = dh * sc.tanh_c(s, j);
                da(s, j) = di * sc.i(s, j) * (1.0 - sc.i(s, j));
                da(s, h + j) = df * sc.f(s, j) * (1.0 - sc.f(s, j));
                da(s, 2 * h + j) = dg * (1.0 - sc.g(s, j) * sc.g(s, j));
                da(s, 3 * h + j) = dov * sc.o(s, j) * (1.0 - sc.o(s, j));
                dc_next(s, j) = dc * sc.f(s, j);
            }
        }
        gemm_tn(da.data.data(), sc.x.data.data(), w_ih.grad.data.data(), 4 * h, n, input_size);
        gemm_tn(da.data.data(), sc.h_prev.data.data(), w_hh.grad.data.data(), 4 * h, n, h);
        for (int s = 0; s < n; ++s) {
            for (int j = 0; j < 4 * h; ++j) b.grad(j) += da(s, j);
        }
        dx_t.fill(0.0);
        gemm_nn(da.data.data(), w_ih.value.data.data(), dx_t.data.data(), n, 4 * h, input_size);
        for (int s = 0; s < n; ++s) {
            for (int i = 0; i < input_size; ++i) d_x(s, t, i) = dx_t(s, i);
        }
        dh_next.fill(0.0);
        gemm_nn(da.data.data(), w_hh.value.data.data(), dh_next.data.data(), n, 4 * h, h);
    }
    if (d_h0) *d_h0 = dh_next;
    if (d_c0) *d_c0 = dc_next;
    return d_x;
}

Tensor Lstm::final_h() const { return h_; }
Tensor Lstm::final_c() const { return c_; }

void Lstm::infer_step(const Tensor& x_t, Tensor& h, Tensor& c) const {
    int n = x_t.dim(0), hs = hidden_size;
    Tensor a({n, 4 * hs});
    for (int s = 0; s < n; ++s) {
        for (int j = 0; j < 4 * hs; ++j) a(s, j) = b.value(j);
    }
    gemm_nt(x_t.data.data(), w_ih.value.data.data(), a.data.data(), n, input_size, 4 * hs);
    gemm_nt(h.data.data(), w_hh.value.data.data(), a.data.data(), n, hs, 4 * hs);
    for (int s = 0; s < n; ++s) {
        for (int j = 0; j < hs; ++j) {
            double iv = sigmoid(a(s, j));
            double fv = sigmoid(a(s, hs + j));
            double gv = std::tanh(a(s, 2 * hs + j));
            double ov = sigmoid(a(s, 3 * hs + j));
            c(s, j) = fv * c(s, j) + iv * gv;
            h(s, j) = ov * std::tanh(c(s, j));
        }
    }
}

void Lstm::collect_params(std::vector<Parameter*>& out) {
    out.push_back(&w_ih);
    out.push_back(&w_hh);
    out.push_back(&b);
}

void Lstm::collect_state(StateMap& out) {
    out.push_back({w_ih.name, &w_ih.value});
    out.push_back({w_hh.name, &w_hh.value});
    out.push_back({b.name, &b.value});
}

// ---------------------------------------------------------------- BiLstm

namespace {

Tensor reverse_time(const Tensor& x) {
    int n = x.dim(0), t_len = x.dim(1), d = x.dim(2);
    Tensor out(x.shape);
    for (int s = 0; s < n; ++s) {
        for (int t = 0; t < t_len; ++t) {
            for (int i = 0; i < d; ++i) out(s, t, i) = x(s, t_len - 1 - t, i);
        }
    }
    return out;
}

}  // namespace

BiLstm::BiLstm(const std::string& name, int input_size, int hidden_size, Rng& rng)
    : fwd(name + ".fwd", input_size, hidden_size, rng),
      bwd(name + ".bwd", input_size, hidden_size, rng) {}

Tensor BiLstm::encode(const Tensor& x) {
    time_ = x.dim(1);
    fwd.forward(x);
    bwd.forward(reverse_time(x));
    Tensor hf = fwd.final_h();
    Tensor hb = bwd.final_h();
    int n = hf.dim(0), h = hf.dim(1);
    Tensor out({n, 2 * h});
    for (int s = 0; s < n; ++s) {
        for (int j = 0; j < h; ++j) {
            out(s, j) = hf(s, j);
            out(s, h + j) = hb(s, j);
        }
    }
    return out;
}

Tensor BiLstm::encode_backward(const Tensor& d_h) {
    int h = fwd.hidden_size;
    int n = d_h.dim(0);
    if (d_h.ndim() != 2 || d_h.dim(1) != 2 * h) {
        throw std::invalid_argument("BiLstm::encode_backward: bad gradient " + d_h.shape_str());
    }
    Tensor d_out_f = Tensor::zeros({n, time_, h});
    Tensor d_out_b = Tensor::zeros({n, time_, h});
    for (int s = 0; s < n; ++s) {
        for (int j = 0; j < h; ++j) {
            d_out_f(s, time_ - 1, j) = d_h(s, j);
            d_out_b(s, time_ - 1, j) = d_h(s, h + j);
        }
    }
    Tensor d_x = fwd.backward_sequence(d_out_f);
    Tensor d_x_rev = bwd.backward_sequence(d_out_b);
    d_x.add_(reverse_time(d_x_rev));
    return d_x;
}

void BiLstm::collect_params(std::vector<Parameter*>& out) {
    fwd.collect_params(out);
    bwd.collect_params(out);
}

void BiLstm::collect_state(StateMap& out) {
    fwd.collect_state(out);
    bwd.collect_state(out);
}

// ---------------------------------------------------------------- StackedLstm

StackedLstm::StackedLstm(const std::string& name, int input_size, int hidden_size, int n_layers,
                         Rng& rng) {
    if (n_layers < 1) throw std::invalid_argument("StackedLstm: need at least one layer");
    for (int i = 0; i < n_layers; ++i) {
        layers.emplace_back(name + ".l" + std::to_string(i), i == 0 ? input_size : hidden_size,
                            hidden_size, rng);
    }
}

Tensor StackedLstm::forward(const Tensor& x) {
    Tensor h = x;
    for (Lstm& layer : layers) h = layer.forward(h);
    return h;
}

Tensor StackedLstm::backward(const Tensor& d_out) {
    Tensor d = d_out;
    for (std::size_t i = layers.size(); i-- > 0;) {
        d = layers[i].backward_sequence(d);
    }
    return d;
}

std::vector<Tensor> StackedLstm::make_state(int batch) const {
    std::vector<Tensor> state;
    for (const Lstm& layer : layers) {
        state.push_back(Tensor::zeros({batch, layer.hidden_size}));
        state.push_back(Tensor::zeros({batch, layer.hidden_size}));
    }
    return state;
}

Tensor StackedLstm::infer_step(const Tensor& x_t, std::vector<Tensor>& state) const {
    Tensor h = x_t;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        layers[i].infer_step(h, state[2 * i], state[2 * i + 1]);
        h = state[2 * i];
    }
    return h;
}

void StackedLstm::collect_params(std::vector<Parameter*>& out) {
    for (Lstm& layer : layers) layer.collect_params(out);
}

void StackedLstm::collect_state(StateMap& out) {
    for (Lstm& layer : layers) layer.collect_state(out);
}

// ---------------------------------------------------------------- Embedding

Embedding::Embedding(const std::string& name, int vocab, int dim, Rng& rng)
    : table(name + ".table", he_init({vocab, dim}, dim, rng)) {}

Tensor Embedding::forward(const std::vector<int>& indices, int batch, int time) {
    if (static_cast<int>(indices.size()) != batch * time) {
        throw std::invalid_argument("Embedding::forward: index count mismatch");
    }
    int vocab = table.value.dim(0), dim = table.value.dim(1);
    indices_ = indices;
    Tensor out({batch, time, dim});
    for (int s = 0; s < batch; ++s) {
        for (int t = 0; t < time; ++t) {
            int idx = indices[s * time + t];
            if (idx < 0 || idx >= vocab) {
                throw std::invalid_argument("Embedding::forward: index out of range");
            }
            for (int i = 0; i < dim; ++i) out(s, t, i) = table.value(idx, i);
        }
    }
    return out;
}

void Embedding::backward(const Tensor& d_out) {
    int dim = table.value.dim(1);
    int batch = d_out.dim(0), time = d_out.dim(1);
    if (static_cast<int>(indices_.size()) != batch * time || d_out.dim(2) != dim) {
        throw std::invalid_argument("Embedding::backward: bad gradient " + d_out.shape_str());
    }
    for (int s = 0; s < batch; ++s) {
        for (int t = 0; t < time; ++t) {
            int idx = indices_[s * time + t];
            for (int i = 0; i < dim; ++i) table.grad(idx, i) += d_out(s, t, i);
        }
    }
}

void Embedding::collect_params(std::vector<Parameter*>& out) { out.push_back(&table); }

void Embedding::collect_state(StateMap& out) { out.push_back({table.name, &table.value}); }

}  // namespace loopgen
