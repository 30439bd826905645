#include "loopgen/vae.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "loopgen/losses.hpp"

namespace loopgen {

VaeKind vae_kind_from_string(const std::string& name) {
    if (name == "ar-lstm-vae") return VaeKind::ar_lstm;
    if (name == "nonar-lstm-vae") return VaeKind::nonar_lstm;
    if (name == "cnn-vae") return VaeKind::cnn;
    throw std::invalid_argument("unknown VAE kind: " + name);
}

const char* vae_kind_name(VaeKind kind) {
    switch (kind) {
        case VaeKind::ar_lstm: return "ar-lstm-vae";
        case VaeKind::nonar_lstm: return "nonar-lstm-vae";
        case VaeKind::cnn: return "cnn-vae";
    }
    return "?";
}

Tensor reparameterize(const GaussianLatent& lat, const Tensor& noise) {
    check_same_shape(lat.mu, noise, "reparameterize");
    check_same_shape(lat.mu, lat.log_var, "reparameterize");
    Tensor z(lat.mu.shape);
    for (int i = 0; i < z.numel(); ++i) {
        z.data[i] = lat.mu.data[i] + std::exp(0.5 * lat.log_var.data[i]) * noise.data[i];
    }
    return z;
}

double kl_gaussian(const GaussianLatent& lat) {
    check_same_shape(lat.mu, lat.log_var, "kl_gaussian");
    int n = lat.mu.dim(0);
    double total = 0.0;
    for (int i = 0; i < lat.mu.numel(); ++i) {
        double mu = lat.mu.data[i];
        double lv = lat.log_var.data[i];
        total += 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv);
    }
    return total / n;
}

void kl_gaussian_backward(const GaussianLatent& lat, double beta, Tensor& d_mu,
                          Tensor& d_log_var) {
    int n = lat.mu.dim(0);
    for (int i = 0; i < lat.mu.numel(); ++i) {
        d_mu.data[i] += beta * lat.mu.data[i] / n;
        d_log_var.data[i] += beta * 0.5 * (std::exp(lat.log_var.data[i]) - 1.0) / n;
    }
}

double BetaSchedule::value(long epoch, long total_epochs) const {
    if (max_beta == 0.0) return 0.0;
    double ramp = ramp_fraction * static_cast<double>(total_epochs);
    if (ramp <= 0.0) return max_beta;
    double frac = static_cast<double>(epoch) / ramp;
    return max_beta * std::min(1.0, frac);
}

// ---------------------------------------------------------------- ArLstmVae

ArLstmVae::ArLstmVae(Rng& rng, int time, int rows, int enc_hidden, int latent)
    : time_(time),
      rows_(rows),
      latent_(latent),
      encoder("enc", rows, enc_hidden, rng),
      mu_head("mu", 2 * enc_hidden, latent, rng),
      mu_norm("mu_norm", latent),
      lv_head("lv", 2 * enc_hidden, latent, rng),
      decoder("dec", rows + latent, latent, rng),
      out_head("out", latent, rows, rng) {}

GaussianLatent ArLstmVae::encode_impl(const Tensor& x) {
    Tensor hcat = encoder.encode(x);
    GaussianLatent lat;
    lat.mu = mu_norm.forward(mu_head.forward(hcat));
    lat.log_var = lv_head.forward(hcat);
    return lat;
}

void ArLstmVae::encoder_backward(const GaussianLatent&, const Tensor& d_mu, const Tensor& d_lv) {
    Tensor d_hcat = mu_head.backward(mu_norm.backward(d_mu));
    d_hcat.add_(lv_head.backward(d_lv));
    encoder.encode_backward(d_hcat);
}

VaeLossReport ArLstmVae::train_step(const Tensor& x, double beta, double teacher_prob,
                                    const Tensor& noise, Rng& rng) {
    if (x.ndim() != 3 || x.dim(1) != time_ || x.dim(2) != rows_) {
        throw std::invalid_argument("ArLstmVae::train_step: bad input " + x.shape_str());
    }
    int n = x.dim(0);
    GaussianLatent lat = encode_impl(x);
    Tensor z = reparameterize(lat, noise);

    decoder.begin_sequence(n, &z, &z);
    Tensor hs({n, time_, latent_});
    Tensor x_t = Tensor::zeros({n, rows_ + latent_});
    Tensor prev_binary({n, rows_});  // model output at the previous step, thresholded
    for (int t = 0; t < time_; ++t) {
        if (t > 0) {
            for (int s = 0; s < n; ++s) {
                bool truth = teacher_prob >= 1.0 || rng.bernoulli(teacher_prob);
                for (int r = 0; r < rows_; ++r) {
                    x_t(s, r) = truth ? x(s, t - 1, r) : prev_binary(s, r);
                }
                for (int d = 0; d < latent_; ++d) x_t(s, rows_ + d) = z(s, d);
            }
        }
        Tensor h = decoder.step_forward(x_t);
        for (int s = 0; s < n; ++s) {
            for (int j = 0; j < latent_; ++j) hs(s, t, j) = h(s, j);
        }
        if (teacher_prob < 1.0 && t + 1 < time_) {
            Tensor logit_t = linear_apply(out_head, h);
            for (int i = 0; i < logit_t.numel(); ++i) {
                prev_binary.data[i] = logit_t.data[i] >= 0.0 ? 1.0 : 0.0;
            }
        }
    }

    Tensor logits_flat = out_head.forward(reshaped(hs, {n * time_, latent_}));
    Tensor logits = reshaped(logits_flat, {n, time_, rows_});
    LossResult recon = bce_with_logits(logits, x);

    VaeLossReport report;
    report.recon = recon.loss;
    report.kl = kl_gaussian(lat);
    report.beta = beta;

    Tensor d_hs_flat = out_head.backward(reshaped(recon.d_logits, {n * time_, rows_}));
    Tensor d_h0, d_c0;
    Tensor d_inputs =
        decoder.backward_sequence(reshaped(d_hs_flat, {n, time_, latent_}), &d_h0, &d_c0);

    // z enters as decoder initial state and concatenated into steps 1..T-1;
    // the fed-back outputs are constants.
    Tensor d_z = d_h0;
    d_z.add_(d_c0);
    for (int s = 0; s < n; ++s) {
        for (int t = 1; t < time_; ++t) {
            for (int d = 0; d < latent_; ++d) d_z(s, d) += d_inputs(s, t, rows_ + d);
        }
    }

    Tensor d_mu = d_z;
    Tensor d_lv({n, latent_});
    for (int i = 0; i < d_lv.numel(); ++i) {
        d_lv.data[i] = d_z.data[i] * noise.data[i] * 0.5 * std::exp(0.5 * lat.log_var.data[i]);
    }
    kl_gaussian_backward(lat, beta, d_mu, d_lv);
    encoder_backward(lat, d_mu, d_lv);
    return report;
}

GaussianLatent ArLstmVae::encode_eval(const Tensor& x) { return encode_impl(x); }

Tensor ArLstmVae::decode_probs(const Tensor& z) {
    if (z.ndim() != 2 || z.dim(1) != latent_) {
        throw std::invalid_argument("ArLstmVae::decode_probs: bad latent " + z.shape_str());
    }
    int n = z.dim(0);
    Tensor h = z, c = z;
    Tensor probs({n, time_, rows_});
    Tensor x_t = Tensor::zeros({n, rows_ + latent_});
    Tensor prev_binary({n, rows_});
    for (int t = 0; t < time_; ++t) {
        if (t > 0) {
            for (int s = 0; s < n; ++s) {
                for (int r = 0; r < rows_; ++r) x_t(s, r) = prev_binary(s, r);
                for (int d = 0; d < latent_; ++d) x_t(s, rows_ + d) = z(s, d);
            }
        }
        decoder.infer_step(x_t, h, c);
        Tensor logit_t = linear_apply(out_head, h);
        for (int s = 0; s < n; ++s) {
            for (int r = 0; r < rows_; ++r) {
                probs(s, t, r) = sigmoid_scalar(logit_t(s, r));
                prev_binary(s, r) = logit_t(s, r) >= 0.0 ? 1.0 : 0.0;
            }
        }
    }
    return probs;
}

void ArLstmVae::collect_params(std::vector<Parameter*>& out) {
    encoder.collect_params(out);
    mu_head.collect_params(out);
    mu_norm.collect_params(out);
    lv_head.collect_params(out);
    decoder.collect_params(out);
    out_head.collect_params(out);
}

void ArLstmVae::collect_state(StateMap& out) {
    encoder.collect_state(out);
    mu_head.collect_state(out);
    mu_norm.collect_state(out);
    lv_head.collect_state(out);
    decoder.collect_state(out);
    out_head.collect_state(out);
}

// ---------------------------------------------------------------- NonArLstmVae

NonArLstmVae::NonArLstmVae(Rng& rng, int time, int rows, int enc_hidden, int latent,
                           int dec_hidden)
    : time_(time),
      rows_(rows),
      latent_(latent),
      encoder("enc", rows, enc_hidden, rng),
      mu_head("mu", 2 * enc_hidden, latent, rng),
      mu_norm("mu_norm", latent),
      lv_head("lv", 2 * enc_hidden, latent, rng),
      decoder("dec", latent, dec_hidden, rng),
      out_head("out", dec_hidden, rows, rng) {}

GaussianLatent NonArLstmVae::encode_impl(const Tensor& x) {
    Tensor hcat = encoder.encode(x);
    GaussianLatent lat;
    lat.mu = mu_norm.forward(mu_head.forward(hcat));
    lat.log_var = lv_head.forward(hcat);
    return lat;
}

void NonArLstmVae::encoder_backward(const GaussianLatent&, const Tensor& d_mu,
                                    const Tensor& d_lv) {
    Tensor d_hcat = mu_head.backward(mu_norm.backward(d_mu));
    d_hcat.add_(lv_head.backward(d_lv));
    encoder.encode_backward(d_hcat);
}

Tensor NonArLstmVae::decode_logits(const Tensor& z) {
    int n = z.dim(0);
    Tensor rep({n, time_, latent_});
    for (int s = 0; s < n; ++s) {
        for (int t = 0; t < time_; ++t) {
            for (int d = 0; d < latent_; ++d) rep(s, t, d) = z(s, d);
        }
    }
    int dec_hidden = decoder.hidden_size;
    Tensor out = decoder.forward(rep);
    Tensor logits_flat = out_head.forward(reshaped(out, {n * time_, dec_hidden}));
    return reshaped(logits_flat, {n, time_, rows_});
}

VaeLossReport NonArLstmVae::train_step(const Tensor& x, double beta, double /*teacher_prob*/,
                                       const Tensor& noise, Rng& /*rng*/) {
    if (x.ndim() != 3 || x.dim(1) != time_ || x.dim(2) != rows_) {
        throw std::invalid_argument("NonArLstmVae::train_step: bad input " + x.shape_str());
    }
    int n = x.dim(0);
    GaussianLatent lat = encode_impl(x);
    Tensor z = reparameterize(lat, noise);
    Tensor logits = decode_logits(z);
    LossResult recon = bce_with_logits(logits, x);

    VaeLossReport report;
    report.recon = recon.loss;
    report.kl = kl_gaussian(lat);
    report.beta = beta;

    int dec_hidden = decoder.hidden_size;
    Tensor d_out = out_head.backward(reshaped(recon.d_logits, {n * time_, rows_}));
    Tensor d_rep = decoder.backward_sequence(reshaped(d_out, {n, time_, dec_hidden}));
    Tensor d_z = Tensor::zeros({n, latent_});
    for (int s = 0; s < n; ++s) {
        for (int t = 0; t < time_; ++t) {
            for (int d = 0; d < latent_; ++d) d_z(s, d) += d_rep(s, t, d);
        }
    }

    Tensor d_mu = d_z;
    Tensor d_lv({n, latent_});
    for (int i = 0; i < d_lv.numel(); ++i) {
        d_lv.data[i] = d_z.data[i] * noise.data[i] * 0.5 * std::exp(0.5 * lat.log_var.data[i]);
    }
    kl_gaussian_backward(lat, beta, d_mu, d_lv);
    encoder_backward(lat, d_mu, d_lv);
    return report;
}

GaussianLatent NonArLstmVae::encode_eval(const Tensor& x) { return encode_impl(x); }

Tensor NonArLstmVae::decode_probs(const Tensor& z) {
    if (z.ndim() != 2 || z.dim(1) != latent_) {
        throw std::invalid_argument("NonArLstmVae::decode_probs: bad latent " + z.shape_str());
    }
    return sigmoid(decode_logits(z));
}

void NonArLstmVae::collect_params(std::vector<Parameter*>& out) {
    encoder.collect_params(out);
    mu_head.collect_params(out);
    mu_norm.collect_params(out);
    lv_head.collect_params(out);
    decoder.collect_params(out);
    out_head.collect_params(out);
}

void NonArLstmVae::collect_state(StateMap& out) {
    encoder.collect_state(out);
    mu_head.collect_state(out);
    mu_norm.collect_state(out);
    lv_head.collect_state(out);
    decoder.collect_state(out);
    out_head.collect_state(out);
}

// ---------------------------------------------------------------- CnnVae

CnnVae::CnnVae(Rng& rng, int time, int rows, int channels, int latent)
    : time_(time),
      rows_(rows),
      channels_(channels),
      latent_(latent),
      e0("e0", rows, channels, 3, 1, 1, rng),
      e1("e1", channels, channels, 3, 1, 2, rng),
      r1("r1", channels, 3, 1, rng),
      e2("e2", channels, channels, 3, 1, 2, rng),
      r2("r2", channels, 3, 1, rng),
      mu_head("mu", channels * (time / 4), latent, rng),
      mu_norm("mu_norm", latent),
      lv_head("lv", channels * (time / 4), latent, rng),
      dec_in("dec_in", latent, channels * (time / 8), rng),
      d1("d1", channels, 3, 1, rng),
      d2("d2", channels, 3, 1, rng),
      up(2),
      out_conv("out", channels, rows, 7, 3, 1, rng) {
    if (time % 8 != 0) throw std::invalid_argument("CnnVae: time steps must be divisible by 8");
}

void CnnVae::set_train(bool train) {
    e0.set_train(train);
    e1.set_train(train);
    r1.set_train(train);
    e2.set_train(train);
    r2.set_train(train);
    d1.set_train(train);
    d2.set_train(train);
}

GaussianLatent CnnVae::encode_impl(const Tensor& x) {
    Tensor h = r2.forward(e2.forward(r1.forward(e1.forward(e0.forward(transpose_12(x))))));
    int n = x.dim(0);
    Tensor flat = reshaped(h, {n, channels_ * (time_ / 4)});
    GaussianLatent lat;
    lat.mu = mu_norm.forward(mu_head.forward(flat));
    lat.log_var = lv_head.forward(flat);
    return lat;
}

void CnnVae::encoder_backward(const GaussianLatent&, const Tensor& d_mu, const Tensor& d_lv) {
    Tensor d_flat = mu_head.backward(mu_norm.backward(d_mu));
    d_flat.add_(lv_head.backward(d_lv));
    int n = d_flat.dim(0);
    Tensor d_h = reshaped(d_flat, {n, channels_, time_ / 4});
    e0.backward(e1.backward(r1.backward(e2.backward(r2.backward(d_h)))));
}

Tensor CnnVae::decode_logits(const Tensor& z) {
    int n = z.dim(0);
    Tensor g = reshaped(dec_in.forward(z), {n, channels_, time_ / 8});
    g = d1.forward(up.forward(g));
    g = d2.forward(up.forward(g));
    return out_conv.forward(up.forward(g));  // (N, rows, T)
}

Tensor CnnVae::decode_backward(const Tensor& d_logits_c) {
    Tensor d = up.backward(out_conv.backward(d_logits_c));
    d = up.backward(d2.backward(d));
    d = up.backward(d1.backward(d));
    int n = d.dim(0);
    return dec_in.backward(reshaped(d, {n, channels_ * (time_ / 8)}));
}

VaeLossReport CnnVae::train_step(const Tensor& x, double beta, double /*teacher_prob*/,
                                 const Tensor& noise, Rng& /*rng*/) {
    if (x.ndim() != 3 || x.dim(1) != time_ || x.dim(2) != rows_) {
        throw std::invalid_argument("CnnVae::train_step: bad input " + x.shape_str());
    }
    int n = x.dim(0);
    set_train(true);
    GaussianLatent lat = encode_impl(x);
    Tensor z = reparameterize(lat, noise);
    Tensor logits = transpose_12(decode_logits(z));  // (N, T, R)
    LossResult recon = bce_with_logits(logits, x);

    VaeLossReport report;
    report.recon = recon.loss;
    report.kl = kl_gaussian(lat);
    report.beta = beta;

    Tensor d_z = decode_backward(transpose_12(recon.d_logits));
    Tensor d_mu = d_z;
    Tensor d_lv({n, latent_});
    for (int i = 0; i < d_lv.numel(); ++i) {
        d_lv.data[i] = d_z.data[i] * noise.data[i] * 0.5 * std::exp(0.5 * lat.log_var.data[i]);
    }
    kl_gaussian_backward(lat, beta, d_mu, d_lv);
    encoder_backward(lat, d_mu, d_lv);
    return report;
}

GaussianLatent CnnVae::encode_eval(const Tensor& x) {
    set_train(false);
    return encode_impl(x);
}

Tensor CnnVae::decode_probs(const Tensor& z) {
    if (z.ndim() != 2 || z.dim(1) != latent_) {
        throw std::invalid_argument("CnnVae::decode_probs: bad latent " + z.shape_str());
    }
    set_train(false);
    return sigmoid(transpose_12(decode_logits(z)));
}

void CnnVae::collect_params(std::vector<Parameter*>& out) {
    e0.collect_params(out);
    e1.collect_params(out);
    r1.collect_params(out);
    e2.collect_params(out);
    r2.collect_params(out);
    mu_head.collect_params(out);
    mu_norm.collect_params(out);
    lv_head.collect_params(out);
    dec_in.collect_params(out);
    d1.collect_params(out);
    d2.collect_params(out);
    out_conv.collect_params(out);
}

void CnnVae::collect_state(StateMap& out) {
    e0.collect_state(out);
    e1.collect_state(out);
    r1.collect_state(out);
    e2.collect_state(out);
    r2.collect_state(out);
    mu_head.collect_state(out);
    mu_norm.collect_state(out);
    lv_head.collect_state(out);
    dec_in.collect_state(out);
    d1.collect_state(out);
    d2.collect_state(out);
    out_conv.collect_state(out);
}

// ---------------------------------------------------------------- drivers

std::unique_ptr<ContinuousVae> make_vae(VaeKind kind, Rng& rng) {
    switch (kind) {
        case VaeKind::ar_lstm: return std::make_unique<ArLstmVae>(rng);
        case VaeKind::nonar_lstm: return std::make_unique<NonArLstmVae>(rng);
        case VaeKind::cnn: return std::make_unique<CnnVae>(rng);
    }
    throw std::invalid_argument("make_vae: bad kind");
}

VaeLossReport vae_train_epoch(ContinuousVae& model, AdamW& opt, std::span<const Pianoroll> data,
                              long epoch, const VaeTrainConfig& cfg, Rng& rng) {
    if (data.empty()) throw std::invalid_argument("vae_train_epoch: empty dataset");
    int n = static_cast<int>(data.size());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(i + 1)]);

    double lr = cosine_lr(epoch, std::max<long>(1, cfg.epochs - 1), cfg.lr_max, cfg.lr_min);
    double beta = cfg.beta.value(epoch, cfg.epochs);
    double teacher = inverse_sigmoid_schedule(epoch, cfg.sampling_rate);

    VaeLossReport mean;
    mean.beta = beta;
    int done = 0;
    while (done < n) {
        int bs = std::min(cfg.batch_size, n - done);
        std::vector<Pianoroll> batch(bs);
        for (int i = 0; i < bs; ++i) batch[i] = data[order[done + i]];
        Tensor x = rolls_to_tensor(batch);
        Tensor noise({bs, model.latent_dim()});
        for (double& v : noise.data) v = rng.normal();

        opt.zero_grad();
        VaeLossReport rep = model.train_step(x, beta, teacher, noise, rng);
        if (!std::isfinite(rep.recon) || !std::isfinite(rep.kl)) {
            throw std::runtime_error("vae_train_epoch: non-finite loss at epoch " +
                                     std::to_string(epoch) + " (recon " +
                                     std::to_string(rep.recon) + ", kl " + std::to_string(rep.kl) +
                                     ")");
        }
        opt.step(lr);
        mean.recon += rep.recon * bs;
        mean.kl += rep.kl * bs;
        done += bs;
    }
    mean.recon /= n;
    mean.kl /= n;
    return mean;
}

std::vector<Pianoroll> vae_reconstruct(ContinuousVae& model, std::span<const Pianoroll> rolls) {
    std::vector<Pianoroll> out;
    out.reserve(rolls.size());
    std::size_t done = 0;
    while (done < rolls.size()) {
        std::size_t bs = std::min<std::size_t>(64, rolls.size() - done);
        Tensor x = rolls_to_tensor(rolls.subspan(done, bs));
        GaussianLatent lat = model.encode_eval(x);
        Tensor probs = model.decode_probs(lat.mu);
        for (std::size_t i = 0; i < bs; ++i) {
            out.push_back(tensor_row_to_roll(probs, static_cast<int>(i)));
        }
        done += bs;
    }
    return out;
}

std::vector<Pianoroll> vae_generate(ContinuousVae& model, int n, Rng& rng) {
    std::vector<Pianoroll> out;
    out.reserve(n);
    int done = 0;
    while (done < n) {
        int bs = std::min(64, n - done);
        Tensor z({bs, model.latent_dim()});
        for (double& v : z.data) v = rng.normal();
        Tensor probs = model.decode_probs(z);
        for (int i = 0; i < bs; ++i) out.push_back(tensor_row_to_roll(probs, i));
        done += bs;
    }
    return out;
}

}  // namespace loopgen
