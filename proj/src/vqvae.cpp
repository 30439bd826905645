#include "loopgen/vqvae.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "loopgen/checkpoint.hpp"
#include "loopgen/losses.hpp"
#include "loopgen/optim.hpp"

namespace loopgen {

// ---------------------------------------------------------------- Codebook

Codebook::Codebook(int k, int l, Rng& rng)
    : embeddings(he_init({k, l}, l, rng)),
      ema_counts(Tensor::zeros({k})),
      ema_sums(Tensor::zeros({k, l})),
      unused_streak(k, 0) {
    if (k < 1 || l < 1) throw std::invalid_argument("Codebook: need K >= 1 and L >= 1");
}

std::vector<int> Codebook::quantize_nearest(const Tensor& rows, Tensor* quantized) const {
    int l = dim(), k = size();
    if (rows.ndim() != 2 || rows.dim(1) != l) {
        throw std::invalid_argument("Codebook::quantize_nearest: bad rows " + rows.shape_str());
    }
    int m = rows.dim(0);
    std::vector<int> indices(m);
    if (quantized) *quantized = Tensor({m, l});
    for (int i = 0; i < m; ++i) {
        const double* z = &rows.data[static_cast<std::size_t>(i) * l];
        double best = 0.0;
        int best_k = 0;
        for (int j = 0; j < k; ++j) {
            const double* e = &embeddings.data[static_cast<std::size_t>(j) * l];
            double dist = 0.0;
            for (int d = 0; d < l; ++d) dist += (z[d] - e[d]) * (z[d] - e[d]);
            if (j == 0 || dist < best) {  // strict: ties keep the lowest index
                best = dist;
                best_k = j;
            }
        }
        indices[i] = best_k;
        if (quantized) {
            const double* e = &embeddings.data[static_cast<std::size_t>(best_k) * l];
            double* q = &quantized->data[static_cast<std::size_t>(i) * l];
            for (int d = 0; d < l; ++d) q[d] = e[d];
        }
    }
    return indices;
}

void Codebook::ema_update(const Tensor& rows, const std::vector<int>& assignments, Rng& rng) {
    int l = dim(), k = size();
    int m = rows.dim(0);
    if (static_cast<int>(assignments.size()) != m) {
        throw std::invalid_argument("Codebook::ema_update: assignment count mismatch");
    }
    std::vector<double> n_k(k, 0.0);
    Tensor sum_k = Tensor::zeros({k, l});
    for (int i = 0; i < m; ++i) {
        int a = assignments[i];
        n_k[a] += 1.0;
        for (int d = 0; d < l; ++d) sum_k(a, d) += rows(i, d);
    }

    double total = 0.0;
    for (int j = 0; j < k; ++j) {
        ema_counts(j) = decay * ema_counts(j) + (1.0 - decay) * n_k[j];
        for (int d = 0; d < l; ++d) {
            ema_sums(j, d) = decay * ema_sums(j, d) + (1.0 - decay) * sum_k(j, d);
        }
        total += ema_counts(j);
    }
    for (int j = 0; j < k; ++j) {
        if (ema_counts(j) > 0.0) {
            double smoothed = (ema_counts(j) + smoothing) / (total + k * smoothing) * total;
            for (int d = 0; d < l; ++d) embeddings(j, d) = ema_sums(j, d) / smoothed;
        }
        if (n_k[j] == 0.0) {
            if (++unused_streak[j] >= reseed_after && m > 0) {
                int src = rng.uniform_int(m);
                for (int d = 0; d < l; ++d) {
                    embeddings(j, d) = rows(src, d);
                    ema_sums(j, d) = rows(src, d);
                }
                ema_counts(j) = 1.0;
                unused_streak[j] = 0;
            }
        } else {
            unused_streak[j] = 0;
        }
    }
}

// ---------------------------------------------------------------- VqVae

namespace {

int downsample_stages(const VqVaeConfig& cfg) {
    int ratio = cfg.time / cfg.latent_len;
    if (ratio < 2 || cfg.time % cfg.latent_len != 0 || (ratio & (ratio - 1)) != 0) {
        throw std::invalid_argument("VqVae: time / latent_len must be a power of two >= 2");
    }
    int stages = 0;
    while ((1 << stages) < ratio) ++stages;
    return stages;
}

}  // namespace

VqVae::VqVae(const VqVaeConfig& cfg, Rng& rng)
    : cfg_(cfg),
      n_down_(downsample_stages(cfg)),
      emb0("emb0", cfg.rows, 64, 1, 0, 1, rng),
      emb1("emb1", 64, cfg.channels, 1, 0, 1, rng),
      enc_out("enc_out", cfg.channels, cfg.latent_dim, 3, 1, 1, rng),
      enc_out_res("enc_out_res", cfg.latent_dim, 3, 1, rng),
      dec0("dec0", cfg.latent_dim, cfg.channels, 3, 1, 1, rng),
      dec1("dec1", cfg.channels, 64, 1, 0, 1, rng),
      out_conv("out", 64, cfg.rows, 3, 1, 1, rng),
      up_(2),
      cb_(cfg.codebook_size, cfg.latent_dim, rng),
      meta_(Tensor({7})) {
    enc_down.reserve(n_down_);
    enc_res.reserve(n_down_);
    dec_res.reserve(n_down_);
    for (int i = 0; i < n_down_; ++i) {
        enc_down.emplace_back("enc_down" + std::to_string(i), cfg.channels, cfg.channels, 3, 1, 2,
                              rng);
        enc_res.emplace_back("enc_res" + std::to_string(i), cfg.channels, 3, 1, rng);
        dec_res.emplace_back("dec_res" + std::to_string(i), cfg.channels, 3, 1, rng);
    }
    meta_(0) = cfg.codebook_size;
    meta_(1) = cfg.latent_len;
    meta_(2) = cfg.latent_dim;
    meta_(3) = cfg.time;
    meta_(4) = cfg.rows;
    meta_(5) = cfg.channels;
    meta_(6) = cfg.commitment;
}

void VqVae::set_train(bool train) {
    emb0.set_train(train);
    emb1.set_train(train);
    for (auto& b : enc_down) b.set_train(train);
    for (auto& b : enc_res) b.set_train(train);
    enc_out.set_train(train);
    enc_out_res.set_train(train);
    dec0.set_train(train);
    for (auto& b : dec_res) b.set_train(train);
    dec1.set_train(train);
}

Tensor VqVae::encode_impl(const Tensor& x) {
    Tensor h = emb1.forward(emb0.forward(transpose_12(x)));
    for (int i = 0; i < n_down_; ++i) h = enc_res[i].forward(enc_down[i].forward(h));
    return enc_out_res.forward(enc_out.forward(h));
}

void VqVae::encode_backward(const Tensor& d_ze) {
    Tensor d = enc_out.backward(enc_out_res.backward(d_ze));
    for (int i = n_down_ - 1; i >= 0; --i) d = enc_down[i].backward(enc_res[i].backward(d));
    emb0.backward(emb1.backward(d));
}

Tensor VqVae::decode_impl(const Tensor& z_q) {
    Tensor h = dec0.forward(z_q);
    for (int i = 0; i < n_down_; ++i) h = dec_res[i].forward(up_.forward(h));
    return out_conv.forward(dec1.forward(h));
}

Tensor VqVae::decode_backward(const Tensor& d_logits_c) {
    Tensor d = dec1.backward(out_conv.backward(d_logits_c));
    for (int i = n_down_ - 1; i >= 0; --i) d = up_.backward(dec_res[i].backward(d));
    return dec0.backward(d);
}

VqLossReport VqVae::train_step(const Tensor& x, Rng& rng) {
    if (x.ndim() != 3 || x.dim(1) != cfg_.time || x.dim(2) != cfg_.rows) {
        throw std::invalid_argument("VqVae::train_step: bad input " + x.shape_str());
    }
    int n = x.dim(0), t = cfg_.latent_len, l = cfg_.latent_dim;
    set_train(true);

    Tensor z_e = encode_impl(x);  // (N, L, t)
    Tensor rows = reshaped(transpose_12(z_e), {n * t, l});
    Tensor q_rows;
    std::vector<int> codes = cb_.quantize_nearest(rows, &q_rows);
    Tensor z_q = transpose_12(reshaped(q_rows, {n, t, l}));  // (N, L, t)

    Tensor logits = transpose_12(decode_impl(z_q));  // (N, T, R)
    LossResult recon = bce_with_logits(logits, x);

    double commit = 0.0;
    for (int i = 0; i < z_e.numel(); ++i) {
        double diff = z_e.data[i] - z_q.data[i];
        commit += diff * diff;
    }
    commit /= z_e.numel();

    VqLossReport report;
    report.recon = recon.loss;
    report.commitment = cfg_.commitment * commit;
    if (!std::isfinite(report.recon) || !std::isfinite(report.commitment)) {
        throw std::runtime_error("VqVae::train_step: non-finite loss");
    }

    // decoder gradients flow straight through the quantizer to the encoder
    Tensor d_ze = decode_backward(transpose_12(recon.d_logits));
    double commit_scale = cfg_.commitment * 2.0 / z_e.numel();
    for (int i = 0; i < z_e.numel(); ++i) {
        d_ze.data[i] += commit_scale * (z_e.data[i] - z_q.data[i]);
    }
    encode_backward(d_ze);

    cb_.ema_update(rows, codes, rng);
    return report;
}

Tensor VqVae::encode_latent(const Tensor& x) {
    set_train(false);
    return encode_impl(x);
}

std::vector<std::vector<int>> VqVae::encode_to_codes(std::span<const Pianoroll> rolls) {
    std::vector<std::vector<int>> out;
    out.reserve(rolls.size());
    int t = cfg_.latent_len, l = cfg_.latent_dim;
    std::size_t done = 0;
    while (done < rolls.size()) {
        std::size_t bs = std::min<std::size_t>(64, rolls.size() - done);
        Tensor z_e = encode_latent(rolls_to_tensor(rolls.subspan(done, bs)));
        Tensor rows = reshaped(transpose_12(z_e), {static_cast<int>(bs) * t, l});
        std::vector<int> codes = cb_.quantize_nearest(rows);
        for (std::size_t i = 0; i < bs; ++i) {
            out.emplace_back(codes.begin() + static_cast<long>(i) * t,
                             codes.begin() + static_cast<long>(i + 1) * t);
        }
        done += bs;
    }
    return out;
}

std::vector<Pianoroll> VqVae::decode_codes_batch(const std::vector<std::vector<int>>& codes) {
    int t = cfg_.latent_len, l = cfg_.latent_dim;
    for (const std::vector<int>& c : codes) {
        if (static_cast<int>(c.size()) != t) {
            throw std::invalid_argument("decode_codes: need exactly " + std::to_string(t) +
                                        " indices");
        }
        for (int idx : c) {
            if (idx < 0 || idx >= cfg_.codebook_size) {
                throw std::invalid_argument("decode_codes: index out of range");
            }
        }
    }
    set_train(false);
    std::vector<Pianoroll> out;
    out.reserve(codes.size());
    std::size_t done = 0;
    while (done < codes.size()) {
        int bs = static_cast<int>(std::min<std::size_t>(64, codes.size() - done));
        Tensor z_q({bs, l, t});
        for (int s = 0; s < bs; ++s) {
            const std::vector<int>& c = codes[done + s];
            for (int i = 0; i < t; ++i) {
                for (int d = 0; d < l; ++d) z_q(s, d, i) = cb_.embeddings(c[i], d);
            }
        }
        Tensor probs = sigmoid(transpose_12(decode_impl(z_q)));
        for (int s = 0; s < bs; ++s) out.push_back(tensor_row_to_roll(probs, s));
        done += bs;
    }
    return out;
}

Pianoroll VqVae::decode_codes(const std::vector<int>& codes) {
    return decode_codes_batch({codes})[0];
}

void VqVae::collect_params(std::vector<Parameter*>& out) {
    emb0.collect_params(out);
    emb1.collect_params(out);
    for (auto& b : enc_down) b.collect_params(out);
    for (auto& b : enc_res) b.collect_params(out);
    enc_out.collect_params(out);
    enc_out_res.collect_params(out);
    dec0.collect_params(out);
    for (auto& b : dec_res) b.collect_params(out);
    dec1.collect_params(out);
    out_conv.collect_params(out);
}

void VqVae::collect_state(StateMap& out) {
    out.push_back({"meta.config", &meta_});
    emb0.collect_state(out);
    emb1.collect_state(out);
    for (auto& b : enc_down) b.collect_state(out);
    for (auto& b : enc_res) b.collect_state(out);
    enc_out.collect_state(out);
    enc_out_res.collect_state(out);
    dec0.collect_state(out);
    for (auto& b : dec_res) b.collect_state(out);
    dec1.collect_state(out);
    out_conv.collect_state(out);
    out.push_back({"cb.embeddings", &cb_.embeddings});
    out.push_back({"cb.ema_counts", &cb_.ema_counts});
    out.push_back({"cb.ema_sums", &cb_.ema_sums});
}

VqVae vqvae_from_checkpoint(const Checkpoint& ckpt, Rng& rng) {
    auto it = ckpt.entries.find("meta.config");
    if (it == ckpt.entries.end() || it->second.numel() != 7) {
        throw std::runtime_error("checkpoint has no usable meta.config entry");
    }
    const Tensor& meta = it->second;
    VqVaeConfig cfg;
    cfg.codebook_size = static_cast<int>(meta(0));
    cfg.latent_len = static_cast<int>(meta(1));
    cfg.latent_dim = static_cast<int>(meta(2));
    cfg.time = static_cast<int>(meta(3));
    cfg.rows = static_cast<int>(meta(4));
    cfg.channels = static_cast<int>(meta(5));
    cfg.commitment = meta(6);
    VqVae model(cfg, rng);
    StateMap state;
    model.collect_state(state);
    restore_state(ckpt, state);
    return model;
}

}  // namespace loopgen
