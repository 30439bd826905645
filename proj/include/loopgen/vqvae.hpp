#ifndef LOOPGEN_VQVAE_HPP
#define LOOPGEN_VQVAE_HPP

#include <span>
#include <vector>

#include "loopgen/batch.hpp"
#include "loopgen/layers.hpp"
#include "loopgen/pianoroll.hpp"
#include "loopgen/rng.hpp"

namespace loopgen {

// Nearest-neighbor dictionary with exponential-moving-average centroid
// updates and dead-code reseeding.
struct Codebook {
    Tensor embeddings;  // (K, L)
    Tensor ema_counts;  // (K)
    Tensor ema_sums;    // (K, L)
    std::vector<long> unused_streak;
    double decay = 0.99;
    double smoothing = 1e-5;
    long reseed_after = 100;

    Codebook(int k, int l, Rng& rng);

    int size() const { return embeddings.dim(0); }
    int dim() const { return embeddings.dim(1); }

    // rows (M, L) -> M indices; ties go to the lowest index. Optionally fills
    // the quantized rows.
    std::vector<int> quantize_nearest(const Tensor& rows, Tensor* quantized = nullptr) const;

    void ema_update(const Tensor& rows, const std::vector<int>& assignments, Rng& rng);
};

struct VqVaeConfig {
    int codebook_size = 512;  // K
    int latent_len = 32;      // t
    int latent_dim = 16;      // L
    int time = 128;
    int rows = 93;
    int channels = 32;
    double commitment = 0.25;
};

struct VqLossReport {
    double recon = 0.0;
    double commitment = 0.0;

    double total() const { return recon + commitment; }
};

class VqVae {
public:
    VqVae(const VqVaeConfig& cfg, Rng& rng);

    const VqVaeConfig& config() const { return cfg_; }
    Codebook& codebook() { return cb_; }
    const Codebook& codebook() const { return cb_; }

    // Forward + backward + EMA codebook update on one batch (N, T, R).
    VqLossReport train_step(const Tensor& x, Rng& rng);

    // Encoder output in eval mode: (N, L, t).
    Tensor encode_latent(const Tensor& x);

    std::vector<std::vector<int>> encode_to_codes(std::span<const Pianoroll> rolls);

    Pianoroll decode_codes(const std::vector<int>& codes);
    std::vector<Pianoroll> decode_codes_batch(const std::vector<std::vector<int>>& codes);

    void collect_params(std::vector<Parameter*>& out);
    void collect_state(StateMap& out);

private:
    VqVaeConfig cfg_;
    int n_down_;  // stride-2 stages, log2(time / latent_len)
    ConvBlock emb0, emb1;
    std::vector<ConvBlock> enc_down;
    std::vector<ResidualBlock> enc_res;
    ConvBlock enc_out;
    ResidualBlock enc_out_res;
    ConvBlock dec0;
    std::vector<ResidualBlock> dec_res;
    ConvBlock dec1;
    Conv1d out_conv;
    UpsampleNearest up_;
    Codebook cb_;
    Tensor meta_;  // config snapshot stored in checkpoints

    void set_train(bool train);
    Tensor encode_impl(const Tensor& x);          // (N, T, R) -> (N, L, t)
    void encode_backward(const Tensor& d_ze);
    Tensor decode_impl(const Tensor& z_q);        // (N, L, t) -> logits (N, R, T)
    Tensor decode_backward(const Tensor& d_logits_c);
};

// Rebuild a model from a checkpoint written with kind "vq-vae".
struct Checkpoint;
VqVae vqvae_from_checkpoint(const Checkpoint& ckpt, Rng& rng);

}  // namespace loopgen

#endif
