#ifndef LOOPGEN_VAE_HPP
#define LOOPGEN_VAE_HPP

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "loopgen/batch.hpp"
#include "loopgen/layers.hpp"
#include "loopgen/optim.hpp"
#include "loopgen/pianoroll.hpp"
#include "loopgen/rng.hpp"

namespace loopgen {

enum class VaeKind { ar_lstm, nonar_lstm, cnn };

VaeKind vae_kind_from_string(const std::string& name);
const char* vae_kind_name(VaeKind kind);

struct GaussianLatent {
    Tensor mu;       // (N, D)
    Tensor log_var;  // (N, D)
};

// z = mu + exp(log_var / 2) * noise
Tensor reparameterize(const GaussianLatent& lat, const Tensor& noise);

// KL against the unit Gaussian: mean over the batch of per-sample sums of
// (mu^2 + var - 1 - log var) / 2.
double kl_gaussian(const GaussianLatent& lat);

// Adds beta-weighted KL gradients to d_mu / d_log_var.
void kl_gaussian_backward(const GaussianLatent& lat, double beta, Tensor& d_mu,
                          Tensor& d_log_var);

struct BetaSchedule {
    double max_beta = 1.0;
    double ramp_fraction = 0.25;  // linear ramp over the first quarter of training

    double value(long epoch, long total_epochs) const;
};

struct VaeLossReport {
    double recon = 0.0;
    double kl = 0.0;
    double beta = 0.0;

    double total() const { return recon + beta * kl; }
};

class ContinuousVae {
public:
    virtual ~ContinuousVae() = default;

    virtual VaeKind kind() const = 0;
    virtual int latent_dim() const = 0;
    virtual int time_steps() const = 0;
    virtual int row_count() const = 0;

    // Forward + backward on one batch, accumulating parameter gradients.
    // noise is the (N, latent) reparameterization draw; teacher_prob drives
    // scheduled sampling where it applies.
    virtual VaeLossReport train_step(const Tensor& x, double beta, double teacher_prob,
                                     const Tensor& noise, Rng& rng) = 0;

    virtual GaussianLatent encode_eval(const Tensor& x) = 0;

    // Full-sampling decode of a latent batch into probabilities (N, T, R).
    virtual Tensor decode_probs(const Tensor& z) = 0;

    virtual void collect_params(std::vector<Parameter*>& out) = 0;
    virtual void collect_state(StateMap& out) = 0;
};

std::unique_ptr<ContinuousVae> make_vae(VaeKind kind, Rng& rng);

class ArLstmVae : public ContinuousVae {
public:
    ArLstmVae(Rng& rng, int time = 128, int rows = 93, int enc_hidden = 128, int latent = 128);

    VaeKind kind() const override { return VaeKind::ar_lstm; }
    int latent_dim() const override { return latent_; }
    int time_steps() const override { return time_; }
    int row_count() const override { return rows_; }

    VaeLossReport train_step(const Tensor& x, double beta, double teacher_prob,
                             const Tensor& noise, Rng& rng) override;
    GaussianLatent encode_eval(const Tensor& x) override;
    Tensor decode_probs(const Tensor& z) override;

    void collect_params(std::vector<Parameter*>& out) override;
    void collect_state(StateMap& out) override;

private:
    int time_, rows_, latent_;
    BiLstm encoder;
    Linear mu_head;
    LayerNorm mu_norm;
    Linear lv_head;
    Lstm decoder;
    Linear out_head;

    GaussianLatent encode_impl(const Tensor& x);
    void encoder_backward(const GaussianLatent& lat, const Tensor& d_mu, const Tensor& d_lv);
};

class NonArLstmVae : public ContinuousVae {
public:
    NonArLstmVae(Rng& rng, int time = 128, int rows = 93, int enc_hidden = 128, int latent = 128,
                 int dec_hidden = 256);

    VaeKind kind() const override { return VaeKind::nonar_lstm; }
    int latent_dim() const override { return latent_; }
    int time_steps() const override { return time_; }
    int row_count() const override { return rows_; }

    VaeLossReport train_step(const Tensor& x, double beta, double teacher_prob,
                             const Tensor& noise, Rng& rng) override;
    GaussianLatent encode_eval(const Tensor& x) override;
    Tensor decode_probs(const Tensor& z) override;

    void collect_params(std::vector<Parameter*>& out) override;
    void collect_state(StateMap& out) override;

private:
    int time_, rows_, latent_;
    BiLstm encoder;
    Linear mu_head;
    LayerNorm mu_norm;
    Linear lv_head;
    Lstm decoder;
    Linear out_head;

    GaussianLatent encode_impl(const Tensor& x);
    void encoder_backward(const GaussianLatent& lat, const Tensor& d_mu, const Tensor& d_lv);
    Tensor decode_logits(const Tensor& z);
};

class CnnVae : public ContinuousVae {
public:
    CnnVae(Rng& rng, int time = 128, int rows = 93, int channels = 32, int latent = 512);

    VaeKind kind() const override { return VaeKind::cnn; }
    int latent_dim() const override { return latent_; }
    int time_steps() const override { return time_; }
    int row_count() const override { return rows_; }

    VaeLossReport train_step(const Tensor& x, double beta, double teacher_prob,
                             const Tensor& noise, Rng& rng) override;
    GaussianLatent encode_eval(const Tensor& x) override;
    Tensor decode_probs(const Tensor& z) override;

    void collect_params(std::vector<Parameter*>& out) override;
    void collect_state(StateMap& out) override;

private:
    int time_, rows_, channels_, latent_;
    ConvBlock e0, e1;
    ResidualBlock r1;
    ConvBlock e2;
    ResidualBlock r2;
    Linear mu_head;
    LayerNorm mu_norm;
    Linear lv_head;
    Linear dec_in;
    ResidualBlock d1, d2;
    UpsampleNearest up;
    Conv1d out_conv;

    void set_train(bool train);
    GaussianLatent encode_impl(const Tensor& x);
    void encoder_backward(const GaussianLatent& lat, const Tensor& d_mu, const Tensor& d_lv);
    Tensor decode_logits(const Tensor& z);
    Tensor decode_backward(const Tensor& d_logits);
};

// One pass over the data in shuffled batches; returns epoch-mean losses.
struct VaeTrainConfig {
    long epochs = 200;
    int batch_size = 64;
    double lr_max = 1e-3;
    double lr_min = 5e-6;
    BetaSchedule beta;
    double sampling_rate = 20.0;  // inverse-sigmoid scheduled sampling
};

VaeLossReport vae_train_epoch(ContinuousVae& model, AdamW& opt, std::span<const Pianoroll> data,
                              long epoch, const VaeTrainConfig& cfg, Rng& rng);

// Encode with z = mu, decode, threshold at 0.5.
std::vector<Pianoroll> vae_reconstruct(ContinuousVae& model, std::span<const Pianoroll> rolls);

// Decode z ~ N(0, I) draws.
std::vector<Pianoroll> vae_generate(ContinuousVae& model, int n, Rng& rng);

}  // namespace loopgen

#endif
