#ifndef LOOPGEN_PRIOR_HPP
#define LOOPGEN_PRIOR_HPP

#include <string>
#include <vector>

#include "loopgen/layers.hpp"
#include "loopgen/rng.hpp"

namespace loopgen {

struct PriorConfig {
    int vocab = 512;   // codebook size K
    int seq_len = 32;  // latent positions per loop
    int embed_dim = 64;
    int hidden = 128;
    int layers = 2;
};

// Autoregressive LSTM over discrete code indices. The first index is drawn
// from an empirical start distribution; later ones from the network.
class CodePrior {
public:
    CodePrior(const PriorConfig& cfg, Rng& rng);

    const PriorConfig& config() const { return cfg_; }
    const Tensor& start_distribution() const { return p0_; }

    // Next-index cross entropy on one batch; fills parameter gradients.
    double train_step(const std::vector<std::vector<int>>& batch);

    void fit_start_distribution(const std::vector<std::vector<int>>& corpus);

    // Fraction of next-index argmax hits when fed the true prefix.
    double teacher_forcing_accuracy(const std::vector<std::vector<int>>& corpus);

    std::vector<int> sample(Rng& rng, double temperature);
    std::vector<int> sample_argmax();

    void collect_params(std::vector<Parameter*>& out);
    void collect_state(StateMap& out);

private:
    PriorConfig cfg_;
    Embedding emb_;
    StackedLstm lstm_;
    Linear head_;
    Tensor p0_;    // (vocab) start frequencies
    Tensor meta_;  // config snapshot stored in checkpoints

    void check_sequences(const std::vector<std::vector<int>>& seqs) const;
    Tensor forward_logits(const std::vector<std::vector<int>>& batch);  // (N*(T-1), K)
};

struct Checkpoint;
CodePrior prior_from_checkpoint(const Checkpoint& ckpt, Rng& rng);

struct PriorTrainConfig {
    int epochs = 200;
    int batch_size = 64;
    double lr_max = 1e-3;
    double lr_min = 5e-6;
};

// Fits the start distribution, trains with AdamW under a cosine schedule,
// and returns the final teacher-forcing accuracy on the corpus.
double train_prior(CodePrior& prior, const std::vector<std::vector<int>>& corpus,
                   const PriorTrainConfig& cfg, Rng& rng);

// Copy the opening two indices over the loop midpoint: c'[16] = c[0],
// c'[17] = c[1]. Requires length 32.
std::vector<int> manipulate_codes(const std::vector<int>& codes);

struct CodeFrequencyReport {
    std::vector<std::vector<long>> histogram;  // seq_len x vocab counts
    std::vector<int> most_frequent;            // per position, ties to lowest index
    std::vector<int> least_frequent;
};

CodeFrequencyReport code_frequency_report(const std::vector<std::vector<int>>& corpus, int vocab);

// Codes cache: magic "CODE", then vocab, positions, count, and count
// sequences of 16-bit indices.
struct CodeCache {
    int vocab = 0;
    int seq_len = 0;
    std::vector<std::vector<int>> codes;
};

void save_codes(const std::string& path, int vocab, int seq_len,
                const std::vector<std::vector<int>>& codes);
CodeCache load_codes(const std::string& path);

}  // namespace loopgen

#endif
