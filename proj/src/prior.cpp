#include "loopgen/prior.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "loopgen/checkpoint.hpp"
#include "loopgen/losses.hpp"
#include "loopgen/optim.hpp"

namespace loopgen {

CodePrior::CodePrior(const PriorConfig& cfg, Rng& rng)
    : cfg_(cfg),
      emb_("emb", cfg.vocab, cfg.embed_dim, rng),
      lstm_("lstm", cfg.embed_dim, cfg.hidden, cfg.layers, rng),
      head_("head", cfg.hidden, cfg.vocab, rng),
      p0_(Tensor({cfg.vocab}, 1.0 / cfg.vocab)),
      meta_(Tensor({5})) {
    if (cfg.seq_len < 2) throw std::invalid_argument("CodePrior: seq_len must be >= 2");
    meta_(0) = cfg.vocab;
    meta_(1) = cfg.seq_len;
    meta_(2) = cfg.embed_dim;
    meta_(3) = cfg.hidden;
    meta_(4) = cfg.layers;
}

void CodePrior::check_sequences(const std::vector<std::vector<int>>& seqs) const {
    for (const std::vector<int>& s : seqs) {
        if (static_cast<int>(s.size()) != cfg_.seq_len) {
            throw std::invalid_argument("code sequence length must be " +
                                        std::to_string(cfg_.seq_len));
        }
        for (int idx : s) {
            if (idx < 0 || idx >= cfg_.vocab) {
                throw std::invalid_argument("code index out of range");
            }
        }
    }
}

Tensor CodePrior::forward_logits(const std::vector<std::vector<int>>& batch) {
    int n = static_cast<int>(batch.size());
    int steps = cfg_.seq_len - 1;
    std::vector<int> inputs(static_cast<std::size_t>(n) * steps);
    for (int i = 0; i < n; ++i) {
        for (int t = 0; t < steps; ++t) inputs[static_cast<std::size_t>(i) * steps + t] = batch[i][t];
    }
    Tensor x = emb_.forward(inputs, n, steps);
    Tensor h = lstm_.forward(x);  // (N, steps, H)
    return head_.forward(reshaped(h, {n * steps, cfg_.hidden}));
}

double CodePrior::train_step(const std::vector<std::vector<int>>& batch) {
    if (batch.empty()) throw std::invalid_argument("CodePrior::train_step: empty batch");
    check_sequences(batch);
    int n = static_cast<int>(batch.size());
    int steps = cfg_.seq_len - 1;

    Tensor logits = forward_logits(batch);
    std::vector<int> targets(static_cast<std::size_t>(n) * steps);
    for (int i = 0; i < n; ++i) {
        for (int t = 0; t < steps; ++t) {
            targets[static_cast<std::size_t>(i) * steps + t] = batch[i][t + 1];
        }
    }
    LossResult ce = softmax_cross_entropy(logits, targets);

    Tensor d_h = head_.backward(ce.d_logits);
    emb_.backward(lstm_.backward(reshaped(d_h, {n, steps, cfg_.hidden})));
    return ce.loss;
}

void CodePrior::fit_start_distribution(const std::vector<std::vector<int>>& corpus) {
    if (corpus.empty()) throw std::invalid_argument("fit_start_distribution: empty corpus");
    check_sequences(corpus);
    p0_.fill(0.0);
    for (const std::vector<int>& s : corpus) p0_(s[0]) += 1.0;
    for (int k = 0; k < cfg_.vocab; ++k) p0_(k) /= static_cast<double>(corpus.size());
}

double CodePrior::teacher_forcing_accuracy(const std::vector<std::vector<int>>& corpus) {
    if (corpus.empty()) throw std::invalid_argument("teacher_forcing_accuracy: empty corpus");
    check_sequences(corpus);
    int steps = cfg_.seq_len - 1;
    long hits = 0, total = 0;
    std::size_t done = 0;
    while (done < corpus.size()) {
        std::size_t bs = std::min<std::size_t>(64, corpus.size() - done);
        std::vector<std::vector<int>> chunk(corpus.begin() + static_cast<long>(done),
                                            corpus.begin() + static_cast<long>(done + bs));
        Tensor logits = forward_logits(chunk);
        for (std::size_t i = 0; i < bs; ++i) {
            for (int t = 0; t < steps; ++t) {
                int row = static_cast<int>(i) * steps + t;
                int best = 0;
                for (int k = 1; k < cfg_.vocab; ++k) {
                    if (logits(row, k) > logits(row, best)) best = k;
                }
                if (best == chunk[i][t + 1]) ++hits;
                ++total;
            }
        }
        done += bs;
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

std::vector<int> CodePrior::sample(Rng& rng, double temperature) {
    if (temperature <= 0.0) throw std::invalid_argument("sample: temperature must be > 0");
    std::vector<int> out(cfg_.seq_len);
    out[0] = rng.discrete(std::span<const double>(p0_.data.data(), p0_.data.size()));
    std::vector<Tensor> state = lstm_.make_state(1);
    Tensor x_t({1, cfg_.embed_dim});
    for (int t = 1; t < cfg_.seq_len; ++t) {
        for (int e = 0; e < cfg_.embed_dim; ++e) x_t(0, e) = emb_.table.value(out[t - 1], e);
        Tensor h = lstm_.infer_step(x_t, state);
        Tensor logits = linear_apply(head_, h);
        std::vector<double> probs =
            softmax(std::span<const double>(logits.data.data(), logits.data.size()), temperature);
        out[t] = rng.discrete(probs);
    }
    return out;
}

std::vector<int> CodePrior::sample_argmax() {
    std::vector<int> out(cfg_.seq_len);
    int first = 0;
    for (int k = 1; k < cfg_.vocab; ++k) {
        if (p0_(k) > p0_(first)) first = k;
    }
    out[0] = first;
    std::vector<Tensor> state = lstm_.make_state(1);
    Tensor x_t({1, cfg_.embed_dim});
    for (int t = 1; t < cfg_.seq_len; ++t) {
        for (int e = 0; e < cfg_.embed_dim; ++e) x_t(0, e) = emb_.table.value(out[t - 1], e);
        Tensor h = lstm_.infer_step(x_t, state);
        Tensor logits = linear_apply(head_, h);
        int best = 0;
        for (int k = 1; k < cfg_.vocab; ++k) {
            if (logits(0, k) > logits(0, best)) best = k;
        }
        out[t] = best;
    }
    return out;
}

void CodePrior::collect_params(std::vector<Parameter*>& out) {
    emb_.collect_params(out);
    lstm_.collect_params(out);
    head_.collect_params(out);
}

void CodePrior::collect_state(StateMap& out) {
    out.push_back({"meta.config", &meta_});
    emb_.collect_state(out);
    lstm_.collect_state(out);
    head_.collect_state(out);
    out.push_back({"p0", &p0_});
}

CodePrior prior_from_checkpoint(const Checkpoint& ckpt, Rng& rng) {
    auto it = ckpt.entries.find("meta.config");
    if (it == ckpt.entries.end() || it->second.numel() != 5) {
        throw std::runtime_error("checkpoint has no usable meta.config entry");
    }
    const Tensor& meta = it->second;
    PriorConfig cfg;
    cfg.vocab = static_cast<int>(meta(0));
    cfg.seq_len = static_cast<int>(meta(1));
    cfg.embed_dim = static_cast<int>(meta(2));
    cfg.hidden = static_cast<int>(meta(3));
    cfg.layers = static_cast<int>(meta(4));
    CodePrior prior(cfg, rng);
    StateMap state;
    prior.collect_state(state);
    restore_state(ckpt, state);
    return prior;
}

double train_prior(CodePrior& prior, const std::vector<std::vector<int>>& corpus,
                   const PriorTrainConfig& cfg, Rng& rng) {
    if (corpus.empty()) throw std::invalid_argument("train_prior: empty corpus");
    prior.fit_start_distribution(corpus);

    std::vector<Parameter*> params;
    prior.collect_params(params);
    AdamW opt(params);

    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = cosine_lr(epoch, std::max(1, cfg.epochs - 1), cfg.lr_max, cfg.lr_min);
        for (std::size_t i = order.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)));
            std::swap(order[i - 1], order[j]);
        }
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t bs = std::min<std::size_t>(cfg.batch_size, order.size() - start);
            std::vector<std::vector<int>> batch;
            batch.reserve(bs);
            for (std::size_t i = 0; i < bs; ++i) batch.push_back(corpus[order[start + i]]);
            opt.zero_grad();
            double loss = prior.train_step(batch);
            if (!std::isfinite(loss)) throw std::runtime_error("train_prior: non-finite loss");
            opt.step(lr);
        }
    }
    return prior.teacher_forcing_accuracy(corpus);
}

std::vector<int> manipulate_codes(const std::vector<int>& codes) {
    if (codes.size() != 32) {
        throw std::invalid_argument("manipulate_codes: sequence must have 32 indices");
    }
    std::vector<int> out = codes;
    out[16] = codes[0];
    out[17] = codes[1];
    return out;
}

CodeFrequencyReport code_frequency_report(const std::vector<std::vector<int>>& corpus, int vocab) {
    if (corpus.empty()) throw std::invalid_argument("code_frequency_report: empty corpus");
    std::size_t seq_len = corpus[0].size();
    CodeFrequencyReport report;
    report.histogram.assign(seq_len, std::vector<long>(vocab, 0));
    for (const std::vector<int>& s : corpus) {
        if (s.size() != seq_len) {
            throw std::invalid_argument("code_frequency_report: ragged corpus");
        }
        for (std::size_t t = 0; t < seq_len; ++t) {
            if (s[t] < 0 || s[t] >= vocab) {
                throw std::invalid_argument("code_frequency_report: index out of range");
            }
            ++report.histogram[t][s[t]];
        }
    }
    report.most_frequent.resize(seq_len);
    report.least_frequent.resize(seq_len);
    for (std::size_t t = 0; t < seq_len; ++t) {
        int most = 0, least = 0;
        for (int k = 1; k < vocab; ++k) {
            if (report.histogram[t][k] > report.histogram[t][most]) most = k;
            if (report.histogram[t][k] < report.histogram[t][least]) least = k;
        }
        report.most_frequent[t] = most;
        report.least_frequent[t] = least;
    }
    return report;
}

namespace {

void put_u32le(std::ostream& out, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8 & 0xff),
                 static_cast<char>(v >> 16 & 0xff), static_cast<char>(v >> 24 & 0xff)};
    out.write(b, 4);
}

std::uint32_t get_u32le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("codes file truncated");
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

}  // namespace

void save_codes(const std::string& path, int vocab, int seq_len,
                const std::vector<std::vector<int>>& codes) {
    if (vocab < 1 || vocab > 65536) throw std::invalid_argument("save_codes: vocab out of range");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write("CODE", 4);
    put_u32le(out, static_cast<std::uint32_t>(vocab));
    put_u32le(out, static_cast<std::uint32_t>(seq_len));
    put_u32le(out, static_cast<std::uint32_t>(codes.size()));
    for (const std::vector<int>& seq : codes) {
        if (static_cast<int>(seq.size()) != seq_len) {
            throw std::invalid_argument("save_codes: sequence length mismatch");
        }
        for (int idx : seq) {
            if (idx < 0 || idx >= vocab) throw std::invalid_argument("save_codes: bad index");
            char b[2] = {static_cast<char>(idx & 0xff), static_cast<char>(idx >> 8 & 0xff)};
            out.write(b, 2);
        }
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

CodeCache load_codes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "CODE", 4) != 0) {
        throw std::runtime_error(path + " is not a codes file");
    }
    CodeCache cache;
    cache.vocab = static_cast<int>(get_u32le(in));
    cache.seq_len = static_cast<int>(get_u32le(in));
    std::uint32_t count = get_u32le(in);
    if (cache.vocab < 1 || cache.seq_len < 1) throw std::runtime_error("codes file corrupt");
    cache.codes.assign(count, std::vector<int>(cache.seq_len));
    for (std::uint32_t i = 0; i < count; ++i) {
        for (int t = 0; t < cache.seq_len; ++t) {
            unsigned char b[2];
            in.read(reinterpret_cast<char*>(b), 2);
            if (!in) throw std::runtime_error("codes file truncated");
            int idx = b[0] | b[1] << 8;
            if (idx >= cache.vocab) throw std::runtime_error("codes file corrupt");
            cache.codes[i][t] = idx;
        }
    }
    return cache;
}

}  // namespace loopgen
