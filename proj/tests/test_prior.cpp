#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "loopgen/checkpoint.hpp"
#include "loopgen/optim.hpp"
#include "loopgen/prior.hpp"

using namespace loopgen;
namespace fs = std::filesystem;

namespace {

PriorConfig tiny_config() {
    PriorConfig cfg;
    cfg.vocab = 6;
    cfg.seq_len = 5;
    cfg.embed_dim = 4;
    cfg.hidden = 8;
    cfg.layers = 2;
    return cfg;
}

std::vector<std::vector<int>> tiny_corpus() {
    // two deterministic patterns over vocab 6
    return {
        {0, 1, 2, 3, 4}, {0, 1, 2, 3, 4}, {0, 1, 2, 3, 4},
        {5, 4, 3, 2, 1}, {5, 4, 3, 2, 1},
    };
}

}  // namespace

TEST_CASE("code manipulation") {
    std::vector<int> codes(32);
    std::iota(codes.begin(), codes.end(), 100);
    std::vector<int> out = manipulate_codes(codes);
    REQUIRE(out.size() == 32);
    CHECK(out[16] == 100);  // codes[0]
    CHECK(out[17] == 101);  // codes[1]
    for (int i = 0; i < 32; ++i) {
        if (i != 16 && i != 17) CHECK(out[i] == codes[i]);
    }

    // already-consistent sequences are fixed points
    std::vector<int> fixed = manipulate_codes(out);
    CHECK(fixed == out);

    CHECK_THROWS(manipulate_codes(std::vector<int>(31)));
    CHECK_THROWS(manipulate_codes(std::vector<int>(33)));
}

TEST_CASE("start distribution") {
    Rng rng(700);
    CodePrior prior(tiny_config(), rng);

    // uniform before fitting
    const Tensor& p0 = prior.start_distribution();
    CHECK(p0.numel() == 6);
    for (double v : p0.data) CHECK(v == doctest::Approx(1.0 / 6.0));

    prior.fit_start_distribution(tiny_corpus());
    CHECK(prior.start_distribution().data[0] == doctest::Approx(0.6));
    CHECK(prior.start_distribution().data[5] == doctest::Approx(0.4));
    CHECK(prior.start_distribution().data[1] == doctest::Approx(0.0));
    double sum = 0.0;
    for (double v : prior.start_distribution().data) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("training fits a deterministic corpus") {
    Rng rng(701);
    CodePrior prior(tiny_config(), rng);
    std::vector<std::vector<int>> corpus = tiny_corpus();

    PriorTrainConfig cfg;
    cfg.epochs = 150;
    cfg.batch_size = 5;
    cfg.lr_max = 1e-2;
    double acc = train_prior(prior, corpus, cfg, rng);
    // the continuation is a function of the first index, so a fitted prior
    // predicts every next step
    CHECK(acc == doctest::Approx(1.0));
    CHECK(prior.teacher_forcing_accuracy(corpus) == doctest::Approx(acc));

    // greedy sampling now reproduces the majority sequence
    std::vector<int> greedy = prior.sample_argmax();
    CHECK(greedy == std::vector<int>{0, 1, 2, 3, 4});

    // stochastic samples are valid sequences from the same support
    std::vector<int> s = prior.sample(rng, 1.0);
    REQUIRE(s.size() == 5);
    for (int c : s) {
        CHECK(c >= 0);
        CHECK(c < 6);
    }
    CHECK((s[0] == 0 || s[0] == 5));  // fitted start support

    // determinism: same seed, same draw
    Rng a(77), b(77);
    CHECK(prior.sample(a, 1.2) == prior.sample(b, 1.2));

    CHECK_THROWS(prior.sample(rng, 0.0));
    CHECK_THROWS(prior.sample(rng, -2.0));
}

TEST_CASE("train_step decreases loss") {
    Rng rng(702);
    CodePrior prior(tiny_config(), rng);
    std::vector<std::vector<int>> corpus = tiny_corpus();

    std::vector<Parameter*> params;
    prior.collect_params(params);
    AdamW opt(params);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 200; ++i) {
        opt.zero_grad();
        double loss = prior.train_step(corpus);
        opt.step(3e-3);
        if (i == 0) first = loss;
        last = loss;
    }
    CHECK(last < 0.3 * first);
}

TEST_CASE("sequence validation") {
    Rng rng(703);
    CodePrior prior(tiny_config(), rng);
    CHECK_THROWS(prior.train_step({}));
    CHECK_THROWS(prior.train_step({{0, 1, 2}}));            // wrong length
    CHECK_THROWS(prior.train_step({{0, 1, 2, 3, 6}}));      // out of vocab
    CHECK_THROWS(prior.train_step({{0, 1, 2, 3, -1}}));
    CHECK_THROWS(prior.teacher_forcing_accuracy({{0, 1}}));
}

TEST_CASE("frequency report") {
    std::vector<std::vector<int>> corpus = {
        {0, 2, 2}, {0, 2, 1}, {1, 2, 1},
    };
    CodeFrequencyReport rep = code_frequency_report(corpus, 4);
    REQUIRE(rep.histogram.size() == 3);
    REQUIRE(rep.histogram[0].size() == 4);
    CHECK(rep.histogram[0] == std::vector<long>{2, 1, 0, 0});
    CHECK(rep.histogram[1] == std::vector<long>{0, 0, 3, 0});
    CHECK(rep.histogram[2] == std::vector<long>{0, 2, 1, 0});
    // each position's histogram sums to the corpus size
    for (const auto& h : rep.histogram) {
        long s = 0;
        for (long v : h) s += v;
        CHECK(s == 3);
    }
    CHECK(rep.most_frequent == std::vector<int>{0, 2, 1});
    // least: position 0 ties between 2 and 3 at zero -> lowest index 2
    CHECK(rep.least_frequent == std::vector<int>{2, 0, 0});

    CHECK_THROWS(code_frequency_report({}, 4));
    CHECK_THROWS(code_frequency_report({{0, 1}, {0}}, 4));     // ragged
    CHECK_THROWS(code_frequency_report({{0, 9}}, 4));          // out of range
}

TEST_CASE("codes cache file round trip") {
    fs::path dir = fs::temp_directory_path() / "loopgen_codes_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::string file = (dir / "train.code").string();

    std::vector<std::vector<int>> codes = {{0, 5, 11}, {11, 3, 0}, {7, 7, 7}};
    save_codes(file, 12, 3, codes);
    CodeCache cache = load_codes(file);
    CHECK(cache.vocab == 12);
    CHECK(cache.seq_len == 3);
    CHECK(cache.codes == codes);

    SUBCASE("bad magic") {
        std::ofstream out(file, std::ios::binary);
        out << "JUNKJUNKJUNKJUNK";
        out.close();
        CHECK_THROWS(load_codes(file));
    }
    SUBCASE("truncated") {
        auto size = fs::file_size(file);
        fs::resize_file(file, size - 3);
        CHECK_THROWS(load_codes(file));
    }
    SUBCASE("save validates inputs") {
        CHECK_THROWS(save_codes(file, 12, 3, {{0, 1}}));        // wrong length
        CHECK_THROWS(save_codes(file, 12, 3, {{0, 1, 12}}));    // out of vocab
        CHECK_THROWS(save_codes(file, 0, 3, codes));            // bad vocab
    }
    fs::remove_all(dir);
}

TEST_CASE("prior checkpoint round trip") {
    Rng rng(704);
    fs::path dir = fs::temp_directory_path() / "loopgen_prior_ckpt";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::string file = (dir / "prior.ckpt").string();

    CodePrior prior(tiny_config(), rng);
    std::vector<std::vector<int>> corpus = tiny_corpus();
    PriorTrainConfig cfg;
    cfg.epochs = 40;
    cfg.batch_size = 5;
    train_prior(prior, corpus, cfg, rng);

    StateMap state;
    prior.collect_state(state);
    save_checkpoint(file, "prior", state);

    Rng rng2(99);
    CodePrior restored = prior_from_checkpoint(load_checkpoint(file), rng2);
    CHECK(restored.config().vocab == 6);
    CHECK(restored.config().seq_len == 5);
    CHECK(restored.config().embed_dim == 4);
    CHECK(restored.config().hidden == 8);
    CHECK(restored.config().layers == 2);

    // the restored start distribution and greedy continuation agree
    for (int i = 0; i < 6; ++i) {
        CHECK(restored.start_distribution().data[i] ==
              doctest::Approx(prior.start_distribution().data[i]).epsilon(1e-6));
    }
    CHECK(restored.sample_argmax() == prior.sample_argmax());
    CHECK(restored.teacher_forcing_accuracy(corpus) ==
          doctest::Approx(prior.teacher_forcing_accuracy(corpus)));
    fs::remove_all(dir);
}
