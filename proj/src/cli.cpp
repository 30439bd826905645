#include "loopgen/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "loopgen/batch.hpp"
#include "loopgen/checkpoint.hpp"
#include "loopgen/loop_extract.hpp"
#include "loopgen/metrics.hpp"
#include "loopgen/midi.hpp"
#include "loopgen/midi_export.hpp"
#include "loopgen/optim.hpp"
#include "loopgen/prior.hpp"
#include "loopgen/rng.hpp"
#include "loopgen/vae.hpp"
#include "loopgen/vqvae.hpp"

namespace fs = std::filesystem;

namespace loopgen {

namespace {

Pianoroll read_roll_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::array<std::uint8_t, TrackLayout::bar_cells> packed;
    in.read(reinterpret_cast<char*>(packed.data()), packed.size());
    if (!in || in.gcount() != static_cast<std::streamsize>(packed.size())) {
        throw std::runtime_error(path + " is not a packed pianoroll");
    }
    return unpack_pianoroll(packed);
}

void write_roll_file(const std::string& path, const Pianoroll& roll) {
    std::array<std::uint8_t, TrackLayout::bar_cells> packed = pack_pianoroll(roll);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(packed.data()), packed.size());
    if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<std::size_t> shuffled_order(std::size_t n, Rng& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)));
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

struct ExtractArgs {
    std::string midi_dir, out;
    double threshold = k_default_loop_threshold;
};

int cmd_extract(const ExtractArgs& a) {
    std::vector<fs::path> files;
    for (const fs::directory_entry& entry : fs::directory_iterator(a.midi_dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (ext == ".mid" || ext == ".midi") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no .mid files in " + a.midi_dir);

    std::vector<QuantizedSong> songs;
    for (const fs::path& f : files) {
        try {
            MidiSong song = parse_smf_file(f.string());
            song.source_id = f.filename().string();
            songs.push_back(song_to_pianoroll(song));
        } catch (const std::exception& e) {
            std::cerr << "skipping " << f.filename().string() << ": " << e.what() << "\n";
        }
    }
    if (songs.empty()) throw std::runtime_error("no usable songs in " + a.midi_dir);

    LoopDataset dataset = build_dataset(songs, a.threshold);
    save_dataset(dataset, a.out);
    std::cout << files.size() << " files, " << songs.size() << " songs quantized, "
              << dataset.records.size() << " loops (train " << dataset.count(Split::train)
              << ", valid " << dataset.count(Split::valid) << ", test "
              << dataset.count(Split::test) << ") -> " << a.out << "\n";
    return 0;
}

struct TrainArgs {
    std::string dataset, model, out;
    long epochs = 0;
    int batch = 0;
    unsigned long long seed = 0;
    double lr_max = 1e-3, lr_min = 5e-6, beta_max = 1.0;
    int codebook = 512, latent_len = 32, latent_dim = 16;
    double commitment = 0.25;
};

int cmd_train(const TrainArgs& a) {
    LoopDataset dataset = load_dataset(a.dataset);
    std::vector<Pianoroll> train_rolls = dataset.rolls(Split::train);
    if (train_rolls.empty()) throw std::runtime_error("training split is empty");

    Rng rng(a.seed);
    std::ofstream log(a.out + ".log");
    if (!log) throw std::runtime_error("cannot write " + a.out + ".log");

    if (a.model == "vq-vae") {
        VqVaeConfig cfg;
        cfg.codebook_size = a.codebook;
        cfg.latent_len = a.latent_len;
        cfg.latent_dim = a.latent_dim;
        cfg.commitment = a.commitment;
        VqVae model(cfg, rng);
        std::vector<Parameter*> params;
        model.collect_params(params);
        AdamW opt(params);

        for (long epoch = 0; epoch < a.epochs; ++epoch) {
            double lr = cosine_lr(epoch, std::max<long>(1, a.epochs - 1), a.lr_max, a.lr_min);
            std::vector<std::size_t> order = shuffled_order(train_rolls.size(), rng);
            double recon_sum = 0.0, commit_sum = 0.0;
            long seen = 0;
            for (std::size_t start = 0; start < order.size(); start += a.batch) {
                std::size_t bs = std::min<std::size_t>(a.batch, order.size() - start);
                std::vector<Pianoroll> batch;
                batch.reserve(bs);
                for (std::size_t i = 0; i < bs; ++i) batch.push_back(train_rolls[order[start + i]]);
                opt.zero_grad();
                VqLossReport report = model.train_step(rolls_to_tensor(batch), rng);
                opt.step(lr);
                recon_sum += report.recon * static_cast<double>(bs);
                commit_sum += report.commitment * static_cast<double>(bs);
                seen += static_cast<long>(bs);
            }
            double recon = recon_sum / seen, commit = commit_sum / seen;
            log << epoch << ' ' << lr << ' ' << recon << ' ' << commit << ' ' << cfg.commitment
                << '\n';
            std::cout << "epoch " << epoch << " lr " << lr << " recon " << recon << " commit "
                      << commit << "\n";
        }
        StateMap state;
        model.collect_state(state);
        save_checkpoint(a.out, "vq-vae", state);
    } else {
        VaeKind kind = vae_kind_from_string(a.model);
        std::unique_ptr<ContinuousVae> model = make_vae(kind, rng);
        std::vector<Parameter*> params;
        model->collect_params(params);
        AdamW opt(params);

        VaeTrainConfig cfg;
        cfg.epochs = a.epochs;
        cfg.batch_size = a.batch;
        cfg.lr_max = a.lr_max;
        cfg.lr_min = a.lr_min;
        cfg.beta.max_beta = a.beta_max;

        for (long epoch = 0; epoch < a.epochs; ++epoch) {
            double lr = cosine_lr(epoch, std::max<long>(1, a.epochs - 1), a.lr_max, a.lr_min);
            VaeLossReport report = vae_train_epoch(*model, opt, train_rolls, epoch, cfg, rng);
            log << epoch << ' ' << lr << ' ' << report.recon << ' ' << report.kl << ' '
                << report.beta << '\n';
            std::cout << "epoch " << epoch << " lr " << lr << " recon " << report.recon << " kl "
                      << report.kl << " beta " << report.beta << "\n";
        }
        StateMap state;
        model->collect_state(state);
        save_checkpoint(a.out, vae_kind_name(kind), state);
    }
    std::cout << "saved " << a.out << "\n";
    return 0;
}

struct TrainPriorArgs {
    std::string vqvae, dataset, out, codes_out;
    long epochs = 200;
    int batch = 64;
    unsigned long long seed = 0;
    double lr_max = 1e-3, lr_min = 5e-6;
};

int cmd_train_prior(const TrainPriorArgs& a) {
    Checkpoint ckpt = load_checkpoint(a.vqvae);
    if (ckpt.kind != "vq-vae") {
        throw std::runtime_error(a.vqvae + " holds a " + ckpt.kind + " model, not vq-vae");
    }
    Rng rng(a.seed);
    VqVae vq = vqvae_from_checkpoint(ckpt, rng);

    LoopDataset dataset = load_dataset(a.dataset);
    std::vector<Pianoroll> train_rolls = dataset.rolls(Split::train);
    if (train_rolls.empty()) throw std::runtime_error("training split is empty");

    std::vector<std::vector<int>> codes = vq.encode_to_codes(train_rolls);
    std::string codes_path = a.codes_out.empty() ? a.out + ".codes" : a.codes_out;
    save_codes(codes_path, vq.config().codebook_size, vq.config().latent_len, codes);
    std::cout << "encoded " << codes.size() << " sequences -> " << codes_path << "\n";

    PriorConfig pc;
    pc.vocab = vq.config().codebook_size;
    pc.seq_len = vq.config().latent_len;
    CodePrior prior(pc, rng);
    PriorTrainConfig tc;
    tc.epochs = static_cast<int>(a.epochs);
    tc.batch_size = a.batch;
    tc.lr_max = a.lr_max;
    tc.lr_min = a.lr_min;
    double accuracy = train_prior(prior, codes, tc, rng);

    StateMap state;
    prior.collect_state(state);
    save_checkpoint(a.out, "prior", state);
    std::cout << "teacher-forcing accuracy " << accuracy << ", saved " << a.out << "\n";
    return 0;
}

struct SampleArgs {
    std::string model, prior, out;
    int n = 0;
    double temperature = 1.0;
    bool argmax = false;
    bool loop_consistency = false;
    unsigned long long seed = 0;
};

int cmd_sample(const SampleArgs& a) {
    fs::create_directories(a.out);
    Rng rng(a.seed);
    std::string kind = peek_checkpoint_kind(a.model);

    std::vector<Pianoroll> rolls;
    if (kind == "vq-vae") {
        if (a.prior.empty()) {
            throw std::runtime_error("sampling a vq-vae model needs --prior");
        }
        VqVae vq = vqvae_from_checkpoint(load_checkpoint(a.model), rng);
        Checkpoint pc = load_checkpoint(a.prior);
        if (pc.kind != "prior") {
            throw std::runtime_error(a.prior + " holds a " + pc.kind + " model, not prior");
        }
        CodePrior prior = prior_from_checkpoint(pc, rng);

        std::vector<std::vector<int>> codes;
        codes.reserve(a.n);
        for (int i = 0; i < a.n; ++i) {
            std::vector<int> c = a.argmax ? prior.sample_argmax() : prior.sample(rng, a.temperature);
            if (a.loop_consistency) c = manipulate_codes(c);
            codes.push_back(std::move(c));
        }
        rolls = vq.decode_codes_batch(codes);
        save_codes((fs::path(a.out) / "codes.code").string(), vq.config().codebook_size,
                   vq.config().latent_len, codes);
    } else {
        if (a.loop_consistency) {
            throw std::runtime_error("--loop-consistency needs a discrete (vq-vae) model");
        }
        VaeKind vk = vae_kind_from_string(kind);
        std::unique_ptr<ContinuousVae> model = make_vae(vk, rng);
        StateMap state;
        model->collect_state(state);
        restore_state(load_checkpoint(a.model), state);
        rolls = vae_generate(*model, a.n, rng);
    }

    for (int i = 0; i < static_cast<int>(rolls.size()); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%04d.roll", i);
        write_roll_file((fs::path(a.out) / name).string(), rolls[i]);
    }
    std::cout << "wrote " << rolls.size() << " samples to " << a.out << "\n";
    return 0;
}

struct EvaluateArgs {
    std::string generated, train, codes, out;
};

int cmd_evaluate(const EvaluateArgs& a) {
    std::vector<fs::path> files;
    for (const fs::directory_entry& entry : fs::directory_iterator(a.generated)) {
        if (entry.is_regular_file() && entry.path().extension() == ".roll") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no .roll files in " + a.generated);
    std::vector<Pianoroll> rolls;
    rolls.reserve(files.size());
    for (const fs::path& f : files) rolls.push_back(read_roll_file(f.string()));

    LoopDataset dataset = load_dataset(a.train);

    std::vector<std::vector<int>> gen_codes, train_codes;
    bool have_gen_codes = false, have_train_codes = false;
    fs::path gen_codes_path = fs::path(a.generated) / "codes.code";
    if (fs::exists(gen_codes_path)) {
        CodeCache cache = load_codes(gen_codes_path.string());
        gen_codes = std::move(cache.codes);
        have_gen_codes = true;
    }
    if (!a.codes.empty()) {
        CodeCache cache = load_codes(a.codes);
        train_codes = std::move(cache.codes);
        have_train_codes = true;
    }

    MetricReport report = evaluate_all(rolls, have_gen_codes ? &gen_codes : nullptr,
                                       have_train_codes ? &train_codes : nullptr);
    std::string json = metric_report_json(report);
    std::ofstream out(a.out);
    if (!out) throw std::runtime_error("cannot write " + a.out);
    out << json << "\n";
    std::cout << json << "\n";
    std::cout << rolls.size() << " generated samples scored against " << dataset.records.size()
              << " dataset loops -> " << a.out << "\n";
    return 0;
}

struct ExportArgs {
    std::string in, out;
    double bpm = 120.0;
};

int cmd_export_midi(const ExportArgs& a) {
    export_midi_file(read_roll_file(a.in), a.out, a.bpm);
    std::cout << "wrote " << a.out << "\n";
    return 0;
}

struct InspectArgs {
    std::string vqvae, dataset, out;
};

int cmd_inspect_codes(const InspectArgs& a) {
    Checkpoint ckpt = load_checkpoint(a.vqvae);
    if (ckpt.kind != "vq-vae") {
        throw std::runtime_error(a.vqvae + " holds a " + ckpt.kind + " model, not vq-vae");
    }
    Rng rng(0);
    VqVae vq = vqvae_from_checkpoint(ckpt, rng);
    LoopDataset dataset = load_dataset(a.dataset);
    std::vector<Pianoroll> train_rolls = dataset.rolls(Split::train);
    if (train_rolls.empty()) throw std::runtime_error("training split is empty");

    std::vector<std::vector<int>> codes = vq.encode_to_codes(train_rolls);
    CodeFrequencyReport report = code_frequency_report(codes, vq.config().codebook_size);

    fs::create_directories(a.out);
    nlohmann::json j;
    j["n_sequences"] = codes.size();
    j["positions"] = report.most_frequent.size();
    j["most_frequent"] = report.most_frequent;
    j["least_frequent"] = report.least_frequent;
    j["histogram"] = report.histogram;
    std::ofstream out((fs::path(a.out) / "report.json").string());
    if (!out) throw std::runtime_error("cannot write report.json in " + a.out);
    out << j.dump(2) << "\n";

    write_roll_file((fs::path(a.out) / "most_frequent.roll").string(),
                    vq.decode_codes(report.most_frequent));
    write_roll_file((fs::path(a.out) / "least_frequent.roll").string(),
                    vq.decode_codes(report.least_frequent));
    std::cout << "wrote frequency report for " << codes.size() << " sequences to " << a.out << "\n";
    return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"8-bar bass/drum loop mining, generation, and evaluation"};
    app.require_subcommand(1);

    ExtractArgs ext;
    CLI::App* c_ext = app.add_subcommand("extract", "Mine loops from a directory of MIDI files");
    c_ext->add_option("--midi-dir", ext.midi_dir, "directory of .mid files")->required();
    c_ext->add_option("--out", ext.out, "dataset file to write")->required();
    c_ext->add_option("--threshold", ext.threshold, "repetition threshold");

    TrainArgs tr;
    CLI::App* c_tr = app.add_subcommand("train", "Train a generative model on a dataset");
    c_tr->add_option("--dataset", tr.dataset, "dataset file")->required();
    c_tr->add_option("--model", tr.model, "ar-lstm-vae | nonar-lstm-vae | cnn-vae | vq-vae")
        ->required();
    c_tr->add_option("--epochs", tr.epochs, "training epochs")->required();
    c_tr->add_option("--batch", tr.batch, "batch size")->required();
    c_tr->add_option("--seed", tr.seed, "rng seed")->required();
    c_tr->add_option("--out", tr.out, "checkpoint file to write")->required();
    c_tr->add_option("--lr-max", tr.lr_max, "peak learning rate");
    c_tr->add_option("--lr-min", tr.lr_min, "final learning rate");
    c_tr->add_option("--beta-max", tr.beta_max, "kl weight after warmup (continuous models)");
    c_tr->add_option("--codebook", tr.codebook, "dictionary size (vq-vae)");
    c_tr->add_option("--latent-len", tr.latent_len, "code positions per loop (vq-vae)");
    c_tr->add_option("--latent-dim", tr.latent_dim, "embedding width (vq-vae)");
    c_tr->add_option("--commitment", tr.commitment, "commitment weight (vq-vae)");

    TrainPriorArgs tp;
    CLI::App* c_tp = app.add_subcommand("train-prior", "Train the code prior of a vq-vae model");
    c_tp->add_option("--vqvae", tp.vqvae, "vq-vae checkpoint")->required();
    c_tp->add_option("--dataset", tp.dataset, "dataset file")->required();
    c_tp->add_option("--out", tp.out, "prior checkpoint to write")->required();
    c_tp->add_option("--codes-out", tp.codes_out, "codes cache path (default <out>.codes)");
    c_tp->add_option("--epochs", tp.epochs, "training epochs");
    c_tp->add_option("--batch", tp.batch, "batch size");
    c_tp->add_option("--seed", tp.seed, "rng seed");
    c_tp->add_option("--lr-max", tp.lr_max, "peak learning rate");
    c_tp->add_option("--lr-min", tp.lr_min, "final learning rate");

    SampleArgs sa;
    CLI::App* c_sa = app.add_subcommand("sample", "Generate loops from a trained model");
    c_sa->add_option("--model", sa.model, "model checkpoint")->required();
    c_sa->add_option("--prior", sa.prior, "prior checkpoint (vq-vae models)");
    c_sa->add_option("--n", sa.n, "number of samples")->required()->check(CLI::PositiveNumber);
    CLI::Option* o_temp = c_sa->add_option("--temperature", sa.temperature, "softmax temperature");
    CLI::Option* o_argmax = c_sa->add_flag("--argmax", sa.argmax, "take modal indices instead");
    o_temp->excludes(o_argmax);
    o_argmax->excludes(o_temp);
    c_sa->add_flag("--loop-consistency", sa.loop_consistency,
                   "copy opening codes over the loop midpoint");
    c_sa->add_option("--seed", sa.seed, "rng seed")->required();
    c_sa->add_option("--out", sa.out, "output directory")->required();

    EvaluateArgs ev;
    CLI::App* c_ev = app.add_subcommand("evaluate", "Score a directory of generated loops");
    c_ev->add_option("--generated", ev.generated, "directory of .roll files")->required();
    c_ev->add_option("--train", ev.train, "training dataset file")->required();
    c_ev->add_option("--codes", ev.codes, "training codes cache");
    c_ev->add_option("--out", ev.out, "report file to write")->required();

    ExportArgs ex;
    CLI::App* c_ex = app.add_subcommand("export-midi", "Convert a packed pianoroll to MIDI");
    c_ex->add_option("--in", ex.in, "packed .roll file")->required();
    c_ex->add_option("--out", ex.out, "MIDI file to write")->required();
    c_ex->add_option("--bpm", ex.bpm, "playback tempo")->check(CLI::PositiveNumber);

    InspectArgs in;
    CLI::App* c_in = app.add_subcommand("inspect-codes", "Per-position code frequency report");
    c_in->add_option("--vqvae", in.vqvae, "vq-vae checkpoint")->required();
    c_in->add_option("--dataset", in.dataset, "dataset file")->required();
    c_in->add_option("--out", in.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (c_ext->parsed()) return cmd_extract(ext);
        if (c_tr->parsed()) return cmd_train(tr);
        if (c_tp->parsed()) return cmd_train_prior(tp);
        if (c_sa->parsed()) return cmd_sample(sa);
        if (c_ev->parsed()) return cmd_evaluate(ev);
        if (c_ex->parsed()) return cmd_export_midi(ex);
        if (c_in->parsed()) return cmd_inspect_codes(in);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace loopgen
