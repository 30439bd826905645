#include "loopgen/metrics.hpp"

#include <set>
#include <stdexcept>

#include "json.hpp"
#include "loopgen/batch.hpp"

namespace loopgen {

namespace {

void require_nonempty(std::span<const Pianoroll> samples, const char* what) {
    if (samples.empty()) throw std::invalid_argument(std::string(what) + ": empty sample set");
}

}  // namespace

double metric_hd(std::span<const Pianoroll> samples) {
    require_nonempty(samples, "metric_hd");
    double sum = 0.0;
    for (const Pianoroll& p : samples) sum += hamming_bar_distance(p.bar(0), p.bar(4));
    return sum / static_cast<double>(samples.size());
}

void metric_first_note(std::span<const Pianoroll> samples, double& fnd, double& fnb) {
    require_nonempty(samples, "metric_first_note");
    long drum_hits = 0, bass_hits = 0;
    for (const Pianoroll& p : samples) {
        if (p.get(0, drum_row(drum_kick)) && p.get(0, drum_row(drum_crash))) ++drum_hits;
        bool bass = false;
        for (int r = 0; r < TrackLayout::bass_rows && !bass; ++r) bass = p.get(0, r) != 0;
        if (bass) ++bass_hits;
    }
    fnd = static_cast<double>(drum_hits) / static_cast<double>(samples.size());
    fnb = static_cast<double>(bass_hits) / static_cast<double>(samples.size());
}

double metric_dup_bass(std::span<const Pianoroll> samples) {
    require_nonempty(samples, "metric_dup_bass");
    double sum = 0.0;
    for (const Pianoroll& p : samples) {
        int dup_steps = 0;
        for (int t = 0; t < TrackLayout::total_steps; ++t) {
            int active = 0;
            for (int r = 0; r < TrackLayout::bass_rows; ++r) active += p.get(t, r);
            if (active >= 2) ++dup_steps;
        }
        sum += static_cast<double>(dup_steps) / TrackLayout::total_steps;
    }
    return sum / static_cast<double>(samples.size());
}

void metric_pitch_density(std::span<const Pianoroll> samples, double& up, double& nd) {
    require_nonempty(samples, "metric_pitch_density");
    double up_sum = 0.0, nd_sum = 0.0;
    long bars = 0;
    for (const Pianoroll& p : samples) {
        std::vector<int> onsets_per_bar(TrackLayout::bars, 0);
        for (const Note& n : pianoroll_to_notes(p)) {
            ++onsets_per_bar[n.onset / TrackLayout::steps_per_bar];
        }
        for (int b = 0; b < TrackLayout::bars; ++b) {
            int rows_used = 0;
            for (int r = 0; r < TrackLayout::rows; ++r) {
                bool active = false;
                for (int s = 0; s < TrackLayout::steps_per_bar && !active; ++s) {
                    active = p.get(b * TrackLayout::steps_per_bar + s, r) != 0;
                }
                if (active) ++rows_used;
            }
            up_sum += rows_used;
            nd_sum += static_cast<double>(onsets_per_bar[b]) / TrackLayout::steps_per_bar;
            ++bars;
        }
    }
    up = up_sum / static_cast<double>(bars);
    nd = nd_sum / static_cast<double>(bars);
}

void metric_overlap_unique(const std::vector<std::vector<int>>& generated,
                           const std::vector<std::vector<int>>& training, double& os, double& us) {
    if (generated.empty()) throw std::invalid_argument("metric_overlap_unique: empty generated set");
    std::set<std::vector<int>> train_set(training.begin(), training.end());
    std::set<std::vector<int>> distinct;
    long overlapped = 0;
    for (const std::vector<int>& c : generated) {
        if (train_set.count(c)) ++overlapped;
        distinct.insert(c);
    }
    os = static_cast<double>(overlapped) / static_cast<double>(generated.size());
    us = static_cast<double>(distinct.size()) / static_cast<double>(generated.size());
}

double mismatch_rate(const Pianoroll& a, const Pianoroll& b) {
    long diff = 0;
    for (int i = 0; i < TrackLayout::total_cells; ++i) diff += a.cells[i] != b.cells[i];
    return static_cast<double>(diff) / TrackLayout::total_cells;
}

namespace {

double mean_mismatch(std::span<const Pianoroll> split, std::span<const Pianoroll> recon) {
    double sum = 0.0;
    for (std::size_t i = 0; i < split.size(); ++i) sum += mismatch_rate(split[i], recon[i]);
    return sum / static_cast<double>(split.size());
}

}  // namespace

double reconstruction_error(ContinuousVae& model, std::span<const Pianoroll> split) {
    if (split.empty()) throw std::invalid_argument("reconstruction_error: empty split");
    std::vector<Pianoroll> recon = vae_reconstruct(model, split);
    return mean_mismatch(split, recon);
}

double reconstruction_error(VqVae& model, std::span<const Pianoroll> split) {
    if (split.empty()) throw std::invalid_argument("reconstruction_error: empty split");
    std::vector<Pianoroll> recon = model.decode_codes_batch(model.encode_to_codes(split));
    return mean_mismatch(split, recon);
}

MetricReport evaluate_all(std::span<const Pianoroll> generated,
                          const std::vector<std::vector<int>>* generated_codes,
                          const std::vector<std::vector<int>>* training_codes) {
    MetricReport report;
    report.n_samples = static_cast<int>(generated.size());
    report.hd = metric_hd(generated);
    metric_first_note(generated, report.fnd, report.fnb);
    report.db = metric_dup_bass(generated);
    metric_pitch_density(generated, report.up, report.nd);
    if (generated_codes) {
        static const std::vector<std::vector<int>> no_codes;
        double os = 0.0, us = 0.0;
        metric_overlap_unique(*generated_codes, training_codes ? *training_codes : no_codes, os,
                              us);
        report.us = us;
        report.has_us = true;
        if (training_codes) {
            report.os = os;
            report.has_os = true;
        }
    }
    return report;
}

std::string metric_report_json(const MetricReport& report) {
    nlohmann::json j;
    j["n_samples"] = report.n_samples;
    j["hd"] = report.hd;
    j["fnd"] = report.fnd;
    j["fnb"] = report.fnb;
    j["db"] = report.db;
    j["up"] = report.up;
    j["nd"] = report.nd;
    if (report.has_os) j["os"] = report.os;
    if (report.has_us) j["us"] = report.us;
    if (report.has_recon) j["recon"] = report.recon;
    return j.dump(2);
}

}  // namespace loopgen
