#ifndef LOOPGEN_METRICS_HPP
#define LOOPGEN_METRICS_HPP

#include <span>
#include <string>
#include <vector>

#include "loopgen/pianoroll.hpp"
#include "loopgen/vae.hpp"
#include "loopgen/vqvae.hpp"

namespace loopgen {

// Musical metrics over a generated corpus. os/us exist only when code
// sequences are available (discrete model); recon only when a model was
// scored against a data split.
struct MetricReport {
    int n_samples = 0;
    double hd = 0.0;   // mean first/fifth-bar hamming distance
    double fnd = 0.0;  // fraction with kick and crash at step 0
    double fnb = 0.0;  // fraction with bass at step 0
    double db = 0.0;   // mean fraction of steps with duplicate bass
    double up = 0.0;   // mean distinct active rows per bar
    double nd = 0.0;   // mean note onsets per bar, per sixteenth
    bool has_os = false;
    bool has_us = false;
    bool has_recon = false;
    double os = 0.0;  // fraction of generated code sequences found in training
    double us = 0.0;  // distinct generated code sequences / generated
    double recon = 0.0;
};

double metric_hd(std::span<const Pianoroll> samples);
void metric_first_note(std::span<const Pianoroll> samples, double& fnd, double& fnb);
double metric_dup_bass(std::span<const Pianoroll> samples);
void metric_pitch_density(std::span<const Pianoroll> samples, double& up, double& nd);
void metric_overlap_unique(const std::vector<std::vector<int>>& generated,
                           const std::vector<std::vector<int>>& training, double& os, double& us);

// Fraction of cells where the two rolls disagree.
double mismatch_rate(const Pianoroll& a, const Pianoroll& b);

// Mean per-cell mismatch between input and thresholded reconstruction.
double reconstruction_error(ContinuousVae& model, std::span<const Pianoroll> split);
double reconstruction_error(VqVae& model, std::span<const Pianoroll> split);

// Pass nullptr for whichever code corpus is unavailable; os needs both,
// us needs the generated codes.
MetricReport evaluate_all(std::span<const Pianoroll> generated,
                          const std::vector<std::vector<int>>* generated_codes,
                          const std::vector<std::vector<int>>* training_codes);

std::string metric_report_json(const MetricReport& report);

}  // namespace loopgen

#endif
