#ifndef LOOPGEN_LOOP_EXTRACT_HPP
#define LOOPGEN_LOOP_EXTRACT_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "loopgen/midi.hpp"
#include "loopgen/pianoroll.hpp"

namespace loopgen {

enum class Split { train = 0, valid = 1, test = 2 };

// Why a candidate window was rejected (none = it passed).
enum class LoopRule { none, repetition, kick_on_one, crash_on_one, bass_on_one };

const char* loop_rule_name(LoopRule rule);

struct LoopCheckResult {
    bool ok = false;
    LoopRule failed = LoopRule::none;
    double bar_distance = 0.0;  // normalized hamming distance between bars 0 and 4
};

inline constexpr double k_default_loop_threshold = 0.0015;

// All four loop conditions on an 8-bar window (bass already monophonic).
LoopCheckResult loop_conditions_check(const Pianoroll& window,
                                      double threshold = k_default_loop_threshold);

struct LoopRecord {
    std::string source_id;
    int bar_offset = 0;
    Split split = Split::train;
    Pianoroll roll;
};

// Copy 8 consecutive bars starting at bar_offset into a loop-sized roll.
Pianoroll window_to_pianoroll(const QuantizedSong& song, int bar_offset);

// Slide an 8-bar window over the song (stride one bar); a hit emits the loop
// and skips past it so overlapping copies of the same loop are not collected.
std::vector<LoopRecord> scan_song(const QuantizedSong& song,
                                  double threshold = k_default_loop_threshold);

struct LoopDataset {
    double threshold = k_default_loop_threshold;
    std::vector<LoopRecord> records;

    std::vector<Pianoroll> rolls(Split split) const;
    std::size_t count(Split split) const;
};

// Extract loops from every song; songs are split 80/10/10 (train/valid/test)
// in input order and each loop inherits its song's split.
LoopDataset build_dataset(const std::vector<QuantizedSong>& songs,
                          double threshold = k_default_loop_threshold);

void save_dataset(const LoopDataset& dataset, const std::string& path);
LoopDataset load_dataset(const std::string& path);

}  // namespace loopgen

#endif
