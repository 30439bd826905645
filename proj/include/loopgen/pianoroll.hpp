#ifndef LOOPGEN_PIANOROLL_HPP
#define LOOPGEN_PIANOROLL_HPP

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace loopgen {

// Fixed grid: 8 bars of 16 sixteenth steps, 84 bass rows on top of 9 drum rows.
struct TrackLayout {
    static constexpr int steps_per_bar = 16;
    static constexpr int bars = 8;
    static constexpr int total_steps = steps_per_bar * bars;  // 128
    static constexpr int bass_rows = 84;
    static constexpr int drum_rows = 9;
    static constexpr int rows = bass_rows + drum_rows;  // 93
    static constexpr int bar_cells = steps_per_bar * rows;  // 1488
    static constexpr int total_cells = total_steps * rows;  // 11904

    static constexpr int bass_low_pitch = 24;   // C1
    static constexpr int bass_high_pitch = 107; // B7

    // Bass row r holds MIDI pitch 24 + r.
    static constexpr int pitch_for_bass_row(int row) { return bass_low_pitch + row; }
    static constexpr int bass_row_for_pitch(int pitch) { return pitch - bass_low_pitch; }

    // Octave-shifts an arbitrary MIDI pitch into [24, 107].
    static int fold_bass_pitch(int pitch);
};

// Drum rows 84..92 in fixed order.
enum DrumVoice {
    drum_kick = 0,
    drum_snare,
    drum_closed_hat,
    drum_open_hat,
    drum_low_tom,
    drum_mid_tom,
    drum_high_tom,
    drum_crash,
    drum_ride,
};

constexpr int drum_row(DrumVoice v) { return TrackLayout::bass_rows + static_cast<int>(v); }

// Binary 128x93 grid. cells[t * rows + r] == 1 means row r sounds at step t;
// bars are contiguous slices of the time axis.
struct Pianoroll {
    std::array<std::uint8_t, TrackLayout::total_cells> cells{};

    bool get(int step, int row) const { return cells[step * TrackLayout::rows + row] != 0; }
    void set(int step, int row, bool on) { cells[step * TrackLayout::rows + row] = on ? 1 : 0; }

    std::span<const std::uint8_t> bar(int index) const {
        return {cells.data() + index * TrackLayout::bar_cells, TrackLayout::bar_cells};
    }

    bool operator==(const Pianoroll&) const = default;
};

// A maximal contiguous run of 1s in one row.
struct Note {
    int row;
    int onset;
    int length;

    bool operator==(const Note&) const = default;
};

// Fraction of differing cells between two equally sized slices. Throws
// std::invalid_argument on shape mismatch.
double hamming_bar_distance(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

// Keeps only the lowest active bass row per step; drum rows untouched.
Pianoroll enforce_lowest_bass(const Pianoroll& p);

std::vector<Note> pianoroll_to_notes(const Pianoroll& p);
Pianoroll notes_to_pianoroll(const std::vector<Note>& notes);

// Bit-packed form: 11904 bits in time-then-pitch order, MSB first = 1488 bytes.
std::array<std::uint8_t, TrackLayout::bar_cells> pack_pianoroll(const Pianoroll& p);
Pianoroll unpack_pianoroll(std::span<const std::uint8_t> bytes);

}  // namespace loopgen

#endif
