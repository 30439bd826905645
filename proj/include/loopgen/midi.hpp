#ifndef LOOPGEN_MIDI_HPP
#define LOOPGEN_MIDI_HPP

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "loopgen/pianoroll.hpp"

namespace loopgen {

enum class MidiEventKind {
    note_on,
    note_off,
    program_change,
    time_signature,
    end_of_track,
};

// a/b carry kind-specific payloads: pitch/velocity for notes, program for
// program changes, numerator/denominator for time signatures.
struct MidiEvent {
    long tick = 0;
    int channel = 0;  // -1 for meta events
    MidiEventKind kind = MidiEventKind::note_on;
    int a = 0;
    int b = 0;
};

struct MidiSong {
    int ticks_per_quarter = 480;
    std::vector<MidiEvent> events;  // tick-sorted, track order preserved on ties
    std::string source_id;
};

// One bar on the sixteenth grid.
using BarGrid = std::array<std::uint8_t, TrackLayout::bar_cells>;

struct QuantizedSong {
    std::string source_id;
    std::vector<BarGrid> bars;

    bool bar_cell(int bar, int step, int row) const {
        return bars[bar][step * TrackLayout::rows + row] != 0;
    }
};

class MidiParseError : public std::runtime_error {
public:
    MidiParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

// SMF format 0/1. Note-ons with velocity 0 are recorded as note-offs.
MidiSong parse_smf(std::span<const std::uint8_t> bytes, std::string source_id = "");
MidiSong parse_smf_file(const std::string& path);

// True iff every time-signature event is 4/4 (or none exists).
bool is_four_four(const MidiSong& song);

// GM percussion pitch -> drum row, or -1 when the voice is dropped.
int drum_row_for_pitch(int gm_pitch);

// Sixteenth-grid quantization of bass (program 32..39) and channel-10 drums.
// Throws std::invalid_argument on non-4/4 input.
QuantizedSong song_to_pianoroll(const MidiSong& song);

}  // namespace loopgen

#endif
