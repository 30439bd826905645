#include "loopgen/pianoroll.hpp"

#include <stdexcept>
#include <string>

namespace loopgen {

int TrackLayout::fold_bass_pitch(int pitch) {
    while (pitch < bass_low_pitch) pitch += 12;
    while (pitch > bass_high_pitch) pitch -= 12;
    return pitch;
}

double hamming_bar_distance(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("hamming_bar_distance: slice sizes differ (" +
                                    std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    }
    std::size_t diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) ++diff;
    }
    return static_cast<double>(diff) / static_cast<double>(a.size());
}

Pianoroll enforce_lowest_bass(const Pianoroll& p) {
    Pianoroll out = p;
    for (int t = 0; t < TrackLayout::total_steps; ++t) {
        bool seen = false;
        for (int r = 0; r < TrackLayout::bass_rows; ++r) {
            if (!out.get(t, r)) continue;
            if (seen) {
                out.set(t, r, false);
            } else {
                seen = true;
            }
        }
    }
    return out;
}

std::vector<Note> pianoroll_to_notes(const Pianoroll& p) {
    std::vector<Note> notes;
    for (int r = 0; r < TrackLayout::rows; ++r) {
        int run_start = -1;
        for (int t = 0; t <= TrackLayout::total_steps; ++t) {
            bool on = t < TrackLayout::total_steps && p.get(t, r);
            if (on && run_start < 0) {
                run_start = t;
            } else if (!on && run_start >= 0) {
                notes.push_back({r, run_start, t - run_start});
                run_start = -1;
            }
        }
    }
    return notes;
}

Pianoroll notes_to_pianoroll(const std::vector<Note>& notes) {
    Pianoroll p;
    for (const Note& n : notes) {
        if (n.row < 0 || n.row >= TrackLayout::rows || n.onset < 0 || n.length < 1 ||
            n.onset + n.length > TrackLayout::total_steps) {
            throw std::invalid_argument("notes_to_pianoroll: note out of range");
        }
        for (int t = n.onset; t < n.onset + n.length; ++t) p.set(t, n.row, true);
    }
    return p;
}

std::array<std::uint8_t, TrackLayout::bar_cells> pack_pianoroll(const Pianoroll& p) {
    std::array<std::uint8_t, TrackLayout::bar_cells> out{};
    for (int i = 0; i < TrackLayout::total_cells; ++i) {
        if (p.cells[i]) out[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
    }
    return out;
}

Pianoroll unpack_pianoroll(std::span<const std::uint8_t> bytes) {
    if (bytes.size() != TrackLayout::bar_cells) {
        throw std::invalid_argument("unpack_pianoroll: expected " +
                                    std::to_string(TrackLayout::bar_cells) + " bytes, got " +
                                    std::to_string(bytes.size()));
    }
    Pianoroll p;
    for (int i = 0; i < TrackLayout::total_cells; ++i) {
        p.cells[i] = (bytes[i / 8] >> (7 - i % 8)) & 1u;
    }
    return p;
}

}  // namespace loopgen
