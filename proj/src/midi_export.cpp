#include "loopgen/midi_export.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace loopgen {

namespace {

constexpr int k_division = 480;      // ticks per quarter note
constexpr int k_ticks_per_step = k_division / 4;
constexpr int k_bass_program = 32;   // acoustic bass
constexpr int k_bass_velocity = 80;
constexpr int k_drum_velocity = 100;

// GM percussion pitch for each drum row.
constexpr int k_drum_pitch[TrackLayout::drum_rows] = {36, 38, 42, 46, 41, 47, 50, 49, 51};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(v >> 24 & 0xff);
    out.push_back(v >> 16 & 0xff);
    out.push_back(v >> 8 & 0xff);
    out.push_back(v & 0xff);
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(v >> 8 & 0xff);
    out.push_back(v & 0xff);
}

void put_vlq(std::vector<std::uint8_t>& out, long v) {
    if (v < 0) throw std::invalid_argument("negative delta time");
    std::uint8_t stack[5];
    int n = 0;
    do {
        stack[n++] = v & 0x7f;
        v >>= 7;
    } while (v > 0);
    while (n > 1) out.push_back(stack[--n] | 0x80);
    out.push_back(stack[0]);
}

struct TrackWriter {
    std::vector<std::uint8_t> data;
    long last_tick = 0;

    void delta(long tick) {
        put_vlq(data, tick - last_tick);
        last_tick = tick;
    }

    void note_on(long tick, int channel, int pitch, int velocity) {
        delta(tick);
        data.push_back(0x90 | channel);
        data.push_back(pitch);
        data.push_back(velocity);
    }

    void note_off(long tick, int channel, int pitch) {
        delta(tick);
        data.push_back(0x80 | channel);
        data.push_back(pitch);
        data.push_back(0);
    }

    void end_of_track(long tick) {
        delta(tick);
        data.push_back(0xff);
        data.push_back(0x2f);
        data.push_back(0x00);
    }

    void append_chunk(std::vector<std::uint8_t>& out) const {
        out.push_back('M'); out.push_back('T'); out.push_back('r'); out.push_back('k');
        put_u32(out, static_cast<std::uint32_t>(data.size()));
        out.insert(out.end(), data.begin(), data.end());
    }
};

}  // namespace

std::vector<std::uint8_t> export_midi(const Pianoroll& roll, double bpm) {
    if (!(bpm > 0)) throw std::invalid_argument("export_midi: bpm must be positive");
    const long song_end = static_cast<long>(TrackLayout::total_steps) * k_ticks_per_step;

    // Meta track: time signature and tempo at tick 0.
    TrackWriter meta;
    meta.delta(0);
    meta.data.insert(meta.data.end(), {0xff, 0x58, 0x04, 0x04, 0x02, 0x18, 0x08});
    long usec_per_quarter = std::lround(60.0e6 / bpm);
    meta.delta(0);
    meta.data.insert(meta.data.end(), {0xff, 0x51, 0x03});
    meta.data.push_back(usec_per_quarter >> 16 & 0xff);
    meta.data.push_back(usec_per_quarter >> 8 & 0xff);
    meta.data.push_back(usec_per_quarter & 0xff);
    meta.end_of_track(0);

    TrackWriter bass;
    bass.delta(0);
    bass.data.push_back(0xc0);
    bass.data.push_back(k_bass_program);
    // gather note spans row by row, then sort into tick order
    {
        struct Ev {
            long tick;
            bool on;
            int pitch;
        };
        std::vector<Ev> evs;
        for (int row = 0; row < TrackLayout::bass_rows; ++row) {
            int t = 0;
            while (t < TrackLayout::total_steps) {
                if (!roll.get(t, row)) {
                    ++t;
                    continue;
                }
                int start = t;
                while (t < TrackLayout::total_steps && roll.get(t, row)) ++t;
                evs.push_back({static_cast<long>(start) * k_ticks_per_step, true,
                               TrackLayout::pitch_for_bass_row(row)});
                evs.push_back({static_cast<long>(t) * k_ticks_per_step, false,
                               TrackLayout::pitch_for_bass_row(row)});
            }
        }
        std::sort(evs.begin(), evs.end(), [](const Ev& a, const Ev& b) {
            if (a.tick != b.tick) return a.tick < b.tick;
            return a.on < b.on;  // offs before ons at the same tick
        });
        for (const Ev& e : evs) {
            if (e.on) bass.note_on(e.tick, 0, e.pitch, k_bass_velocity);
            else bass.note_off(e.tick, 0, e.pitch);
        }
    }
    bass.end_of_track(song_end);

    TrackWriter drums;
    {
        struct Ev {
            long tick;
            bool on;
            int pitch;
        };
        std::vector<Ev> evs;
        for (int d = 0; d < TrackLayout::drum_rows; ++d) {
            int row = TrackLayout::bass_rows + d;
            int t = 0;
            while (t < TrackLayout::total_steps) {
                if (!roll.get(t, row)) {
                    ++t;
                    continue;
                }
                int start = t;
                while (t < TrackLayout::total_steps && roll.get(t, row)) ++t;
                evs.push_back({static_cast<long>(start) * k_ticks_per_step, true, k_drum_pitch[d]});
                evs.push_back({static_cast<long>(t) * k_ticks_per_step, false, k_drum_pitch[d]});
            }
        }
        std::sort(evs.begin(), evs.end(), [](const Ev& a, const Ev& b) {
            if (a.tick != b.tick) return a.tick < b.tick;
            return a.on < b.on;
        });
        for (const Ev& e : evs) {
            if (e.on) drums.note_on(e.tick, 9, e.pitch, k_drum_velocity);
            else drums.note_off(e.tick, 9, e.pitch);
        }
    }
    drums.end_of_track(song_end);

    std::vector<std::uint8_t> out;
    out.push_back('M'); out.push_back('T'); out.push_back('h'); out.push_back('d');
    put_u32(out, 6);
    put_u16(out, 1);  // format 1
    put_u16(out, 3);  // tracks
    put_u16(out, k_division);
    meta.append_chunk(out);
    bass.append_chunk(out);
    drums.append_chunk(out);
    return out;
}

void export_midi_file(const Pianoroll& roll, const std::string& path, double bpm) {
    std::vector<std::uint8_t> bytes = export_midi(roll, bpm);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

}  // namespace loopgen
