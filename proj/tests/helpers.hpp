#ifndef LOOPGEN_TESTS_HELPERS_HPP
#define LOOPGEN_TESTS_HELPERS_HPP

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "loopgen/cli.hpp"
#include "loopgen/midi.hpp"
#include "loopgen/pianoroll.hpp"
#include "loopgen/rng.hpp"

namespace loopgen::testing {

// ------------------------------------------------------------ SMF building

struct ByteWriter {
    std::vector<std::uint8_t> bytes;

    void u8(int v) { bytes.push_back(static_cast<std::uint8_t>(v)); }
    void u16be(int v) {
        u8(v >> 8 & 0xff);
        u8(v & 0xff);
    }
    void u32be(long v) {
        u8(static_cast<int>(v >> 24 & 0xff));
        u8(static_cast<int>(v >> 16 & 0xff));
        u8(static_cast<int>(v >> 8 & 0xff));
        u8(static_cast<int>(v & 0xff));
    }
    void vlq(long v) {
        std::uint8_t stack[5];
        int n = 0;
        stack[n++] = static_cast<std::uint8_t>(v & 0x7f);
        v >>= 7;
        while (v > 0) {
            stack[n++] = static_cast<std::uint8_t>(v & 0x7f | 0x80);
            v >>= 7;
        }
        while (n > 0) bytes.push_back(stack[--n]);
    }
    void raw(std::initializer_list<int> vs) {
        for (int v : vs) u8(v);
    }
};

inline std::vector<std::uint8_t> smf_file(int format, int division,
                                          const std::vector<std::vector<std::uint8_t>>& tracks) {
    ByteWriter w;
    w.raw({'M', 'T', 'h', 'd'});
    w.u32be(6);
    w.u16be(format);
    w.u16be(static_cast<int>(tracks.size()));
    w.u16be(division);
    for (const std::vector<std::uint8_t>& t : tracks) {
        w.raw({'M', 'T', 'r', 'k'});
        w.u32be(static_cast<long>(t.size()));
        w.bytes.insert(w.bytes.end(), t.begin(), t.end());
    }
    return w.bytes;
}

// Serialize an arbitrary-length bar sequence as a song: bass on channel 0
// (program 32), drums on channel 9, 120 ticks per sixteenth.
inline std::vector<std::uint8_t> song_midi(const std::vector<BarGrid>& bars) {
    constexpr int ticks_per_step = 120;
    const long end_tick = static_cast<long>(bars.size()) * TrackLayout::steps_per_bar *
                          ticks_per_step;
    static const int drum_pitch[TrackLayout::drum_rows] = {36, 38, 42, 46, 41, 47, 50, 49, 51};

    auto cell = [&](long step, int row) {
        long bar = step / TrackLayout::steps_per_bar;
        int s = static_cast<int>(step % TrackLayout::steps_per_bar);
        return bars[bar][s * TrackLayout::rows + row] != 0;
    };
    long total_steps = static_cast<long>(bars.size()) * TrackLayout::steps_per_bar;

    struct Ev {
        long tick;
        bool on;
        int channel, pitch, vel;
    };
    std::vector<Ev> bass_events, drum_events;
    for (int row = 0; row < TrackLayout::rows; ++row) {
        bool is_drum = row >= TrackLayout::bass_rows;
        int pitch = is_drum ? drum_pitch[row - TrackLayout::bass_rows]
                            : TrackLayout::pitch_for_bass_row(row);
        int channel = is_drum ? 9 : 0;
        int vel = is_drum ? 100 : 80;
        std::vector<Ev>& out = is_drum ? drum_events : bass_events;
        long s = 0;
        while (s < total_steps) {
            if (cell(s, row)) {
                long e = s;
                while (e < total_steps && cell(e, row)) ++e;
                out.push_back({s * ticks_per_step, true, channel, pitch, vel});
                out.push_back({e * ticks_per_step, false, channel, pitch, 0});
                s = e;
            } else {
                ++s;
            }
        }
    }
    auto emit_track = [&](std::vector<Ev> evs, bool with_program) {
        std::stable_sort(evs.begin(), evs.end(), [](const Ev& a, const Ev& b) {
            if (a.tick != b.tick) return a.tick < b.tick;
            return !a.on && b.on;  // offs first on shared ticks
        });
        ByteWriter t;
        long at = 0;
        if (with_program) {
            t.vlq(0);
            t.raw({0xc0, 32});
        }
        for (const Ev& e : evs) {
            t.vlq(e.tick - at);
            at = e.tick;
            t.u8((e.on ? 0x90 : 0x80) | e.channel);
            t.u8(e.pitch);
            t.u8(e.vel);
        }
        t.vlq(end_tick - at);
        t.raw({0xff, 0x2f, 0x00});
        return t.bytes;
    };

    ByteWriter meta;
    meta.vlq(0);
    meta.raw({0xff, 0x58, 0x04, 0x04, 0x02, 0x18, 0x08});
    meta.vlq(end_tick);
    meta.raw({0xff, 0x2f, 0x00});

    return smf_file(1, 480, {meta.bytes, emit_track(bass_events, true),
                             emit_track(drum_events, false)});
}

// ------------------------------------------------------------ pianorolls

inline Pianoroll random_roll(Rng& rng, double density = 0.1) {
    Pianoroll p;
    for (int t = 0; t < TrackLayout::total_steps; ++t) {
        for (int r = 0; r < TrackLayout::rows; ++r) {
            if (rng.bernoulli(density)) p.set(t, r, true);
        }
    }
    return p;
}

// At most one bass row per step, so MIDI export/ingest is lossless.
inline Pianoroll random_mono_roll(Rng& rng, double bass_density = 0.4,
                                  double drum_density = 0.15) {
    Pianoroll p;
    for (int t = 0; t < TrackLayout::total_steps; ++t) {
        if (rng.bernoulli(bass_density)) p.set(t, rng.uniform_int(TrackLayout::bass_rows), true);
        for (int r = TrackLayout::bass_rows; r < TrackLayout::rows; ++r) {
            if (rng.bernoulli(drum_density)) p.set(t, r, true);
        }
    }
    return p;
}

// Satisfies every loop rule: bars 0 and 4 identical, kick + crash + bass on
// the downbeat, monophonic bass.
inline Pianoroll make_valid_loop(Rng& rng) {
    Pianoroll p;
    for (int bar = 0; bar < TrackLayout::bars; ++bar) {
        if (bar == 4) continue;
        int base = bar * TrackLayout::steps_per_bar;
        for (int s = 0; s < TrackLayout::steps_per_bar; ++s) {
            if (rng.bernoulli(0.3)) p.set(base + s, rng.uniform_int(40), true);
            for (int d = 0; d < TrackLayout::drum_rows; ++d) {
                if (rng.bernoulli(0.12)) p.set(base + s, drum_row(static_cast<DrumVoice>(d)), true);
            }
        }
    }
    // enforce the downbeat rules on bar 0, then mirror it into bar 4
    for (int r = 0; r < TrackLayout::bass_rows; ++r) p.set(0, r, false);
    p.set(0, rng.uniform_int(40), true);
    p.set(0, drum_row(drum_kick), true);
    p.set(0, drum_row(drum_crash), true);
    for (int s = 0; s < TrackLayout::steps_per_bar; ++s) {
        for (int r = 0; r < TrackLayout::rows; ++r) {
            p.set(4 * TrackLayout::steps_per_bar + s, r, p.get(s, r));
        }
    }
    return p;
}

// ------------------------------------------------------------ CLI driving

inline int run_cli_vec(std::vector<std::string> args) {
    args.insert(args.begin(), "loopgen");
    std::vector<char*> argv;
    argv.reserve(args.size());
    for (std::string& a : args) argv.push_back(a.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace loopgen::testing

#endif
