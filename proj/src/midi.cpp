#include "loopgen/midi.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

namespace loopgen {

namespace {

struct Reader {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;

    bool eof() const { return pos >= bytes.size(); }

    std::uint8_t u8() {
        if (pos >= bytes.size()) throw MidiParseError("unexpected end of file", pos);
        return bytes[pos++];
    }

    std::uint16_t u16() {
        std::uint16_t hi = u8(), lo = u8();
        return static_cast<std::uint16_t>(hi << 8 | lo);
    }

    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = v << 8 | u8();
        return v;
    }

    std::uint32_t vlq() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            std::uint8_t byte = u8();
            v = v << 7 | (byte & 0x7fu);
            if (!(byte & 0x80u)) return v;
        }
        throw MidiParseError("variable-length quantity longer than 4 bytes", pos);
    }

    void skip(std::size_t n) {
        if (pos + n > bytes.size()) throw MidiParseError("chunk runs past end of file", pos);
        pos += n;
    }

    void expect_magic(const char* magic) {
        std::size_t at = pos;
        for (int i = 0; i < 4; ++i) {
            if (u8() != static_cast<std::uint8_t>(magic[i])) {
                throw MidiParseError(std::string("bad chunk magic, expected \"") + magic + "\"", at);
            }
        }
    }
};

void parse_track(Reader& r, std::size_t track_end, std::vector<MidiEvent>& out) {
    long tick = 0;
    std::uint8_t running_status = 0;
    while (r.pos < track_end) {
        tick += r.vlq();
        std::uint8_t status = r.bytes[r.pos];
        if (status & 0x80u) {
            ++r.pos;
        } else {
            if (running_status == 0) throw MidiParseError("data byte without running status", r.pos);
            status = running_status;
        }

        if (status == 0xff) {  // meta
            running_status = 0;
            std::uint8_t type = r.u8();
            std::uint32_t len = r.vlq();
            std::size_t body = r.pos;
            if (type == 0x58) {
                if (len < 2) throw MidiParseError("short time-signature event", body);
                int numerator = r.bytes[body];
                int denominator = 1 << r.bytes[body + 1];
                out.push_back({tick, -1, MidiEventKind::time_signature, numerator, denominator});
            } else if (type == 0x2f) {
                out.push_back({tick, -1, MidiEventKind::end_of_track, 0, 0});
            }
            r.skip(len);
        } else if (status == 0xf0 || status == 0xf7) {  // sysex
            running_status = 0;
            r.skip(r.vlq());
        } else if (status >= 0xf1) {
            throw MidiParseError("unexpected system message in track", r.pos);
        } else {
            running_status = status;
            int channel = status & 0x0f;
            switch (status & 0xf0u) {
                case 0x80: {
                    int pitch = r.u8(), vel = r.u8();
                    out.push_back({tick, channel, MidiEventKind::note_off, pitch, vel});
                    break;
                }
                case 0x90: {
                    int pitch = r.u8(), vel = r.u8();
                    // velocity-0 note-on is a note-off by convention
                    out.push_back({tick, channel,
                                   vel == 0 ? MidiEventKind::note_off : MidiEventKind::note_on,
                                   pitch, vel});
                    break;
                }
                case 0xc0:
                    out.push_back({tick, channel, MidiEventKind::program_change, r.u8(), 0});
                    break;
                case 0xa0:
                case 0xb0:
                case 0xe0:
                    r.skip(2);
                    break;
                case 0xd0:
                    r.skip(1);
                    break;
                default:
                    throw MidiParseError("unknown status byte", r.pos);
            }
        }
    }
}

}  // namespace

MidiSong parse_smf(std::span<const std::uint8_t> bytes, std::string source_id) {
    Reader r{bytes};
    r.expect_magic("MThd");
    std::uint32_t header_len = r.u32();
    if (header_len < 6) throw MidiParseError("header chunk shorter than 6 bytes", r.pos);
    std::size_t header_body = r.pos;
    int format = r.u16();
    int ntrks = r.u16();
    std::uint16_t division = r.u16();
    r.pos = header_body + header_len;

    if (format == 2) throw MidiParseError("SMF format 2 is unsupported", header_body);
    if (format != 0 && format != 1) throw MidiParseError("unknown SMF format", header_body);
    if (division & 0x8000u) throw MidiParseError("SMPTE division is unsupported", header_body + 4);
    if (division == 0) throw MidiParseError("zero ticks-per-quarter division", header_body + 4);

    MidiSong song;
    song.ticks_per_quarter = division;
    song.source_id = std::move(source_id);

    for (int t = 0; t < ntrks; ++t) {
        r.expect_magic("MTrk");
        std::uint32_t len = r.u32();
        std::size_t track_end = r.pos + len;
        if (track_end > bytes.size()) throw MidiParseError("track length past end of file", r.pos - 4);
        parse_track(r, track_end, song.events);
        r.pos = track_end;
    }

    std::stable_sort(song.events.begin(), song.events.end(),
                     [](const MidiEvent& a, const MidiEvent& b) { return a.tick < b.tick; });
    return song;
}

MidiSong parse_smf_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return parse_smf(bytes, path);
}

bool is_four_four(const MidiSong& song) {
    for (const MidiEvent& e : song.events) {
        if (e.kind == MidiEventKind::time_signature && (e.a != 4 || e.b != 4)) return false;
    }
    return true;
}

int drum_row_for_pitch(int gm_pitch) {
    switch (gm_pitch) {
        case 35: case 36: return drum_row(drum_kick);
        case 37: case 38: case 40: return drum_row(drum_snare);
        case 42: case 44: return drum_row(drum_closed_hat);
        case 46: return drum_row(drum_open_hat);
        case 41: case 43: return drum_row(drum_low_tom);
        case 45: case 47: return drum_row(drum_mid_tom);
        case 48: case 50: return drum_row(drum_high_tom);
        case 49: case 52: case 55: case 57: return drum_row(drum_crash);
        case 51: case 53: case 59: return drum_row(drum_ride);
        default: return -1;
    }
}

namespace {

// Nearest grid step, ties toward the earlier step.
long round_to_step(long tick, double ticks_per_step) {
    return static_cast<long>(std::ceil(tick / ticks_per_step - 0.5));
}

struct OpenNote {
    long on_tick;
    bool is_bass;
};

}  // namespace

QuantizedSong song_to_pianoroll(const MidiSong& song) {
    if (!is_four_four(song)) {
        throw std::invalid_argument("song_to_pianoroll: non-4/4 time signature in " + song.source_id);
    }

    const double ticks_per_step = song.ticks_per_quarter / 4.0;
    std::array<int, 16> program{};  // current program per channel
    std::map<std::pair<int, int>, OpenNote> open;  // (channel, pitch) -> note

    struct GridNote {
        int row;
        long on_step;
        long end_step;  // exclusive
    };
    std::vector<GridNote> grid_notes;
    long last_tick = 0;

    auto close_note = [&](int channel, int pitch, long off_tick) {
        auto it = open.find({channel, pitch});
        if (it == open.end()) return;
        OpenNote note = it->second;
        open.erase(it);

        int row;
        if (channel == 9) {
            row = drum_row_for_pitch(pitch);
            if (row < 0) return;
        } else {
            row = TrackLayout::bass_row_for_pitch(TrackLayout::fold_bass_pitch(pitch));
        }
        long on_step = round_to_step(note.on_tick, ticks_per_step);
        long end_step = round_to_step(off_tick, ticks_per_step);
        if (end_step <= on_step) end_step = on_step + 1;
        grid_notes.push_back({row, on_step, end_step});
    };

    for (const MidiEvent& e : song.events) {
        last_tick = std::max(last_tick, e.tick);
        switch (e.kind) {
            case MidiEventKind::program_change:
                program[e.channel] = e.a;
                break;
            case MidiEventKind::note_on: {
                bool is_drum = e.channel == 9;
                bool is_bass = !is_drum && program[e.channel] >= 32 && program[e.channel] <= 39;
                if (!is_drum && !is_bass) break;
                close_note(e.channel, e.a, e.tick);  // restrike cuts the held note
                open[{e.channel, e.a}] = {e.tick, is_bass};
                break;
            }
            case MidiEventKind::note_off:
                close_note(e.channel, e.a, e.tick);
                break;
            default:
                break;
        }
    }
    while (!open.empty()) {
        auto [key, note] = *open.begin();
        close_note(key.first, key.second, last_tick);
    }

    long n_steps = static_cast<long>(std::ceil(last_tick / ticks_per_step));
    for (const GridNote& n : grid_notes) n_steps = std::max(n_steps, n.end_step);
    long n_bars = (n_steps + TrackLayout::steps_per_bar - 1) / TrackLayout::steps_per_bar;

    QuantizedSong out;
    out.source_id = song.source_id;
    out.bars.assign(n_bars, BarGrid{});
    for (const GridNote& n : grid_notes) {
        for (long t = std::max(0L, n.on_step); t < n.end_step; ++t) {
            out.bars[t / TrackLayout::steps_per_bar]
                [(t % TrackLayout::steps_per_bar) * TrackLayout::rows + n.row] = 1;
        }
    }

    // bass monophony per step
    for (BarGrid& bar : out.bars) {
        for (int s = 0; s < TrackLayout::steps_per_bar; ++s) {
            bool seen = false;
            for (int rrow = 0; rrow < TrackLayout::bass_rows; ++rrow) {
                std::uint8_t& cell = bar[s * TrackLayout::rows + rrow];
                if (!cell) continue;
                if (seen) cell = 0;
                else seen = true;
            }
        }
    }
    return out;
}

}  // namespace loopgen
