#include "loopgen/loop_extract.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace loopgen {

const char* loop_rule_name(LoopRule rule) {
    switch (rule) {
        case LoopRule::none: return "none";
        case LoopRule::repetition: return "repetition";
        case LoopRule::kick_on_one: return "kick_on_one";
        case LoopRule::crash_on_one: return "crash_on_one";
        case LoopRule::bass_on_one: return "bass_on_one";
    }
    return "?";
}

LoopCheckResult loop_conditions_check(const Pianoroll& window, double threshold) {
    LoopCheckResult res;
    res.bar_distance = hamming_bar_distance(window.bar(0), window.bar(4));
    if (!(res.bar_distance < threshold)) {
        res.failed = LoopRule::repetition;
        return res;
    }
    if (!window.get(0, drum_row(drum_kick))) {
        res.failed = LoopRule::kick_on_one;
        return res;
    }
    if (!window.get(0, drum_row(drum_crash))) {
        res.failed = LoopRule::crash_on_one;
        return res;
    }
    bool bass_hit = false;
    for (int row = 0; row < TrackLayout::bass_rows && !bass_hit; ++row) {
        bass_hit = window.get(0, row);
    }
    if (!bass_hit) {
        res.failed = LoopRule::bass_on_one;
        return res;
    }
    res.ok = true;
    return res;
}

Pianoroll window_to_pianoroll(const QuantizedSong& song, int bar_offset) {
    if (bar_offset < 0 ||
        bar_offset + TrackLayout::bars > static_cast<int>(song.bars.size())) {
        throw std::invalid_argument("window_to_pianoroll: window past end of song");
    }
    Pianoroll roll;
    for (int b = 0; b < TrackLayout::bars; ++b) {
        const BarGrid& bar = song.bars[bar_offset + b];
        std::memcpy(roll.cells.data() + static_cast<std::size_t>(b) * TrackLayout::bar_cells,
                    bar.data(), TrackLayout::bar_cells);
    }
    return roll;
}

std::vector<LoopRecord> scan_song(const QuantizedSong& song, double threshold) {
    std::vector<LoopRecord> out;
    int n_bars = static_cast<int>(song.bars.size());
    int offset = 0;
    while (offset + TrackLayout::bars <= n_bars) {
        Pianoroll window = window_to_pianoroll(song, offset);
        window = enforce_lowest_bass(window);
        if (loop_conditions_check(window, threshold).ok) {
            out.push_back({song.source_id, offset, Split::train, window});
            offset += TrackLayout::bars;
        } else {
            ++offset;
        }
    }
    return out;
}

std::vector<Pianoroll> LoopDataset::rolls(Split split) const {
    std::vector<Pianoroll> out;
    for (const LoopRecord& rec : records) {
        if (rec.split == split) out.push_back(rec.roll);
    }
    return out;
}

std::size_t LoopDataset::count(Split split) const {
    std::size_t n = 0;
    for (const LoopRecord& rec : records) n += rec.split == split;
    return n;
}

LoopDataset build_dataset(const std::vector<QuantizedSong>& songs, double threshold) {
    LoopDataset ds;
    ds.threshold = threshold;
    long n_songs = static_cast<long>(songs.size());
    long train_end = std::lround(0.8 * n_songs);
    long valid_end = std::lround(0.9 * n_songs);
    for (long i = 0; i < n_songs; ++i) {
        Split split = i < train_end ? Split::train : i < valid_end ? Split::valid : Split::test;
        for (LoopRecord rec : scan_song(songs[i], threshold)) {
            rec.split = split;
            ds.records.push_back(std::move(rec));
        }
    }
    return ds;
}

namespace {

void put_u32le(std::ostream& out, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8 & 0xff),
                 static_cast<char>(v >> 16 & 0xff), static_cast<char>(v >> 24 & 0xff)};
    out.write(b, 4);
}

std::uint32_t get_u32le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("dataset file truncated");
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

}  // namespace

void save_dataset(const LoopDataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write("LPD1", 4);
    put_u32le(out, static_cast<std::uint32_t>(dataset.records.size()));
    for (const LoopRecord& rec : dataset.records) {
        put_u32le(out, static_cast<std::uint32_t>(rec.source_id.size()));
        out.write(rec.source_id.data(), static_cast<std::streamsize>(rec.source_id.size()));
        put_u32le(out, static_cast<std::uint32_t>(rec.bar_offset));
        auto packed = pack_pianoroll(rec.roll);
        out.write(reinterpret_cast<const char*>(packed.data()),
                  static_cast<std::streamsize>(packed.size()));
    }
    if (!out) throw std::runtime_error("write failed for " + path);

    nlohmann::json meta;
    meta["threshold"] = dataset.threshold;
    std::vector<int> splits;
    splits.reserve(dataset.records.size());
    for (const LoopRecord& rec : dataset.records) splits.push_back(static_cast<int>(rec.split));
    meta["splits"] = splits;
    std::ofstream side(path + ".json");
    if (!side) throw std::runtime_error("cannot write " + path + ".json");
    side << meta.dump(2) << "\n";
}

LoopDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "LPD1", 4) != 0) {
        throw std::runtime_error(path + " is not a loop dataset file");
    }

    LoopDataset ds;
    std::uint32_t count = get_u32le(in);
    ds.records.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        LoopRecord& rec = ds.records[i];
        std::uint32_t len = get_u32le(in);
        rec.source_id.resize(len);
        in.read(rec.source_id.data(), len);
        rec.bar_offset = static_cast<int>(get_u32le(in));
        std::array<std::uint8_t, TrackLayout::total_cells / 8> packed;
        in.read(reinterpret_cast<char*>(packed.data()),
                static_cast<std::streamsize>(packed.size()));
        if (!in) throw std::runtime_error("dataset file truncated");
        rec.roll = unpack_pianoroll(packed);
    }

    std::ifstream side(path + ".json");
    if (!side) throw std::runtime_error("missing dataset sidecar " + path + ".json");
    nlohmann::json meta = nlohmann::json::parse(side);
    ds.threshold = meta.at("threshold").get<double>();
    std::vector<int> splits = meta.at("splits").get<std::vector<int>>();
    if (splits.size() != ds.records.size()) {
        throw std::runtime_error("dataset sidecar split count mismatch for " + path);
    }
    for (std::size_t i = 0; i < splits.size(); ++i) {
        if (splits[i] < 0 || splits[i] > 2) throw std::runtime_error("bad split value in sidecar");
        ds.records[i].split = static_cast<Split>(splits[i]);
    }
    return ds;
}

}  // namespace loopgen
