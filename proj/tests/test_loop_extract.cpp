#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "loopgen/loop_extract.hpp"

using namespace loopgen;

namespace {

// One bar that satisfies the downbeat rules when placed at the window start.
BarGrid loop_bar() {
    BarGrid bar{};
    auto set = [&](int step, int row) { bar[step * TrackLayout::rows + row] = 1; };
    set(0, drum_row(drum_kick));
    set(0, drum_row(drum_crash));
    for (int s = 0; s < 4; ++s) set(s, 0);  // bass
    set(8, drum_row(drum_snare));
    set(4, drum_row(drum_ride));
    return bar;
}

Pianoroll window_of(const std::vector<BarGrid>& bars) {
    QuantizedSong song;
    song.bars = bars;
    return window_to_pianoroll(song, 0);
}

Pianoroll uniform_window() { return window_of(std::vector<BarGrid>(8, loop_bar())); }

}  // namespace

TEST_CASE("a uniform window passes every condition") {
    LoopCheckResult r = loop_conditions_check(uniform_window());
    CHECK(r.ok);
    CHECK(r.failed == LoopRule::none);
    CHECK(r.bar_distance == 0.0);
}

TEST_CASE("rule violations are reported in order") {
    Pianoroll p = uniform_window();
    p.set(4 * 16 + 2, 30, true);
    p.set(4 * 16 + 3, 31, true);
    p.set(4 * 16 + 5, 32, true);
    p.set(0, drum_row(drum_kick), false);
    LoopCheckResult r = loop_conditions_check(p);
    CHECK_FALSE(r.ok);
    // repetition is checked before the downbeat rules
    CHECK(r.failed == LoopRule::repetition);

    Pianoroll q = uniform_window();
    q.set(0, drum_row(drum_kick), false);
    q.set(4 * 16 + 0, drum_row(drum_kick), false);
    r = loop_conditions_check(q);
    CHECK(r.failed == LoopRule::kick_on_one);

    q = uniform_window();
    q.set(0, drum_row(drum_crash), false);
    q.set(4 * 16 + 0, drum_row(drum_crash), false);
    r = loop_conditions_check(q);
    CHECK(r.failed == LoopRule::crash_on_one);

    q = uniform_window();
    for (int s = 0; s < 4; ++s) {
        q.set(s, 0, false);
        q.set(4 * 16 + s, 0, false);
    }
    r = loop_conditions_check(q);
    CHECK(r.failed == LoopRule::bass_on_one);

    CHECK(std::string(loop_rule_name(LoopRule::repetition)) == "repetition");
}

TEST_CASE("the repetition threshold sits between 2 and 3 cells") {
    Pianoroll two = uniform_window();
    two.set(4 * 16 + 10, drum_row(drum_ride), true);
    two.set(4 * 16 + 11, drum_row(drum_ride), true);
    LoopCheckResult r = loop_conditions_check(two);
    CHECK(r.ok);
    CHECK(r.bar_distance == doctest::Approx(2.0 / 1488).epsilon(1e-12));

    Pianoroll three = two;
    three.set(4 * 16 + 12, drum_row(drum_ride), true);
    r = loop_conditions_check(three);
    CHECK_FALSE(r.ok);
    CHECK(r.failed == LoopRule::repetition);
    CHECK(r.bar_distance == doctest::Approx(3.0 / 1488).epsilon(1e-12));

    // a looser threshold lets the same window through
    CHECK(loop_conditions_check(three, 0.0025).ok);
}

TEST_CASE("window extraction bounds") {
    QuantizedSong song;
    song.bars.assign(9, loop_bar());
    Pianoroll w = window_to_pianoroll(song, 1);
    CHECK(w.get(0, drum_row(drum_kick)));
    CHECK_THROWS_AS(window_to_pianoroll(song, 2), std::invalid_argument);
    CHECK_THROWS_AS(window_to_pianoroll(song, -1), std::invalid_argument);
}

TEST_CASE("scan finds non-overlapping loops") {
    QuantizedSong song;
    song.source_id = "s";
    song.bars.assign(16, loop_bar());
    std::vector<LoopRecord> found = scan_song(song);
    REQUIRE(found.size() == 2);
    CHECK(found[0].bar_offset == 0);
    CHECK(found[1].bar_offset == 8);
    CHECK(found[0].source_id == "s");

    song.bars.assign(7, loop_bar());
    CHECK(scan_song(song).empty());
}

TEST_CASE("scan slides bar by bar until a window fits") {
    BarGrid junk{};
    junk[3 * TrackLayout::rows + drum_row(drum_snare)] = 1;
    QuantizedSong song;
    song.bars.assign(2, junk);
    song.bars.insert(song.bars.end(), 8, loop_bar());
    std::vector<LoopRecord> found = scan_song(song);
    REQUIRE(found.size() == 1);
    CHECK(found[0].bar_offset == 2);
}

TEST_CASE("scan enforces bass monophony before checking") {
    BarGrid bar = loop_bar();
    bar[0 * TrackLayout::rows + 5] = 1;  // second bass row on the downbeat
    QuantizedSong song;
    song.bars.assign(8, bar);
    std::vector<LoopRecord> found = scan_song(song);
    REQUIRE(found.size() == 1);
    CHECK(found[0].roll.get(0, 0));
    CHECK_FALSE(found[0].roll.get(0, 5));
}

TEST_CASE("dataset splits follow source order") {
    std::vector<QuantizedSong> songs(12);
    for (int i = 0; i < 12; ++i) {
        songs[i].source_id = "song" + std::to_string(i);
        songs[i].bars.assign(8, loop_bar());
    }
    LoopDataset ds = build_dataset(songs);
    CHECK(ds.records.size() == 12);
    CHECK(ds.count(Split::train) == 10);
    CHECK(ds.count(Split::valid) == 1);
    CHECK(ds.count(Split::test) == 1);
    CHECK(ds.records[10].split == Split::valid);
    CHECK(ds.records[10].source_id == "song10");
    CHECK(ds.records[11].split == Split::test);
    CHECK(ds.rolls(Split::train).size() == 10);
}

TEST_CASE("dataset files round trip") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "loopgen_ds_test";
    fs::create_directories(dir);
    std::string path = (dir / "x.lpd").string();

    Rng rng(5);
    LoopDataset ds;
    ds.threshold = 0.002;
    for (int i = 0; i < 9; ++i) {
        LoopRecord rec;
        rec.source_id = "src" + std::to_string(i % 4);
        rec.bar_offset = i * 8;
        rec.split = static_cast<Split>(i % 3);
        rec.roll = testing::random_roll(rng);
        ds.records.push_back(rec);
    }
    save_dataset(ds, path);
    LoopDataset back = load_dataset(path);
    CHECK(back.threshold == ds.threshold);
    REQUIRE(back.records.size() == ds.records.size());
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        CHECK(back.records[i].source_id == ds.records[i].source_id);
        CHECK(back.records[i].bar_offset == ds.records[i].bar_offset);
        CHECK(back.records[i].split == ds.records[i].split);
        CHECK(back.records[i].roll == ds.records[i].roll);
    }

    SUBCASE("missing manifest") {
        fs::remove(path + ".json");
        CHECK_THROWS(load_dataset(path));
    }
    SUBCASE("split count mismatch") {
        std::ifstream in(path + ".json");
        nlohmann::json j;
        in >> j;
        in.close();
        j["splits"].erase(j["splits"].size() - 1);
        std::ofstream out(path + ".json");
        out << j.dump();
        out.close();
        CHECK_THROWS(load_dataset(path));
    }
    SUBCASE("bad split value") {
        std::ifstream in(path + ".json");
        nlohmann::json j;
        in >> j;
        in.close();
        j["splits"][0] = 9;
        std::ofstream out(path + ".json");
        out << j.dump();
        out.close();
        CHECK_THROWS(load_dataset(path));
    }
}
