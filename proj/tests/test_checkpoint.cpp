#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "loopgen/checkpoint.hpp"
#include "loopgen/rng.hpp"

using namespace loopgen;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() / ("loopgen_ckpt_" + std::to_string(counter++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// values exactly representable in float32 so the round trip is bit-faithful
Tensor exact_tensor(std::vector<int> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform_int(512) / 256.0 - 1.0;
    return t;
}

}  // namespace

TEST_CASE("checkpoint round trip") {
    TempDir dir;
    std::string file = (dir.path / "model.ckpt").string();
    Rng rng(400);

    Tensor a = exact_tensor({3, 4}, rng);
    Tensor b = exact_tensor({5}, rng);
    Tensor c = exact_tensor({2, 2, 3}, rng);
    StateMap state = {{"layer.w", &a}, {"layer.b", &b}, {"deep.conv.w", &c}};
    save_checkpoint(file, "test-kind", state);

    CHECK(peek_checkpoint_kind(file) == "test-kind");

    Checkpoint ckpt = load_checkpoint(file);
    CHECK(ckpt.kind == "test-kind");
    REQUIRE(ckpt.entries.size() == 3);
    REQUIRE(ckpt.entries.count("layer.w") == 1);
    CHECK(ckpt.entries.at("layer.w").dim(0) == 3);
    CHECK(ckpt.entries.at("layer.w").dim(1) == 4);
    CHECK(ckpt.entries.at("deep.conv.w").ndim() == 3);
    for (int i = 0; i < a.numel(); ++i) CHECK(ckpt.entries.at("layer.w").data[i] == a.data[i]);
    for (int i = 0; i < b.numel(); ++i) CHECK(ckpt.entries.at("layer.b").data[i] == b.data[i]);

    // restore into fresh tensors
    Tensor a2({3, 4}), b2({5}), c2({2, 2, 3});
    StateMap target = {{"layer.w", &a2}, {"layer.b", &b2}, {"deep.conv.w", &c2}};
    restore_state(ckpt, target);
    for (int i = 0; i < a.numel(); ++i) CHECK(a2.data[i] == a.data[i]);
    for (int i = 0; i < c.numel(); ++i) CHECK(c2.data[i] == c.data[i]);
}

TEST_CASE("values not representable in float32 round to nearest") {
    TempDir dir;
    std::string file = (dir.path / "m.ckpt").string();
    Tensor a({1});
    a.data[0] = 0.1;  // not exact in binary floating point
    StateMap state = {{"x", &a}};
    save_checkpoint(file, "k", state);
    Checkpoint ckpt = load_checkpoint(file);
    CHECK(ckpt.entries.at("x").data[0] == doctest::Approx(0.1).epsilon(1e-7));
    CHECK(ckpt.entries.at("x").data[0] == static_cast<double>(0.1f));
}

TEST_CASE("restore rejects mismatches") {
    TempDir dir;
    std::string file = (dir.path / "m.ckpt").string();
    Rng rng(401);
    Tensor a = exact_tensor({2, 2}, rng);
    StateMap state = {{"w", &a}};
    save_checkpoint(file, "k", state);
    Checkpoint ckpt = load_checkpoint(file);

    SUBCASE("missing name") {
        Tensor t({2, 2});
        StateMap target = {{"nope", &t}};
        CHECK_THROWS(restore_state(ckpt, target));
    }
    SUBCASE("shape mismatch") {
        Tensor t({4});
        StateMap target = {{"w", &t}};
        CHECK_THROWS(restore_state(ckpt, target));
    }
}

TEST_CASE("corrupt checkpoint files are rejected") {
    TempDir dir;

    SUBCASE("missing file") {
        CHECK_THROWS(load_checkpoint((dir.path / "absent.ckpt").string()));
        CHECK_THROWS(peek_checkpoint_kind((dir.path / "absent.ckpt").string()));
    }
    SUBCASE("bad magic") {
        std::string file = (dir.path / "bad.ckpt").string();
        std::ofstream out(file, std::ios::binary);
        out << "NOPE" << std::string(16, '\0');
        out.close();
        CHECK_THROWS(load_checkpoint(file));
    }
    SUBCASE("truncated payload") {
        std::string file = (dir.path / "trunc.ckpt").string();
        Rng rng(402);
        Tensor a = exact_tensor({8, 8}, rng);
        StateMap state = {{"w", &a}};
        save_checkpoint(file, "k", state);
        auto size = fs::file_size(file);
        fs::resize_file(file, size - 9);
        CHECK_THROWS(load_checkpoint(file));
    }
}
