#include "loopgen/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace loopgen {

namespace {

void put_u32le(std::ostream& out, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8 & 0xff),
                 static_cast<char>(v >> 16 & 0xff), static_cast<char>(v >> 24 & 0xff)};
    out.write(b, 4);
}

std::uint32_t get_u32le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("checkpoint file truncated");
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

void put_string(std::ostream& out, const std::string& s) {
    put_u32le(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
    std::uint32_t len = get_u32le(in);
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw std::runtime_error("checkpoint file truncated");
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& kind, const StateMap& state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write("CKPT", 4);
    put_string(out, kind);
    put_u32le(out, static_cast<std::uint32_t>(state.size()));
    for (const auto& [name, tensor] : state) {
        put_string(out, name);
        put_u32le(out, static_cast<std::uint32_t>(tensor->shape.size()));
        for (int d : tensor->shape) put_u32le(out, static_cast<std::uint32_t>(d));
        std::vector<float> payload(tensor->data.begin(), tensor->data.end());
        static_assert(sizeof(float) == 4);
        out.write(reinterpret_cast<const char*>(payload.data()),
                  static_cast<std::streamsize>(payload.size() * 4));
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "CKPT", 4) != 0) {
        throw std::runtime_error(path + " is not a checkpoint file");
    }
    Checkpoint ckpt;
    ckpt.kind = get_string(in);
    std::uint32_t count = get_u32le(in);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = get_string(in);
        std::uint32_t rank = get_u32le(in);
        if (rank > 8) throw std::runtime_error("checkpoint entry rank too large");
        std::vector<int> shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int>(get_u32le(in));
        Tensor t(shape);
        std::vector<float> payload(t.numel());
        in.read(reinterpret_cast<char*>(payload.data()),
                static_cast<std::streamsize>(payload.size() * 4));
        if (!in) throw std::runtime_error("checkpoint file truncated");
        for (int j = 0; j < t.numel(); ++j) t.data[j] = payload[j];
        ckpt.entries.emplace(std::move(name), std::move(t));
    }
    return ckpt;
}

std::string peek_checkpoint_kind(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "CKPT", 4) != 0) {
        throw std::runtime_error(path + " is not a checkpoint file");
    }
    return get_string(in);
}

void restore_state(const Checkpoint& ckpt, const StateMap& state) {
    if (ckpt.entries.size() != state.size()) {
        throw std::runtime_error("checkpoint entry count mismatch: file has " +
                                 std::to_string(ckpt.entries.size()) + ", model expects " +
                                 std::to_string(state.size()));
    }
    for (const auto& [name, tensor] : state) {
        auto it = ckpt.entries.find(name);
        if (it == ckpt.entries.end()) {
            throw std::runtime_error("checkpoint missing entry " + name);
        }
        if (it->second.shape != tensor->shape) {
            throw std::runtime_error("checkpoint shape mismatch for " + name + ": file " +
                                     it->second.shape_str() + ", model " + tensor->shape_str());
        }
        tensor->data = it->second.data;
    }
}

}  // namespace loopgen
