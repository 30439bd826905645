#ifndef LOOPGEN_CHECKPOINT_HPP
#define LOOPGEN_CHECKPOINT_HPP

#include <map>
#include <string>

#include "loopgen/layers.hpp"
#include "loopgen/tensor.hpp"

namespace loopgen {

struct Checkpoint {
    std::string kind;
    std::map<std::string, Tensor> entries;
};

// Format: "CKPT", kind tag, then named entries (length-prefixed name, rank,
// shape, float32 payload). Values round through float32.
void save_checkpoint(const std::string& path, const std::string& kind, const StateMap& state);

Checkpoint load_checkpoint(const std::string& path);
std::string peek_checkpoint_kind(const std::string& path);

// Copies checkpoint entries into the module state; every name must match and
// shapes must agree.
void restore_state(const Checkpoint& ckpt, const StateMap& state);

}  // namespace loopgen

#endif
