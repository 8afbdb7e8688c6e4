#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace sfconv {

// SFCK: magic "SFCK", version u32 LE, length-prefixed UTF-8 config snapshot,
// then (name length u32 LE, UTF-8 name, TNSR block) repeated until EOF.
inline constexpr std::uint32_t kSfckVersion = 1;

struct Checkpoint {
    std::string config_text;  // config plus a trailing [runtime] section
    std::vector<std::pair<std::string, Tensor>> tensors;  // serialization order
};

void write_checkpoint(std::ostream& os, const Checkpoint& ck);
Checkpoint read_checkpoint(std::istream& is);

// File writes go through a temp file + rename so readers never see a torn
// checkpoint.
void write_checkpoint_file(const Checkpoint& ck, const std::string& path);
Checkpoint read_checkpoint_file(const std::string& path);

const Tensor* find_tensor(const Checkpoint& ck, const std::string& name);

// Trainer state carried inside the config snapshot's [runtime] section.
struct RuntimeState {
    std::uint64_t epochs_done = 0;  // completed epochs
    std::uint64_t step = 0;         // global optimizer steps taken
    std::string rng_state;
    Shape input_shape;  // per-sample c x h x w the model was trained on
};

std::string compose_snapshot(const std::string& config_text, const RuntimeState& rt);

// Splits a snapshot into the plain config text and the runtime section
// (absent when the snapshot has none).
std::pair<std::string, std::optional<RuntimeState>> split_snapshot(const std::string& text);

}  // namespace sfconv
