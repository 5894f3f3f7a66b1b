#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "cyclocast/net/denoiser.hpp"

namespace cyclocast::net {

// Versioned binary checkpoint: model config, named parameter arrays, a
// training-stage tag, and RNG/progress counters. Canonical serialization, so
// save(load(f)) reproduces f byte for byte. Layout (little-endian):
//   magic "CCKPT001" | u32 version | u32 header_len | header text
//   u32 param_count | per param: u16 name_len, name, u8 ndim, u32 dims[],
//   f64 data[]
// The header is "key=value\n" lines in fixed order.
struct CheckpointMeta {
    std::string stage_tag;          // "init", "single_frame", "multi_frame"
    std::uint64_t train_seed = 0;
    std::uint64_t step_counter = 0; // global training step, drives RNG streams
    std::uint64_t epoch_counter = 0;
};

void save_checkpoint(const std::filesystem::path& path, Denoiser& model,
                     const CheckpointMeta& meta);

// Loads into an existing model; every checkpoint parameter must match a
// model parameter by name and shape, with zero missing and zero unexpected
// entries (throws otherwise). Returns the stored meta.
CheckpointMeta load_checkpoint(const std::filesystem::path& path, Denoiser& model);

// Reads just the config (to build a model before loading weights).
DenoiserConfig read_checkpoint_config(const std::filesystem::path& path);

}  // namespace cyclocast::net
