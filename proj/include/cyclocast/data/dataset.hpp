#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cyclocast/core/tensor.hpp"
#include "cyclocast/data/synth.hpp"
#include "cyclocast/data/types.hpp"

namespace cyclocast::data {

// One training/eval record: a 10-frame target clip plus the conditioning
// observed at the hour before the window (initial IR frame and the ERA5-like
// slices for hours s-1, s, s+1 where s is the first target hour). All values
// are stored normalized to [-1, 1].
struct ClipRecord {
    VideoClip clip;        // (T, H, W) target frames
    Tensor cond_frame;     // (H, W) last observed IR frame
    Tensor cond_era5;      // (K, C, H, W) conditioning slices
    std::uint64_t storm_seed = 0;
    int window_start = 0;  // hour of the first target frame within the storm
};

struct DatasetSpec {
    std::filesystem::path dir;
    int train_storms = 60;
    int test_storms = 18;
    int steps_per_storm = 45;
    int clip_len = 10;
    int stride = 10;
    int cond_timesteps = 3;
    int era5_channels = 3;
    int height = 64;
    int width = 64;
    std::uint64_t train_seed_base = 1000;
    std::uint64_t test_seed_base = 2000;
    double noise_level = 0.04;
};

struct DatasetStats {
    NormStats ir;
    std::vector<NormStats> era5;  // one per channel
};

struct Manifest {
    DatasetSpec spec;
    DatasetStats stats;
    struct Entry {
        std::string split;  // "train" or "test"
        std::uint64_t storm_seed;
        int window_start;
        std::string file;
    };
    std::vector<Entry> entries;
};

// Binary clip file, little-endian:
//   magic "CCLIP001" | u32 version | u32 T,H,W,C,K | u32 window_start
//   u64 storm_seed | f32 timestamps[T] | f32 cond_frame[H*W]
//   f32 cond_era5[K*C*H*W] | f32 targets[T*H*W] | mask bits (row-major,
//   LSB-first, ceil(H*W/8) bytes)
void write_clip(const std::filesystem::path& path, const ClipRecord& rec);
ClipRecord read_clip(const std::filesystem::path& path);

// Generates the storms, normalizes with train-split stats, and persists
// manifest.txt plus train/clip_####.bin and test/clip_####.bin. Re-running
// over an existing manifest is a no-op (returns false). Seed ranges of the
// two splits must be disjoint.
bool build_dataset(const DatasetSpec& spec);

Manifest read_manifest(const std::filesystem::path& dir);

std::vector<ClipRecord> load_split(const Manifest& m, const std::string& split);

// Storm parameters the dataset builder uses for a given seed, so evaluation
// and rollout can regenerate the exact ground-truth timeline.
SynthStormParams storm_params_for(const DatasetSpec& spec, std::uint64_t seed);

}  // namespace cyclocast::data
