#pragma once

#include <cstdint>
#include <vector>

#include "cyclocast/core/tensor.hpp"

namespace cyclocast::data {

// One H x W image plus validity mask. Invalid pixels always hold value 0.
struct FrameGrid {
    Tensor values;  // (H, W)
    Tensor mask;    // (H, W), 1.0 = valid, 0.0 = invalid

    std::int64_t height() const { return values.dim(0); }
    std::int64_t width() const { return values.dim(1); }
};

// T ordered frames sharing one validity mask.
struct VideoClip {
    Tensor frames;                  // (T, H, W)
    std::vector<double> timestamps; // hours since clip start, strictly increasing
    Tensor mask;                    // (H, W) shared by all frames

    std::int64_t length() const { return frames.dim(0); }
    std::int64_t height() const { return frames.dim(1); }
    std::int64_t width() const { return frames.dim(2); }
};

// Replace NaNs by zero and mark them invalid; finite values pass through.
FrameGrid sanitize(const Tensor& raw);

// Overlapping windows of clip_len frames at the given stride. A clip's mask
// is the AND of its frames' masks; windows that do not fit are dropped.
// Throws if the sequence is shorter than clip_len.
std::vector<VideoClip> assemble_clips(const std::vector<FrameGrid>& sequence,
                                      int clip_len, int stride);

// Per-channel affine normalization stats, computed on the training split.
struct NormStats {
    double min = 0.0;
    double max = 1.0;
};

// Affine map [min, max] -> [-1, 1]. Out-of-range inputs clip to the endpoint
// and bump a warning counter (train/test distribution shift is expected).
// Throws on degenerate stats (max == min).
double normalize_value(double v, const NormStats& s, std::uint64_t* clip_warnings);
double denormalize_value(double v, const NormStats& s);

void normalize(Tensor& values, const NormStats& s, std::uint64_t* clip_warnings);
void denormalize(Tensor& values, const NormStats& s);

}  // namespace cyclocast::data
