#pragma once

#include <cstdint>
#include <vector>

#include "cyclocast/core/tensor.hpp"
#include "cyclocast/data/types.hpp"

namespace cyclocast::data {

// Parametric vortex generator: a rotating spiral-banded Gaussian vortex
// advected along a drifting track, plus filtered noise texture. The
// meteorology-like channels derive from the same latent state, so imagery
// and conditioning stay physically coherent:
//   channel 0, 1 : flow-field velocity components (swirl + drift)
//   channel 2    : pressure-depth scalar peaked at the vortex center
struct SynthStormParams {
    std::uint64_t seed = 0;
    int height = 64;
    int width = 64;
    double drift_vx = 0.35;        // pixels per step
    double drift_vy = 0.2;
    double random_walk_scale = 0.15;  // pixels per step
    double vortex_radius = 9.0;       // pixels
    double swirl_strength = 0.35;     // radians per step
    double noise_level = 0.04;        // additive texture amplitude
    int era5_channels = 3;
    int border_margin = 4;            // min distance of center to border
    // Per-step vortex intensity in [0, 1]; empty = smooth random curve
    // derived from the seed.
    std::vector<double> intensity_curve;
};

struct StormSequence {
    std::vector<FrameGrid> ir;  // num_steps frames, raw (unnormalized) values
    Tensor era5;                // (num_steps, C, H, W), raw values
    std::vector<double> center_x;  // analytic track, for diagnostics
    std::vector<double> center_y;
    std::vector<double> intensity;
};

// Deterministic per seed. Tracks that would leave the border margin are
// re-sampled (new random walk) up to a retry limit; throws past it.
StormSequence generate_storm(const SynthStormParams& params, int num_steps);

}  // namespace cyclocast::data
