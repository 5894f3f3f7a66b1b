#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cyclocast/core/tensor.hpp"
#include "cyclocast/diffusion/diffusion.hpp"
#include "cyclocast/net/denoiser.hpp"

namespace cyclocast::rollout {

// Long-horizon forecast assembled from chained fixed-length generations.
// Forecast hours run 1..horizon; hour 0 is the observed initial frame.
struct RolloutTrace {
    std::vector<Tensor> chunks;     // each (chunk_len or tail, H, W)
    Tensor full_forecast;           // (horizon, H, W)
    std::vector<int> chunk_index;   // per forecast hour
    std::vector<double> ssim_curve; // filled by evaluate_trace
    int min_ssim_index = -1;        // 0-based index into ssim_curve
    double min_ssim_value = 0.0;
    int reliable_horizon_hours = 0; // 1-based hour count
};

// Generates one chunk of frames (chunk_len, H, W) from a conditioning
// bundle. The denoiser-backed implementation wraps diffusion::sample; tests
// substitute mocks.
using ChunkSampler = std::function<Tensor(const net::ConditioningBundle&, std::uint64_t seed)>;

ChunkSampler make_denoiser_sampler(net::Denoiser& model, const diffusion::NoiseSchedule& sched,
                                   const diffusion::GuidanceConfig& gcfg, int chunk_len);

// Chains ceil(horizon / chunk_len) generations. Chunk k+1 is conditioned on
// the last generated frame of chunk k (bit-exactly); ERA5 conditioning is
// sliced from era5_timeline at each chunk's start hour (cond_timesteps
// consecutive slices); the final chunk truncates to the horizon.
// era5_timeline: (hours, C, H, W) of normalized analysis-style conditioning,
// hour 0 aligned with the initial frame.
RolloutTrace cascade_forecast(const ChunkSampler& sampler, int chunk_len,
                              const net::ConditioningBundle& initial, const Tensor& era5_timeline,
                              int horizon_hours, std::uint64_t seed);

// Per-hour SSIM of forecast vs truth (both (N, H, W)).
std::vector<double> ssim_curve(const Tensor& forecast, const Tensor& truth, const Tensor& mask);

// First 1-based hour h whose mean slope over the window [h, h + drop_window)
// is more negative than -drop_threshold; the whole curve length when no such
// window exists (full horizon reliable).
int reliable_horizon(const std::vector<double>& curve, int drop_window = 5,
                     double drop_threshold = 0.03);

// Global minimum of the curve; ties resolve to the earliest index (0-based).
std::pair<int, double> min_ssim_marker(const std::vector<double>& curve);

// Fills ssim_curve / min marker / reliable horizon of a trace against the
// ground-truth frames.
void evaluate_trace(RolloutTrace& trace, const Tensor& truth, const Tensor& mask,
                    int drop_window = 5, double drop_threshold = 0.03);

}  // namespace cyclocast::rollout
