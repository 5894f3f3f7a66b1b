#pragma once

#include <cstdint>
#include <functional>

#include "cyclocast/core/rng.hpp"
#include "cyclocast/core/tensor.hpp"
#include "cyclocast/diffusion/schedule.hpp"

namespace cyclocast {
namespace net {
struct ConditioningBundle;
}

namespace diffusion {

struct GuidanceConfig {
    double scale = 3.0;                       // w in eps_u + w*(eps_c - eps_u)
    double dynamic_threshold_percentile = 0.995;  // in (0, 1]
    double clamp_floor = 1.0;                 // minimum threshold s

    void validate() const;
};

// z_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * noise
Tensor q_sample(const Tensor& x0, int t, const Tensor& noise, const NoiseSchedule& sched);

// eps_u + scale * (eps_c - eps_u), elementwise.
Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double scale);

// Quantile clamp-and-rescale: s = max(clamp_floor, percentile quantile of
// |x|), output = clip(x, -s, s) / s. Output always lies in [-1, 1].
Tensor dynamic_threshold(const Tensor& x0_hat, const GuidanceConfig& cfg);

// x0_hat = (z_t - sqrt(1-alpha_bar_t) * eps_hat) / sqrt(alpha_bar_t).
Tensor reconstruct_x0(const Tensor& z_t, const Tensor& eps_hat, int t,
                      const NoiseSchedule& sched);

// One reverse step z_t -> z_{t-1}: reconstruct x0_hat from (z_t, eps_hat),
// dynamic-threshold it, then sample the DDPM posterior. rng_draw supplies the
// posterior noise. At t == 1 the step is deterministic (variance 0) and
// returns the thresholded clean prediction, so the final output lies in
// [-1, 1]. Throws for t == 0 or t >= num_steps.
Tensor ddpm_step(const Tensor& z_t, const Tensor& eps_hat, int t,
                 const NoiseSchedule& sched, const GuidanceConfig& cfg,
                 const Tensor& rng_draw);

// Noise predictor interface used by the sampling loop: (z_t, t, lambda_t,
// null_conditioning?) -> eps_hat. The callable owns the conditioning; the
// flag selects the conditional or the null branch.
using DenoiserFn = std::function<Tensor(const Tensor& z_t, int t, double lambda_t, bool null_cond)>;

// Full reverse chain from pure Gaussian noise. Calls `model` twice per step
// (conditional and null branch), combines with classifier-free guidance, and
// forces mask-invalid pixels to zero along the chain and in the output.
// `mask` is (H, W) with 1 = valid, broadcast over leading dims; pass an empty
// tensor for no masking. Deterministic for a fixed seed.
Tensor sample(const DenoiserFn& model, const std::vector<std::int64_t>& shape,
              const Tensor& mask, const NoiseSchedule& sched, const GuidanceConfig& cfg,
              std::uint64_t seed);

// Zeroes entries whose mask pixel is 0. mask is (H, W); values' trailing two
// dims must equal (H, W).
void apply_mask(Tensor& values, const Tensor& mask);

}  // namespace diffusion
}  // namespace cyclocast
