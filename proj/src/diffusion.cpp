#include "cyclocast/diffusion/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cyclocast/kern/kernels.hpp"

namespace cyclocast::diffusion {

void GuidanceConfig::validate() const {
    if (scale < 0.0) throw std::invalid_argument("guidance scale must be >= 0");
    if (!(dynamic_threshold_percentile > 0.0 && dynamic_threshold_percentile <= 1.0))
        throw std::invalid_argument("dynamic threshold percentile must be in (0, 1]");
    if (clamp_floor <= 0.0) throw std::invalid_argument("clamp floor must be > 0");
}

namespace {

void check_t(int t, const NoiseSchedule& sched, const char* what) {
    if (t < 0 || t >= sched.num_steps)
        throw std::out_of_range(std::string(what) + ": timestep " + std::to_string(t) +
                                " outside [0, " + std::to_string(sched.num_steps) + ")");
}

void check_finite(const Tensor& x, const char* what) {
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!std::isfinite(x[i]))
            throw std::invalid_argument(std::string(what) + ": non-finite input value");
}

}  // namespace

Tensor q_sample(const Tensor& x0, int t, const Tensor& noise, const NoiseSchedule& sched) {
    x0.require_shape(noise, "q_sample");
    check_t(t, sched, "q_sample");
    const double ab = sched.alpha_bar[t];
    Tensor z(x0.shape());
    kern::active().axpby(z.data(), x0.data(), std::sqrt(ab), noise.data(), std::sqrt(1.0 - ab),
                         x0.size());
    return z;
}

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double scale) {
    eps_cond.require_shape(eps_uncond, "cfg_combine");
    // Literal eps_u + w*(eps_c - eps_u); equal inputs pass through exactly.
    Tensor out(eps_cond.shape());
    kern::active().vsub(out.data(), eps_cond.data(), eps_uncond.data(), out.size());
    kern::active().axpby(out.data(), out.data(), scale, eps_uncond.data(), 1.0, out.size());
    return out;
}

Tensor dynamic_threshold(const Tensor& x0_hat, const GuidanceConfig& cfg) {
    cfg.validate();
    check_finite(x0_hat, "dynamic_threshold");

    double s = cfg.clamp_floor;
    if (x0_hat.size() > 0) {
        std::vector<double> mag(x0_hat.size());
        for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::fabs(x0_hat[i]);
        std::sort(mag.begin(), mag.end());
        // Nearest-rank quantile over |x|: index ceil(p*n) - 1.
        const std::size_t n = mag.size();
        std::size_t k = static_cast<std::size_t>(
            std::ceil(cfg.dynamic_threshold_percentile * static_cast<double>(n)));
        if (k == 0) k = 1;
        if (k > n) k = n;
        s = std::max(cfg.clamp_floor, mag[k - 1]);
    }

    Tensor out(x0_hat.shape());
    const double inv = 1.0 / s;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::clamp(x0_hat[i], -s, s) * inv;
    return out;
}

Tensor reconstruct_x0(const Tensor& z_t, const Tensor& eps_hat, int t,
                      const NoiseSchedule& sched) {
    z_t.require_shape(eps_hat, "reconstruct_x0");
    check_t(t, sched, "reconstruct_x0");
    const double ab_t = sched.alpha_bar[t];
    const double inv_sqrt_ab = 1.0 / std::sqrt(ab_t);
    Tensor x0_hat(z_t.shape());
    kern::active().axpby(x0_hat.data(), z_t.data(), inv_sqrt_ab, eps_hat.data(),
                         -std::sqrt(1.0 - ab_t) * inv_sqrt_ab, x0_hat.size());
    return x0_hat;
}

Tensor ddpm_step(const Tensor& z_t, const Tensor& eps_hat, int t,
                 const NoiseSchedule& sched, const GuidanceConfig& cfg,
                 const Tensor& rng_draw) {
    if (t == 0) throw std::out_of_range("ddpm_step: t must be >= 1");

    Tensor x0_hat = dynamic_threshold(reconstruct_x0(z_t, eps_hat, t, sched), cfg);

    // Final step: posterior collapses to the clean prediction, no noise.
    if (t == 1) return x0_hat;

    const double ab_t = sched.alpha_bar[t];
    const double ab_prev = sched.alpha_bar[t - 1];
    const double beta_t = sched.beta[t];
    const double alpha_t = 1.0 - beta_t;

    // Posterior mean coefficients on (x0_hat, z_t).
    const double c0 = std::sqrt(ab_prev) * beta_t / (1.0 - ab_t);
    const double cz = std::sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t);

    Tensor z_prev(z_t.shape());
    kern::active().axpby(z_prev.data(), x0_hat.data(), c0, z_t.data(), cz, z_prev.size());

    z_t.require_shape(rng_draw, "ddpm_step (rng draw)");
    const double sigma = std::sqrt(sched.beta_tilde[t]);
    kern::active().axpy(z_prev.data(), rng_draw.data(), sigma, z_prev.size());
    return z_prev;
}

void apply_mask(Tensor& values, const Tensor& mask) {
    if (mask.size() == 0) return;
    if (mask.rank() != 2) throw std::invalid_argument("apply_mask: mask must be rank 2");
    const std::size_t hw = mask.size();
    if (values.size() % hw != 0)
        throw std::invalid_argument("apply_mask: values size not a multiple of mask size");
    const std::size_t planes = values.size() / hw;
    double* v = values.data();
    for (std::size_t p = 0; p < planes; ++p, v += hw)
        for (std::size_t i = 0; i < hw; ++i)
            if (mask[i] == 0.0) v[i] = 0.0;
}

Tensor sample(const DenoiserFn& model, const std::vector<std::int64_t>& shape,
              const Tensor& mask, const NoiseSchedule& sched, const GuidanceConfig& cfg,
              std::uint64_t seed) {
    cfg.validate();
    if (sched.num_steps < 2) throw std::invalid_argument("sample: invalid schedule");

    Rng rng(seed);
    Tensor z(shape);
    rng.fill_gaussian(z.data(), z.size());
    diffusion::apply_mask(z, mask);

    Tensor draw(shape);
    for (int t = sched.num_steps - 1; t >= 1; --t) {
        const double lam = sched.lambda[t];
        Tensor eps_c = model(z, t, lam, /*null_cond=*/false);
        Tensor eps_u = model(z, t, lam, /*null_cond=*/true);
        Tensor eps = cfg_combine(eps_c, eps_u, cfg.scale);
        if (t > 1) rng.fill_gaussian(draw.data(), draw.size());
        z = ddpm_step(z, eps, t, sched, cfg, draw);
        diffusion::apply_mask(z, mask);
    }
    return z;
}

}  // namespace cyclocast::diffusion
