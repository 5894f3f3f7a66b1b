#include "cyclocast/data/synth.hpp"

#include <cmath>
#include <stdexcept>

#include "cyclocast/core/rng.hpp"

namespace cyclocast::data {

namespace {

// Smooth bump curve in [0.3, 1.0] with a seeded peak location and width.
std::vector<double> default_intensity(Rng& rng, int num_steps) {
    std::vector<double> c(num_steps);
    const double peak = 0.25 + 0.5 * rng.uniform();   // fraction of the run
    const double width = 0.25 + 0.35 * rng.uniform();
    for (int i = 0; i < num_steps; ++i) {
        const double u = num_steps > 1 ? static_cast<double>(i) / (num_steps - 1) : 0.0;
        const double d = (u - peak) / width;
        c[i] = 0.3 + 0.7 * std::exp(-0.5 * d * d);
    }
    return c;
}

// Separable 3x3 binomial blur, used to low-pass the additive noise texture.
void blur3(std::vector<double>& img, int h, int w) {
    std::vector<double> tmp(img.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int xm = x > 0 ? x - 1 : x, xp = x < w - 1 ? x + 1 : x;
            tmp[y * w + x] = 0.25 * img[y * w + xm] + 0.5 * img[y * w + x] + 0.25 * img[y * w + xp];
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int ym = y > 0 ? y - 1 : y, yp = y < h - 1 ? y + 1 : y;
            img[y * w + x] = 0.25 * tmp[ym * w + x] + 0.5 * tmp[y * w + x] + 0.25 * tmp[yp * w + x];
        }
}

struct Track {
    std::vector<double> x, y;
};

bool sample_track(Rng& rng, const SynthStormParams& p, int num_steps, Track& out) {
    const double margin = static_cast<double>(p.border_margin);
    const double lo_x = margin, hi_x = p.width - 1 - margin;
    const double lo_y = margin, hi_y = p.height - 1 - margin;
    double cx = p.width / 2.0 + (rng.uniform() - 0.5) * p.width * 0.25;
    double cy = p.height / 2.0 + (rng.uniform() - 0.5) * p.height * 0.25;
    // Initial drift heads toward the domain center; near the margin the
    // drift component reflects, so long storms curve back instead of
    // leaving. The random walk can still push the center out, in which case
    // the whole track is re-sampled.
    double sx = cx > p.width / 2.0 ? -1.0 : 1.0;
    double sy = cy > p.height / 2.0 ? -1.0 : 1.0;
    out.x.assign(num_steps, 0.0);
    out.y.assign(num_steps, 0.0);
    for (int i = 0; i < num_steps; ++i) {
        out.x[i] = cx;
        out.y[i] = cy;
        if (cx < lo_x || cx > hi_x || cy < lo_y || cy > hi_y) return false;
        if (cx < lo_x + 1.0) sx = 1.0;
        if (cx > hi_x - 1.0) sx = -1.0;
        if (cy < lo_y + 1.0) sy = 1.0;
        if (cy > hi_y - 1.0) sy = -1.0;
        cx += sx * p.drift_vx + p.random_walk_scale * rng.gaussian();
        cy += sy * p.drift_vy + p.random_walk_scale * rng.gaussian();
    }
    return true;
}

}  // namespace

StormSequence generate_storm(const SynthStormParams& p, int num_steps) {
    if (num_steps < 10) throw std::invalid_argument("generate_storm: num_steps must be >= 10");
    if (p.era5_channels != 3)
        throw std::invalid_argument("generate_storm: era5_channels must be 3 (u, v, depth)");

    Rng rng(p.seed);
    Rng track_rng = rng.fork(0x7261636bULL);
    Rng noise_rng = rng.fork(0x6e6f6973ULL);
    Rng curve_rng = rng.fork(0x63757276ULL);

    Track track;
    const int max_attempts = 64;
    int attempt = 0;
    for (; attempt < max_attempts; ++attempt)
        if (sample_track(track_rng, p, num_steps, track)) break;
    if (attempt == max_attempts)
        throw std::runtime_error("generate_storm: track left the domain after max re-sampling attempts");

    std::vector<double> intensity = p.intensity_curve;
    if (intensity.empty()) intensity = default_intensity(curve_rng, num_steps);
    if (static_cast<int>(intensity.size()) != num_steps)
        throw std::invalid_argument("generate_storm: intensity_curve length != num_steps");

    const int h = p.height, w = p.width;
    StormSequence seq;
    seq.center_x = track.x;
    seq.center_y = track.y;
    seq.intensity = intensity;
    seq.ir.reserve(num_steps);
    seq.era5 = Tensor({num_steps, p.era5_channels, h, w});

    const double r0 = p.vortex_radius;
    double phase = 0.0;
    for (int step = 0; step < num_steps; ++step, phase += p.swirl_strength) {
        const double cx = track.x[step], cy = track.y[step];
        const double amp = intensity[step];

        std::vector<double> noise(static_cast<std::size_t>(h) * w, 0.0);
        if (p.noise_level > 0.0) {
            for (auto& v : noise) v = noise_rng.gaussian();
            blur3(noise, h, w);
        }

        FrameGrid g;
        g.values = Tensor({h, w});
        g.mask = Tensor({h, w});
        g.mask.fill(1.0);
        double* era_u = seq.era5.data() + (static_cast<std::size_t>(step) * 3 + 0) * h * w;
        double* era_v = era_u + static_cast<std::size_t>(h) * w;
        double* era_d = era_v + static_cast<std::size_t>(h) * w;

        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double dx = x - cx, dy = y - cy;
                const double r = std::sqrt(dx * dx + dy * dy);
                const double theta = std::atan2(dy, dx);
                const double envelope = std::exp(-0.5 * (r / r0) * (r / r0));

                // Two-armed spiral bands rotating with the swirl phase.
                const double band = 0.35 * std::sin(2.0 * theta + 0.55 * r / r0 * 2.0 * M_PI - phase);
                double ir = amp * envelope * (1.0 + band);
                ir += p.noise_level * noise[y * w + x];
                g.values[y * w + x] = ir;

                // Tangential swirl decaying outward, plus the drift.
                const double swirl = p.swirl_strength * r0 * envelope;
                era_u[y * w + x] = -swirl * (r > 1e-9 ? dy / r : 0.0) + p.drift_vx;
                era_v[y * w + x] = swirl * (r > 1e-9 ? dx / r : 0.0) + p.drift_vy;
                era_d[y * w + x] = amp * std::exp(-0.5 * (r / (1.4 * r0)) * (r / (1.4 * r0)));
            }
        }
        seq.ir.push_back(std::move(g));
    }
    return seq;
}

}  // namespace cyclocast::data
