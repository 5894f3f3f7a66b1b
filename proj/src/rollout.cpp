#include "cyclocast/rollout/rollout.hpp"

#include <cmath>
#include <stdexcept>

#include "cyclocast/metrics/metrics.hpp"

namespace cyclocast::rollout {

ChunkSampler make_denoiser_sampler(net::Denoiser& model, const diffusion::NoiseSchedule& sched,
                                   const diffusion::GuidanceConfig& gcfg, int chunk_len) {
    return [&model, sched, gcfg, chunk_len](const net::ConditioningBundle& cond,
                                            std::uint64_t seed) {
        const std::int64_t H = cond.initial_frame.dim(0), W = cond.initial_frame.dim(1);
        diffusion::DenoiserFn fn = [&model, &cond](const Tensor& z, int t, double lambda_t,
                                                   bool null_cond) {
            if (!null_cond) return model.forward(z, t, lambda_t, cond);
            return model.forward(z, t, lambda_t, net::null_bundle(cond));
        };
        Tensor clip = diffusion::sample(fn, {chunk_len, 1, H, W}, cond.mask, sched, gcfg, seed);
        // (T, 1, H, W) -> (T, H, W)
        Tensor out({chunk_len, H, W});
        std::copy_n(clip.data(), clip.size(), out.data());
        return out;
    };
}

RolloutTrace cascade_forecast(const ChunkSampler& sampler, int chunk_len,
                              const net::ConditioningBundle& initial, const Tensor& era5_timeline,
                              int horizon_hours, std::uint64_t seed) {
    if (horizon_hours < 1) throw std::invalid_argument("cascade_forecast: horizon must be >= 1");
    if (chunk_len < 1) throw std::invalid_argument("cascade_forecast: chunk_len must be >= 1");
    initial.validate();

    const std::int64_t H = initial.initial_frame.dim(0), W = initial.initial_frame.dim(1);
    const std::int64_t K = initial.era5_stack.dim(0), C = initial.era5_stack.dim(1);
    const std::size_t hw = static_cast<std::size_t>(H) * W;

    const int n_chunks = (horizon_hours + chunk_len - 1) / chunk_len;
    const std::int64_t hours = era5_timeline.size() == 0 ? 0 : era5_timeline.dim(0);
    const std::int64_t need =
        std::max<std::int64_t>(horizon_hours, static_cast<std::int64_t>(n_chunks - 1) * chunk_len + K);
    if (era5_timeline.rank() != 4 || era5_timeline.dim(1) != C || era5_timeline.dim(2) != H ||
        era5_timeline.dim(3) != W || hours < need)
        throw std::invalid_argument("cascade_forecast: era5 timeline shorter than the horizon needs");

    RolloutTrace trace;
    trace.full_forecast = Tensor({horizon_hours, H, W});
    trace.chunk_index.resize(horizon_hours);

    Rng chunk_seeds(seed);
    Tensor cond_frame = initial.initial_frame;
    for (int k = 0; k < n_chunks; ++k) {
        const int start_hour = k * chunk_len;  // hour of the conditioning frame

        Tensor era5({K, C, H, W});
        std::copy_n(era5_timeline.data() + static_cast<std::size_t>(start_hour) * C * hw,
                    era5.size(), era5.data());
        net::ConditioningBundle cond = net::make_bundle(cond_frame, std::move(era5), initial.mask);

        Tensor chunk = sampler(cond, chunk_seeds.fork(k).next_u64());
        if (chunk.rank() != 3 || chunk.dim(0) != chunk_len || chunk.dim(1) != H || chunk.dim(2) != W)
            throw std::runtime_error("cascade_forecast: sampler returned wrong shape");

        // Next chunk conditions on the last generated frame, bit-exactly.
        cond_frame = Tensor({H, W});
        std::copy_n(chunk.data() + static_cast<std::size_t>(chunk_len - 1) * hw, hw,
                    cond_frame.data());

        const int take = std::min(chunk_len, horizon_hours - start_hour);
        std::copy_n(chunk.data(), static_cast<std::size_t>(take) * hw,
                    trace.full_forecast.data() + static_cast<std::size_t>(start_hour) * hw);
        for (int i = 0; i < take; ++i) trace.chunk_index[start_hour + i] = k;

        Tensor kept({take, H, W});
        std::copy_n(chunk.data(), kept.size(), kept.data());
        trace.chunks.push_back(std::move(kept));
    }
    return trace;
}

std::vector<double> ssim_curve(const Tensor& forecast, const Tensor& truth, const Tensor& mask) {
    if (forecast.rank() != 3 || truth.rank() != 3)
        throw std::invalid_argument("ssim_curve: expected (N, H, W) stacks");
    forecast.require_shape(truth, "ssim_curve");
    const std::int64_t N = forecast.dim(0), H = forecast.dim(1), W = forecast.dim(2);
    const std::size_t hw = static_cast<std::size_t>(H) * W;

    std::vector<double> curve(N);
    for (std::int64_t i = 0; i < N; ++i) {
        Tensor a({H, W}), b({H, W});
        std::copy_n(forecast.data() + i * hw, hw, a.data());
        std::copy_n(truth.data() + i * hw, hw, b.data());
        curve[i] = metrics::ssim_frame(a, b, mask);
    }
    return curve;
}

int reliable_horizon(const std::vector<double>& curve, int drop_window, double drop_threshold) {
    if (curve.empty()) throw std::invalid_argument("reliable_horizon: empty curve");
    if (drop_window < 1) throw std::invalid_argument("reliable_horizon: drop_window must be >= 1");
    const int n = static_cast<int>(curve.size());
    if (drop_window < 2) return n;  // a single-point window has no slope
    for (int h = 1; h + drop_window - 1 <= n; ++h) {
        // Mean slope across the window = endpoint difference / span.
        const double slope =
            (curve[h + drop_window - 2] - curve[h - 1]) / static_cast<double>(drop_window - 1);
        if (slope < -drop_threshold) return h;
    }
    return n;
}

std::pair<int, double> min_ssim_marker(const std::vector<double>& curve) {
    if (curve.empty()) throw std::invalid_argument("min_ssim_marker: empty curve");
    int best = 0;
    for (int i = 1; i < static_cast<int>(curve.size()); ++i)
        if (curve[i] < curve[best]) best = i;
    return {best, curve[best]};
}

void evaluate_trace(RolloutTrace& trace, const Tensor& truth, const Tensor& mask, int drop_window,
                    double drop_threshold) {
    trace.ssim_curve = ssim_curve(trace.full_forecast, truth, mask);
    const auto marker = min_ssim_marker(trace.ssim_curve);
    trace.min_ssim_index = marker.first;
    trace.min_ssim_value = marker.second;
    trace.reliable_horizon_hours = reliable_horizon(trace.ssim_curve, drop_window, drop_threshold);
}

}  // namespace cyclocast::rollout
