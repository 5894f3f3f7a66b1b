#pragma once

#include <string>
#include <vector>

namespace cyclocast::diffusion {

enum class ScheduleKind { linear, cosine };

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

// Per-step forward-process tables. alpha_bar is the cumulative signal
// fraction, lambda the log-SNR log(alpha_bar / (1 - alpha_bar)); both are
// strictly decreasing in t.
struct NoiseSchedule {
    int num_steps = 0;
    std::vector<double> beta;       // variance increment per step, in (0,1)
    std::vector<double> alpha_bar;  // prod_{s<=t} (1 - beta_s), in (0,1]
    std::vector<double> lambda;     // log-SNR per step

    // Posterior variance of q(z_{t-1} | z_t, x0); beta_tilde[0] is unused
    // (there is no step below t=0).
    std::vector<double> beta_tilde;
};

// kind=linear: beta linearly spaced on [1e-4, 0.02].
// kind=cosine: squared-cosine alpha_bar with the usual 0.008 offset,
// betas capped at 0.999.
// Throws std::invalid_argument for num_steps < 2.
NoiseSchedule make_schedule(ScheduleKind kind, int num_steps);

}  // namespace cyclocast::diffusion
