#include "cyclocast/diffusion/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace cyclocast::diffusion {

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "linear") return ScheduleKind::linear;
    if (s == "cosine") return ScheduleKind::cosine;
    throw std::invalid_argument("unknown schedule kind: " + s);
}

std::string to_string(ScheduleKind k) {
    return k == ScheduleKind::linear ? "linear" : "cosine";
}

NoiseSchedule make_schedule(ScheduleKind kind, int num_steps) {
    if (num_steps < 2) throw std::invalid_argument("make_schedule: num_steps must be >= 2");

    NoiseSchedule s;
    s.num_steps = num_steps;
    s.beta.resize(num_steps);

    switch (kind) {
        case ScheduleKind::linear: {
            const double b0 = 1e-4, b1 = 0.02;
            for (int t = 0; t < num_steps; ++t)
                s.beta[t] = b0 + (b1 - b0) * static_cast<double>(t) / (num_steps - 1);
            break;
        }
        case ScheduleKind::cosine: {
            auto f = [](double u) {
                const double c = std::cos((u + 0.008) / 1.008 * M_PI / 2.0);
                return c * c;
            };
            for (int t = 0; t < num_steps; ++t) {
                const double u1 = static_cast<double>(t) / num_steps;
                const double u2 = static_cast<double>(t + 1) / num_steps;
                s.beta[t] = std::min(1.0 - f(u2) / f(u1), 0.999);
            }
            break;
        }
    }

    s.alpha_bar.resize(num_steps);
    s.lambda.resize(num_steps);
    double prod = 1.0;
    for (int t = 0; t < num_steps; ++t) {
        prod *= 1.0 - s.beta[t];
        s.alpha_bar[t] = prod;
        s.lambda[t] = std::log(prod / (1.0 - prod));
    }

    s.beta_tilde.resize(num_steps);
    s.beta_tilde[0] = 0.0;
    for (int t = 1; t < num_steps; ++t)
        s.beta_tilde[t] = (1.0 - s.alpha_bar[t - 1]) / (1.0 - s.alpha_bar[t]) * s.beta[t];

    return s;
}

}  // namespace cyclocast::diffusion
