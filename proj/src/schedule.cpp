#include "codelab/schedule.hpp"

#include <string>

namespace codelab {

NoiseSchedule::NoiseSchedule(std::vector<double> betas, double beta_start, double beta_end)
    : steps_(static_cast<int>(betas.size())), beta_start_(beta_start), beta_end_(beta_end) {
    if (betas.empty()) throw InvalidArgument("noise schedule needs at least one step");
    beta_.assign(betas.size() + 1, 0.0);
    alpha_.assign(betas.size() + 1, 1.0);
    alpha_bar_.assign(betas.size() + 1, 1.0);
    for (std::size_t i = 0; i < betas.size(); ++i) {
        const double b = betas[i];
        if (!(b > 0.0 && b < 1.0)) throw InvalidArgument("beta at step " + std::to_string(i + 1) + " outside (0, 1)");
        beta_[i + 1] = b;
        alpha_[i + 1] = 1.0 - b;
        alpha_bar_[i + 1] = alpha_bar_[i] * alpha_[i + 1];
    }
}

void NoiseSchedule::require_step(int t) const {
    if (t < 1 || t > steps_) throw InvalidArgument("step index " + std::to_string(t) + " outside [1, " + std::to_string(steps_) + "]");
}

NoiseSchedule build_linear_schedule(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw InvalidArgument("schedule step count must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw InvalidArgument("linear schedule needs 0 < beta_start <= beta_end < 1");
    std::vector<double> betas(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
        betas[static_cast<std::size_t>(i)] = beta_start + (beta_end - beta_start) * frac;
    }
    betas.back() = beta_end;
    return NoiseSchedule(std::move(betas), beta_start, beta_end);
}

Point2 forward_noising(Point2 x0, int t, Point2 eps, const NoiseSchedule& sched) {
    sched.require_step(t);
    const double ab = sched.alpha_bar(t);
    const double signal = std::sqrt(ab);
    const double noise = std::sqrt(1.0 - ab);
    return {signal * x0.x + noise * eps.x, signal * x0.y + noise * eps.y};
}

}  // namespace codelab
