#pragma once

#include <cmath>
#include <vector>

#include "codelab/types.hpp"

namespace codelab {

/// Variance schedule of a T-step DDPM.
///
/// Arrays are indexed by step t = 0..T. Index 0 is the clean-data sentinel
/// (beta = 0, alpha = alpha_bar = 1); steps 1..T are the real diffusion
/// steps. Reverse sampling runs t = T down to 1, so the "t in [T-1 .. 0]"
/// loop of the usual pseudocode maps onto steps T..1 here.
class NoiseSchedule {
public:
    NoiseSchedule() = default;

    /// Builds the derived arrays from per-step betas (beta[i] is step i+1).
    explicit NoiseSchedule(std::vector<double> betas, double beta_start = 0.0, double beta_end = 0.0);

    int steps() const { return steps_; }
    double beta(int t) const { return beta_[check(t)]; }
    double alpha(int t) const { return alpha_[check(t)]; }
    double alpha_bar(int t) const { return alpha_bar_[check(t)]; }

    /// Parameters the schedule was built from (linear schedules only).
    double beta_start() const { return beta_start_; }
    double beta_end() const { return beta_end_; }

    /// Throws InvalidArgument unless 1 <= t <= T.
    void require_step(int t) const;

private:
    int check(int t) const {
        if (t < 0 || t > steps_) throw InvalidArgument("step index " + std::to_string(t) + " outside [0, " + std::to_string(steps_) + "]");
        return t;
    }

    int steps_ = 0;
    double beta_start_ = 0.0;
    double beta_end_ = 0.0;
    std::vector<double> beta_;
    std::vector<double> alpha_;
    std::vector<double> alpha_bar_;
};

/// Linearly spaced betas from beta_start to beta_end inclusive.
NoiseSchedule build_linear_schedule(int steps, double beta_start, double beta_end);

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
Point2 forward_noising(Point2 x0, int t, Point2 eps, const NoiseSchedule& sched);

/// Mean of the learned reverse transition p(x_{t-1} | x_t).
inline Point2 posterior_mean(Point2 x_t, Point2 eps_hat, int t, const NoiseSchedule& sched) {
    sched.require_step(t);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
    const double eps_coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
    return {inv_sqrt_alpha * (x_t.x - eps_coef * eps_hat.x), inv_sqrt_alpha * (x_t.y - eps_coef * eps_hat.y)};
}

/// Predicted clean sample E[x0 | x_t] from a noise estimate.
inline Point2 tweedie_x0(Point2 x_t, Point2 eps_hat, int t, const NoiseSchedule& sched) {
    sched.require_step(t);
    const double ab = sched.alpha_bar(t);
    const double noise_scale = std::sqrt(1.0 - ab);
    const double inv_signal = 1.0 / std::sqrt(ab);
    return {inv_signal * (x_t.x - noise_scale * eps_hat.x), inv_signal * (x_t.y - noise_scale * eps_hat.y)};
}

/// One ancestral reverse step given the noise estimate at (x_t, t).
/// The final step (t == 1) returns the mean and ignores `noise`.
inline Point2 reverse_step(Point2 x_t, Point2 eps_hat, int t, Point2 noise, const NoiseSchedule& sched) {
    const Point2 mean = posterior_mean(x_t, eps_hat, t, sched);
    if (t == 1) return mean;
    const double sigma = std::sqrt(sched.beta(t));
    return {mean.x + sigma * noise.x, mean.y + sigma * noise.y};
}

}  // namespace codelab
