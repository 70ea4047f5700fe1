#pragma once

#include <variant>

#include "codelab/denoiser.hpp"
#include "codelab/types.hpp"

namespace codelab {

/// r(x) = N(x; mu, sigma^2 I_2), the density of the reward distribution.
struct GaussianReward {
    Point2 mu{14.0, 3.0};
    double sigma = 2.0;
};

/// r(x) = -delta * floor(|x - mu| / delta). Piecewise constant, so it has
/// no useful gradient.
struct QuantizedReward {
    Point2 mu{14.0, 3.0};
    double delta = 1.0;
};

using RewardSpec = std::variant<GaussianReward, QuantizedReward>;

void validate(const RewardSpec& spec);
bool is_differentiable(const RewardSpec& spec);
Point2 reward_center(const RewardSpec& spec);
RewardSpec with_center(const RewardSpec& spec, Point2 mu);

double reward(const RewardSpec& spec, Point2 x);

/// Log-density of the Gaussian reward; UnsupportedVariant otherwise.
double log_reward(const RewardSpec& spec, Point2 x);

/// Gradient of log_reward, (mu - x) / sigma^2; UnsupportedVariant for the
/// quantized reward.
Point2 reward_grad(const RewardSpec& spec, Point2 x);

/// Order-preserving score used for selection: log_reward for the Gaussian
/// reward, reward itself for the quantized one.
double selection_score(const RewardSpec& spec, Point2 x);

/// V(x_t) ~ score(x0_hat(x_t)), the Tweedie plug-in value estimate. At
/// t = 0 there is nothing left to denoise and the score of x_t is returned.
double estimate_value(const Denoiser& model, const RewardSpec& spec, Point2 x_t, int t);

}  // namespace codelab
