#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "codelab/rewards.hpp"
#include "codelab/samplers.hpp"

namespace codelab {

/// Diagonal ridge added by fit_gaussian when the smallest covariance
/// eigenvalue falls below kRidgeTrigger.
inline constexpr double kCovarianceRidge = 1e-8;
inline constexpr double kRidgeTrigger = 1e-10;

struct GaussianFit {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov = Eigen::Matrix2d::Identity();
};

/// One line of the sweep output; the CSV columns follow this field order.
struct MetricsRow {
    std::string method;
    int n = 1;
    int block = 0;
    double eta = 1.0;
    double scale = 0.0;
    std::uint64_t seed = 0;
    double expected_reward = 0.0;
    double normalized_reward = 0.0;
    double win_rate = 0.0;
    double kl_fit = 0.0;
    double kl_bound = 0.0;
    double variance_x = 0.0;
    double variance_y = 0.0;
    std::uint64_t model_evals = 0;
    std::uint64_t reward_queries = 0;
    double wall_ms = 0.0;
};

/// Number of samples with a non-finite coordinate (diverged trajectories).
std::size_t count_non_finite(std::span<const Point2> samples);

/// Mean reward (density form for the Gaussian reward). Non-finite samples
/// score the reward's infimum: 0 for the density, -inf for the quantized
/// reward.
double expected_reward(std::span<const Point2> samples, const RewardSpec& spec);

/// expected_reward(samples) / expected_reward(base).
double normalized_reward(std::span<const Point2> samples, std::span<const Point2> base, const RewardSpec& spec);

/// Fraction of index-paired samples where the guided reward is larger than
/// the base reward; exact ties count one half.
double win_rate(std::span<const Point2> guided, std::span<const Point2> base, const RewardSpec& spec);

/// Sample mean and unbiased covariance (at least 2 finite samples).
GaussianFit fit_gaussian(std::span<const Point2> samples);

/// KL(a || b) between two bivariate Gaussians.
double gaussian_kl(const GaussianFit& a, const GaussianFit& b);

/// Upper bound on KL(method || base) from the per-selection best-of-N bound
/// log N - (N - 1) / N, multiplied by the number of selections:
///   BoN: 1,  CoDe / CoDe(eta): eta T / B,  SVDD-PM: eta T,  Base: 0.
/// Throws InvalidArgument for methods without a bound (gradient guidance).
double kl_upper_bound(Method method, int n, int block, int steps, double eta);

/// Per-coordinate unbiased sample variance (at least 2 samples); infinite
/// when any sample is non-finite.
std::pair<double, double> batch_variance(std::span<const Point2> samples);

}  // namespace codelab
