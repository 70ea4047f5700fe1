#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "codelab/rewards.hpp"

using namespace codelab;
using doctest::Approx;

namespace {

const RewardSpec kGauss = GaussianReward{{14.0, 3.0}, 2.0};
const RewardSpec kQuant = QuantizedReward{{14.0, 3.0}, 1.0};

}  // namespace

TEST_CASE("Gaussian reward at its mode") {
    CHECK(reward(kGauss, {14.0, 3.0}) == Approx(1.0 / (8.0 * std::numbers::pi)).epsilon(1e-15));
    CHECK(reward(kGauss, {14.0, 3.0}) == Approx(0.039789).epsilon(1e-5));
    CHECK(log_reward(kGauss, {14.0, 3.0}) == Approx(-std::log(8.0 * std::numbers::pi)).epsilon(1e-15));
    CHECK(log_reward(kGauss, {14.0, 3.0}) == Approx(-3.2242).epsilon(1e-4));
}

TEST_CASE("log reward two sigmas from the mode drops by two") {
    const double mode = log_reward(kGauss, {14.0, 3.0});
    CHECK(log_reward(kGauss, {18.0, 3.0}) == Approx(mode - 2.0).epsilon(1e-14));
    CHECK(log_reward(kGauss, {14.0, -1.0}) == Approx(mode - 2.0).epsilon(1e-14));
    CHECK(std::log(reward(kGauss, {18.0, 3.0})) == Approx(mode - 2.0).epsilon(1e-14));
}

TEST_CASE("Gaussian reward is rotation invariant about its centre") {
    for (double angle = 0.0; angle < 6.3; angle += 0.1) {
        const Point2 p{14.0 + 3.0 * std::cos(angle), 3.0 + 3.0 * std::sin(angle)};
        CHECK(reward(kGauss, p) == Approx(reward(kGauss, {17.0, 3.0})).epsilon(1e-13));
    }
}

TEST_CASE("quantized reward steps") {
    CHECK(reward(kQuant, {14.5, 3.0}) == 0.0);
    CHECK(reward(kQuant, {15.5, 3.0}) == -1.0);
    CHECK(reward(kQuant, {14.0, 3.0}) == 0.0);
    CHECK(reward(kQuant, {14.0, 6.0}) == -3.0);
    const RewardSpec half = QuantizedReward{{0.0, 0.0}, 0.5};
    CHECK(reward(half, {0.0, 1.3}) == -1.0);
    CHECK(selection_score(kQuant, {15.5, 3.0}) == -1.0);
}

TEST_CASE("invalid reward parameters") {
    CHECK_THROWS_AS(validate(RewardSpec{GaussianReward{{0, 0}, 0.0}}), InvalidArgument);
    CHECK_THROWS_AS(validate(RewardSpec{QuantizedReward{{0, 0}, -1.0}}), InvalidArgument);
    CHECK_THROWS_AS(reward(RewardSpec{GaussianReward{{0, 0}, -2.0}}, {0, 0}), InvalidArgument);
}

TEST_CASE("gradient-only operations reject the quantized reward") {
    CHECK_THROWS_AS(log_reward(kQuant, {0, 0}), UnsupportedVariant);
    CHECK_THROWS_AS(reward_grad(kQuant, {0, 0}), UnsupportedVariant);
    CHECK_FALSE(is_differentiable(kQuant));
    CHECK(is_differentiable(kGauss));
}

TEST_CASE("reward gradient closed form") {
    const Point2 g0 = reward_grad(kGauss, {14.0, 3.0});
    CHECK(g0.x == 0.0);
    CHECK(g0.y == 0.0);
    const Point2 g1 = reward_grad(kGauss, {16.0, 3.0});
    CHECK(g1.x == Approx(-0.5).epsilon(1e-15));
    CHECK(g1.y == 0.0);
}

TEST_CASE("reward gradient matches finite differences of the log reward") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-5.0, 25.0);
    const double h = 1e-5;
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        const Point2 x{u(rng), u(rng)};
        const Point2 g = reward_grad(kGauss, x);
        const double fx = (log_reward(kGauss, {x.x + h, x.y}) - log_reward(kGauss, {x.x - h, x.y})) / (2 * h);
        const double fy = (log_reward(kGauss, {x.x, x.y + h}) - log_reward(kGauss, {x.x, x.y - h})) / (2 * h);
        worst = std::max({worst, std::abs(g.x - fx), std::abs(g.y - fy)});
    }
    MESSAGE("max absolute gradient error: " << worst);
    CHECK(worst <= 1e-8);
}

TEST_CASE("argmax agrees between reward and log reward") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(10.0, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Point2> pts(100);
        for (auto& p : pts) p = {n(rng), n(rng)};
        auto best = [&](auto f) {
            return std::max_element(pts.begin(), pts.end(), [&](Point2 a, Point2 b) { return f(a) < f(b); }) -
                   pts.begin();
        };
        CHECK(best([](Point2 p) { return reward(kGauss, p); }) == best([](Point2 p) { return log_reward(kGauss, p); }));
    }
}

TEST_CASE("with_center moves the reward") {
    const auto moved = with_center(kGauss, {1.0, 2.0});
    CHECK(reward_center(moved) == Point2{1.0, 2.0});
    CHECK(std::get<GaussianReward>(moved).sigma == 2.0);
    CHECK(std::holds_alternative<QuantizedReward>(with_center(kQuant, {0, 0})));
}

TEST_CASE("value at t = 0 is the score of the point itself") {
    const auto sched = build_linear_schedule(100, 1e-4, 0.02);
    const AnalyticGmmDenoiser d(default_prior(), sched);
    for (Point2 x : {Point2{14, 3}, Point2{0, 0}, Point2{9.5, -2.25}}) {
        CHECK(estimate_value(d, kGauss, x, 0) == log_reward(kGauss, x));
        CHECK(estimate_value(d, kQuant, x, 0) == reward(kQuant, x));
    }
}

TEST_CASE("value under an exact single-Gaussian prior") {
    // For x0 ~ N(m, s^2 I): E[x0 | x_t] = m + sqrt(ab) s^2 / (ab s^2 + 1 - ab) (x_t - sqrt(ab) m).
    const auto sched = build_linear_schedule(1000, 1e-4, 0.02);
    const Point2 m{4.0, -1.0};
    const double s = 1.5;
    const AnalyticGmmDenoiser d(GmmSpec{{1.0}, {m}, s}, sched);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 3.0);
    for (int t : {1, 10, 250, 700, 1000}) {
        const double ab = sched.alpha_bar(t);
        const double gain = std::sqrt(ab) * s * s / (ab * s * s + 1.0 - ab);
        for (int i = 0; i < 10; ++i) {
            const Point2 x{n(rng), n(rng)};
            const Point2 post = m + gain * (x - std::sqrt(ab) * m);
            CHECK(estimate_value(d, kGauss, x, t) == Approx(log_reward(kGauss, post)).epsilon(1e-10));
            CHECK(estimate_value(d, kQuant, x, t) == reward(kQuant, post));
        }
    }
}

TEST_CASE("closer denoised estimate gets the larger value") {
    const auto sched = build_linear_schedule(1000, 1e-4, 0.02);
    const AnalyticGmmDenoiser d(GmmSpec{{1.0}, {{0.0, 0.0}}, 1.0}, sched);
    // Under a standard normal prior x_t = (2, 0) denoises exactly onto the reward centre.
    const int t = 300;
    const double ab = sched.alpha_bar(t);
    const double gain = std::sqrt(ab) / (ab + 1.0 - ab);
    const RewardSpec r = GaussianReward{{gain * 2.0, 0.0}, 2.0};
    CHECK(estimate_value(d, r, {2.0, 0.0}, t) > estimate_value(d, r, {2.5, 0.5}, t));
    CHECK(estimate_value(d, r, {2.0, 0.0}, t) > estimate_value(d, r, {0.0, 0.0}, t));
}
