#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "codelab/denoiser.hpp"
#include "codelab/schedule.hpp"

using namespace codelab;
using doctest::Approx;

namespace {

// Independent oracle: alpha_bar_t accumulated in log space.
double log_space_alpha_bar(int steps, double b0, double b1, int t) {
    double log_sum = 0.0;
    for (int s = 1; s <= t; ++s) {
        const double beta = steps == 1 ? b0 : b0 + (b1 - b0) * static_cast<double>(s - 1) / (steps - 1);
        log_sum += std::log1p(-beta);
    }
    return std::exp(log_sum);
}

}  // namespace

TEST_CASE("linear schedule matches a log-space product") {
    const auto s = build_linear_schedule(1000, 1e-4, 0.02);
    CHECK(s.steps() == 1000);
    CHECK(s.beta(1) == 1e-4);
    CHECK(s.beta(1000) == Approx(0.02).epsilon(1e-15));
    for (int t : {1, 10, 250, 500, 999, 1000})
        CHECK(s.alpha_bar(t) == Approx(log_space_alpha_bar(1000, 1e-4, 0.02, t)).epsilon(1e-12));
    // Frozen from a 40-digit evaluation of the same product.
    CHECK(s.alpha_bar(1000) == Approx(4.0358297653756833e-05).epsilon(1e-10));
    for (int t = 1; t <= 1000; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
}

TEST_CASE("hand-computed two-step schedule") {
    const auto s = build_linear_schedule(2, 0.1, 0.2);
    CHECK(s.alpha(1) == Approx(0.9));
    CHECK(s.alpha(2) == Approx(0.8));
    CHECK(s.alpha_bar(1) == Approx(0.9));
    CHECK(s.alpha_bar(2) == Approx(0.72));
    CHECK(s.alpha_bar(0) == 1.0);
}

TEST_CASE("vanishing betas leave the data untouched") {
    const auto s = build_linear_schedule(3, 1e-12, 1e-12);
    for (int t = 1; t <= 3; ++t) {
        CHECK(s.alpha_bar(t) == Approx(1.0).epsilon(1e-11));
        const Point2 x = forward_noising({3.0, -2.0}, t, {5.0, 7.0}, s);
        CHECK(x.x == Approx(3.0).epsilon(1e-5));
        CHECK(x.y == Approx(-2.0).epsilon(1e-5));
        const Point2 m = posterior_mean({1.5, 2.5}, {1.0, 1.0}, t, s);
        CHECK(m.x == Approx(1.5).epsilon(1e-5));
        CHECK(m.y == Approx(2.5).epsilon(1e-5));
    }
}

TEST_CASE("schedule invariants") {
    const auto s = build_linear_schedule(1000, 1e-4, 0.02);
    for (int t = 1; t <= 1000; ++t) {
        CHECK(s.alpha(t) == 1.0 - s.beta(t));
        CHECK(std::fabs(s.alpha_bar(t) - s.alpha_bar(t - 1) * s.alpha(t)) <= 1e-15 * s.alpha_bar(t));
        CHECK(s.alpha_bar(t) > 0.0);
        CHECK(s.alpha_bar(t) <= 1.0);
    }
}

TEST_CASE("schedule construction rejects bad input") {
    CHECK_THROWS_AS(build_linear_schedule(0, 1e-4, 0.02), InvalidArgument);
    CHECK_THROWS_AS(build_linear_schedule(10, 0.0, 0.02), InvalidArgument);
    CHECK_THROWS_AS(build_linear_schedule(10, 0.03, 0.02), InvalidArgument);
    CHECK_THROWS_AS(build_linear_schedule(10, 1e-4, 1.0), InvalidArgument);
    const auto s = build_linear_schedule(10, 1e-4, 0.02);
    CHECK_THROWS_AS(forward_noising({0, 0}, 0, {0, 0}, s), InvalidArgument);
    CHECK_THROWS_AS(forward_noising({0, 0}, 11, {0, 0}, s), InvalidArgument);
    CHECK_THROWS_AS(posterior_mean({0, 0}, {0, 0}, 0, s), InvalidArgument);
    CHECK_THROWS_AS(tweedie_x0({0, 0}, {0, 0}, 11, s), InvalidArgument);
}

TEST_CASE("forward noising examples") {
    const auto s = build_linear_schedule(2, 0.1, 0.2);  // alpha_bar_2 = 0.72
    const Point2 x = forward_noising({1.0, 0.0}, 2, {1.0, 1.0}, s);
    CHECK(x.x == Approx(std::sqrt(0.72) + std::sqrt(0.28)));
    CHECK(x.x == Approx(1.3777).epsilon(1e-4));
    CHECK(x.y == Approx(0.5292).epsilon(1e-4));

    // alpha_bar = 0.25 needs a one-step schedule with beta = 0.75.
    const auto q = build_linear_schedule(1, 0.75, 0.75);
    const Point2 y = forward_noising({4.0, -4.0}, 1, {0.0, 0.0}, q);
    CHECK(y.x == Approx(2.0));
    CHECK(y.y == Approx(-2.0));
}

TEST_CASE("posterior mean examples") {
    const auto s = build_linear_schedule(2, 0.1, 0.2);
    const Point2 m = posterior_mean({1.3777, 0.5292}, {1.0, 1.0}, 2, s);
    CHECK(m.x == Approx(1.1177).epsilon(1e-4));
    CHECK(m.y == Approx(0.1690).epsilon(1e-3));
    const Point2 z = posterior_mean({1.3777, 0.5292}, {0.0, 0.0}, 2, s);
    CHECK(z.x == Approx(1.3777 / std::sqrt(0.8)));
    CHECK(z.y == Approx(0.5292 / std::sqrt(0.8)));
}

TEST_CASE("tweedie examples and round trip") {
    const auto q = build_linear_schedule(1, 0.75, 0.75);
    const Point2 x0 = tweedie_x0({1.0, 1.0}, {0.0, 0.0}, 1, q);
    CHECK(x0.x == Approx(2.0));
    CHECK(x0.y == Approx(2.0));

    const auto s = build_linear_schedule(1000, 1e-4, 0.02);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n01;
    for (int t = 1; t <= 1000; ++t) {
        const Point2 a{3 * n01(rng), 3 * n01(rng)}, e{n01(rng), n01(rng)};
        const Point2 back = tweedie_x0(forward_noising(a, t, e, s), e, t, s);
        CHECK(std::fabs(back.x - a.x) <= 1e-12 * std::max(1.0, std::fabs(a.x)));
        CHECK(std::fabs(back.y - a.y) <= 1e-12 * std::max(1.0, std::fabs(a.y)));
    }
}

TEST_CASE("posterior mean agrees with the x0 parameterisation") {
    // mu = c0 * x0_hat + ct * x_t with the usual DDPM posterior coefficients.
    const auto s = build_linear_schedule(1000, 1e-4, 0.02);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01;
    for (int i = 0; i < 100; ++i) {
        const int t = 2 + static_cast<int>(rng() % 999);
        const Point2 xt{n01(rng), n01(rng)}, e{n01(rng), n01(rng)};
        const double ab = s.alpha_bar(t), ab_prev = s.alpha_bar(t - 1), a = s.alpha(t), b = s.beta(t);
        const Point2 x0 = tweedie_x0(xt, e, t, s);
        const double c0 = std::sqrt(ab_prev) * b / (1.0 - ab);
        const double ct = std::sqrt(a) * (1.0 - ab_prev) / (1.0 - ab);
        const Point2 ref = c0 * x0 + ct * xt;
        const Point2 mu = posterior_mean(xt, e, t, s);
        CHECK(mu.x == Approx(ref.x).epsilon(1e-9));
        CHECK(mu.y == Approx(ref.y).epsilon(1e-9));
    }
}

TEST_CASE("tweedie on a single-Gaussian prior equals the closed-form posterior mean") {
    const auto s = build_linear_schedule(1000, 1e-4, 0.02);
    const Point2 m{2.0, -1.0};
    const double sd = 1.5;
    const AnalyticGmmDenoiser den({{1.0}, {m}, sd}, s);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n01;
    for (int t : {1, 5, 50, 200, 500, 800}) {
        const double ab = s.alpha_bar(t);
        const Point2 xt{3 * n01(rng), 3 * n01(rng)};
        const Point2 est = tweedie_x0(xt, den.predict(xt, t), t, s);
        const double k = std::sqrt(ab) * sd * sd / (ab * sd * sd + 1.0 - ab);
        const Point2 ref = m + k * (xt - std::sqrt(ab) * m);
        CHECK(std::fabs(est.x - ref.x) <= 1e-10);
        CHECK(std::fabs(est.y - ref.y) <= 1e-10);
    }
}
