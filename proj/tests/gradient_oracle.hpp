#pragma once

// Extended-precision reference for the noise predictor, used as the
// finite-difference oracle for its gradients.

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "codelab/eps_model.hpp"
#include "codelab/schedule.hpp"

namespace codelab::oracle {

inline double rel_err(double a, double b) {
    // Floor keeps near-zero entries from turning roundoff into huge ratios.
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4});
}

struct RandomCase {
    EpsModel model;
    std::vector<Point2> x0, eps;
    std::vector<int> t;
};

inline RandomCase random_case(std::uint64_t seed, const NoiseSchedule& sched) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> width(2, 12);
    std::uniform_int_distribution<int> half(1, 4);
    std::uniform_int_distribution<int> batch(1, 6);
    std::uniform_int_distribution<int> step(1, sched.steps());
    std::normal_distribution<double> normal(0.0, 1.0);
    RandomCase c;
    c.model = init_model(width(rng), 2 * half(rng), seed + 100);
    // Larger weights than the default init so the activation's curvature matters.
    for (auto block : c.model.params.blocks())
        for (double& v : block) v *= 2.0;
    const int n = batch(rng);
    for (int i = 0; i < n; ++i) {
        c.x0.push_back({3.0 * normal(rng) + 5.0, 3.0 * normal(rng) + 5.0});
        c.eps.push_back({normal(rng), normal(rng)});
        c.t.push_back(step(rng));
    }
    return c;
}

// Independent extended-precision forward pass used as the finite-difference
// oracle, so differencing roundoff stays far below the tolerance.
using Real = long double;

struct RefParams {
    std::array<std::vector<Real>, 6> blocks;
};

inline RefParams widen(const EpsModel& m) {
    RefParams r;
    const auto b = m.params.blocks();
    for (std::size_t i = 0; i < b.size(); ++i) r.blocks[i].assign(b[i].begin(), b[i].end());
    return r;
}

inline std::array<Real, 2> ref_forward(const EpsModel& m, const RefParams& p, Real x, Real y, int t, int steps) {
    const std::size_t h = static_cast<std::size_t>(m.hidden_width);
    const std::size_t e = static_cast<std::size_t>(m.embed_width);
    const std::size_t in = 2 + e;
    const auto& [w1, b1, w2, b2, w3, b3] = p.blocks;
    std::vector<Real> input(in);
    input[0] = x;
    input[1] = y;
    const Real u = static_cast<Real>(t) / steps;
    const std::size_t half = e / 2;
    for (std::size_t k = 0; k < half; ++k) {
        const Real w = half == 1 ? 1.0L : std::pow(static_cast<Real>(m.freq_base), static_cast<Real>(k) / (half - 1));
        input[2 + k] = std::sin(u * w);
        input[2 + half + k] = std::cos(u * w);
    }
    auto act = [&](Real z) { return m.activation == Activation::Identity ? z : z / (1.0L + std::exp(-z)); };
    std::vector<Real> h1(h), h2(h);
    for (std::size_t j = 0; j < h; ++j) {
        Real acc = b1[j];
        for (std::size_t k = 0; k < in; ++k) acc += w1[j * in + k] * input[k];
        h1[j] = act(acc);
    }
    for (std::size_t j = 0; j < h; ++j) {
        Real acc = b2[j];
        for (std::size_t k = 0; k < h; ++k) acc += w2[j * h + k] * h1[k];
        h2[j] = act(acc);
    }
    std::array<Real, 2> out{};
    for (std::size_t i = 0; i < 2; ++i) {
        Real acc = b3[i];
        for (std::size_t k = 0; k < h; ++k) acc += w3[i * h + k] * h2[k];
        out[i] = acc;
    }
    return out;
}

inline Real ref_loss(const RandomCase& c, const RefParams& p, const NoiseSchedule& sched) {
    Real acc = 0.0L;
    for (std::size_t i = 0; i < c.x0.size(); ++i) {
        const Real ab = sched.alpha_bar(c.t[i]);
        const Real sa = std::sqrt(ab), sn = std::sqrt(1.0L - ab);
        const auto o = ref_forward(c.model, p, sa * c.x0[i].x + sn * c.eps[i].x, sa * c.x0[i].y + sn * c.eps[i].y,
                                   c.t[i], sched.steps());
        const Real dx = o[0] - c.eps[i].x, dy = o[1] - c.eps[i].y;
        acc += dx * dx + dy * dy;
    }
    return acc / static_cast<Real>(c.x0.size());
}

// Worst relative error over `draws` random cases; every third case uses the
// identity activation.
inline double max_param_grad_error(std::uint64_t seed, int draws, const NoiseSchedule& sched) {
    const Real h = 1e-6L;
    double worst = 0.0;
    for (int draw = 0; draw < draws; ++draw) {
        auto c = random_case(seed + draw, sched);
        if (draw % 3 == 2) c.model.activation = Activation::Identity;
        const auto g = loss_and_param_grads(c.model, c.x0, c.eps, c.t, sched);
        auto p = widen(c.model);
        const auto gb = g.grads.blocks();
        for (std::size_t b = 0; b < p.blocks.size(); ++b) {
            if (gb[b].size() != p.blocks[b].size()) return INFINITY;
            for (std::size_t k = 0; k < p.blocks[b].size(); ++k) {
                const Real orig = p.blocks[b][k];
                p.blocks[b][k] = orig + h;
                const Real up = ref_loss(c, p, sched);
                p.blocks[b][k] = orig - h;
                const Real down = ref_loss(c, p, sched);
                p.blocks[b][k] = orig;
                const double fd = static_cast<double>((up - down) / (2.0L * h));
                if (!std::isfinite(gb[b][k])) return INFINITY;
                worst = std::max(worst, rel_err(gb[b][k], fd));
            }
        }
    }
    return worst;
}

inline double max_input_grad_error(std::uint64_t seed, int draws, const NoiseSchedule& sched) {
    const Real h = 1e-6L;
    double worst = 0.0;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int draw = 0; draw < draws; ++draw) {
        auto c = random_case(seed + draw, sched);
        if (draw % 3 == 2) c.model.activation = Activation::Identity;
        const auto p = widen(c.model);
        for (std::size_t i = 0; i < c.x0.size(); ++i) {
            const Point2 x = forward_noising(c.x0[i], c.t[i], c.eps[i], sched);
            const Point2 cot{normal(rng), normal(rng)};
            const Point2 g = input_grad(c.model, x, c.t[i], cot, sched);
            auto proj = [&](Real px, Real py) {
                const auto o = ref_forward(c.model, p, px, py, c.t[i], sched.steps());
                return cot.x * o[0] + cot.y * o[1];
            };
            const double fx = static_cast<double>((proj(x.x + h, x.y) - proj(x.x - h, x.y)) / (2.0L * h));
            const double fy = static_cast<double>((proj(x.x, x.y + h) - proj(x.x, x.y - h)) / (2.0L * h));
            worst = std::max({worst, rel_err(g.x, fx), rel_err(g.y, fy)});
        }
    }
    return worst;
}

}  // namespace codelab::oracle
