#include "codelab/rewards.hpp"

#include <cmath>
#include <numbers>

namespace codelab {

namespace {

template <class... Fs>
struct Overload : Fs... {
    using Fs::operator()...;
};
template <class... Fs>
Overload(Fs...) -> Overload<Fs...>;

const GaussianReward& require_gaussian(const RewardSpec& spec, const char* op) {
    if (const auto* g = std::get_if<GaussianReward>(&spec)) return *g;
    throw UnsupportedVariant(std::string(op) + " is not defined for the quantized (non-differentiable) reward");
}

}  // namespace

void validate(const RewardSpec& spec) {
    std::visit(Overload{[](const GaussianReward& g) {
                            if (!(g.sigma > 0.0)) throw InvalidArgument("reward sigma must be positive");
                        },
                        [](const QuantizedReward& q) {
                            if (!(q.delta > 0.0)) throw InvalidArgument("reward delta must be positive");
                        }},
               spec);
}

bool is_differentiable(const RewardSpec& spec) { return std::holds_alternative<GaussianReward>(spec); }

Point2 reward_center(const RewardSpec& spec) {
    return std::visit([](const auto& r) { return r.mu; }, spec);
}

RewardSpec with_center(const RewardSpec& spec, Point2 mu) {
    return std::visit(
        [mu](auto r) -> RewardSpec {
            r.mu = mu;
            return r;
        },
        spec);
}

double reward(const RewardSpec& spec, Point2 x) {
    validate(spec);
    return std::visit(Overload{[x](const GaussianReward& g) {
                                   const Point2 d = x - g.mu;
                                   const double s2 = g.sigma * g.sigma;
                                   return std::exp(-dot(d, d) / (2.0 * s2)) / (2.0 * std::numbers::pi * s2);
                               },
                               [x](const QuantizedReward& q) {
                                   return -q.delta * std::floor(norm(x - q.mu) / q.delta);
                               }},
                      spec);
}

double log_reward(const RewardSpec& spec, Point2 x) {
    const GaussianReward& g = require_gaussian(spec, "log_reward");
    validate(spec);
    const Point2 d = x - g.mu;
    const double s2 = g.sigma * g.sigma;
    return -dot(d, d) / (2.0 * s2) - std::log(2.0 * std::numbers::pi * s2);
}

Point2 reward_grad(const RewardSpec& spec, Point2 x) {
    const GaussianReward& g = require_gaussian(spec, "reward_grad");
    validate(spec);
    return (1.0 / (g.sigma * g.sigma)) * (g.mu - x);
}

double selection_score(const RewardSpec& spec, Point2 x) {
    return is_differentiable(spec) ? log_reward(spec, x) : reward(spec, x);
}

double estimate_value(const Denoiser& model, const RewardSpec& spec, Point2 x_t, int t) {
    if (t == 0) return selection_score(spec, x_t);
    const Point2 eps = model.predict(x_t, t);
    return selection_score(spec, tweedie_x0(x_t, eps, t, model.schedule()));
}

}  // namespace codelab
