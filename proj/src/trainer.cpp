#include "codelab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace codelab {

void GmmSpec::validate() const {
    if (means.empty()) throw InvalidArgument("mixture needs at least one component");
    if (weights.size() != means.size()) throw InvalidArgument("mixture weights and means differ in length");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw InvalidArgument("mixture weights must be non-negative");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("mixture weights must sum to 1");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("mixture sigma must be positive");
}

Point2 GmmSpec::mean() const {
    Point2 m;
    for (std::size_t i = 0; i < means.size(); ++i) m = m + weights[i] * means[i];
    return m;
}

std::array<double, 3> GmmSpec::covariance() const {
    const Point2 m = mean();
    std::array<double, 3> c{sigma * sigma, 0.0, sigma * sigma};
    for (std::size_t i = 0; i < means.size(); ++i) {
        const Point2 d = means[i] - m;
        c[0] += weights[i] * d.x * d.x;
        c[1] += weights[i] * d.x * d.y;
        c[2] += weights[i] * d.y * d.y;
    }
    return c;
}

GmmSpec default_prior() {
    return GmmSpec{{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}, {{5.0, 3.0}, {3.0, 7.0}, {7.0, 7.0}}, 2.0};
}

std::vector<Point2> sample_gmm(const GmmSpec& spec, std::size_t n, std::uint64_t seed) {
    spec.validate();
    if (n < 1) throw InvalidArgument("sample_gmm: n must be >= 1");
    std::mt19937_64 rng(seed);
    std::discrete_distribution<std::size_t> pick(spec.weights.begin(), spec.weights.end());
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Point2> out(n);
    for (auto& p : out) {
        const Point2 mu = spec.means[pick(rng)];
        const double zx = normal(rng);
        const double zy = normal(rng);
        p = {mu.x + spec.sigma * zx, mu.y + spec.sigma * zy};
    }
    return out;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
    if (dataset_size < 1) throw InvalidArgument("dataset_size must be >= 1");
    if (batch_size < 1 || batch_size > dataset_size) throw InvalidArgument("batch_size must be in [1, dataset_size]");
    if (!(learning_rate >= 0.0)) throw InvalidArgument("learning_rate must be >= 0");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
        throw InvalidArgument("Adam moment coefficients must lie in (0, 1)");
    if (!(adam_eps > 0.0)) throw InvalidArgument("adam_eps must be positive");
}

namespace {

struct Adam {
    std::vector<double> m, v;
    std::uint64_t step = 0;

    void update(std::span<double> p, std::span<const double> g, std::size_t offset, const TrainConfig& cfg,
                double bc1, double bc2) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            double& mi = m[offset + i];
            double& vi = v[offset + i];
            mi = cfg.beta1 * mi + (1.0 - cfg.beta1) * g[i];
            vi = cfg.beta2 * vi + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            p[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
};

}  // namespace

TrainResult train(EpsModel model, const GmmSpec& spec, const NoiseSchedule& sched, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    spec.validate();
    model.validate();

    std::seed_seq seq{cfg.seed, std::uint64_t{0x7261696eULL}};
    std::mt19937_64 rng(seq);
    const std::vector<Point2> data = sample_gmm(spec, cfg.dataset_size, rng());

    std::uniform_int_distribution<int> pick_step(1, sched.steps());
    std::normal_distribution<double> normal(0.0, 1.0);

    Adam adam;
    adam.m.assign(model.parameter_count(), 0.0);
    adam.v.assign(model.parameter_count(), 0.0);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    std::vector<Point2> x0, eps;
    std::vector<int> steps;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, order.size() - start);
            x0.resize(len);
            eps.resize(len);
            steps.resize(len);
            for (std::size_t i = 0; i < len; ++i) {
                x0[i] = data[order[start + i]];
                steps[i] = pick_step(rng);
                const double ex = normal(rng);
                const double ey = normal(rng);
                eps[i] = {ex, ey};
            }
            const GradBundle g = loss_and_param_grads(model, x0, eps, steps, sched);
            if (!std::isfinite(g.loss)) {
                std::ostringstream msg;
                msg << "training loss became non-finite at epoch " << epoch << ", batch offset " << start;
                throw TrainingDiverged(msg.str());
            }
            loss_sum += g.loss * static_cast<double>(len);

            ++adam.step;
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam.step));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam.step));
            auto params = model.params.blocks();
            const auto grads = g.grads.blocks();
            std::size_t offset = 0;
            for (std::size_t b = 0; b < params.size(); ++b) {
                adam.update(params[b], grads[b], offset, cfg, bc1, bc2);
                offset += params[b].size();
            }
        }
        const double mean_loss = loss_sum / static_cast<double>(order.size());
        result.epoch_loss.push_back(mean_loss);
        if (on_epoch) on_epoch(epoch, mean_loss);
    }
    result.model = std::move(model);
    return result;
}

}  // namespace codelab
