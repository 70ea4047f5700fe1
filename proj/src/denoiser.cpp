#include "codelab/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace codelab {

Point2 Denoiser::predict(Point2 x, int t) const {
    Point2 eps;
    predict(std::span<const Point2>(&x, 1), t, std::span<Point2>(&eps, 1));
    return eps;
}

MlpDenoiser::MlpDenoiser(EpsModel model, NoiseSchedule sched) : model_(std::move(model)), sched_(std::move(sched)) {
    model_.validate();
    const auto h = static_cast<std::size_t>(model_.hidden_width);
    time_bias_.assign(static_cast<std::size_t>(sched_.steps() + 1) * h, 0.0);
    for (int t = 1; t <= sched_.steps(); ++t)
        time_bias(model_, t, sched_.steps(), std::span<double>(time_bias_).subspan(static_cast<std::size_t>(t) * h, h));
}

std::span<const double> MlpDenoiser::bias_for(int t) const {
    sched_.require_step(t);
    const auto h = static_cast<std::size_t>(model_.hidden_width);
    return std::span<const double>(time_bias_).subspan(static_cast<std::size_t>(t) * h, h);
}

void MlpDenoiser::predict(std::span<const Point2> x, int t, std::span<Point2> eps) const {
    if (eps.size() != x.size()) throw InvalidArgument("predict: output size mismatch");
    const auto tb = bias_for(t);
    thread_local detail::MlpWorkspace ws;
    detail::forward(model_, x, tb, true, ws);
    const std::size_t n = x.size();
    for (std::size_t b = 0; b < n; ++b) eps[b] = {ws.out[b], ws.out[n + b]};
}

void MlpDenoiser::input_vjp(std::span<const Point2> x, int t, std::span<const Point2> cotangent,
                            std::span<Point2> out) const {
    if (cotangent.size() != x.size() || out.size() != x.size()) throw InvalidArgument("input_vjp: size mismatch");
    const auto tb = bias_for(t);
    thread_local detail::MlpWorkspace ws;
    detail::input_vjp(model_, x, tb, true, cotangent, out, ws);
}

AnalyticGmmDenoiser::AnalyticGmmDenoiser(GmmSpec prior, NoiseSchedule sched)
    : prior_(std::move(prior)), sched_(std::move(sched)) {
    prior_.validate();
}

namespace {

struct Posterior {
    Point2 x0_mean;
    // Per-component responsibility, conditional mean and log-density gradient.
    std::vector<double> resp;
    std::vector<Point2> cond_mean;
    std::vector<Point2> score;
    Point2 mean_score;
    double gain = 0.0;  // d cond_mean / d x_t (a multiple of I)
};

Posterior gmm_posterior(const GmmSpec& prior, const NoiseSchedule& sched, Point2 x, int t) {
    const double ab = sched.alpha_bar(t);
    const double sab = std::sqrt(ab);
    const double s2 = prior.sigma * prior.sigma;
    const double var = ab * s2 + (1.0 - ab);
    const std::size_t k = prior.means.size();
    Posterior p;
    p.gain = sab * s2 / var;
    p.resp.resize(k);
    p.cond_mean.resize(k);
    p.score.resize(k);
    double max_log = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) {
        const Point2 d = x - sab * prior.means[i];
        p.score[i] = (-1.0 / var) * d;
        p.cond_mean[i] = prior.means[i] + p.gain * d;
        p.resp[i] = prior.weights[i] > 0.0 ? std::log(prior.weights[i]) - dot(d, d) / (2.0 * var)
                                            : -std::numeric_limits<double>::infinity();
        max_log = std::max(max_log, p.resp[i]);
    }
    double total = 0.0;
    for (double& r : p.resp) {
        r = std::exp(r - max_log);
        total += r;
    }
    for (std::size_t i = 0; i < k; ++i) {
        p.resp[i] /= total;
        p.x0_mean = p.x0_mean + p.resp[i] * p.cond_mean[i];
        p.mean_score = p.mean_score + p.resp[i] * p.score[i];
    }
    return p;
}

}  // namespace

Point2 AnalyticGmmDenoiser::posterior_mean_x0(Point2 x_t, int t) const {
    sched_.require_step(t);
    return gmm_posterior(prior_, sched_, x_t, t).x0_mean;
}

void AnalyticGmmDenoiser::predict(std::span<const Point2> x, int t, std::span<Point2> eps) const {
    sched_.require_step(t);
    const double ab = sched_.alpha_bar(t);
    const double sab = std::sqrt(ab);
    const double inv_noise = 1.0 / std::sqrt(1.0 - ab);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Point2 m = gmm_posterior(prior_, sched_, x[i], t).x0_mean;
        eps[i] = inv_noise * (x[i] - sab * m);
    }
}

void AnalyticGmmDenoiser::input_vjp(std::span<const Point2> x, int t, std::span<const Point2> cotangent,
                                    std::span<Point2> out) const {
    sched_.require_step(t);
    const double ab = sched_.alpha_bar(t);
    const double sab = std::sqrt(ab);
    const double inv_noise = 1.0 / std::sqrt(1.0 - ab);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Posterior p = gmm_posterior(prior_, sched_, x[i], t);
        const Point2 c = cotangent[i];
        // J0^T c with J0 = gain I + sum_k r_k m_k (s_k - s_bar)^T.
        Point2 j0c = p.gain * c;
        for (std::size_t k = 0; k < p.resp.size(); ++k)
            j0c = j0c + (p.resp[k] * dot(p.cond_mean[k], c)) * (p.score[k] - p.mean_score);
        out[i] = inv_noise * (c - sab * j0c);
    }
}

}  // namespace codelab
