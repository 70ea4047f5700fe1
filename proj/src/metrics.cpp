#include "codelab/metrics.hpp"

#include <cmath>
#include <limits>

namespace codelab {

namespace {

bool finite(const Point2& p) { return std::isfinite(p.x) && std::isfinite(p.y); }

// A diverged trajectory scores the infimum of the reward.
double sample_reward(const RewardSpec& spec, const Point2& p) {
    if (finite(p)) return reward(spec, p);
    return is_differentiable(spec) ? 0.0 : -std::numeric_limits<double>::infinity();
}

}  // namespace

std::size_t count_non_finite(std::span<const Point2> samples) {
    std::size_t n = 0;
    for (const Point2& p : samples) n += finite(p) ? 0 : 1;
    return n;
}

double expected_reward(std::span<const Point2> samples, const RewardSpec& spec) {
    if (samples.empty()) throw InvalidArgument("expected_reward: empty batch");
    double sum = 0.0;
    for (const Point2& p : samples) sum += sample_reward(spec, p);
    return sum / static_cast<double>(samples.size());
}

double normalized_reward(std::span<const Point2> samples, std::span<const Point2> base, const RewardSpec& spec) {
    return expected_reward(samples, spec) / expected_reward(base, spec);
}

double win_rate(std::span<const Point2> guided, std::span<const Point2> base, const RewardSpec& spec) {
    if (guided.size() != base.size()) throw InvalidArgument("win_rate: batches differ in length");
    if (guided.empty()) throw InvalidArgument("win_rate: empty batch");
    double wins = 0.0;
    for (std::size_t i = 0; i < guided.size(); ++i) {
        const double g = sample_reward(spec, guided[i]);
        const double b = sample_reward(spec, base[i]);
        if (g > b)
            wins += 1.0;
        else if (g == b)
            wins += 0.5;
    }
    return wins / static_cast<double>(guided.size());
}

GaussianFit fit_gaussian(std::span<const Point2> samples) {
    if (samples.size() < 2) throw InvalidArgument("fit_gaussian: need at least 2 samples");
    if (const std::size_t bad = count_non_finite(samples))
        throw InvalidArgument("fit_gaussian: " + std::to_string(bad) + " non-finite samples");
    const double n = static_cast<double>(samples.size());
    GaussianFit fit;
    for (const Point2& p : samples) fit.mean += Eigen::Vector2d(p.x, p.y);
    fit.mean /= n;
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (const Point2& p : samples) {
        const Eigen::Vector2d d = Eigen::Vector2d(p.x, p.y) - fit.mean;
        cov += d * d.transpose();
    }
    cov /= (n - 1.0);
    cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < kRidgeTrigger) cov.diagonal().array() += kCovarianceRidge;
    fit.cov = cov;
    return fit;
}

double gaussian_kl(const GaussianFit& a, const GaussianFit& b) {
    const Eigen::LLT<Eigen::Matrix2d> la(a.cov), lb(b.cov);
    if (la.info() != Eigen::Success || lb.info() != Eigen::Success)
        throw InvalidArgument("gaussian_kl: covariance is not positive definite");
    const Eigen::Matrix2d b_inv_a = lb.solve(a.cov);
    const Eigen::Vector2d diff = b.mean - a.mean;
    const double maha = diff.dot(lb.solve(diff));
    const auto log_det = [](const Eigen::LLT<Eigen::Matrix2d>& l) {
        return 2.0 * l.matrixL().toDenseMatrix().diagonal().array().log().sum();
    };
    const double kl = 0.5 * (b_inv_a.trace() + maha - 2.0 + log_det(lb) - log_det(la));
    return std::max(kl, 0.0);
}

double kl_upper_bound(Method method, int n, int block, int steps, double eta) {
    if (n < 1) throw InvalidArgument("kl_upper_bound: N must be >= 1");
    if (steps < 1) throw InvalidArgument("kl_upper_bound: T must be >= 1");
    if (!(eta > 0.0 && eta <= 1.0)) throw InvalidArgument("kl_upper_bound: eta must lie in (0, 1]");
    const double nd = static_cast<double>(n);
    const double per_selection = std::log(nd) - (nd - 1.0) / nd;
    const double t = static_cast<double>(steps);
    switch (method) {
        case Method::Base: return 0.0;
        case Method::BoN: return per_selection;
        case Method::SVDDPM: return per_selection * eta * t;
        case Method::CoDe:
        case Method::CoDeEta:
            if (block < 1 || block > steps) throw InvalidArgument("kl_upper_bound: B must lie in [1, T]");
            return per_selection * eta * t / static_cast<double>(block);
        case Method::GradGuide: break;
    }
    throw InvalidArgument("kl_upper_bound: no bound for method " + std::string(to_string(method)));
}

std::pair<double, double> batch_variance(std::span<const Point2> samples) {
    if (samples.size() < 2) throw InvalidArgument("batch_variance: need at least 2 samples");
    if (count_non_finite(samples)) {
        const double inf = std::numeric_limits<double>::infinity();
        return {inf, inf};
    }
    const double n = static_cast<double>(samples.size());
    double mx = 0.0, my = 0.0;
    for (const Point2& p : samples) {
        mx += p.x;
        my += p.y;
    }
    mx /= n;
    my /= n;
    double vx = 0.0, vy = 0.0;
    for (const Point2& p : samples) {
        vx += (p.x - mx) * (p.x - mx);
        vy += (p.y - my) * (p.y - my);
    }
    return {vx / (n - 1.0), vy / (n - 1.0)};
}

}  // namespace codelab
