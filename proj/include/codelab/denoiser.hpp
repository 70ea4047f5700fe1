#pragma once

#include <span>
#include <vector>

#include "codelab/eps_model.hpp"
#include "codelab/gmm.hpp"
#include "codelab/schedule.hpp"

namespace codelab {

/// A noise predictor bound to its schedule, evaluated on batches that share
/// one step index. Samplers only talk to this interface, so the trained MLP
/// and closed-form predictors are interchangeable.
///
/// Implementations are read-only after construction and must give each item
/// a result that does not depend on the rest of the batch.
class Denoiser {
public:
    virtual ~Denoiser() = default;

    virtual const NoiseSchedule& schedule() const = 0;

    /// eps[i] = eps(x[i], t).
    virtual void predict(std::span<const Point2> x, int t, std::span<Point2> eps) const = 0;

    /// out[i] = cotangent[i]^T d eps(x[i], t) / dx.
    virtual void input_vjp(std::span<const Point2> x, int t, std::span<const Point2> cotangent,
                           std::span<Point2> out) const = 0;

    Point2 predict(Point2 x, int t) const;
};

/// The trained MLP. Caches the per-step first-layer time bias.
class MlpDenoiser final : public Denoiser {
public:
    MlpDenoiser(EpsModel model, NoiseSchedule sched);

    const NoiseSchedule& schedule() const override { return sched_; }
    const EpsModel& model() const { return model_; }

    using Denoiser::predict;
    void predict(std::span<const Point2> x, int t, std::span<Point2> eps) const override;
    void input_vjp(std::span<const Point2> x, int t, std::span<const Point2> cotangent,
                   std::span<Point2> out) const override;

private:
    std::span<const double> bias_for(int t) const;

    EpsModel model_;
    NoiseSchedule sched_;
    std::vector<double> time_bias_;  // (T + 1) x H, row t
};

/// Exact noise predictor of an isotropic Gaussian-mixture prior,
/// eps*(x_t, t) = (x_t - sqrt(ab) E[x0 | x_t]) / sqrt(1 - ab).
/// A one-component mixture gives the single-Gaussian case.
class AnalyticGmmDenoiser final : public Denoiser {
public:
    AnalyticGmmDenoiser(GmmSpec prior, NoiseSchedule sched);

    const NoiseSchedule& schedule() const override { return sched_; }

    /// E[x0 | x_t] under the prior.
    Point2 posterior_mean_x0(Point2 x_t, int t) const;

    using Denoiser::predict;
    void predict(std::span<const Point2> x, int t, std::span<Point2> eps) const override;
    void input_vjp(std::span<const Point2> x, int t, std::span<const Point2> cotangent,
                   std::span<Point2> out) const override;

private:
    GmmSpec prior_;
    NoiseSchedule sched_;
};

}  // namespace codelab
