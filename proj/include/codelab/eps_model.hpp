#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "codelab/schedule.hpp"
#include "codelab/types.hpp"

namespace codelab {

enum class Activation { SiLU, Identity };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

/// Weights and biases of the three affine layers, row-major.
///
///   layer 1: w1 is H x (2 + E); columns 0,1 read the point, the rest the
///            time embedding
///   layer 2: w2 is H x H
///   layer 3: w3 is 2 x H
struct ParamArrays {
    std::vector<double> w1, b1, w2, b2, w3, b3;

    static constexpr std::array<std::string_view, 6> kNames{"w1", "b1", "w2", "b2", "w3", "b3"};

    std::array<std::span<double>, 6> blocks() { return {w1, b1, w2, b2, w3, b3}; }
    std::array<std::span<const double>, 6> blocks() const { return {w1, b1, w2, b2, w3, b3}; }
    std::size_t size() const;

    friend bool operator==(const ParamArrays&, const ParamArrays&) = default;
};

/// The 3-layer MLP noise predictor eps_theta(x_t, t).
///
/// Input is the point concatenated with a sinusoidal embedding of t/T:
/// for k < E/2 the embedding holds sin(u w_k) and, at k + E/2, cos(u w_k),
/// with u = t/T and w_k = freq_base^(k / (E/2 - 1)).
struct EpsModel {
    int hidden_width = 0;
    int embed_width = 0;
    double freq_base = 1000.0;
    Activation activation = Activation::SiLU;
    ParamArrays params;

    int input_width() const { return 2 + embed_width; }
    std::size_t parameter_count() const { return params.size(); }

    /// Expected length of each parameter block for the declared dims.
    std::array<std::size_t, 6> block_sizes() const;

    /// Throws InvalidArgument on inconsistent shapes or non-finite values.
    void validate() const;

    friend bool operator==(const EpsModel&, const EpsModel&) = default;
};

/// Parameter gradients of the training loss, shaped like the model.
struct GradBundle {
    double loss = 0.0;
    ParamArrays grads;
};

/// Fan-in scaled uniform init: every weight and bias of a layer with fan-in
/// f is drawn from U(-1/sqrt(f), 1/sqrt(f)) with a mt19937_64 seeded by `seed`.
EpsModel init_model(int hidden_width, int embed_width, std::uint64_t seed,
                    Activation activation = Activation::SiLU, double freq_base = 1000.0);

/// An all-zero model with the given dims.
EpsModel zero_model(int hidden_width, int embed_width, Activation activation = Activation::SiLU,
                    double freq_base = 1000.0);

/// Sinusoidal embedding of t/T (length embed_width).
void time_embedding(const EpsModel& model, int t, int steps, std::span<double> out);

/// First-layer pre-activation contribution of the bias and the time
/// embedding: b1 + W1[:, 2:] emb(t/T). Accumulated in column order.
void time_bias(const EpsModel& model, int t, int steps, std::span<double> out);

/// Batched forward pass; each t[i] must lie in 1..T.
std::vector<Point2> predict_eps(const EpsModel& model, std::span<const Point2> x, std::span<const int> t,
                                const NoiseSchedule& sched);

/// Single-item forward pass.
Point2 predict_eps(const EpsModel& model, Point2 x, int t, const NoiseSchedule& sched);

/// Mean over the batch of |eps - eps_theta(sqrt(ab) x0 + sqrt(1-ab) eps, t)|^2
/// and its exact gradient with respect to every parameter.
GradBundle loss_and_param_grads(const EpsModel& model, std::span<const Point2> x0, std::span<const Point2> eps,
                                std::span<const int> t, const NoiseSchedule& sched);

/// cotangent^T d eps_theta(x, t) / dx, with t held fixed.
Point2 input_grad(const EpsModel& model, Point2 x, int t, Point2 cotangent, const NoiseSchedule& sched);

namespace detail {

/// Scratch buffers for batched MLP passes. Activations are stored
/// feature-major ([feature][item]) so every output element accumulates its
/// inputs in the same order whatever the batch size.
struct MlpWorkspace {
    std::size_t batch = 0;
    std::vector<double> pre1, h1, pre2, h2, out;
    std::vector<double> d_out, d_h2, d_pre2, d_h1, d_pre1;
    std::vector<double> w2_t, w3_t;

    void resize(const EpsModel& model, std::size_t n);
};

/// Forward pass with a per-item first-layer bias: `tbias` holds H values per
/// item (stride H) or, when `shared_tbias` is set, one H-vector for all items.
void forward(const EpsModel& model, std::span<const Point2> x, std::span<const double> tbias, bool shared_tbias,
             MlpWorkspace& ws);

/// Backpropagates ws.d_out (2 x batch) to the first-layer pre-activations;
/// requires a preceding forward() on the same workspace.
void backward_to_pre1(const EpsModel& model, MlpWorkspace& ws);

/// Input VJP for a batch: forward, then propagate `cotangent` back to x.
void input_vjp(const EpsModel& model, std::span<const Point2> x, std::span<const double> tbias, bool shared_tbias,
               std::span<const Point2> cotangent, std::span<Point2> out, MlpWorkspace& ws);

}  // namespace detail

}  // namespace codelab
