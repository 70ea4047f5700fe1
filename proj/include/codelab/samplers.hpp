#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "codelab/denoiser.hpp"
#include "codelab/rewards.hpp"

namespace codelab {

enum class Method { Base, CoDe, CoDeEta, BoN, SVDDPM, GradGuide };

std::string_view to_string(Method m);
/// Accepts the names printed by to_string ("base", "code", "code_eta", "bon",
/// "svdd_pm", "grad_guide").
Method method_from_string(std::string_view name);

/// Everything that determines one guided run.
struct GuidanceConfig {
    Method method = Method::Base;
    int n = 1;                     // streams N
    int block = 1;                 // block size B (CoDe, CoDeEta)
    double eta = 1.0;              // noise ratio (CoDeEta)
    double scale = 0.0;            // guidance strength lambda (GradGuide)
    std::optional<Point2> x_ref;   // reference point (CoDeEta)
    bool exact_gradient = true;    // GradGuide: differentiate through eps_theta
    std::uint64_t seed = 0;

    /// Block size actually used for a T-step schedule: B for CoDe/CoDeEta,
    /// T for BoN, 1 for SVDD-PM, 0 where no selection happens.
    int effective_block(int steps) const;
    /// Number of reverse steps a run takes: round(eta T) for CoDeEta, else T.
    int denoise_steps(int steps) const;
    void validate(int steps) const;
};

/// Work counters. `model_evals` counts reverse transitions (one per stream
/// per step); the noise estimate behind each value lookup belongs to the
/// reward query that needed it. For CoDe that gives N tau model evaluations
/// and N ceil(tau / B) reward queries per run.
struct SamplerStats {
    std::uint64_t model_evals = 0;
    std::uint64_t reward_queries = 0;
    std::uint64_t selections = 0;
    std::uint64_t gradient_evals = 0;

    SamplerStats& operator+=(const SamplerStats& o);
    friend bool operator==(const SamplerStats&, const SamplerStats&) = default;
};

/// One selection of a blockwise run.
struct BlockTrace {
    int t_start = 0;              // state the block starts from
    int t_end = 0;                // step the candidates reach
    std::vector<double> values;   // value estimate of every stream
    int selected = 0;             // argmax, lowest id on ties
};

struct ExecOptions {
    unsigned threads = 1;          // 0 = hardware concurrency
    std::size_t chunk_items = 256;
};

/// posterior mean + sqrt(beta_t) noise; the final step (t = 1) adds no noise.
Point2 ddpm_step(const Denoiser& model, Point2 x_t, int t, Point2 noise);

/// n independent ancestral rollouts from x_T ~ N(0, I). Item i reads
/// stream i of `seed`, so a prefix of a larger batch is reproduced exactly.
std::vector<Point2> base_sample(const Denoiser& model, std::size_t n, std::uint64_t seed,
                                const ExecOptions& exec = {}, SamplerStats* stats = nullptr);

/// Blockwise best-of-N: from x_T, repeatedly unroll N streams for B steps,
/// keep the stream with the highest value estimate and continue. When B
/// does not divide T the last block is shorter.
Point2 code_sample(const Denoiser& model, const RewardSpec& spec, int n, int block, std::uint64_t seed,
                   SamplerStats* stats = nullptr, std::vector<BlockTrace>* trace = nullptr);

/// CoDe started from x_tau = sqrt(ab_tau) x_ref + sqrt(1 - ab_tau) z with
/// tau = round(eta T). At eta = 1 the reference is ignored and the run is
/// exactly code_sample.
Point2 code_eta_sample(const Denoiser& model, const RewardSpec& spec, int n, int block, double eta, Point2 x_ref,
                       std::uint64_t seed, SamplerStats* stats = nullptr, std::vector<BlockTrace>* trace = nullptr);

/// code_sample with B = 1.
Point2 svdd_sample(const Denoiser& model, const RewardSpec& spec, int n, std::uint64_t seed,
                   SamplerStats* stats = nullptr);

/// code_sample with B = T.
Point2 bon_sample(const Denoiser& model, const RewardSpec& spec, int n, std::uint64_t seed,
                  SamplerStats* stats = nullptr);

/// Ancestral sampling with the score shifted by scale * grad log r(x0_hat(x_t)):
/// eps' = eps - sqrt(1 - ab_t) * scale * grad. With `exact_gradient` the
/// chain rule goes through eps_theta; otherwise d x0_hat / d x_t is taken as
/// I / sqrt(ab_t). Throws UnsupportedVariant for the quantized reward.
Point2 grad_guided_sample(const Denoiser& model, const RewardSpec& spec, double scale, std::uint64_t seed,
                          bool exact_gradient = true, SamplerStats* stats = nullptr);

/// Runs `cfg` once per seed (cfg.seed is ignored). For CoDeEta, `refs`
/// supplies a reference per run; when empty cfg.x_ref is used for all.
/// Output i is bit-identical to the single-run function called with seeds[i].
std::vector<Point2> guided_batch(const Denoiser& model, const RewardSpec& spec, const GuidanceConfig& cfg,
                                 std::span<const std::uint64_t> seeds, std::span<const Point2> refs = {},
                                 const ExecOptions& exec = {}, SamplerStats* stats = nullptr);

/// Single run of any method, dispatching on cfg.method.
Point2 guided_sample(const Denoiser& model, const RewardSpec& spec, const GuidanceConfig& cfg,
                     SamplerStats* stats = nullptr);

}  // namespace codelab
