#include "codelab/samplers.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>
#include <thread>

#include "codelab/rng.hpp"

namespace codelab {

std::string_view to_string(Method m) {
    switch (m) {
        case Method::Base: return "base";
        case Method::CoDe: return "code";
        case Method::CoDeEta: return "code_eta";
        case Method::BoN: return "bon";
        case Method::SVDDPM: return "svdd_pm";
        case Method::GradGuide: return "grad_guide";
    }
    return "unknown";
}

Method method_from_string(std::string_view name) {
    for (Method m : {Method::Base, Method::CoDe, Method::CoDeEta, Method::BoN, Method::SVDDPM, Method::GradGuide})
        if (name == to_string(m)) return m;
    throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

int GuidanceConfig::effective_block(int steps) const {
    switch (method) {
        case Method::CoDe:
        case Method::CoDeEta: return block;
        case Method::BoN: return steps;
        case Method::SVDDPM: return 1;
        default: return 0;
    }
}

int GuidanceConfig::denoise_steps(int steps) const {
    if (method == Method::CoDeEta) return static_cast<int>(std::lround(eta * steps));
    return steps;
}

void GuidanceConfig::validate(int steps) const {
    if (n < 1) throw InvalidArgument("N must be >= 1");
    if (method == Method::CoDe || method == Method::CoDeEta) {
        if (block < 1 || block > steps) throw InvalidArgument("block size B must lie in [1, T]");
    }
    if (method == Method::CoDeEta) {
        if (!(eta > 0.0 && eta <= 1.0)) throw InvalidArgument("eta must lie in (0, 1]");
        if (denoise_steps(steps) < 1) throw InvalidArgument("round(eta T) must be >= 1");
    }
    if (method == Method::GradGuide && !(scale >= 0.0)) throw InvalidArgument("guidance scale must be >= 0");
}

SamplerStats& SamplerStats::operator+=(const SamplerStats& o) {
    model_evals += o.model_evals;
    reward_queries += o.reward_queries;
    selections += o.selections;
    gradient_evals += o.gradient_evals;
    return *this;
}

Point2 ddpm_step(const Denoiser& model, Point2 x_t, int t, Point2 noise) {
    model.schedule().require_step(t);
    return reverse_step(x_t, model.predict(x_t, t), t, noise, model.schedule());
}

namespace {

unsigned resolve_threads(unsigned requested) {
    if (requested != 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

// Runs job(chunk) for chunk in [0, count) on up to `threads` workers.
// Each chunk owns disjoint output, so the result is schedule-independent.
template <class Job>
void for_each_chunk(std::size_t count, unsigned threads, Job job) {
    threads = std::min<unsigned>(resolve_threads(threads), static_cast<unsigned>(std::max<std::size_t>(count, 1)));
    if (threads <= 1) {
        for (std::size_t c = 0; c < count; ++c) job(c);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t c = next++; c < count && !failed; c = next++) {
                try {
                    job(c);
                } catch (...) {
                    if (!failed.exchange(true)) failure = std::current_exception();
                }
            }
        });
    }
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

struct Lane {
    std::uint64_t seed;
    std::uint64_t stream;
};

// Plain ancestral sampling of independent lanes from x_T.
void ancestral_chunk(const Denoiser& model, std::span<const Lane> lanes, std::span<Point2> out, SamplerStats& st) {
    const NoiseSchedule& sched = model.schedule();
    const int steps = sched.steps();
    const std::size_t n = lanes.size();
    std::vector<Point2> eps(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = stream_normal(lanes[i].seed, static_cast<std::uint64_t>(steps) + 1, lanes[i].stream);
    for (int t = steps; t >= 1; --t) {
        model.predict(out, t, eps);
        for (std::size_t i = 0; i < n; ++i)
            out[i] = reverse_step(out[i], eps[i], t, stream_normal(lanes[i].seed, static_cast<std::uint64_t>(t),
                                                                   lanes[i].stream),
                                  sched);
    }
    st.model_evals += static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(steps);
}

// Index of the largest value; lowest index wins ties, NaN never wins.
std::size_t argmax_lowest(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best] || (std::isnan(values[best]) && !std::isnan(values[i]))) best = i;
    return best;
}

// Blockwise selection for a chunk of runs. `state` holds each run's x_tau on
// entry and its x_0 on exit.
void blockwise_chunk(const Denoiser& model, const RewardSpec& spec, int n_streams, int block, int tau,
                     std::span<const std::uint64_t> seeds, std::span<Point2> state, SamplerStats& st,
                     std::vector<BlockTrace>* trace) {
    const NoiseSchedule& sched = model.schedule();
    const std::size_t runs = seeds.size();
    const auto nn = static_cast<std::size_t>(n_streams);
    const std::size_t items = runs * nn;
    std::vector<Point2> xs(items), eps(items), run_eps(runs);
    std::vector<double> values(items);
    bool have_run_eps = false;

    for (int t = tau; t > 0;) {
        const int t_end = std::max(t - block, 0);
        if (!have_run_eps) model.predict(state, t, run_eps);
        // All streams of a run branch from the same state, which shares one
        // noise estimate.
        for (std::size_t r = 0; r < runs; ++r)
            for (std::size_t s = 0; s < nn; ++s)
                xs[r * nn + s] = reverse_step(state[r], run_eps[r], t,
                                              stream_normal(seeds[r], static_cast<std::uint64_t>(t), s), sched);
        for (int u = t - 1; u > t_end; --u) {
            model.predict(xs, u, eps);
            for (std::size_t r = 0; r < runs; ++r)
                for (std::size_t s = 0; s < nn; ++s) {
                    const std::size_t i = r * nn + s;
                    xs[i] = reverse_step(xs[i], eps[i], u, stream_normal(seeds[r], static_cast<std::uint64_t>(u), s),
                                         sched);
                }
        }
        if (t_end > 0) {
            model.predict(xs, t_end, eps);
            for (std::size_t i = 0; i < items; ++i)
                values[i] = selection_score(spec, tweedie_x0(xs[i], eps[i], t_end, sched));
        } else {
            for (std::size_t i = 0; i < items; ++i) values[i] = selection_score(spec, xs[i]);
        }
        for (std::size_t r = 0; r < runs; ++r) {
            const std::span<const double> run_values(values.data() + r * nn, nn);
            const std::size_t best = argmax_lowest(run_values);
            state[r] = xs[r * nn + best];
            run_eps[r] = eps[r * nn + best];
            if (trace && r == 0)
                trace->push_back({t, t_end, std::vector<double>(run_values.begin(), run_values.end()),
                                  static_cast<int>(best)});
        }
        have_run_eps = t_end > 0;
        st.model_evals += static_cast<std::uint64_t>(items) * static_cast<std::uint64_t>(t - t_end);
        st.reward_queries += items;
        st.selections += runs;
        t = t_end;
    }
}

void grad_guided_chunk(const Denoiser& model, const RewardSpec& spec, double scale, bool exact,
                       std::span<const std::uint64_t> seeds, std::span<Point2> out, SamplerStats& st) {
    const NoiseSchedule& sched = model.schedule();
    const int steps = sched.steps();
    const std::size_t n = seeds.size();
    std::vector<Point2> eps(n), cot(n), vjp(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = stream_normal(seeds[i], static_cast<std::uint64_t>(steps) + 1, 0);
    for (int t = steps; t >= 1; --t) {
        model.predict(out, t, eps);
        if (scale > 0.0) {
            const double ab = sched.alpha_bar(t);
            const double noise_scale = std::sqrt(1.0 - ab);
            const double inv_signal = 1.0 / std::sqrt(ab);
            for (std::size_t i = 0; i < n; ++i) cot[i] = reward_grad(spec, tweedie_x0(out[i], eps[i], t, sched));
            if (exact) {
                // d x0_hat / d x_t = (I - sqrt(1 - ab) d eps / d x_t) / sqrt(ab)
                model.input_vjp(out, t, cot, vjp);
                for (std::size_t i = 0; i < n; ++i) cot[i] = inv_signal * (cot[i] - noise_scale * vjp[i]);
                st.gradient_evals += n;
            } else {
                for (std::size_t i = 0; i < n; ++i) cot[i] = inv_signal * cot[i];
            }
            for (std::size_t i = 0; i < n; ++i) eps[i] = eps[i] - (noise_scale * scale) * cot[i];
            st.reward_queries += n;
        }
        for (std::size_t i = 0; i < n; ++i)
            out[i] = reverse_step(out[i], eps[i], t, stream_normal(seeds[i], static_cast<std::uint64_t>(t), 0), sched);
    }
    st.model_evals += static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(steps);
}

Point2 initial_state(const NoiseSchedule& sched, std::uint64_t seed, int tau, std::optional<Point2> x_ref) {
    const Point2 z = stream_normal(seed, static_cast<std::uint64_t>(tau) + 1, 0);
    if (tau == sched.steps() || !x_ref) return z;
    return forward_noising(*x_ref, tau, z, sched);
}

}  // namespace

std::vector<Point2> base_sample(const Denoiser& model, std::size_t n, std::uint64_t seed, const ExecOptions& exec,
                                SamplerStats* stats) {
    if (n < 1) throw InvalidArgument("base_sample: n must be >= 1");
    std::vector<Lane> lanes(n);
    for (std::size_t i = 0; i < n; ++i) lanes[i] = {seed, i};
    std::vector<Point2> out(n);
    const std::size_t chunk = std::max<std::size_t>(1, exec.chunk_items);
    const std::size_t chunks = (n + chunk - 1) / chunk;
    std::vector<SamplerStats> per_chunk(chunks);
    for_each_chunk(chunks, exec.threads, [&](std::size_t c) {
        const std::size_t lo = c * chunk, len = std::min(chunk, n - lo);
        ancestral_chunk(model, std::span<const Lane>(lanes).subspan(lo, len), std::span<Point2>(out).subspan(lo, len),
                        per_chunk[c]);
    });
    if (stats)
        for (const auto& s : per_chunk) *stats += s;
    return out;
}

std::vector<Point2> guided_batch(const Denoiser& model, const RewardSpec& spec, const GuidanceConfig& cfg,
                                 std::span<const std::uint64_t> seeds, std::span<const Point2> refs,
                                 const ExecOptions& exec, SamplerStats* stats) {
    const NoiseSchedule& sched = model.schedule();
    const int steps = sched.steps();
    cfg.validate(steps);
    validate(spec);
    if (cfg.method == Method::GradGuide && !is_differentiable(spec))
        throw UnsupportedVariant("gradient guidance needs a differentiable reward; the quantized reward has none");
    if (!refs.empty() && refs.size() != seeds.size())
        throw InvalidArgument("guided_batch: one reference per seed is required");
    if (cfg.method == Method::CoDeEta && refs.empty() && !cfg.x_ref && cfg.denoise_steps(steps) != steps)
        throw InvalidArgument("CoDe(eta) with eta < 1 needs a reference point");

    const std::size_t runs = seeds.size();
    std::vector<Point2> out(runs);
    if (runs == 0) return out;

    const bool selects = cfg.effective_block(steps) > 0;
    const std::size_t per_run = selects ? static_cast<std::size_t>(cfg.n) : 1;
    const std::size_t chunk = std::max<std::size_t>(1, exec.chunk_items / per_run);
    const std::size_t chunks = (runs + chunk - 1) / chunk;
    std::vector<SamplerStats> per_chunk(chunks);

    for_each_chunk(chunks, exec.threads, [&](std::size_t c) {
        const std::size_t lo = c * chunk, len = std::min(chunk, runs - lo);
        const auto chunk_seeds = seeds.subspan(lo, len);
        const auto chunk_out = std::span<Point2>(out).subspan(lo, len);
        SamplerStats& st = per_chunk[c];
        switch (cfg.method) {
            case Method::Base: {
                std::vector<Lane> lanes(len);
                for (std::size_t i = 0; i < len; ++i) lanes[i] = {chunk_seeds[i], 0};
                ancestral_chunk(model, lanes, chunk_out, st);
                break;
            }
            case Method::GradGuide:
                grad_guided_chunk(model, spec, cfg.scale, cfg.exact_gradient, chunk_seeds, chunk_out, st);
                break;
            default: {
                const int tau = cfg.denoise_steps(steps);
                for (std::size_t i = 0; i < len; ++i) {
                    std::optional<Point2> ref = cfg.x_ref;
                    if (!refs.empty()) ref = refs[lo + i];
                    chunk_out[i] = initial_state(sched, chunk_seeds[i], tau,
                                                 cfg.method == Method::CoDeEta ? ref : std::nullopt);
                }
                blockwise_chunk(model, spec, cfg.n, cfg.effective_block(steps), tau, chunk_seeds, chunk_out, st,
                                nullptr);
            }
        }
    });
    if (stats)
        for (const auto& s : per_chunk) *stats += s;
    return out;
}

namespace {

Point2 single_blockwise(const Denoiser& model, const RewardSpec& spec, int n, int block, int tau,
                        std::optional<Point2> x_ref, std::uint64_t seed, SamplerStats* stats,
                        std::vector<BlockTrace>* trace) {
    validate(spec);
    Point2 state = initial_state(model.schedule(), seed, tau, x_ref);
    SamplerStats st;
    blockwise_chunk(model, spec, n, block, tau, std::span<const std::uint64_t>(&seed, 1),
                    std::span<Point2>(&state, 1), st, trace);
    if (stats) *stats += st;
    return state;
}

}  // namespace

Point2 code_sample(const Denoiser& model, const RewardSpec& spec, int n, int block, std::uint64_t seed,
                   SamplerStats* stats, std::vector<BlockTrace>* trace) {
    GuidanceConfig cfg;
    cfg.method = Method::CoDe;
    cfg.n = n;
    cfg.block = block;
    cfg.validate(model.schedule().steps());
    return single_blockwise(model, spec, n, block, model.schedule().steps(), std::nullopt, seed, stats, trace);
}

Point2 code_eta_sample(const Denoiser& model, const RewardSpec& spec, int n, int block, double eta, Point2 x_ref,
                       std::uint64_t seed, SamplerStats* stats, std::vector<BlockTrace>* trace) {
    GuidanceConfig cfg;
    cfg.method = Method::CoDeEta;
    cfg.n = n;
    cfg.block = block;
    cfg.eta = eta;
    const int steps = model.schedule().steps();
    cfg.validate(steps);
    return single_blockwise(model, spec, n, block, cfg.denoise_steps(steps), x_ref, seed, stats, trace);
}

Point2 svdd_sample(const Denoiser& model, const RewardSpec& spec, int n, std::uint64_t seed, SamplerStats* stats) {
    return code_sample(model, spec, n, 1, seed, stats);
}

Point2 bon_sample(const Denoiser& model, const RewardSpec& spec, int n, std::uint64_t seed, SamplerStats* stats) {
    return code_sample(model, spec, n, model.schedule().steps(), seed, stats);
}

Point2 grad_guided_sample(const Denoiser& model, const RewardSpec& spec, double scale, std::uint64_t seed,
                          bool exact_gradient, SamplerStats* stats) {
    GuidanceConfig cfg;
    cfg.method = Method::GradGuide;
    cfg.scale = scale;
    cfg.exact_gradient = exact_gradient;
    return guided_batch(model, spec, cfg, std::span<const std::uint64_t>(&seed, 1), {}, {}, stats).front();
}

Point2 guided_sample(const Denoiser& model, const RewardSpec& spec, const GuidanceConfig& cfg, SamplerStats* stats) {
    const std::uint64_t seed = cfg.seed;
    return guided_batch(model, spec, cfg, std::span<const std::uint64_t>(&seed, 1), {}, {}, stats).front();
}

}  // namespace codelab
