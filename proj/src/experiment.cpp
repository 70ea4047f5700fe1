#include "codelab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "codelab/csv.hpp"
#include "codelab/rng.hpp"
#include "codelab/svg_plot.hpp"
#include "json.hpp"

namespace codelab {

using json = nlohmann::json;

namespace {

// Seed-derivation tags; each names an independent family of streams.
enum SeedTag : std::uint64_t { kSweepBase = 1, kSweepRuns, kSweepRefs, kShiftBase, kShiftRuns, kShiftRefs };

GuidanceConfig point(Method m, int n = 1, int block = 1, double eta = 1.0, double scale = 0.0) {
    GuidanceConfig c;
    c.method = m;
    c.n = n;
    c.block = block;
    c.eta = eta;
    c.scale = scale;
    return c;
}

void add_points(std::vector<GuidanceConfig>& out, Method m, std::initializer_list<int> ns, int block = 1,
                double eta = 1.0) {
    for (int n : ns) out.push_back(point(m, n, block, eta));
}

json point_json(const Point2& p) { return json::array({p.x, p.y}); }

Point2 parse_point(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ConfigError(where + ": expected [x, y]");
    return {j[0].get<double>(), j[1].get<double>()};
}

json guidance_json(const GuidanceConfig& c) {
    json j = {{"method", std::string(to_string(c.method))},
              {"n", c.n},
              {"block", c.block},
              {"eta", c.eta},
              {"scale", c.scale},
              {"exact_gradient", c.exact_gradient}};
    if (c.x_ref) j["x_ref"] = point_json(*c.x_ref);
    return j;
}

json reward_json(const RewardSpec& spec) {
    if (const auto* g = std::get_if<GaussianReward>(&spec))
        return {{"kind", "gaussian"}, {"mu", point_json(g->mu)}, {"sigma", g->sigma}};
    const auto& q = std::get<QuantizedReward>(spec);
    return {{"kind", "quantized"}, {"mu", point_json(q.mu)}, {"delta", q.delta}};
}

json to_json(const ExperimentConfig& c) {
    json means = json::array();
    for (const Point2& m : c.prior.means) means.push_back(point_json(m));
    json sweep = json::array();
    for (const auto& p : c.sweep) sweep.push_back(guidance_json(p));
    json cells = json::array();
    for (const auto& p : c.shift_study.cells) cells.push_back(guidance_json(p));
    return {
        {"seed", c.seed},
        {"prior", {{"weights", c.prior.weights}, {"means", means}, {"sigma", c.prior.sigma}}},
        {"reward", reward_json(c.reward)},
        {"schedule",
         {{"steps", c.schedule.steps}, {"beta_start", c.schedule.beta_start}, {"beta_end", c.schedule.beta_end}}},
        {"model",
         {{"hidden_width", c.model.hidden_width},
          {"embed_width", c.model.embed_width},
          {"activation", std::string(to_string(c.model.activation))},
          {"freq_base", c.model.freq_base},
          {"init_seed", c.model.init_seed}}},
        {"train",
         {{"epochs", c.train.epochs},
          {"dataset_size", c.train.dataset_size},
          {"batch_size", c.train.batch_size},
          {"learning_rate", c.train.learning_rate},
          {"beta1", c.train.beta1},
          {"beta2", c.train.beta2},
          {"adam_eps", c.train.adam_eps},
          {"seed", c.train.seed}}},
        {"sweep", sweep},
        {"samples_per_point", c.samples_per_point},
        {"kl_samples", c.kl_samples},
        {"shift_study",
         {{"displacements", c.shift_study.displacements},
          {"origin", point_json(c.shift_study.origin)},
          {"toward", point_json(c.shift_study.toward)},
          {"runs", c.shift_study.runs},
          {"cells", cells}}},
        {"threads", c.threads},
        {"record_wall_time", c.record_wall_time},
        {"output_dir", c.output_dir.string()},
        {"checkpoint", c.checkpoint.string()},
    };
}

// Strict reader: every key must be known, every value of the right type.
class Reader {
public:
    Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
    }

    void allow(std::initializer_list<const char*> keys) const {
        for (const auto& [k, v] : j_.items()) {
            if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; }))
                throw ConfigError(where_ + ": unknown key '" + k + "'");
        }
    }

    bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }
    const json& at(const char* key) const { return j_.at(key); }
    std::string path(const char* key) const { return where_ + "." + key; }

    template <class T>
    void get(const char* key, T& out) const {
        if (!has(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(path(key) + ": wrong type");
        }
    }

private:
    const json& j_;
    std::string where_;
};

template <class T>
std::vector<T> scalar_or_list(const Reader& r, const char* key, T fallback) {
    if (!r.has(key)) return {fallback};
    const json& v = r.at(key);
    try {
        if (v.is_array()) {
            if (v.empty()) throw ConfigError(r.path(key) + ": empty list");
            return v.get<std::vector<T>>();
        }
        return {v.get<T>()};
    } catch (const json::exception&) {
        throw ConfigError(r.path(key) + ": wrong type");
    }
}

std::vector<GuidanceConfig> parse_points(const json& list, const std::string& where) {
    if (!list.is_array()) throw ConfigError(where + ": expected a list");
    std::vector<GuidanceConfig> out;
    for (std::size_t i = 0; i < list.size(); ++i) {
        const Reader r(list[i], where + "[" + std::to_string(i) + "]");
        r.allow({"method", "n", "block", "eta", "scale", "exact_gradient", "x_ref"});
        if (!r.has("method")) throw ConfigError(r.path("method") + ": missing");
        std::string name;
        r.get("method", name);
        GuidanceConfig base;
        try {
            base.method = method_from_string(name);
        } catch (const InvalidArgument& e) {
            throw ConfigError(r.path("method") + ": " + e.what());
        }
        r.get("exact_gradient", base.exact_gradient);
        if (r.has("x_ref")) base.x_ref = parse_point(r.at("x_ref"), r.path("x_ref"));
        for (int n : scalar_or_list<int>(r, "n", 1))
            for (int b : scalar_or_list<int>(r, "block", 1))
                for (double eta : scalar_or_list<double>(r, "eta", 1.0))
                    for (double s : scalar_or_list<double>(r, "scale", 0.0)) {
                        GuidanceConfig c = base;
                        c.n = n;
                        c.block = b;
                        c.eta = eta;
                        c.scale = s;
                        out.push_back(c);
                    }
    }
    return out;
}

ExperimentConfig from_json(const json& doc) {
    ExperimentConfig c;
    const Reader top(doc, "config");
    top.allow({"seed", "prior", "reward", "schedule", "model", "train", "sweep", "samples_per_point", "kl_samples",
               "shift_study", "threads", "record_wall_time", "output_dir", "checkpoint"});
    top.get("seed", c.seed);
    if (top.has("prior")) {
        const Reader r(top.at("prior"), "prior");
        r.allow({"weights", "means", "sigma"});
        r.get("weights", c.prior.weights);
        r.get("sigma", c.prior.sigma);
        if (r.has("means")) {
            c.prior.means.clear();
            const json& m = r.at("means");
            if (!m.is_array()) throw ConfigError("prior.means: expected a list");
            for (const json& p : m) c.prior.means.push_back(parse_point(p, "prior.means"));
        }
    }
    if (top.has("reward")) {
        const Reader r(top.at("reward"), "reward");
        std::string kind = "gaussian";
        r.get("kind", kind);
        Point2 mu{14.0, 3.0};
        if (r.has("mu")) mu = parse_point(r.at("mu"), "reward.mu");
        if (kind == "gaussian") {
            r.allow({"kind", "mu", "sigma"});
            GaussianReward g{mu, 2.0};
            r.get("sigma", g.sigma);
            c.reward = g;
        } else if (kind == "quantized") {
            r.allow({"kind", "mu", "delta"});
            QuantizedReward q{mu, 1.0};
            r.get("delta", q.delta);
            c.reward = q;
        } else {
            throw ConfigError("reward.kind: unknown reward '" + kind + "' (gaussian, quantized)");
        }
    }
    if (top.has("schedule")) {
        const Reader r(top.at("schedule"), "schedule");
        r.allow({"steps", "beta_start", "beta_end"});
        r.get("steps", c.schedule.steps);
        r.get("beta_start", c.schedule.beta_start);
        r.get("beta_end", c.schedule.beta_end);
    }
    if (top.has("model")) {
        const Reader r(top.at("model"), "model");
        r.allow({"hidden_width", "embed_width", "activation", "freq_base", "init_seed"});
        r.get("hidden_width", c.model.hidden_width);
        r.get("embed_width", c.model.embed_width);
        r.get("freq_base", c.model.freq_base);
        r.get("init_seed", c.model.init_seed);
        if (r.has("activation")) {
            std::string a;
            r.get("activation", a);
            try {
                c.model.activation = activation_from_string(a);
            } catch (const InvalidArgument& e) {
                throw ConfigError(std::string("model.activation: ") + e.what());
            }
        }
    }
    if (top.has("train")) {
        const Reader r(top.at("train"), "train");
        r.allow({"epochs", "dataset_size", "batch_size", "learning_rate", "beta1", "beta2", "adam_eps", "seed"});
        r.get("epochs", c.train.epochs);
        r.get("dataset_size", c.train.dataset_size);
        r.get("batch_size", c.train.batch_size);
        r.get("learning_rate", c.train.learning_rate);
        r.get("beta1", c.train.beta1);
        r.get("beta2", c.train.beta2);
        r.get("adam_eps", c.train.adam_eps);
        r.get("seed", c.train.seed);
    }
    if (top.has("sweep")) c.sweep = parse_points(top.at("sweep"), "sweep");
    top.get("samples_per_point", c.samples_per_point);
    top.get("kl_samples", c.kl_samples);
    if (top.has("shift_study")) {
        const Reader r(top.at("shift_study"), "shift_study");
        r.allow({"displacements", "origin", "toward", "runs", "cells"});
        r.get("displacements", c.shift_study.displacements);
        if (r.has("origin")) c.shift_study.origin = parse_point(r.at("origin"), "shift_study.origin");
        if (r.has("toward")) c.shift_study.toward = parse_point(r.at("toward"), "shift_study.toward");
        r.get("runs", c.shift_study.runs);
        if (r.has("cells")) c.shift_study.cells = parse_points(r.at("cells"), "shift_study.cells");
    }
    top.get("threads", c.threads);
    top.get("record_wall_time", c.record_wall_time);
    std::string dir = c.output_dir.string(), ck;
    top.get("output_dir", dir);
    top.get("checkpoint", ck);
    c.output_dir = dir;
    c.checkpoint = ck;
    c.validate();
    return c;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw Error("cannot write " + path.string());
}

template <class Fn>
void write_stream(const std::filesystem::path& path, Fn fn) {
    std::ostringstream s;
    fn(s);
    write_text(path, s.str());
}

Checkpoint load_matching_checkpoint(const ExperimentConfig& cfg) {
    Checkpoint ck = load_checkpoint(cfg.checkpoint_path());
    if (ck.schedule.steps() != cfg.schedule.steps)
        throw ConfigError("checkpoint " + cfg.checkpoint_path().string() + " has T = " +
                          std::to_string(ck.schedule.steps()) + " but the config has T = " +
                          std::to_string(cfg.schedule.steps) + " (wrong --profile?)");
    return ck;
}

ExecOptions exec_options(const ExperimentConfig& cfg) {
    ExecOptions e;
    e.threads = cfg.threads;
    return e;
}

// Diverged samples put mass at infinity or blow the fitted covariance past
// what double precision can factor; the divergence is reported as infinite.
double kl_to_base(std::span<const Point2> batch, const GaussianFit& base_fit) {
    if (count_non_finite(batch)) return std::numeric_limits<double>::infinity();
    const GaussianFit fit = fit_gaussian(batch);
    if (!fit.mean.allFinite() || !fit.cov.allFinite() || Eigen::LLT<Eigen::Matrix2d>(fit.cov).info() != Eigen::Success)
        return std::numeric_limits<double>::infinity();
    return gaussian_kl(fit, base_fit);
}

std::string cell_label(const GuidanceConfig& c, int steps) {
    std::string s(to_string(c.method));
    if (c.method != Method::Base && c.method != Method::GradGuide) s += " N=" + std::to_string(c.n);
    if (c.method == Method::CoDe || c.method == Method::CoDeEta) s += " B=" + std::to_string(c.effective_block(steps));
    if (c.method == Method::CoDeEta) s += " eta=" + format_number(c.eta);
    if (c.method == Method::GradGuide) s += " scale=" + format_number(c.scale);
    return s;
}

}  // namespace

Profile profile_from_string(std::string_view name) {
    if (name == "full") return Profile::Full;
    if (name == "ci") return Profile::Ci;
    throw ConfigError("unknown profile '" + std::string(name) + "' (full, ci)");
}

Point2 ShiftStudyConfig::reward_mean(double displacement) const {
    const Point2 dir = toward - origin;
    return origin + (displacement / norm(dir)) * dir;
}

void ExperimentConfig::validate() const {
    auto wrap = [](const char* where, auto&& fn) {
        try {
            fn();
        } catch (const InvalidArgument& e) {
            throw ConfigError(std::string(where) + ": " + e.what());
        }
    };
    wrap("prior", [&] { prior.validate(); });
    wrap("reward", [&] { codelab::validate(reward); });
    wrap("schedule", [&] { build_linear_schedule(schedule.steps, schedule.beta_start, schedule.beta_end); });
    wrap("train", [&] { train.validate(); });
    if (model.hidden_width < 1 || model.embed_width < 2 || model.embed_width % 2 != 0 || !(model.freq_base > 1.0))
        throw ConfigError("model: need hidden_width >= 1, an even embed_width >= 2 and freq_base > 1");
    if (sweep.empty()) throw ConfigError("sweep: the list of sweep points is empty");
    for (std::size_t i = 0; i < sweep.size(); ++i)
        wrap("sweep", [&] { sweep[i].validate(schedule.steps); });
    if (samples_per_point < 2) throw ConfigError("samples_per_point must be >= 2");
    if (kl_samples < 3) throw ConfigError("kl_samples must be >= 3");
    if (!std::is_sorted(shift_study.displacements.begin(), shift_study.displacements.end()))
        throw ConfigError("shift_study.displacements must be sorted ascending");
    if (shift_study.runs < 2) throw ConfigError("shift_study.runs must be >= 2");
    if (shift_study.origin == shift_study.toward) throw ConfigError("shift_study: origin and toward coincide");
    for (const auto& c : shift_study.cells) wrap("shift_study.cells", [&] { c.validate(schedule.steps); });
}

std::filesystem::path ExperimentConfig::checkpoint_path() const {
    return checkpoint.empty() ? output_dir / "checkpoint.json" : checkpoint;
}

ExperimentConfig profile_config(Profile profile) {
    ExperimentConfig c;
    auto& s = c.sweep;
    auto& cells = c.shift_study.cells;
    if (profile == Profile::Full) {
        s.push_back(point(Method::Base));
        add_points(s, Method::BoN, {2, 5, 10, 20, 30, 50, 100, 200, 500});
        add_points(s, Method::CoDe, {2, 4, 6, 8, 10, 20, 30, 40}, 100);
        add_points(s, Method::SVDDPM, {2, 4, 6, 8, 10, 20, 40});
        for (double scale : {1.0, 5.0, 10.0, 25.0, 50.0}) s.push_back(point(Method::GradGuide, 1, 1, 1.0, scale));
        c.shift_study.displacements = {0, 2, 4, 6, 8, 10, 12};
        add_points(cells, Method::BoN, {10, 50});
        add_points(cells, Method::SVDDPM, {10, 50});
        add_points(cells, Method::CoDeEta, {10, 50}, 80, 1.0);
        add_points(cells, Method::CoDeEta, {10, 50}, 80, 0.6);
        return c;
    }
    c.schedule.steps = 100;
    c.train.epochs = 20;
    c.samples_per_point = 200;
    c.kl_samples = 200;
    c.output_dir = "out-ci";
    s.push_back(point(Method::Base));
    add_points(s, Method::BoN, {2, 4, 8});
    add_points(s, Method::CoDe, {2, 4}, 10);
    add_points(s, Method::SVDDPM, {2});
    add_points(s, Method::CoDeEta, {4}, 8, 0.6);
    for (double scale : {1.0, 5.0}) s.push_back(point(Method::GradGuide, 1, 1, 1.0, scale));
    c.shift_study.displacements = {0, 6, 12};
    c.shift_study.runs = 50;
    add_points(cells, Method::BoN, {4});
    add_points(cells, Method::SVDDPM, {4});
    add_points(cells, Method::CoDeEta, {4}, 8, 0.6);
    return c;
}

ExperimentConfig config_from_json(const std::string& text, Profile profile) {
    json patch;
    try {
        patch = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!patch.is_object()) throw ConfigError("config: expected a JSON object at the top level");
    json doc = to_json(profile_config(profile));
    // Changing the reward kind starts from that kind's defaults.
    if (const auto r = patch.find("reward"); r != patch.end() && r->is_object() && r->contains("kind") &&
                                             (*r)["kind"] != doc["reward"]["kind"]) {
        doc["reward"] = json{{"mu", doc["reward"]["mu"]}};
    }
    doc.merge_patch(patch);
    return from_json(doc);
}

ExperimentConfig load_config(const std::filesystem::path& path, Profile profile) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    try {
        return config_from_json(s.str(), profile);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string config_to_json(const ExperimentConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

NoiseSchedule make_schedule(const ExperimentConfig& cfg) {
    return build_linear_schedule(cfg.schedule.steps, cfg.schedule.beta_start, cfg.schedule.beta_end);
}

Point2 draw_reference(const RewardSpec& spec, std::uint64_t seed) {
    const Point2 z = stream_normal(seed, 0, 0);
    const double spread = std::visit(
        [](const auto& r) {
            if constexpr (std::is_same_v<std::decay_t<decltype(r)>, GaussianReward>)
                return r.sigma;
            else
                return r.delta;
        },
        spec);
    return reward_center(spec) + spread * z;
}

TrainOutputs run_train(const ExperimentConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    const NoiseSchedule sched = make_schedule(cfg);
    EpsModel init = init_model(cfg.model.hidden_width, cfg.model.embed_width, cfg.model.init_seed,
                               cfg.model.activation, cfg.model.freq_base);
    TrainOutputs out{cfg.checkpoint_path(), cfg.output_dir / "loss.csv",
                     train(std::move(init), cfg.prior, sched, cfg.train, on_epoch)};
    if (out.checkpoint.has_parent_path()) std::filesystem::create_directories(out.checkpoint.parent_path());
    save_checkpoint(out.result.model, sched, out.checkpoint);
    write_stream(out.loss_csv, [&](std::ostream& s) {
        s << "epoch,loss\n";
        for (std::size_t e = 0; e < out.result.epoch_loss.size(); ++e)
            s << e << ',' << format_number(out.result.epoch_loss[e]) << '\n';
    });
    return out;
}

std::vector<MetricsRow> evaluate_sweep(const Denoiser& model, const ExperimentConfig& cfg) {
    cfg.validate();
    const int steps = model.schedule().steps();
    const ExecOptions exec = exec_options(cfg);
    const std::size_t count = std::max(cfg.samples_per_point, cfg.kl_samples);
    const std::vector<Point2> base = base_sample(model, count, derive_seed(cfg.seed, kSweepBase), exec);
    std::vector<std::uint64_t> seeds(count);
    std::vector<Point2> refs(count);
    for (std::size_t i = 0; i < count; ++i) {
        seeds[i] = derive_seed(cfg.seed, kSweepRuns, i);
        refs[i] = draw_reference(cfg.reward, derive_seed(cfg.seed, kSweepRefs, i));
    }
    const std::span<const Point2> base_eval(base.data(), cfg.samples_per_point);
    const GaussianFit base_fit = fit_gaussian(std::span<const Point2>(base.data(), cfg.kl_samples));

    std::vector<MetricsRow> rows;
    for (const GuidanceConfig& p : cfg.sweep) {
        const auto t0 = std::chrono::steady_clock::now();
        SamplerStats stats;
        const bool use_refs = p.method == Method::CoDeEta && !p.x_ref;
        const std::vector<Point2> out =
            guided_batch(model, cfg.reward, p, seeds, use_refs ? std::span<const Point2>(refs) : std::span<const Point2>(),
                         exec, &stats);
        const std::span<const Point2> eval(out.data(), cfg.samples_per_point);

        MetricsRow r;
        r.method = std::string(to_string(p.method));
        r.n = p.method == Method::Base || p.method == Method::GradGuide ? 1 : p.n;
        r.block = p.effective_block(steps);
        r.eta = p.method == Method::CoDeEta ? p.eta : 1.0;
        r.scale = p.method == Method::GradGuide ? p.scale : 0.0;
        r.seed = cfg.seed;
        r.expected_reward = expected_reward(eval, cfg.reward);
        r.normalized_reward = normalized_reward(eval, base_eval, cfg.reward);
        r.win_rate = win_rate(eval, base_eval, cfg.reward);
        r.kl_fit = kl_to_base(std::span<const Point2>(out.data(), cfg.kl_samples), base_fit);
        r.kl_bound = p.method == Method::GradGuide ? std::numeric_limits<double>::quiet_NaN()
                                                   : kl_upper_bound(p.method, r.n, std::max(r.block, 1), steps, r.eta);
        std::tie(r.variance_x, r.variance_y) = batch_variance(eval);
        r.model_evals = stats.model_evals / count;
        r.reward_queries = stats.reward_queries / count;
        if (cfg.record_wall_time)
            r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        rows.push_back(std::move(r));
    }
    return rows;
}

SweepOutputs run_sweep(const ExperimentConfig& cfg) {
    const Checkpoint ck = load_matching_checkpoint(cfg);
    const MlpDenoiser model(ck.model, ck.schedule);
    SweepOutputs out{evaluate_sweep(model, cfg), cfg.output_dir / "metrics.csv", cfg.output_dir / "summary.json"};
    write_stream(out.metrics_csv, [&](std::ostream& s) { write_metrics_csv(s, out.rows); });

    json rows = json::array();
    for (const MetricsRow& r : out.rows) {
        rows.push_back({{"method", r.method},
                        {"n", r.n},
                        {"block", r.block},
                        {"eta", r.eta},
                        {"scale", r.scale},
                        {"seed", r.seed},
                        {"expected_reward", r.expected_reward},
                        {"normalized_reward", r.normalized_reward},
                        {"win_rate", r.win_rate},
                        {"kl_fit", r.kl_fit},
                        {"kl_bound", r.kl_bound},
                        {"variance_x", r.variance_x},
                        {"variance_y", r.variance_y},
                        {"model_evals", r.model_evals},
                        {"reward_queries", r.reward_queries},
                        {"wall_ms", r.wall_ms}});
    }
    json summary = {{"checkpoint", cfg.checkpoint_path().string()},
                    {"steps", ck.schedule.steps()},
                    {"rows", rows},
                    {"config", to_json(cfg)}};
    write_text(out.summary_json, summary.dump(2) + "\n");
    return out;
}

std::vector<ShiftRow> evaluate_shift_study(const Denoiser& model, const ExperimentConfig& cfg) {
    cfg.validate();
    const auto& study = cfg.shift_study;
    const int steps = model.schedule().steps();
    const ExecOptions exec = exec_options(cfg);
    const std::vector<Point2> base = base_sample(model, study.runs, derive_seed(cfg.seed, kShiftBase), exec);
    std::vector<std::uint64_t> seeds(study.runs);
    for (std::size_t i = 0; i < study.runs; ++i) seeds[i] = derive_seed(cfg.seed, kShiftRuns, i);

    std::vector<ShiftRow> rows;
    for (double d : study.displacements) {
        const Point2 mu = study.reward_mean(d);
        const RewardSpec spec = with_center(cfg.reward, mu);
        const double base_reward = expected_reward(base, spec);
        auto make_row = [&](const GuidanceConfig& c, const std::vector<Point2>& samples) {
            ShiftRow r;
            r.displacement = d;
            r.reward_mean = mu;
            r.method = std::string(to_string(c.method));
            r.n = c.method == Method::Base ? 1 : c.n;
            r.block = c.effective_block(steps);
            r.eta = c.method == Method::CoDeEta ? c.eta : 1.0;
            r.mean_reward = expected_reward(samples, spec);
            r.normalized_reward = r.mean_reward / base_reward;
            std::tie(r.variance_x, r.variance_y) = batch_variance(samples);
            r.runs = samples.size();
            return r;
        };
        rows.push_back(make_row(GuidanceConfig{}, base));
        std::vector<Point2> refs(study.runs);
        for (std::size_t i = 0; i < study.runs; ++i) refs[i] = draw_reference(spec, derive_seed(cfg.seed, kShiftRefs, i));
        for (const GuidanceConfig& c : study.cells) {
            const bool use_refs = c.method == Method::CoDeEta && !c.x_ref;
            const auto out = guided_batch(model, spec, c, seeds,
                                          use_refs ? std::span<const Point2>(refs) : std::span<const Point2>(), exec);
            rows.push_back(make_row(c, out));
        }
    }
    return rows;
}

void write_shift_csv(std::ostream& out, const std::vector<ShiftRow>& rows) {
    out << "displacement,reward_mean_x,reward_mean_y,method,n,block,eta,runs,mean_reward,normalized_reward,"
           "variance_x,variance_y,total_variance\n";
    for (const ShiftRow& r : rows)
        out << format_number(r.displacement) << ',' << format_number(r.reward_mean.x) << ','
            << format_number(r.reward_mean.y) << ',' << r.method << ',' << r.n << ',' << r.block << ','
            << format_number(r.eta) << ',' << r.runs << ',' << format_number(r.mean_reward) << ','
            << format_number(r.normalized_reward) << ',' << format_number(r.variance_x) << ','
            << format_number(r.variance_y) << ',' << format_number(r.total_variance()) << '\n';
}

ShiftOutputs run_shift_study(const ExperimentConfig& cfg) {
    if (cfg.shift_study.displacements.empty()) throw ConfigError("shift_study.displacements is empty");
    const Checkpoint ck = load_matching_checkpoint(cfg);
    const MlpDenoiser model(ck.model, ck.schedule);
    ShiftOutputs out{evaluate_shift_study(model, cfg), cfg.output_dir / "shift_study.csv", {}};
    write_stream(out.csv, [&](std::ostream& s) { write_shift_csv(s, out.rows); });

    const int steps = ck.schedule.steps();
    std::vector<std::string> order;
    std::map<std::string, std::pair<Series, Series>> curves;
    for (const ShiftRow& r : out.rows) {
        GuidanceConfig c;
        c.method = method_from_string(r.method);
        c.n = r.n;
        c.block = r.block;
        c.eta = r.eta;
        const std::string label = cell_label(c, steps);
        auto [it, fresh] = curves.try_emplace(label);
        if (fresh) {
            order.push_back(label);
            it->second.first.label = it->second.second.label = label;
        }
        it->second.first.points.emplace_back(r.displacement, r.mean_reward);
        it->second.second.points.emplace_back(r.displacement, r.total_variance());
    }
    std::vector<Series> reward_curves, variance_curves;
    for (const auto& label : order) {
        reward_curves.push_back(curves[label].first);
        variance_curves.push_back(curves[label].second);
    }
    const auto reward_svg = cfg.output_dir / "shift_reward.svg";
    const auto variance_svg = cfg.output_dir / "shift_variance.svg";
    write_text(reward_svg, render_svg({"Mean reward vs reward displacement", "displacement", "mean reward", false},
                                      reward_curves));
    write_text(variance_svg,
               render_svg({"Batch variance vs reward displacement", "displacement", "total variance", true},
                          variance_curves));
    out.plots = {reward_svg, variance_svg};
    return out;
}

std::vector<std::filesystem::path> run_plot(const std::filesystem::path& metrics_csv,
                                            const std::filesystem::path& out_dir) {
    std::ifstream in(metrics_csv, std::ios::binary);
    if (!in) throw ConfigError("cannot read metrics file " + metrics_csv.string());
    const std::vector<MetricsRow> rows = read_metrics_csv(in);
    const auto win_svg = out_dir / "win_rate_vs_kl.svg";
    const auto reward_svg = out_dir / "reward_vs_kl.svg";
    write_text(win_svg, render_svg({"Win rate vs KL", "KL (Gaussian fit)", "win rate", false},
                                   metrics_series(rows, &MetricsRow::win_rate)));
    write_text(reward_svg, render_svg({"Normalized reward vs KL", "KL (Gaussian fit)", "normalized reward", false},
                                      metrics_series(rows, &MetricsRow::normalized_reward)));
    return {win_svg, reward_svg};
}

}  // namespace codelab
