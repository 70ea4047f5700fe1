// codelab: train a toy diffusion model and run reward-guided sampling
// experiments on it. See README.md for the config schema.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "codelab/csv.hpp"
#include "codelab/experiment.hpp"
#include "codelab/rng.hpp"

using namespace codelab;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct CommonOptions {
    std::string config;
    std::string checkpoint;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string profile = "full";
};

void add_common(CLI::App* cmd, CommonOptions& o, const std::string& out_help) {
    cmd->add_option("--config", o.config, "experiment config (JSON), applied over the profile defaults");
    cmd->add_option("--checkpoint", o.checkpoint, "model checkpoint path");
    cmd->add_option("--out", o.out, out_help);
    cmd->add_option("--seed", o.seed, "global seed");
    cmd->add_option("--profile", o.profile, "built-in defaults: full or ci")
        ->check(CLI::IsMember({"full", "ci"}));
}

ExperimentConfig resolve(const CommonOptions& o, bool out_is_dir) {
    const Profile profile = profile_from_string(o.profile);
    ExperimentConfig cfg = o.config.empty() ? profile_config(profile) : load_config(o.config, profile);
    if (o.seed) cfg.seed = *o.seed;
    if (out_is_dir && !o.out.empty()) cfg.output_dir = o.out;
    if (!o.checkpoint.empty()) cfg.checkpoint = o.checkpoint;
    cfg.validate();
    return cfg;
}

void write_points(const std::string& path, const std::vector<Point2>& pts) {
    if (path.empty()) {
        write_points_csv(std::cout, pts);
        return;
    }
    std::ofstream out(path, std::ios::binary);
    write_points_csv(out, pts);
    if (!out) throw Error("cannot write " + path);
}

Point2 parse_xy(const std::string& s) {
    const auto cells = split_csv_line(s);
    try {
        if (cells.size() == 2) return {std::stod(cells[0]), std::stod(cells[1])};
    } catch (const std::exception&) {
    }
    throw InvalidArgument("--x-ref expects 'x,y', got '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reward-guided sampling experiments on a 2D diffusion model"};
    app.require_subcommand(1);

    CommonOptions train_o, sample_o, guide_o, sweep_o, shift_o;
    auto* train_cmd = app.add_subcommand("train", "train the base model; writes checkpoint.json and loss.csv");
    add_common(train_cmd, train_o, "output directory");

    auto* sample_cmd = app.add_subcommand("sample", "draw base-model samples as x,y CSV");
    add_common(sample_cmd, sample_o, "output CSV (default: stdout)");
    std::size_t sample_count = 1000;
    sample_cmd->add_option("--count", sample_count, "number of samples")->check(CLI::PositiveNumber);

    auto* guide_cmd = app.add_subcommand("guide", "draw guided samples as x,y CSV");
    add_common(guide_cmd, guide_o, "output CSV (default: stdout)");
    std::string method = "code", x_ref;
    GuidanceConfig gc;
    std::size_t guide_count = 100;
    bool frozen = false;
    guide_cmd->add_option("--method", method, "base, code, code_eta, bon, svdd_pm or grad_guide");
    guide_cmd->add_option("--n", gc.n, "streams N");
    guide_cmd->add_option("--block", gc.block, "block size B (code, code_eta)");
    guide_cmd->add_option("--eta", gc.eta, "noise ratio (code_eta)");
    guide_cmd->add_option("--scale", gc.scale, "guidance scale (grad_guide)");
    guide_cmd->add_option("--x-ref", x_ref, "reference point 'x,y' (code_eta; default: drawn per run)");
    guide_cmd->add_flag("--frozen-gradient", frozen, "grad_guide: skip the chain rule through the model");
    guide_cmd->add_option("--count", guide_count, "number of runs")->check(CLI::PositiveNumber);

    auto* sweep_cmd = app.add_subcommand("sweep", "evaluate every sweep point; writes metrics.csv, summary.json");
    add_common(sweep_cmd, sweep_o, "output directory");

    auto* shift_cmd = app.add_subcommand("shift-study", "reward displacement study; writes CSV and SVG");
    add_common(shift_cmd, shift_o, "output directory");

    auto* plot_cmd = app.add_subcommand("plot", "render SVG trade-off curves from a metrics CSV");
    std::string plot_in, plot_out = ".";
    plot_cmd->add_option("metrics", plot_in, "metrics CSV written by sweep")->required();
    plot_cmd->add_option("--out", plot_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (train_cmd->parsed()) {
            ExperimentConfig cfg = resolve(train_o, true);
            if (train_o.seed) cfg.train.seed = *train_o.seed;
            const auto out = run_train(cfg, [&](int epoch, double loss) {
                if (epoch % 10 == 0 || epoch + 1 == cfg.train.epochs)
                    std::fprintf(stderr, "epoch %d loss %.6f\n", epoch, loss);
            });
            std::printf("checkpoint %s\nloss trace %s\nfinal loss %.6f\n", out.checkpoint.c_str(),
                        out.loss_csv.c_str(), out.result.epoch_loss.back());
        } else if (sample_cmd->parsed()) {
            const ExperimentConfig cfg = resolve(sample_o, false);
            const Checkpoint ck = load_checkpoint(cfg.checkpoint_path());
            const MlpDenoiser model(ck.model, ck.schedule);
            ExecOptions exec;
            exec.threads = cfg.threads;
            write_points(sample_o.out, base_sample(model, sample_count, cfg.seed, exec));
        } else if (guide_cmd->parsed()) {
            const ExperimentConfig cfg = resolve(guide_o, false);
            gc.method = method_from_string(method);
            gc.exact_gradient = !frozen;
            if (!x_ref.empty()) gc.x_ref = parse_xy(x_ref);
            const Checkpoint ck = load_checkpoint(cfg.checkpoint_path());
            const MlpDenoiser model(ck.model, ck.schedule);
            std::vector<std::uint64_t> seeds(guide_count);
            std::vector<Point2> refs;
            for (std::size_t i = 0; i < guide_count; ++i) seeds[i] = derive_seed(cfg.seed, i);
            if (gc.method == Method::CoDeEta && !gc.x_ref)
                for (std::size_t i = 0; i < guide_count; ++i)
                    refs.push_back(draw_reference(cfg.reward, derive_seed(cfg.seed, i, 1)));
            ExecOptions exec;
            exec.threads = cfg.threads;
            SamplerStats stats;
            const auto pts = guided_batch(model, cfg.reward, gc, seeds, refs, exec, &stats);
            write_points(guide_o.out, pts);
            std::fprintf(stderr, "model_evals %llu reward_queries %llu\n",
                         static_cast<unsigned long long>(stats.model_evals),
                         static_cast<unsigned long long>(stats.reward_queries));
        } else if (sweep_cmd->parsed()) {
            const auto out = run_sweep(resolve(sweep_o, true));
            std::printf("%zu rows\n%s\n%s\n", out.rows.size(), out.metrics_csv.c_str(), out.summary_json.c_str());
        } else if (shift_cmd->parsed()) {
            const auto out = run_shift_study(resolve(shift_o, true));
            std::printf("%zu rows\n%s\n", out.rows.size(), out.csv.c_str());
            for (const auto& p : out.plots) std::printf("%s\n", p.c_str());
        } else if (plot_cmd->parsed()) {
            for (const auto& p : run_plot(plot_in, plot_out)) std::printf("%s\n", p.c_str());
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitUsage;
    } catch (const InvalidArgument& e) {
        std::fprintf(stderr, "invalid argument: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return 0;
}
