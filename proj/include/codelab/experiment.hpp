#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "codelab/checkpoint.hpp"
#include "codelab/gmm.hpp"
#include "codelab/metrics.hpp"
#include "codelab/rewards.hpp"
#include "codelab/samplers.hpp"
#include "codelab/trainer.hpp"

namespace codelab {

/// Unreadable, malformed or invalid experiment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

enum class Profile { Full, Ci };

Profile profile_from_string(std::string_view name);

struct ModelConfig {
    int hidden_width = 128;
    int embed_width = 32;
    Activation activation = Activation::SiLU;
    double freq_base = 1000.0;
    std::uint64_t init_seed = 0;
};

struct ScheduleConfig {
    int steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
};

/// Reward-mean displacement study. Cell c at displacement d runs `runs`
/// independent guided samples against the reward recentred at
/// origin + d * (toward - origin) / |toward - origin|.
struct ShiftStudyConfig {
    std::vector<double> displacements;
    Point2 origin{5.0, 17.0 / 3.0};
    Point2 toward{14.0, 3.0};
    std::size_t runs = 200;
    std::vector<GuidanceConfig> cells;

    Point2 reward_mean(double displacement) const;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    GmmSpec prior = default_prior();
    RewardSpec reward = GaussianReward{};
    ScheduleConfig schedule;
    ModelConfig model;
    TrainConfig train;
    std::vector<GuidanceConfig> sweep;
    std::size_t samples_per_point = 1000;
    std::size_t kl_samples = 1000;
    ShiftStudyConfig shift_study;
    unsigned threads = 0;
    bool record_wall_time = false;  // otherwise wall_ms is written as 0
    std::filesystem::path output_dir = "out";
    std::filesystem::path checkpoint;  // empty: output_dir / "checkpoint.json"

    void validate() const;
    std::filesystem::path checkpoint_path() const;
};

/// Built-in defaults. Full: T = 1000, 200 epochs, 1000 samples per point.
/// Ci: T = 100, 20 epochs, 200 samples per point and smaller grids.
ExperimentConfig profile_config(Profile profile);

/// Applies a JSON document (RFC 7396 merge patch) on top of the profile
/// defaults. In "sweep" and "shift_study.cells" entries, "n", "block",
/// "eta" and "scale" may be lists; an entry expands to their product.
ExperimentConfig config_from_json(const std::string& text, Profile profile = Profile::Full);

/// Reads `path` (ConfigError naming the path when missing or unreadable).
ExperimentConfig load_config(const std::filesystem::path& path, Profile profile = Profile::Full);

/// Fully expanded configuration as JSON.
std::string config_to_json(const ExperimentConfig& cfg);

NoiseSchedule make_schedule(const ExperimentConfig& cfg);

/// Draw from the reward distribution, used as the CoDe(eta) reference:
/// N(mu, sigma^2 I) for the Gaussian reward, N(mu, delta^2 I) for the
/// quantized one.
Point2 draw_reference(const RewardSpec& spec, std::uint64_t seed);

struct TrainOutputs {
    std::filesystem::path checkpoint;
    std::filesystem::path loss_csv;
    TrainResult result;
};

/// Trains from cfg.model / cfg.train and writes the checkpoint and an
/// "epoch,loss" trace (loss.csv) next to it.
TrainOutputs run_train(const ExperimentConfig& cfg, const EpochCallback& on_epoch = {});

/// One MetricsRow per sweep point, in config order. Every point reuses the
/// same run seeds and is compared with one shared base batch drawn from an
/// independent seed. Counter columns are per run.
std::vector<MetricsRow> evaluate_sweep(const Denoiser& model, const ExperimentConfig& cfg);

struct SweepOutputs {
    std::vector<MetricsRow> rows;
    std::filesystem::path metrics_csv;
    std::filesystem::path summary_json;
};

/// evaluate_sweep on the checkpoint, writing metrics.csv and summary.json
/// (rows plus the config echo) into cfg.output_dir.
SweepOutputs run_sweep(const ExperimentConfig& cfg);

struct ShiftRow {
    double displacement = 0.0;
    Point2 reward_mean;
    std::string method;
    int n = 1;
    int block = 0;
    double eta = 1.0;
    double mean_reward = 0.0;
    double normalized_reward = 0.0;  // against base samples at the same displacement
    double variance_x = 0.0;
    double variance_y = 0.0;
    std::size_t runs = 0;

    double total_variance() const { return variance_x + variance_y; }
};

std::vector<ShiftRow> evaluate_shift_study(const Denoiser& model, const ExperimentConfig& cfg);

struct ShiftOutputs {
    std::vector<ShiftRow> rows;
    std::filesystem::path csv;
    std::vector<std::filesystem::path> plots;
};

/// evaluate_shift_study on the checkpoint; writes shift_study.csv,
/// shift_reward.svg and shift_variance.svg.
ShiftOutputs run_shift_study(const ExperimentConfig& cfg);

void write_shift_csv(std::ostream& out, const std::vector<ShiftRow>& rows);

/// Renders win_rate_vs_kl.svg and reward_vs_kl.svg from a metrics CSV.
std::vector<std::filesystem::path> run_plot(const std::filesystem::path& metrics_csv,
                                            const std::filesystem::path& out_dir);

}  // namespace codelab
