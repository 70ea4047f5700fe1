#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "codelab/trainer.hpp"

using namespace codelab;
using doctest::Approx;

namespace {

struct Moments {
    Point2 mean;
    double xx = 0, xy = 0, yy = 0;
};

Moments moments(const std::vector<Point2>& v) {
    Moments m;
    for (const auto& p : v) m.mean = m.mean + p;
    m.mean = (1.0 / static_cast<double>(v.size())) * m.mean;
    for (const auto& p : v) {
        const Point2 d = p - m.mean;
        m.xx += d.x * d.x;
        m.xy += d.x * d.y;
        m.yy += d.y * d.y;
    }
    const double k = 1.0 / static_cast<double>(v.size() - 1);
    m.xx *= k;
    m.xy *= k;
    m.yy *= k;
    return m;
}

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.dataset_size = 1500;
    cfg.batch_size = 128;
    cfg.seed = 3;
    return cfg;
}

}  // namespace

TEST_CASE("mixture spec validation") {
    CHECK_NOTHROW(default_prior().validate());
    CHECK_THROWS_AS((GmmSpec{{}, {}, 1.0}).validate(), InvalidArgument);
    CHECK_THROWS_AS((GmmSpec{{0.5, 0.6}, {{0, 0}, {1, 1}}, 1.0}).validate(), InvalidArgument);
    CHECK_THROWS_AS((GmmSpec{{1.5, -0.5}, {{0, 0}, {1, 1}}, 1.0}).validate(), InvalidArgument);
    CHECK_THROWS_AS((GmmSpec{{1.0}, {{0, 0}}, 0.0}).validate(), InvalidArgument);
    CHECK_THROWS_AS((GmmSpec{{1.0}, {{0, 0}, {1, 1}}, 1.0}).validate(), InvalidArgument);
    CHECK_THROWS_AS(sample_gmm(default_prior(), 0, 1), InvalidArgument);
}

TEST_CASE("analytic mixture moments") {
    const auto spec = default_prior();
    const Point2 m = spec.mean();
    CHECK(m.x == Approx(5.0));
    CHECK(m.y == Approx(17.0 / 3.0));
    const auto c = spec.covariance();
    // sigma^2 plus the spread of the component means about their centroid.
    CHECK(c[0] == Approx(4.0 + 8.0 / 3.0));
    CHECK(c[1] == Approx(0.0).scale(1.0));
    CHECK(c[2] == Approx(4.0 + 32.0 / 9.0));
}

TEST_CASE("degenerate single component collapses onto its mean") {
    const GmmSpec spec{{1.0}, {{2.5, -1.0}}, 1e-12};
    for (const auto& p : sample_gmm(spec, 100, 9)) {
        CHECK(p.x == Approx(2.5).epsilon(1e-10));
        CHECK(p.y == Approx(-1.0).epsilon(1e-10));
    }
}

TEST_CASE("mixture samples match the analytic moments") {
    const auto draws = sample_gmm(default_prior(), 100000, 2024);
    const auto m = moments(draws);
    CHECK(std::abs(m.mean.x - 5.0) <= 0.05);
    CHECK(std::abs(m.mean.y - 17.0 / 3.0) <= 0.05);
    CHECK(std::abs(m.xx - 20.0 / 3.0) <= 0.2);
    CHECK(std::abs(m.xy) <= 0.2);
    CHECK(std::abs(m.yy - 68.0 / 9.0) <= 0.2);
}

TEST_CASE("mixture sampling is deterministic per seed") {
    const auto a = sample_gmm(default_prior(), 1000, 5);
    const auto b = sample_gmm(default_prior(), 1000, 5);
    const auto c = sample_gmm(default_prior(), 1000, 6);
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(Point2)) == 0);
    CHECK_FALSE(a == c);
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = {};
    cfg.batch_size = cfg.dataset_size + 1;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = {};
    cfg.learning_rate = -1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = {};
    cfg.beta2 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("zero learning rate leaves the parameters unchanged") {
    const auto sched = build_linear_schedule(100, 1e-4, 0.02);
    const auto model = init_model(16, 8, 1);
    auto cfg = small_config();
    cfg.learning_rate = 0.0;
    const auto r = train(model, default_prior(), sched, cfg);
    CHECK(r.model.params == model.params);
    REQUIRE(r.epoch_loss.size() == static_cast<std::size_t>(cfg.epochs));
    // Flat up to the per-epoch resampling of steps and noise.
    for (double l : r.epoch_loss) CHECK(l == Approx(r.epoch_loss.front()).epsilon(0.1));
}

TEST_CASE("training is reproducible and reduces the loss") {
    const auto sched = build_linear_schedule(100, 1e-4, 0.02);
    const auto model = init_model(32, 8, 1);
    const auto cfg = small_config();
    std::vector<int> seen;
    const auto a = train(model, default_prior(), sched, cfg, [&](int e, double) { seen.push_back(e); });
    const auto b = train(model, default_prior(), sched, cfg);
    CHECK(a.model.params == b.model.params);
    CHECK(a.epoch_loss == b.epoch_loss);
    CHECK(seen == std::vector<int>{0, 1, 2, 3, 4, 5});
    CHECK(a.epoch_loss.back() < a.epoch_loss.front());
    for (double l : a.epoch_loss) CHECK(std::isfinite(l));

    auto other = cfg;
    other.seed = 4;
    const auto c = train(model, default_prior(), sched, other);
    CHECK_FALSE(c.model.params == a.model.params);
}

TEST_CASE("short final batch") {
    const auto sched = build_linear_schedule(50, 1e-4, 0.02);
    auto cfg = small_config();
    cfg.epochs = 2;
    cfg.dataset_size = 130;
    const auto r = train(init_model(8, 4, 0), default_prior(), sched, cfg);
    CHECK(r.epoch_loss.size() == 2);
    CHECK(std::isfinite(r.epoch_loss.back()));
}

TEST_CASE("a diverging run is aborted") {
    const auto sched = build_linear_schedule(50, 1e-4, 0.02);
    auto model = init_model(8, 4, 0);
    for (auto block : model.params.blocks())
        for (double& v : block) v *= 1e150;
    auto cfg = small_config();
    cfg.epochs = 2;
    CHECK_THROWS_AS(train(model, default_prior(), sched, cfg), TrainingDiverged);
}
