#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "codelab/eps_model.hpp"
#include "codelab/gmm.hpp"
#include "codelab/schedule.hpp"

namespace codelab {

struct TrainConfig {
    int epochs = 200;
    std::size_t dataset_size = 10000;
    std::size_t batch_size = 256;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Raised when the training loss stops being finite.
class TrainingDiverged : public Error {
public:
    using Error::Error;
};

struct TrainResult {
    EpsModel model;
    std::vector<double> epoch_loss;  // mean loss of every epoch
};

/// Called after each epoch with (epoch index, mean loss).
using EpochCallback = std::function<void(int, double)>;

/// Fits `model` to the prior with the noise-prediction loss and Adam.
///
/// The dataset (cfg.dataset_size draws) is generated from cfg.seed; every
/// epoch visits it once in a freshly shuffled order, in minibatches of
/// cfg.batch_size (the last one may be short). Each example gets its own
/// uniform step in 1..T and its own N(0, I) noise.
TrainResult train(EpsModel model, const GmmSpec& spec, const NoiseSchedule& sched, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace codelab
