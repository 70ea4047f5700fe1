#pragma once

#include <filesystem>
#include <string>

#include "codelab/eps_model.hpp"
#include "codelab/schedule.hpp"

namespace codelab {

/// Checkpoint schema version written by save_checkpoint.
inline constexpr int kCheckpointVersion = 1;

/// Failure while reading or writing a checkpoint. `kind()` tells version
/// mismatches, malformed files and shape mismatches apart.
class CheckpointError : public Error {
public:
    enum class Kind { Io, Malformed, Version, Shape };

    CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct Checkpoint {
    EpsModel model;
    NoiseSchedule schedule;
};

/// Writes a JSON document:
///
///   { "format": "codelab-checkpoint", "version": 1,
///     "model":    { "hidden_width", "embed_width", "activation", "freq_base" },
///     "schedule": { "kind": "linear", "steps", "beta_start", "beta_end" },
///     "params":   { "w1": [...], "b1": [...], ..., "b3": [...] } }
///
/// Numbers use shortest round-trip decimal form, so a load reproduces every
/// parameter bit for bit.
void save_checkpoint(const EpsModel& model, const NoiseSchedule& sched, const std::filesystem::path& path);

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace codelab
