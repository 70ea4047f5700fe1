#include "codelab/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace codelab {

using json = nlohmann::json;
using Kind = CheckpointError::Kind;

void save_checkpoint(const EpsModel& model, const NoiseSchedule& sched, const std::filesystem::path& path) {
    model.validate();
    json doc;
    doc["format"] = "codelab-checkpoint";
    doc["version"] = kCheckpointVersion;
    doc["model"] = {{"hidden_width", model.hidden_width},
                    {"embed_width", model.embed_width},
                    {"activation", std::string(to_string(model.activation))},
                    {"freq_base", model.freq_base}};
    doc["schedule"] = {{"kind", "linear"},
                       {"steps", sched.steps()},
                       {"beta_start", sched.beta_start()},
                       {"beta_end", sched.beta_end()}};
    json params = json::object();
    const auto blocks = model.params.blocks();
    for (std::size_t i = 0; i < blocks.size(); ++i)
        params[std::string(ParamArrays::kNames[i])] = std::vector<double>(blocks[i].begin(), blocks[i].end());
    doc["params"] = std::move(params);

    std::ofstream out(path);
    if (!out) throw CheckpointError(Kind::Io, "cannot open checkpoint for writing: " + path.string());
    out << doc.dump(1) << '\n';
    if (!out) throw CheckpointError(Kind::Io, "failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointError(Kind::Io, "cannot open checkpoint: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw CheckpointError(Kind::Malformed, "checkpoint is not valid JSON: " + std::string(e.what()));
    }

    try {
        if (!doc.is_object() || doc.value("format", "") != "codelab-checkpoint")
            throw CheckpointError(Kind::Malformed, "not a codelab checkpoint: " + path.string());
        if (!doc.contains("version") || !doc["version"].is_number_integer())
            throw CheckpointError(Kind::Malformed, "checkpoint has no integer version field");
        const int version = doc["version"].get<int>();
        if (version != kCheckpointVersion)
            throw CheckpointError(Kind::Version, "checkpoint version " + std::to_string(version) +
                                                     " is not supported (expected " +
                                                     std::to_string(kCheckpointVersion) + ")");

        const json& m = doc.at("model");
        const json& s = doc.at("schedule");
        if (s.at("kind").get<std::string>() != "linear")
            throw CheckpointError(Kind::Malformed, "unsupported schedule kind");

        Checkpoint ck;
        ck.schedule = build_linear_schedule(s.at("steps").get<int>(), s.at("beta_start").get<double>(),
                                            s.at("beta_end").get<double>());
        ck.model = zero_model(m.at("hidden_width").get<int>(), m.at("embed_width").get<int>(),
                              activation_from_string(m.at("activation").get<std::string>()),
                              m.at("freq_base").get<double>());

        const json& p = doc.at("params");
        const auto sizes = ck.model.block_sizes();
        auto blocks = ck.model.params.blocks();
        std::vector<double>* storage[] = {&ck.model.params.w1, &ck.model.params.b1, &ck.model.params.w2,
                                          &ck.model.params.b2, &ck.model.params.w3, &ck.model.params.b3};
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const std::string name(ParamArrays::kNames[i]);
            if (!p.contains(name)) throw CheckpointError(Kind::Shape, "layer " + name + " is missing");
            auto values = p[name].get<std::vector<double>>();
            if (values.size() != sizes[i])
                throw CheckpointError(Kind::Shape, "layer " + name + " has " + std::to_string(values.size()) +
                                                       " values, expected " + std::to_string(sizes[i]));
            *storage[i] = std::move(values);
        }
        ck.model.validate();
        return ck;
    } catch (const CheckpointError&) {
        throw;
    } catch (const json::exception& e) {
        throw CheckpointError(Kind::Malformed, "malformed checkpoint: " + std::string(e.what()));
    } catch (const InvalidArgument& e) {
        throw CheckpointError(Kind::Malformed, "invalid checkpoint contents: " + std::string(e.what()));
    }
}

}  // namespace codelab
