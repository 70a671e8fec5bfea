#pragma once

#include <string>
#include <vector>

#include "edtalk/core/serialize.hpp"
#include "edtalk/latentcore/model.hpp"

namespace edtalk::latentcore {

inline constexpr const char* kModelVersion = "edtalk-toy-1";

/// Manifest companion of a parameter archive.
struct CheckpointMeta {
    std::string model_version = kModelVersion;
    ModelConfig config;
    std::string stage_completed = "none";  // none | 1 | 2 | 3 | audio
    std::vector<std::string> audio_stages; // subset of {mouth, pose_eye, expression}
    uint64_t seed = 0;
    nlohmann::json rng_state;

    bool has_stage(int stage) const {
        if (stage_completed == "none") return false;
        if (stage_completed == "audio") return true;
        return std::stoi(stage_completed) >= stage;
    }
    bool has_audio_stage(const std::string& name) const {
        for (auto& s : audio_stages)
            if (s == name) return true;
        return false;
    }
};

template <typename T>
void save_checkpoint(const std::string& path, const ParamStore<T>& store,
                     const CheckpointMeta& meta) {
    Archive a;
    a.manifest = nlohmann::json{
        {"model_version", meta.model_version},
        {"latent_dim", meta.config.latent_dim},
        {"bank_sizes", meta.config.bank_sizes},
        {"resolution", meta.config.resolution},
        {"base_channels", meta.config.base_channels},
        {"head_hidden", meta.config.head_hidden},
        {"orthogonal_reparam", meta.config.orthogonal_reparam},
        {"use_banks", meta.config.use_banks},
        {"adain_eps", meta.config.adain_eps},
        {"stage_completed", meta.stage_completed},
        {"audio_stages", meta.audio_stages},
        {"seed", meta.seed},
        {"rng_state", meta.rng_state}};
    store_to_archive(store, a);
    a.save(path);
}

inline CheckpointMeta read_checkpoint_meta(const Archive& a) {
    CheckpointMeta m;
    const auto& j = a.manifest;
    m.model_version = j.at("model_version").get<std::string>();
    m.config.latent_dim = j.at("latent_dim").get<int>();
    auto bs = j.at("bank_sizes").get<std::vector<int>>();
    if (bs.size() != 4) throw ConfigError("checkpoint: bank_sizes must have 4 entries");
    for (int i = 0; i < 4; ++i) m.config.bank_sizes[static_cast<size_t>(i)] = bs[static_cast<size_t>(i)];
    m.config.resolution = j.at("resolution").get<int>();
    m.config.base_channels = j.at("base_channels").get<int>();
    m.config.head_hidden = j.at("head_hidden").get<int>();
    m.config.orthogonal_reparam = j.at("orthogonal_reparam").get<bool>();
    m.config.use_banks = j.at("use_banks").get<bool>();
    m.config.adain_eps = j.at("adain_eps").get<double>();
    m.stage_completed = j.at("stage_completed").get<std::string>();
    m.audio_stages = j.value("audio_stages", std::vector<std::string>{});
    m.seed = j.value("seed", 0ull);
    m.rng_state = j.value("rng_state", nlohmann::json::object());
    return m;
}

/// Load parameters into an existing store. Mismatched bank sizes (or any
/// other shape-determining field) are a hard error.
template <typename T>
CheckpointMeta load_checkpoint(const std::string& path, ParamStore<T>& store,
                               const ModelConfig& expected) {
    Archive a = Archive::load(path);
    CheckpointMeta m = read_checkpoint_meta(a);
    if (m.config.bank_sizes != expected.bank_sizes)
        throw ConfigError("checkpoint: bank_sizes mismatch (file " +
                          shape_str({m.config.bank_sizes[0], m.config.bank_sizes[1],
                                     m.config.bank_sizes[2], m.config.bank_sizes[3]}) +
                          " vs model " +
                          shape_str({expected.bank_sizes[0], expected.bank_sizes[1],
                                     expected.bank_sizes[2], expected.bank_sizes[3]}) + ")");
    if (m.config.latent_dim != expected.latent_dim)
        throw ConfigError("checkpoint: latent_dim mismatch");
    if (m.config.resolution != expected.resolution)
        throw ConfigError("checkpoint: resolution mismatch");
    if (m.config.base_channels != expected.base_channels)
        throw ConfigError("checkpoint: base_channels mismatch");
    archive_to_store(a, store);
    return m;
}

/// Load a checkpoint standalone: build the model config from the manifest.
template <typename T>
CheckpointMeta open_checkpoint(const std::string& path, ParamStore<T>& store) {
    Archive a = Archive::load(path);
    CheckpointMeta m = read_checkpoint_meta(a);
    archive_to_store(a, store);
    return m;
}

}  // namespace edtalk::latentcore
