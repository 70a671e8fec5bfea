#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "edtalk/core/errors.hpp"
#include "edtalk/core/image_png.hpp"
#include "edtalk/toyworld/audio.hpp"
#include "edtalk/toyworld/render.hpp"

namespace edtalk::toyworld {

inline constexpr const char* kRendererVersion = "toyface-1";

struct DatasetConfig {
    int subjects = 50;
    int frames_per_subject = 200;
    int resolution = 64;
    uint64_t seed = 1;
    double frame_rate = 25.0;
    int holdout_frames = 20;          // tail frames reserved for evaluation
    double neutral_fraction = 0.7;    // leading subjects get near-neutral expression
    DynamicsConfig neutral_dynamics{25.0, 0.8, 3.0, 0.78, 2.8, 0.05, 0.05};
    DynamicsConfig emotional_dynamics{25.0, 0.5, 3.0, 0.78, 2.8, 0.95, 0.05};

    int neutral_subjects() const {
        return static_cast<int>(std::lround(neutral_fraction * subjects));
    }
};

struct SubjectData {
    int id = 0;
    bool emotional = false;
    std::vector<FactorVector> factors;
    AudioFeatureSeq audio;
    std::vector<std::string> text_tokens;
};

namespace detail {

inline std::string frame_name(int idx) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05d.png", idx);
    return buf;
}

inline nlohmann::json factors_to_json(const FactorVector& f) {
    return nlohmann::json{{"identity_params", f.identity_params},
                          {"pose", f.pose},
                          {"mouth", f.mouth},
                          {"eye", f.eye},
                          {"expression", f.expression}};
}

inline FactorVector factors_from_json(const nlohmann::json& j) {
    FactorVector f;
    f.identity_params = j.at("identity_params").get<std::vector<double>>();
    f.pose = j.at("pose").get<double>();
    f.mouth = j.at("mouth").get<double>();
    f.eye = j.at("eye").get<double>();
    f.expression = j.at("expression").get<double>();
    return f;
}

}  // namespace detail

/// Quantize exactly the way frames are written to PNG, so in-memory training
/// targets equal the stored artifact.
inline Tensor<float> quantize_frame(const Tensor<float>& img) {
    Tensor<float> out(img.shape);
    for (int64_t i = 0; i < img.size(); ++i) {
        float v = std::clamp(img[i], 0.f, 1.f);
        out[i] = static_cast<float>(std::lround(v * 255.f)) / 255.f;
    }
    return out;
}

inline std::vector<FactorVector> subject_trajectory(const DatasetConfig& cfg, int subject) {
    bool emotional = subject >= cfg.neutral_subjects();
    uint64_t sseed = Rng::derive(cfg.seed, "subject", static_cast<uint64_t>(subject)).next_u64();
    return sample_trajectory(sseed, cfg.frames_per_subject,
                             emotional ? cfg.emotional_dynamics : cfg.neutral_dynamics);
}

using TranscriptFn =
    std::function<std::vector<std::string>(const std::vector<FactorVector>&, Rng&)>;

/// Write the on-disk layout:
///   manifest.json
///   frames/<subject>/<index>.png + frames/<subject>/factors.jsonl
///   audio/<subject>.bin   (TWAF)
///   text/<subject>.txt    (space-separated tokens, emotional subjects)
inline void write_dataset(const std::string& dir, const DatasetConfig& cfg,
                          const TranscriptFn& transcript = nullptr) {
    namespace fs = std::filesystem;
    if (cfg.subjects <= 0) throw ConfigError("dataset: subjects must be positive");
    if (cfg.frames_per_subject < 2) throw ConfigError("dataset: need at least 2 frames");
    fs::create_directories(fs::path(dir) / "frames");
    fs::create_directories(fs::path(dir) / "audio");
    fs::create_directories(fs::path(dir) / "text");

    for (int s = 0; s < cfg.subjects; ++s) {
        bool emotional = s >= cfg.neutral_subjects();
        auto traj = subject_trajectory(cfg, s);
        fs::path sdir = fs::path(dir) / "frames" / std::to_string(s);
        fs::create_directories(sdir);
        std::ofstream jl(sdir / "factors.jsonl");
        jl.precision(17);
        for (int i = 0; i < cfg.frames_per_subject; ++i) {
            const FactorVector& f = traj[static_cast<size_t>(i)];
            ToyFrame frame = render_frame(f, cfg.resolution);
            write_png_chw((sdir / detail::frame_name(i)).string(), frame.image);
            jl << detail::factors_to_json(f).dump() << "\n";
        }
        AudioFeatureSeq audio = synthesize_audio_features(traj, cfg.frame_rate);
        write_twaf((fs::path(dir) / "audio" / (std::to_string(s) + ".bin")).string(), audio);
        if (transcript) {
            Rng trng = Rng::derive(cfg.seed, "transcript", static_cast<uint64_t>(s));
            auto tokens = transcript(traj, trng);
            std::ofstream tf(fs::path(dir) / "text" / (std::to_string(s) + ".txt"));
            for (size_t i = 0; i < tokens.size(); ++i) tf << (i ? " " : "") << tokens[i];
            tf << "\n";
        }
    }

    nlohmann::json manifest{{"renderer_version", kRendererVersion},
                            {"seed", cfg.seed},
                            {"subjects", cfg.subjects},
                            {"frames_per_subject", cfg.frames_per_subject},
                            {"resolution", cfg.resolution},
                            {"frame_rate", cfg.frame_rate},
                            {"holdout_frames", cfg.holdout_frames},
                            {"neutral_subjects", cfg.neutral_subjects()},
                            {"audio_channels", kAudioChannels}};
    std::ofstream mf(fs::path(dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
}

/// In-memory dataset view. Frames are re-rendered from the stored factors and
/// quantized to match the PNGs byte for byte; renders are cached.
class Dataset {
public:
    static Dataset load(const std::string& dir) {
        namespace fs = std::filesystem;
        std::ifstream mf(fs::path(dir) / "manifest.json");
        if (!mf) throw DataError("dataset: missing manifest.json in " + dir);
        nlohmann::json manifest = nlohmann::json::parse(mf);
        Dataset d;
        d.dir_ = dir;
        d.resolution_ = manifest.at("resolution").get<int>();
        d.frame_rate_ = manifest.at("frame_rate").get<double>();
        d.holdout_frames_ = manifest.value("holdout_frames", 0);
        int subjects = manifest.at("subjects").get<int>();
        int neutral = manifest.value("neutral_subjects", subjects);
        for (int s = 0; s < subjects; ++s) {
            SubjectData sd;
            sd.id = s;
            sd.emotional = s >= neutral;
            std::ifstream jl(fs::path(dir) / "frames" / std::to_string(s) / "factors.jsonl");
            if (!jl) throw DataError("dataset: missing factors.jsonl for subject " +
                                     std::to_string(s));
            std::string line;
            while (std::getline(jl, line)) {
                if (line.empty()) continue;
                sd.factors.push_back(detail::factors_from_json(nlohmann::json::parse(line)));
            }
            if (sd.factors.size() < 2)
                throw DataError("dataset: subject " + std::to_string(s) + " has <2 frames");
            sd.audio = read_twaf(
                (fs::path(dir) / "audio" / (std::to_string(s) + ".bin")).string(),
                d.frame_rate_);
            std::ifstream tf(fs::path(dir) / "text" / (std::to_string(s) + ".txt"));
            if (tf) {
                std::string tok;
                while (tf >> tok) sd.text_tokens.push_back(tok);
            }
            d.subjects_.push_back(std::move(sd));
        }
        d.cache_.assign(d.subjects_.size(), {});
        for (size_t s = 0; s < d.subjects_.size(); ++s)
            d.cache_[s].assign(d.subjects_[s].factors.size(), Tensor<float>());
        return d;
    }

    int subject_count() const { return static_cast<int>(subjects_.size()); }
    int frame_count(int s) const { return static_cast<int>(subjects_[s].factors.size()); }
    int resolution() const { return resolution_; }
    double frame_rate() const { return frame_rate_; }
    int holdout_frames() const { return holdout_frames_; }
    int train_frames(int s) const { return frame_count(s) - holdout_frames_; }
    const std::string& dir() const { return dir_; }
    const SubjectData& subject(int s) const { return subjects_[static_cast<size_t>(s)]; }

    std::vector<int> neutral_subject_ids() const {
        std::vector<int> out;
        for (auto& s : subjects_)
            if (!s.emotional) out.push_back(s.id);
        return out;
    }
    std::vector<int> emotional_subject_ids() const {
        std::vector<int> out;
        for (auto& s : subjects_)
            if (s.emotional) out.push_back(s.id);
        return out;
    }

    const FactorVector& factors(int s, int i) const {
        return subjects_[static_cast<size_t>(s)].factors[static_cast<size_t>(i)];
    }

    /// Rendered + quantized frame (equals the stored PNG content).
    const Tensor<float>& frame(int s, int i) const {
        Tensor<float>& slot = cache_[static_cast<size_t>(s)][static_cast<size_t>(i)];
        if (slot.size() == 0)
            slot = quantize_frame(render_frame(factors(s, i), resolution_).image);
        return slot;
    }

    ToyFrame toy_frame(int s, int i) const {
        ToyFrame f;
        f.image = frame(s, i);
        f.factors = factors(s, i);
        f.subject_id = s;
        f.frame_index = i;
        return f;
    }

private:
    std::string dir_;
    int resolution_ = 64;
    double frame_rate_ = 25.0;
    int holdout_frames_ = 0;
    std::vector<SubjectData> subjects_;
    mutable std::vector<std::vector<Tensor<float>>> cache_;
};

}  // namespace edtalk::toyworld
