#pragma once

#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "edtalk/core/errors.hpp"
#include "edtalk/core/rng.hpp"
#include "edtalk/core/tensor.hpp"
#include "edtalk/toyworld/factors.hpp"

namespace edtalk::toyworld {

/// Per-frame audio features paired with a trajectory. Channel 0 is the
/// envelope and always equals the mouth track; the remaining channels are
/// deterministic nuisance signals.
struct AudioFeatureSeq {
    Tensor<float> features;  // [T, F]
    double frame_rate = 25.0;

    int frames() const { return features.dim(0); }
    int channels() const { return features.dim(1); }
    float envelope(int t) const { return features.at(t, 0); }
};

inline constexpr int kAudioChannels = 8;

/// Deterministic stand-in for a spectrogram pipeline: envelope channel is the
/// mouth track verbatim, nuisance channels are seeded harmonics plus noise
/// independent of the mouth so a mouth head has to be selective.
inline AudioFeatureSeq synthesize_audio_features(const std::vector<FactorVector>& trajectory,
                                                 double frame_rate = 25.0,
                                                 uint64_t nuisance_seed = 0x41554446ull,
                                                 int channels = kAudioChannels) {
    if (trajectory.empty()) throw RangeError("synthesize_audio_features: empty trajectory");
    int T = static_cast<int>(trajectory.size());
    AudioFeatureSeq seq;
    seq.frame_rate = frame_rate;
    seq.features = Tensor<float>({T, channels});
    const double tau = 6.28318530717958647692;
    std::vector<double> freq(channels), phase(channels), namp(channels);
    Rng cfg = Rng::derive(nuisance_seed, "audio_nuisance");
    for (int c = 1; c < channels; ++c) {
        freq[c] = 0.7 * c + cfg.uniform(0.0, 0.4);
        phase[c] = cfg.uniform(0.0, tau);
        namp[c] = cfg.uniform(0.2, 0.4);
    }
    for (int t = 0; t < T; ++t) {
        seq.features.at(t, 0) = static_cast<float>(trajectory[static_cast<size_t>(t)].mouth);
        double tm = t / frame_rate;
        for (int c = 1; c < channels; ++c) {
            Rng nrng = Rng::derive(nuisance_seed, "noise", static_cast<uint64_t>(t) * 64 + c);
            double v = 0.5 * std::sin(tau * freq[c] * tm + phase[c]) + namp[c] * nrng.normal();
            seq.features.at(t, c) = static_cast<float>(v);
        }
    }
    return seq;
}

// Flat binary audio container: "TWAF" | u32 version | u32 T | u32 F | f32 data.

inline void write_twaf(const std::string& path, const AudioFeatureSeq& seq) {
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("twaf: cannot open for write: " + path);
    uint32_t version = 1, T = static_cast<uint32_t>(seq.frames()),
             F = static_cast<uint32_t>(seq.channels());
    bool ok = std::fwrite("TWAF", 1, 4, f) == 4 && std::fwrite(&version, 4, 1, f) == 1 &&
              std::fwrite(&T, 4, 1, f) == 1 && std::fwrite(&F, 4, 1, f) == 1 &&
              std::fwrite(seq.features.data.data(), sizeof(float), seq.features.data.size(), f) ==
                  seq.features.data.size();
    std::fclose(f);
    if (!ok) throw IoError("twaf: short write: " + path);
}

inline AudioFeatureSeq read_twaf(const std::string& path, double frame_rate = 25.0) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("twaf: cannot open: " + path);
    char magic[4];
    uint32_t version = 0, T = 0, F = 0;
    bool ok = std::fread(magic, 1, 4, f) == 4 && std::memcmp(magic, "TWAF", 4) == 0 &&
              std::fread(&version, 4, 1, f) == 1 && version == 1 &&
              std::fread(&T, 4, 1, f) == 1 && std::fread(&F, 4, 1, f) == 1;
    if (!ok) {
        std::fclose(f);
        throw IoError("twaf: bad header: " + path);
    }
    AudioFeatureSeq seq;
    seq.frame_rate = frame_rate;
    seq.features = Tensor<float>({static_cast<int>(T), static_cast<int>(F)});
    size_t n = std::fread(seq.features.data.data(), sizeof(float), seq.features.data.size(), f);
    std::fclose(f);
    if (n != seq.features.data.size()) throw IoError("twaf: truncated data: " + path);
    return seq;
}

/// [F, win] window of features centered at frame t (edge-clamped), CT layout
/// ready for 1-d convolution.
inline Tensor<float> audio_window(const AudioFeatureSeq& seq, int t, int win) {
    int T = seq.frames(), F = seq.channels();
    Tensor<float> out({F, win});
    for (int i = 0; i < win; ++i) {
        int src = std::clamp(t - win / 2 + i, 0, T - 1);
        for (int c = 0; c < F; ++c) out.at(c, i) = seq.features.at(src, c);
    }
    return out;
}

}  // namespace edtalk::toyworld
