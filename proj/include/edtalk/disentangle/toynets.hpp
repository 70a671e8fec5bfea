#pragma once

#include <string>
#include <vector>

#include "edtalk/core/serialize.hpp"
#include "edtalk/evalkit/probes.hpp"
#include "edtalk/toyworld/audio.hpp"
#include "edtalk/toyworld/dataset.hpp"

namespace edtalk::disentangle {

inline constexpr int kSyncEmbedDim = 32;
inline constexpr int kSyncAudioWindow = 9;

/// Stand-ins for the pretrained auxiliary networks: a fixed random perceptual
/// pyramid, frozen factor probes (motion and emotion feature extractors), a
/// trainable image discriminator, and a pair of audio-visual sync embedders.
template <typename T>
class ToyNets {
public:
    ToyNets(ParamStore<T>& store, int resolution, uint64_t seed) : resolution_(resolution) {
        Rng rng = Rng::derive(seed, "toynets");
        phi1_ = Conv2dLayer<T>(store, "aux.phi.c1", 3, 8, 3, 2, 1, rng);
        phi2_ = Conv2dLayer<T>(store, "aux.phi.c2", 8, 16, 3, 2, 1, rng);
        phi3_ = Conv2dLayer<T>(store, "aux.phi.c3", 16, 32, 3, 2, 1, rng);
        store.freeze_prefix("aux.phi.");  // fixed random features, never trained

        d1_ = Conv2dLayer<T>(store, "disc.c1", 3, 8, 3, 2, 1, rng);
        d2_ = Conv2dLayer<T>(store, "disc.c2", 8, 16, 3, 2, 1, rng);
        d3_ = Conv2dLayer<T>(store, "disc.c3", 16, 32, 3, 2, 1, rng);
        d4_ = Conv2dLayer<T>(store, "disc.out", 32, 1, 3, 1, 1, rng);

        for (int f = 0; f < 4; ++f)
            probes_[f] = evalkit::FactorProbe<T>(
                store, std::string("aux.probe.") + evalkit::factor_name(f), f, resolution, rng);

        si1_ = Conv2dLayer<T>(store, "aux.sync_img.c1", 3, 8, 3, 2, 1, rng);
        si2_ = Conv2dLayer<T>(store, "aux.sync_img.c2", 8, 16, 3, 2, 1, rng);
        si3_ = Conv2dLayer<T>(store, "aux.sync_img.c3", 16, 16, 3, 2, 1, rng);
        si_fc_ = Linear<T>(store, "aux.sync_img.fc",
                           16 * (resolution / 8) * (resolution / 8), kSyncEmbedDim, rng);
        sa1_ = Conv1dLayer<T>(store, "aux.sync_aud.c1", toyworld::kAudioChannels, 16, 5, rng);
        sa2_ = Conv1dLayer<T>(store, "aux.sync_aud.c2", 16, 16, 5, rng);
        sa_fc_ = Linear<T>(store, "aux.sync_aud.fc", 16 * kSyncAudioWindow, kSyncEmbedDim, rng);
    }

    int resolution() const { return resolution_; }

    /// Fixed random feature pyramid (perceptual-loss stand-in).
    std::vector<Var<T>> perceptual_pyramid(Graph<T>& g, Var<T> image) const {
        std::vector<Var<T>> out;
        Var<T> h = relu(phi1_.apply(g, image));
        out.push_back(h);
        h = relu(phi2_.apply(g, h));
        out.push_back(h);
        h = relu(phi3_.apply(g, h));
        out.push_back(h);
        return out;
    }

    /// Patch logits of the image discriminator.
    Var<T> discriminator_logits(Graph<T>& g, Var<T> image) const {
        Var<T> h = leaky_relu(d1_.apply(g, image));
        h = leaky_relu(d2_.apply(g, h));
        h = leaky_relu(d3_.apply(g, h));
        return d4_.apply(g, h);
    }

    const evalkit::FactorProbe<T>& probe(int factor) const {
        return probes_[static_cast<size_t>(factor)];
    }
    evalkit::FactorProbe<T>& probe(int factor) { return probes_[static_cast<size_t>(factor)]; }

    /// (pose, mouth, eye) probe outputs as one vector — the motion feature.
    Var<T> motion_feature(Graph<T>& g, Var<T> image) const {
        std::vector<Var<T>> parts = {probes_[0].apply(g, image), probes_[1].apply(g, image),
                                     probes_[2].apply(g, image)};
        return concat_vec(parts);
    }

    /// Expression probe output — the emotion feature.
    Var<T> emotion_feature(Graph<T>& g, Var<T> image) const {
        return probes_[3].apply(g, image);
    }

    Var<T> sync_image_embed(Graph<T>& g, Var<T> image) const {
        Var<T> h = relu(si1_.apply(g, image));
        h = relu(si2_.apply(g, h));
        h = relu(si3_.apply(g, h));
        return si_fc_.apply(g, reshape(h, {static_cast<int>(h.val().size())}));
    }

    Var<T> sync_audio_embed(Graph<T>& g, Var<T> window) const {
        Var<T> h = relu(sa1_.apply(g, window));
        h = relu(sa2_.apply(g, h));
        return sa_fc_.apply(g, reshape(h, {static_cast<int>(h.val().size())}));
    }

    /// Fit all four probes on rendered ground truth, then freeze them.
    /// Throws unless every held-out RMSE clears the 5%-of-range gate.
    void fit_probes(ParamStore<T>& store, uint64_t seed, int steps = 1200, int batch = 16) {
        for (int f = 0; f < 4; ++f) {
            double rmse = probes_[static_cast<size_t>(f)].fit(store, seed + f, steps, batch);
            double limit = 0.05 * toyworld::factor_range(f);
            if (rmse > limit)
                throw DataError(std::string("probe ") + evalkit::factor_name(f) +
                                " failed the oracle gate: rmse " + std::to_string(rmse) +
                                " > " + std::to_string(limit));
        }
        store.freeze_prefix("aux.probe.");
    }

    /// Contrastive fit of the sync embedders on ground-truth pairs; frozen after.
    void fit_sync(ParamStore<T>& store, const toyworld::Dataset& data, uint64_t seed,
                  int steps = 600, int batch = 8) {
        Adam<T> opt(T(1e-3));
        Rng rng = Rng::derive(seed, "sync_fit");
        auto ids = data.neutral_subject_ids();
        if (ids.empty()) throw DataError("sync fit: no neutral subjects");
        for (int step = 0; step < steps; ++step) {
            GradAccum<T> acc;
            for (int b = 0; b < batch; ++b) {
                int s = ids[rng.below(ids.size())];
                int tmax = data.train_frames(s);
                int t = static_cast<int>(rng.below(static_cast<uint64_t>(tmax)));
                int toff = (t + 7 + static_cast<int>(rng.below(static_cast<uint64_t>(tmax - 14)))) % tmax;
                Graph<T> g(&store);
                Var<T> img = g.input(data.frame(s, t).template cast<T>());
                Var<T> v = sync_image_embed(g, img);
                Var<T> spos = sync_audio_embed(
                    g, g.input(toyworld::audio_window(data.subject(s).audio, t, kSyncAudioWindow)
                                   .template cast<T>()));
                Var<T> sneg = sync_audio_embed(
                    g,
                    g.input(toyworld::audio_window(data.subject(s).audio, toff, kSyncAudioWindow)
                                .template cast<T>()));
                Var<T> cp = cosine(v, spos);
                Var<T> cn = cosine(v, sneg);
                Var<T> loss = add(square(add_const(cp, T(-1))), square(cn));
                g.backward(loss);
                acc.add(g.param_grads(), T(1) / static_cast<T>(batch));
            }
            opt.step(store, acc.sums);
        }
        store.freeze_prefix("aux.sync_img.");
        store.freeze_prefix("aux.sync_aud.");
    }

    /// Probe-gate check used before any leakage/sync evaluation is reported.
    bool probes_ready() const {
        for (int f = 0; f < 4; ++f)
            if (probes_[static_cast<size_t>(f)].heldout_rmse() >
                0.05 * toyworld::factor_range(f))
                return false;
        return true;
    }

    void save(const std::string& path, const ParamStore<T>& store) const {
        Archive a;
        a.manifest = nlohmann::json{{"kind", "toynets"},
                                    {"resolution", resolution_},
                                    {"probe_rmse",
                                     {probes_[0].heldout_rmse(), probes_[1].heldout_rmse(),
                                      probes_[2].heldout_rmse(), probes_[3].heldout_rmse()}}};
        for (const char* p : {"aux.", "disc."}) store_to_archive(store, a, p);
        a.save(path);
    }

    void load(const std::string& path, ParamStore<T>& store) {
        Archive a = Archive::load(path);
        if (a.manifest.value("kind", "") != "toynets")
            throw IoError("toynets: wrong archive kind in " + path);
        if (a.manifest.value("resolution", 0) != resolution_)
            throw ConfigError("toynets: resolution mismatch in " + path);
        archive_to_store(a, store);
        auto rmse = a.manifest.at("probe_rmse").get<std::vector<double>>();
        for (int f = 0; f < 4; ++f) probes_[static_cast<size_t>(f)].set_heldout_rmse(rmse[static_cast<size_t>(f)]);
        store.freeze_prefix("aux.");
    }

private:
    int resolution_;
    Conv2dLayer<T> phi1_, phi2_, phi3_;
    Conv2dLayer<T> d1_, d2_, d3_, d4_;
    std::array<evalkit::FactorProbe<T>, 4> probes_;
    Conv2dLayer<T> si1_, si2_, si3_;
    Linear<T> si_fc_;
    Conv1dLayer<T> sa1_, sa2_;
    Linear<T> sa_fc_;
};

}  // namespace edtalk::disentangle
