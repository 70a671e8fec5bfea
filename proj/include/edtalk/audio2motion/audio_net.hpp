#pragma once

#include <string>
#include <vector>

#include "edtalk/disentangle/stages.hpp"

namespace edtalk::audio2motion {

using disentangle::MetricsLog;
using disentangle::ToyNets;
using latentcore::Component;
using latentcore::FaceModel;

inline constexpr int kAudioFeatureDim = 16;

/// Eq.-15-style sync loss: -log of the (clamped) cosine of two embeddings.
template <typename T>
Var<T> sync_loss(Var<T> v, Var<T> s, T clamp_lo = T(1e-6), T eps = T(1e-8)) {
    if (v.val().size() == 0 || s.val().size() == 0) throw ShapeError("sync_loss: empty embedding");
    return neg(log_op(clamp_op(cosine(v, s, eps), clamp_lo, T(1))));
}

/// Audio feature encoder (stride-1 convolutions, same padding) plus the
/// linear mouth-weight head. Per-frame outputs stay aligned 1:1 with video.
template <typename T>
class MouthPipeline {
public:
    MouthPipeline() = default;
    MouthPipeline(ParamStore<T>& store, int audio_channels, int n_mouth, uint64_t seed)
        : audio_channels_(audio_channels), n_mouth_(n_mouth) {
        Rng rng = Rng::derive(seed, "audio_mouth");
        c1_ = Conv1dLayer<T>(store, "aud.enc.c1", audio_channels, kAudioFeatureDim, 5, rng);
        c2_ = Conv1dLayer<T>(store, "aud.enc.c2", kAudioFeatureDim, kAudioFeatureDim, 5, rng);
        head_ = Linear<T>(store, "aud.mouth_head", kAudioFeatureDim, n_mouth, rng);
    }

    int receptive_field() const { return 9; }  // two k=5 same-pad convolutions

    /// [F, T] features -> [C, T] per-frame audio code.
    Var<T> encode_audio(Graph<T>& g, Var<T> features) const {
        const Tensor<T>& x = features.val();
        if (x.ndim() != 2 || x.dim(0) != audio_channels_)
            throw ShapeError("encode_audio: expected [" + std::to_string(audio_channels_) +
                             ", T] features");
        if (x.dim(1) < receptive_field())
            throw ShapeError("encode_audio: input shorter than the receptive field");
        Var<T> h = relu(c1_.apply(g, features));
        return relu(c2_.apply(g, h));
    }

    Var<T> mouth_weights_at(Graph<T>& g, Var<T> audio_code, int t) const {
        return head_.apply(g, take_column(audio_code, t));
    }

    /// Whole-sequence inference: [T, n_mouth] predicted weights.
    Tensor<T> predict_mouth_weights(const ParamStore<T>& store,
                                    const Tensor<T>& features) const {
        Graph<T> g(&store);
        Var<T> code = encode_audio(g, g.input(features));
        int T_len = features.dim(1);
        Tensor<T> out({T_len, n_mouth_});
        for (int t = 0; t < T_len; ++t) {
            Var<T> w = mouth_weights_at(g, code, t);
            for (int i = 0; i < n_mouth_; ++i) out.at(t, i) = w.val()[i];
        }
        return out;
    }

    int n_mouth() const { return n_mouth_; }

private:
    int audio_channels_ = toyworld::kAudioChannels;
    int n_mouth_ = 8;
    Conv1dLayer<T> c1_, c2_;
    Linear<T> head_;
};

struct MouthTrainConfig {
    int steps = 1200;
    int batch = 4;
    double lr = 1e-3;
    uint64_t seed = 1;
    int log_every = 10;
    double w_feature = 1.0, w_recon = 1.0, w_sync = 1.0;
};

/// Audio-to-mouth training: only the audio encoder and mouth head update; the
/// face model must arrive fully frozen and is hash-checked afterwards.
template <typename T>
void train_mouth(const toyworld::Dataset& data, FaceModel<T>& model, ToyNets<T>& nets,
                 MouthPipeline<T>& pipe, ParamStore<T>& store, const MouthTrainConfig& cfg,
                 MetricsLog& log) {
    for (const char* prefix : {"enc.", "gen.", "banks.", "heads.", "eem."})
        for (auto& name : store.names_with_prefix(prefix))
            if (!store.is_frozen(name))
                throw ConfigError("train_mouth: face model must be frozen (found trainable " +
                                  name + ")");
    std::string before = param_hash(store, "enc.");
    std::string before_banks = param_hash(store, "banks.");

    Adam<T> opt(static_cast<T>(cfg.lr));
    auto ids = data.neutral_subject_ids();
    auto emo = data.emotional_subject_ids();
    ids.insert(ids.end(), emo.begin(), emo.end());
    const int ctx = 16;  // audio frames fed around the target frame

    for (int step = 0; step < cfg.steps; ++step) {
        auto t0 = std::chrono::steady_clock::now();
        GradAccum<T> acc;
        std::map<std::string, double> lsum;
        struct Sample { int s, t, i; };
        std::vector<Sample> samples;
        for (int b = 0; b < cfg.batch; ++b) {
            Rng rng = Rng::derive(cfg.seed, "mouth_sample",
                                  static_cast<uint64_t>(step) * cfg.batch + b);
            int s = ids[rng.below(ids.size())];
            int t = static_cast<int>(rng.below(static_cast<uint64_t>(data.train_frames(s))));
            int i = t;
            while (i == t)
                i = static_cast<int>(rng.below(static_cast<uint64_t>(data.train_frames(s))));
            samples.push_back({s, t, i});
            data.frame(s, t);
            data.frame(s, i);
        }

        std::vector<std::map<std::string, Tensor<T>>> grads(samples.size());
        std::vector<std::map<std::string, double>> losses(samples.size());
        int nt = std::min<int>(disentangle::worker_threads(), static_cast<int>(samples.size()));
#ifdef _OPENMP
#pragma omp parallel for num_threads(nt) schedule(static)
#endif
        for (int bi = 0; bi < static_cast<int>(samples.size()); ++bi) {
            const auto& sm = samples[static_cast<size_t>(bi)];
            Tensor<T> It = data.frame(sm.s, sm.t).template cast<T>();
            Tensor<T> Ii = data.frame(sm.s, sm.i).template cast<T>();
            Tensor<T> win = toyworld::audio_window(data.subject(sm.s).audio, sm.t, 2 * ctx + 1)
                                .template cast<T>();
            // [T, F] -> [F, T] for convolution
            Tensor<T> winT({win.dim(1), win.dim(0)});
            for (int a = 0; a < win.dim(0); ++a)
                for (int bch = 0; bch < win.dim(1); ++bch) winT.at(bch, a) = win.at(a, bch);

            Graph<T> g(&store);
            Var<T> basis = model.basis(g);
            Var<T> code = pipe.encode_audio(g, g.input(winT));
            Var<T> w_pred = pipe.mouth_weights_at(g, code, ctx);

            auto encI = model.encode(g, Ii);
            Var<T> latT = model.encode(g, It).latent;
            Var<T> w_gt = model.head(g, Component::mouth, latT);
            Var<T> l_fea = norm2(sub(w_pred, w_gt));

            Var<T> m = model.motion_from_weights(g, Component::mouth, w_pred, basis);
            Var<T> p = model.navigate(g, Component::pose, latT, basis).motion;
            Var<T> ey = model.navigate(g, Component::eye, latT, basis).motion;
            Var<T> ex = model.navigate(g, Component::expression, latT, basis).motion;
            auto [frd, fid] = FaceModel<T>::compose(m, p, ey, ex, encI.latent);
            (void)frd;
            Var<T> img = model.generate(g, fid, encI.pyramid);
            Var<T> l_rec = norm2(sub(img, g.input(It)));

            Var<T> v = nets.sync_image_embed(g, img);
            Var<T> s_emb = nets.sync_audio_embed(
                g, g.input(toyworld::audio_window(data.subject(sm.s).audio, sm.t,
                                                  disentangle::kSyncAudioWindow)
                               .template cast<T>()));
            Var<T> l_sync = sync_loss(v, s_emb);

            Var<T> total = add(add(scale(l_fea, static_cast<T>(cfg.w_feature)),
                                   scale(l_rec, static_cast<T>(cfg.w_recon))),
                               scale(l_sync, static_cast<T>(cfg.w_sync)));
            g.backward(total);
            grads[static_cast<size_t>(bi)] = g.param_grads();
            auto& lm = losses[static_cast<size_t>(bi)];
            lm["feature"] = static_cast<double>(l_fea.val()[0]);
            lm["recon"] = static_cast<double>(l_rec.val()[0]);
            lm["sync"] = static_cast<double>(l_sync.val()[0]);
            lm["total"] = static_cast<double>(total.val()[0]);
        }
        (void)nt;
        for (size_t bi = 0; bi < grads.size(); ++bi) {
            acc.add(grads[bi], T(1) / static_cast<T>(grads.size()));
            for (auto& [k, v] : losses[bi]) lsum[k] += v / static_cast<double>(grads.size());
        }
        opt.step(store, acc.sums);
        if (log && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) {
            double wall =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
            log.append(nlohmann::json{{"step", step},
                                      {"stage", "audio_mouth"},
                                      {"loss", lsum},
                                      {"orthogonality_max_offdiag", model.max_offdiagonal()},
                                      {"wall_ms", wall}});
        }
    }

    if (param_hash(store, "enc.") != before || param_hash(store, "banks.") != before_banks)
        throw ConfigError("train_mouth: freeze contract violated (face model changed)");
}

}  // namespace edtalk::audio2motion
