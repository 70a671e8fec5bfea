#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "edtalk/audio2motion/audio_net.hpp"

namespace edtalk::audio2motion {

/// Tiny sentiment vocabulary standing in for a pretrained text encoder:
/// token -> sentiment sign used when composing toy transcripts.
inline const std::vector<std::pair<std::string, int>>& sentiment_vocab() {
    static const std::vector<std::pair<std::string, int>> v = {
        {"happy", 1},   {"joy", 1},      {"smile", 1},    {"delight", 1}, {"cheerful", 1},
        {"bright", 1},  {"wonderful", 1},{"great", 1},    {"laugh", 1},   {"sunny", 1},
        {"glad", 1},    {"pleased", 1},  {"upbeat", 1},   {"sad", -1},    {"gloomy", -1},
        {"cry", -1},    {"sorrow", -1},  {"blue", -1},    {"down", -1},   {"miserable", -1},
        {"tearful", -1},{"mournful", -1},{"dreary", -1},  {"unhappy", -1},{"somber", -1},
        {"dismal", -1}, {"the", 0},      {"a", 0},        {"and", 0},     {"so", 0},
        {"very", 0},    {"today", 0},    {"voice", 0},    {"face", 0},    {"talk", 0},
        {"calm", 0},    {"plain", 0},    {"even", 0},     {"still", 0},   {"quiet", 0}};
    return v;
}

inline int vocab_size() { return static_cast<int>(sentiment_vocab().size()); }

inline std::vector<int> tokenize(const std::vector<std::string>& tokens) {
    static const std::map<std::string, int> index = [] {
        std::map<std::string, int> m;
        const auto& v = sentiment_vocab();
        for (int i = 0; i < static_cast<int>(v.size()); ++i) m[v[static_cast<size_t>(i)].first] = i;
        return m;
    }();
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (auto& t : tokens) {
        auto it = index.find(t);
        if (it == index.end()) throw DataError("tokenize: unknown token '" + t + "'");
        ids.push_back(it->second);
    }
    return ids;
}

/// Compose a transcript whose sentiment tracks the trajectory's expression.
inline std::vector<std::string> toy_transcript(const std::vector<toyworld::FactorVector>& traj,
                                               Rng& rng, int length = 8) {
    double mean = 0.0;
    for (auto& f : traj) mean += f.expression;
    mean /= static_cast<double>(traj.size());
    const auto& vocab = sentiment_vocab();
    std::vector<int> pos, neg, neu;
    for (int i = 0; i < static_cast<int>(vocab.size()); ++i) {
        int s = vocab[static_cast<size_t>(i)].second;
        (s > 0 ? pos : (s < 0 ? neg : neu)).push_back(i);
    }
    std::vector<std::string> out;
    for (int i = 0; i < length; ++i) {
        double r = rng.uniform();
        double p_sent = 0.35 + 0.55 * std::abs(mean);
        const std::vector<int>& pool =
            r < p_sent ? (mean >= 0 ? pos : neg) : neu;
        out.push_back(vocab[static_cast<size_t>(pool[rng.below(pool.size())])].first);
    }
    return out;
}

enum class MaskState { both, audio_masked, text_masked };

/// Modality-mask branch selection from one uniform draw.
inline MaskState mask_from_draw(double p) {
    if (p < 0.0 || p > 1.0) throw RangeError("mask_from_draw: p out of [0,1]");
    if (p >= 0.5) return MaskState::both;
    if (p >= 0.25) return MaskState::audio_masked;
    return MaskState::text_masked;
}

struct ExpressionTrainConfig {
    int steps = 800;
    int batch = 8;
    double lr = 1e-3;
    uint64_t seed = 1;
    int window_k = 5;
    int log_every = 10;
};

/// Semantics-to-expression predictor: toy audio encoder + toy text embedder,
/// modality masking by learned mask tokens, linear head to expression weights.
template <typename T>
class SemanticsPredictor {
public:
    static constexpr int kEmbed = 24;

    SemanticsPredictor() = default;
    SemanticsPredictor(ParamStore<T>& store, int audio_channels, int n_expression,
                       uint64_t seed)
        : audio_channels_(audio_channels), n_ex_(n_expression) {
        Rng rng = Rng::derive(seed, "semantics");
        a1_ = Conv1dLayer<T>(store, "sem.audio.c1", audio_channels, 16, 5, rng);
        a2_ = Conv1dLayer<T>(store, "sem.audio.c2", 16, 16, 5, rng);
        a_fc_ = Linear<T>(store, "sem.audio.fc", 16, kEmbed, rng);
        register_param(store, "sem.text.table",
                       randn_tensor<T>({vocab_size(), kEmbed}, rng, T(0.5)));
        register_param(store, "sem.mask.audio", randn_tensor<T>({kEmbed}, rng, T(0.5)));
        register_param(store, "sem.mask.text", randn_tensor<T>({kEmbed}, rng, T(0.5)));
        h1_ = Linear<T>(store, "sem.head.fc1", 2 * kEmbed, 48, rng);
        h2_ = Linear<T>(store, "sem.head.fc2", 48, n_expression, rng);
    }

    Var<T> audio_embed(Graph<T>& g, const Tensor<T>& features_ft) const {
        Var<T> h = relu(a2_.apply(g, relu(a1_.apply(g, g.input(features_ft)))));
        // mean over time
        Var<T> pooled = channel_mean(reshape(h, {h.val().dim(0), 1, h.val().dim(1)}));
        return a_fc_.apply(g, pooled);
    }

    Var<T> text_embed(Graph<T>& g, const std::vector<int>& token_ids) const {
        return embed_mean(g.param("sem.text.table"), token_ids);
    }

    /// Predicted expression weights under an explicit mask state. Masked
    /// modalities are replaced by learned mask tokens, so no gradient reaches
    /// the masked encoder.
    Var<T> predict(Graph<T>& g, const Tensor<T>* audio_ft, const std::vector<int>* tokens,
                   MaskState state) const {
        if (state != MaskState::text_masked && tokens == nullptr)
            throw InputError("semantics: text required unless text is masked");
        if (state != MaskState::audio_masked && audio_ft == nullptr)
            throw InputError("semantics: audio required unless audio is masked");
        Var<T> a = state == MaskState::audio_masked ? g.param("sem.mask.audio")
                                                    : audio_embed(g, *audio_ft);
        Var<T> t = state == MaskState::text_masked ? g.param("sem.mask.text")
                                                   : text_embed(g, *tokens);
        Var<T> joint = concat_vec<T>({a, t});
        return h2_.apply(g, relu(h1_.apply(g, joint)));
    }

    /// Inference over optional modalities; absent ones are force-masked.
    std::vector<double> predict_weights(const ParamStore<T>& store, const Tensor<T>* audio_ft,
                                        const std::vector<std::string>* text) const {
        if (!audio_ft && !text) throw InputError("semantics: both modalities absent");
        MaskState st = MaskState::both;
        std::vector<int> ids;
        if (!audio_ft) st = MaskState::audio_masked;
        if (!text) st = MaskState::text_masked;
        if (text) ids = tokenize(*text);
        Graph<T> g(&store);
        Var<T> w = predict(g, audio_ft, text ? &ids : nullptr, st);
        std::vector<double> out(static_cast<size_t>(n_ex_));
        for (int i = 0; i < n_ex_; ++i) out[static_cast<size_t>(i)] = static_cast<double>(w.val()[i]);
        return out;
    }

    int n_expression() const { return n_ex_; }

    /// L1 fit toward window-averaged expression weights from the frozen model.
    void train(const toyworld::Dataset& data, const FaceModel<T>& model, ParamStore<T>& store,
               const ExpressionTrainConfig& cfg, MetricsLog& log) {
        for (auto& name : store.names_with_prefix("banks.expression"))
            if (!store.is_frozen(name))
                throw ConfigError("train_expression: expression module must be frozen");
        std::string before = param_hash(store, "heads.expression");
        auto ids = data.emotional_subject_ids();
        if (ids.empty()) throw DataError("train_expression: no emotional subjects");

        Adam<T> opt(static_cast<T>(cfg.lr));
        for (int step = 0; step < cfg.steps; ++step) {
            auto t0 = std::chrono::steady_clock::now();
            GradAccum<T> acc;
            double lsum = 0.0;
            for (int b = 0; b < cfg.batch; ++b) {
                Rng rng = Rng::derive(cfg.seed, "sem_sample",
                                      static_cast<uint64_t>(step) * cfg.batch + b);
                int s = ids[rng.below(ids.size())];
                int t = static_cast<int>(rng.below(static_cast<uint64_t>(data.train_frames(s))));
                int half = cfg.window_k / 2;
                int w0 = std::max(0, t - half);
                int w1 = std::min(data.train_frames(s) - 1, t + half);

                Graph<T> g(&store);
                // target: window-averaged expression weights from the frozen model
                Var<T> wsum = g.input(Tensor<T>::zeros({n_ex_}));
                for (int f = w0; f <= w1; ++f) {
                    Var<T> lat =
                        model.encode(g, data.frame(s, f).template cast<T>()).latent;
                    wsum = add(wsum, model.head(g, Component::expression, lat));
                }
                Tensor<T> target = wsum.val();
                for (int64_t i = 0; i < target.size(); ++i)
                    target[i] /= static_cast<T>(w1 - w0 + 1);

                const auto& af = data.subject(s).audio.features;
                Tensor<T> ft({af.dim(1), af.dim(0)});
                for (int tt = 0; tt < af.dim(0); ++tt)
                    for (int c = 0; c < af.dim(1); ++c) ft.at(c, tt) = static_cast<T>(af.at(tt, c));
                std::vector<int> tok = tokenize(data.subject(s).text_tokens);
                MaskState st = mask_from_draw(rng.uniform());
                Var<T> pred = predict(g, &ft, &tok, st);
                Var<T> loss = mean(abs_op(sub(pred, g.input(target))));
                g.backward(loss);
                acc.add(g.param_grads(), T(1) / static_cast<T>(cfg.batch));
                lsum += static_cast<double>(loss.val()[0]) / cfg.batch;
            }
            opt.step(store, acc.sums);
            if (log && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) {
                double wall = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - t0)
                                  .count();
                log.append(nlohmann::json{{"step", step},
                                          {"stage", "audio_expression"},
                                          {"loss", {{"l1", lsum}}},
                                          {"wall_ms", wall}});
            }
        }
        if (param_hash(store, "heads.expression") != before)
            throw ConfigError("train_expression: freeze contract violated");
    }

private:
    int audio_channels_ = toyworld::kAudioChannels;
    int n_ex_ = 4;
    Conv1dLayer<T> a1_, a2_;
    Linear<T> a_fc_, h1_, h2_;
};

}  // namespace edtalk::audio2motion
