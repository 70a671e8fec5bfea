#pragma once

#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "edtalk/audio2motion/audio_net.hpp"

namespace edtalk::audio2motion {

/// Noising schedule; alpha_bar runs from ~1 down to ~0.
struct DiffusionSchedule {
    int steps = 100;
    std::vector<double> betas, alphas, alpha_bars;

    static DiffusionSchedule from_betas(std::vector<double> betas_in) {
        DiffusionSchedule s;
        s.steps = static_cast<int>(betas_in.size());
        s.betas = std::move(betas_in);
        s.alphas.resize(s.betas.size());
        s.alpha_bars.resize(s.betas.size());
        double prod = 1.0;
        for (size_t t = 0; t < s.betas.size(); ++t) {
            if (s.betas[t] <= 0.0 || s.betas[t] >= 1.0)
                throw ConfigError("diffusion schedule: betas must lie in (0,1)");
            s.alphas[t] = 1.0 - s.betas[t];
            prod *= s.alphas[t];
            s.alpha_bars[t] = prod;
        }
        s.validate();
        return s;
    }

    static DiffusionSchedule cosine(int steps, double offset = 0.008) {
        auto f = [&](double t) {
            double v = std::cos(((t / steps + offset) / (1.0 + offset)) * 1.5707963267948966);
            return v * v;
        };
        std::vector<double> betas(static_cast<size_t>(steps));
        for (int t = 0; t < steps; ++t) {
            double b = 1.0 - f(t + 1.0) / f(static_cast<double>(t));
            betas[static_cast<size_t>(t)] = std::clamp(b, 1e-6, 0.999);
        }
        return from_betas(std::move(betas));
    }

    void validate() const {
        if (steps < 1) throw ConfigError("diffusion schedule: empty");
        for (size_t t = 1; t < alpha_bars.size(); ++t)
            if (alpha_bars[t] >= alpha_bars[t - 1])
                throw ConfigError("diffusion schedule: alpha_bar must strictly decrease");
        if (alpha_bars.front() < 0.5)
            throw ConfigError("diffusion schedule: alpha_bar[0] should be close to 1");
        if (alpha_bars.back() > 0.1)
            throw ConfigError("diffusion schedule: alpha_bar[T-1] should be close to 0");
    }
};

/// z = sqrt(abar_t) * x0 + sqrt(1 - abar_t) * noise
template <typename T>
Tensor<T> diffusion_forward(const Tensor<T>& x0, int t, const Tensor<T>& noise,
                            const DiffusionSchedule& sched) {
    if (t < 0 || t >= sched.steps) throw RangeError("diffusion_forward: t out of range");
    if (!x0.same_shape(noise)) throw ShapeError("diffusion_forward: noise shape mismatch");
    double ab = sched.alpha_bars[static_cast<size_t>(t)];
    double ca = std::sqrt(ab), cn = std::sqrt(1.0 - ab);
    Tensor<T> z(x0.shape);
    for (int64_t i = 0; i < x0.size(); ++i)
        z[i] = static_cast<T>(ca * x0[i] + cn * noise[i]);
    return z;
}

/// Ancestral sampler for an x0-predicting denoiser; DDIM when `ddim` is set.
/// The denoiser is a plain callable so analytic oracles can drive the sampler.
template <typename T>
Tensor<T> sample_x0_prediction(
    const std::function<Tensor<T>(const Tensor<T>& z, int t)>& denoise,
    const std::vector<int>& shape, uint64_t seed, const DiffusionSchedule& sched,
    bool ddim = false) {
    Rng rng = Rng::derive(seed, "diffusion_sample");
    Tensor<T> z(shape);
    for (int64_t i = 0; i < z.size(); ++i) z[i] = static_cast<T>(rng.normal());
    for (int t = sched.steps - 1; t >= 0; --t) {
        Tensor<T> x0 = denoise(z, t);
        if (!x0.same_shape(z)) throw ShapeError("sampler: denoiser changed the shape");
        if (t == 0) return x0;
        double ab_t = sched.alpha_bars[static_cast<size_t>(t)];
        double ab_p = sched.alpha_bars[static_cast<size_t>(t - 1)];
        if (ddim) {
            double c0 = std::sqrt(ab_p);
            double ce = std::sqrt(1.0 - ab_p) / std::sqrt(1.0 - ab_t);
            for (int64_t i = 0; i < z.size(); ++i) {
                double eps = (z[i] - std::sqrt(ab_t) * x0[i]);
                z[i] = static_cast<T>(c0 * x0[i] + ce * eps);
            }
        } else {
            double beta = sched.betas[static_cast<size_t>(t)];
            double alpha = sched.alphas[static_cast<size_t>(t)];
            double c0 = std::sqrt(ab_p) * beta / (1.0 - ab_t);
            double cz = std::sqrt(alpha) * (1.0 - ab_p) / (1.0 - ab_t);
            double var = (1.0 - ab_p) / (1.0 - ab_t) * beta;
            double sd = std::sqrt(var);
            for (int64_t i = 0; i < z.size(); ++i)
                z[i] = static_cast<T>(c0 * x0[i] + cz * z[i] + sd * rng.normal());
        }
    }
    return z;  // unreachable for steps >= 1
}

inline Tensor<float> timestep_embedding(int t, int dim = 16) {
    Tensor<float> e({dim});
    for (int i = 0; i < dim / 2; ++i) {
        double freq = std::pow(10000.0, -2.0 * i / dim);
        e[2 * i] = static_cast<float>(std::sin(t * freq));
        e[2 * i + 1] = static_cast<float>(std::cos(t * freq));
    }
    return e;
}

/// Pose-and-eye weight sequences extracted from frames via the frozen face
/// model; ground truth for the diffusion predictor.
template <typename T>
Tensor<T> extract_pose_eye_weights(const toyworld::Dataset& data, const FaceModel<T>& model,
                                   const ParamStore<T>& store, int subject) {
    int n_p = model.config().bank_size(Component::pose);
    int n_ey = model.config().bank_size(Component::eye);
    int T_len = data.frame_count(subject);
    Tensor<T> out({T_len, n_p + n_ey});
    for (int t = 0; t < T_len; ++t) {
        Graph<T> g(&store);
        Var<T> lat = model.encode(g, data.frame(subject, t).template cast<T>()).latent;
        Var<T> wp = model.head(g, Component::pose, lat);
        Var<T> wey = model.head(g, Component::eye, lat);
        for (int i = 0; i < n_p; ++i) out.at(t, i) = wp.val()[i];
        for (int i = 0; i < n_ey; ++i) out.at(t, n_p + i) = wey.val()[i];
    }
    return out;
}

struct PoseEyeTrainConfig {
    int steps = 4000;
    int batch = 8;
    int window = 32;
    double lr = 1e-3;
    uint64_t seed = 1;
    int log_every = 25;
};

/// Diffusion-based pose&eye weight generator: per-frame audio conditioning,
/// input MLP, LSTM, output MLP; predicts the clean weights.
template <typename T>
class PoseEyeDiffusion {
public:
    static constexpr int kTimeDim = 16;
    static constexpr int kHidden = 64;

    PoseEyeDiffusion() = default;
    PoseEyeDiffusion(ParamStore<T>& store, int audio_channels, int n_weights, uint64_t seed)
        : audio_channels_(audio_channels), n_(n_weights) {
        Rng rng = Rng::derive(seed, "pose_eye_diffusion");
        a1_ = Conv1dLayer<T>(store, "dpe.audio.c1", audio_channels, kAudioFeatureDim, 5, rng);
        a2_ = Conv1dLayer<T>(store, "dpe.audio.c2", kAudioFeatureDim, kAudioFeatureDim, 5, rng);
        in_ = Linear<T>(store, "dpe.in", n_ + kAudioFeatureDim + kTimeDim, kHidden, rng);
        lstm_ = LstmLayer<T>(store, "dpe.lstm", kHidden, kHidden, rng);
        out_ = Linear<T>(store, "dpe.out", kHidden, n_, rng);
    }

    int n_weights() const { return n_; }

    /// Predict clean weights for a [Tw, n] noised block, conditioned on the
    /// matching audio feature window [F, Tw] and the timestep.
    Var<T> denoise(Graph<T>& g, const Tensor<T>& z, const Tensor<T>& audio, int t) const {
        if (z.ndim() != 2 || z.dim(1) != n_) throw ShapeError("denoise: z must be [T, n]");
        if (audio.ndim() != 2 || audio.dim(0) != audio_channels_ || audio.dim(1) != z.dim(0))
            throw ShapeError("denoise: audio window must be [F, T] matching z");
        Var<T> code = relu(a2_.apply(g, relu(a1_.apply(g, g.input(audio)))));
        Tensor<T> temb = timestep_embedding(t, kTimeDim).template cast<T>();
        Var<T> zv = g.input(z);
        std::vector<Var<T>> seq;
        int Tw = z.dim(0);
        seq.reserve(static_cast<size_t>(Tw));
        for (int k = 0; k < Tw; ++k) {
            std::vector<Var<T>> parts = {row(zv, k), take_column(code, k), g.input(temb)};
            seq.push_back(relu(in_.apply(g, concat_vec(parts))));
        }
        auto hs = lstm_.apply(g, seq);
        std::vector<Var<T>> outs;
        outs.reserve(hs.size());
        for (auto& h : hs) outs.push_back(out_.apply(g, h));
        return stack_rows(outs);
    }

    /// x0-prediction training against weight trajectories from the frozen model.
    void train(const toyworld::Dataset& data, const FaceModel<T>& model, ParamStore<T>& store,
               const DiffusionSchedule& sched, const PoseEyeTrainConfig& cfg, MetricsLog& log) {
        std::string before = param_hash(store, "enc.");
        auto ids = data.neutral_subject_ids();
        auto emo = data.emotional_subject_ids();
        ids.insert(ids.end(), emo.begin(), emo.end());
        std::vector<Tensor<T>> gt;
        std::vector<Tensor<T>> audio_feats;
        for (int s : ids) {
            gt.push_back(extract_pose_eye_weights(data, model, store, s));
            const auto& af = data.subject(s).audio.features;
            Tensor<T> ft({af.dim(1), af.dim(0)});
            for (int t = 0; t < af.dim(0); ++t)
                for (int c = 0; c < af.dim(1); ++c) ft.at(c, t) = static_cast<T>(af.at(t, c));
            audio_feats.push_back(std::move(ft));
        }

        Adam<T> opt(static_cast<T>(cfg.lr));
        for (int step = 0; step < cfg.steps; ++step) {
            auto t0 = std::chrono::steady_clock::now();
            GradAccum<T> acc;
            double lsum = 0.0;
            std::vector<std::map<std::string, Tensor<T>>> grads(static_cast<size_t>(cfg.batch));
            std::vector<double> lvals(static_cast<size_t>(cfg.batch));
            int nt = std::min<int>(disentangle::worker_threads(), cfg.batch);
#ifdef _OPENMP
#pragma omp parallel for num_threads(nt) schedule(static)
#endif
            for (int b = 0; b < cfg.batch; ++b) {
                Rng rng = Rng::derive(cfg.seed, "dpe_sample",
                                      static_cast<uint64_t>(step) * cfg.batch + b);
                size_t si = static_cast<size_t>(rng.below(ids.size()));
                const Tensor<T>& w = gt[si];
                int tmax = w.dim(0) - cfg.window;
                int start = tmax > 0 ? static_cast<int>(rng.below(static_cast<uint64_t>(tmax))) : 0;
                int Tw = std::min(cfg.window, w.dim(0));
                Tensor<T> w0({Tw, n_});
                for (int k = 0; k < Tw; ++k)
                    for (int i = 0; i < n_; ++i) w0.at(k, i) = w.at(start + k, i);
                Tensor<T> audio({audio_channels_, Tw});
                for (int k = 0; k < Tw; ++k)
                    for (int c = 0; c < audio_channels_; ++c)
                        audio.at(c, k) = audio_feats[si].at(c, start + k);
                int t = static_cast<int>(rng.below(static_cast<uint64_t>(sched.steps)));
                Tensor<T> noise(w0.shape);
                for (int64_t i = 0; i < noise.size(); ++i)
                    noise[i] = static_cast<T>(rng.normal());
                Tensor<T> z = diffusion_forward(w0, t, noise, sched);

                Graph<T> g(&store);
                Var<T> pred = denoise(g, z, audio, t);
                Var<T> loss = mean(square(sub(pred, g.input(w0))));
                g.backward(loss);
                grads[static_cast<size_t>(b)] = g.param_grads();
                lvals[static_cast<size_t>(b)] = static_cast<double>(loss.val()[0]);
            }
            (void)nt;
            for (int b = 0; b < cfg.batch; ++b) {
                acc.add(grads[static_cast<size_t>(b)], T(1) / static_cast<T>(cfg.batch));
                lsum += lvals[static_cast<size_t>(b)] / cfg.batch;
            }
            opt.step(store, acc.sums);
            if (log && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) {
                double wall = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - t0)
                                  .count();
                log.append(nlohmann::json{{"step", step},
                                          {"stage", "audio_pose_eye"},
                                          {"loss", {{"denoise", lsum}}},
                                          {"wall_ms", wall}});
            }
        }
        if (param_hash(store, "enc.") != before)
            throw ConfigError("pose&eye training: freeze contract violated");
    }

    /// Sample a weight trajectory for a full audio clip. Pure function of
    /// (parameters, seed, audio, schedule).
    Tensor<T> sample(const ParamStore<T>& store, const Tensor<T>& audio_ft, uint64_t seed,
                     const DiffusionSchedule& sched, bool ddim = false) const {
        if (audio_ft.ndim() != 2 || audio_ft.dim(0) != audio_channels_)
            throw ShapeError("sample: audio features must be [F, T]");
        int T_len = audio_ft.dim(1);
        auto fn = [&](const Tensor<T>& z, int t) {
            Graph<T> g(&store);
            return denoise(g, z, audio_ft, t).val();
        };
        return sample_x0_prediction<T>(fn, {T_len, n_}, seed, sched, ddim);
    }

private:
    int audio_channels_ = toyworld::kAudioChannels;
    int n_ = 8;
    Conv1dLayer<T> a1_, a2_;
    Linear<T> in_;
    LstmLayer<T> lstm_;
    Linear<T> out_;
};

// Weight-trajectory container: "EDWT" | u32 version | u32 n_pose | u32 n_eye |
// u32 T | f32 frame_rate | f32 data row-major [T, n_pose+n_eye].

template <typename T>
void write_edwt(const std::string& path, const Tensor<T>& traj, int n_pose, int n_eye,
                double frame_rate) {
    if (traj.ndim() != 2 || traj.dim(1) != n_pose + n_eye)
        throw ShapeError("edwt: trajectory must be [T, n_pose+n_eye]");
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("edwt: cannot open for write: " + path);
    uint32_t version = 1, np = static_cast<uint32_t>(n_pose), ne = static_cast<uint32_t>(n_eye),
             T_len = static_cast<uint32_t>(traj.dim(0));
    float fr = static_cast<float>(frame_rate);
    Tensor<float> data = traj.template cast<float>();
    bool ok = std::fwrite("EDWT", 1, 4, f) == 4 && std::fwrite(&version, 4, 1, f) == 1 &&
              std::fwrite(&np, 4, 1, f) == 1 && std::fwrite(&ne, 4, 1, f) == 1 &&
              std::fwrite(&T_len, 4, 1, f) == 1 && std::fwrite(&fr, 4, 1, f) == 1 &&
              std::fwrite(data.data.data(), sizeof(float), data.data.size(), f) ==
                  data.data.size();
    std::fclose(f);
    if (!ok) throw IoError("edwt: short write: " + path);
}

struct EdwtFile {
    int n_pose = 0, n_eye = 0;
    double frame_rate = 25.0;
    Tensor<float> weights;  // [T, n_pose+n_eye]
};

inline EdwtFile read_edwt(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("edwt: cannot open: " + path);
    char magic[4];
    uint32_t version = 0, np = 0, ne = 0, T_len = 0;
    float fr = 0;
    bool ok = std::fread(magic, 1, 4, f) == 4 && std::memcmp(magic, "EDWT", 4) == 0 &&
              std::fread(&version, 4, 1, f) == 1 && version == 1 &&
              std::fread(&np, 4, 1, f) == 1 && std::fread(&ne, 4, 1, f) == 1 &&
              std::fread(&T_len, 4, 1, f) == 1 && std::fread(&fr, 4, 1, f) == 1;
    if (!ok) {
        std::fclose(f);
        throw IoError("edwt: bad header: " + path);
    }
    EdwtFile out;
    out.n_pose = static_cast<int>(np);
    out.n_eye = static_cast<int>(ne);
    out.frame_rate = fr;
    out.weights = Tensor<float>({static_cast<int>(T_len), static_cast<int>(np + ne)});
    size_t n = std::fread(out.weights.data.data(), sizeof(float), out.weights.data.size(), f);
    std::fclose(f);
    if (n != out.weights.data.size()) throw IoError("edwt: truncated data: " + path);
    return out;
}

}  // namespace edtalk::audio2motion
