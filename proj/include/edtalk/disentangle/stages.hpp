#pragma once

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "edtalk/disentangle/losses.hpp"
#include "edtalk/latentcore/checkpoint.hpp"
#include "edtalk/latentcore/model.hpp"

namespace edtalk::disentangle {

using latentcore::CheckpointMeta;
using latentcore::Component;
using latentcore::FaceModel;

/// Worker cap: EDTALK_THREADS env var, else the OpenMP default.
inline int worker_threads() {
#ifdef _OPENMP
    int n = omp_get_max_threads();
    if (const char* env = std::getenv("EDTALK_THREADS")) {
        int cap = std::atoi(env);
        if (cap > 0 && cap < n) n = cap;
    }
    return n;
#else
    return 1;
#endif
}

/// Newline-delimited JSON metrics writer.
class MetricsLog {
public:
    MetricsLog() = default;
    explicit MetricsLog(const std::string& path) {
        if (!path.empty()) {
            out_.open(path, std::ios::app);
            if (!out_) throw IoError("metrics log: cannot open " + path);
        }
    }
    void append(const nlohmann::json& j) {
        if (out_) {
            out_ << j.dump() << "\n";
            out_.flush();
        }
    }
    explicit operator bool() const { return out_.is_open(); }

private:
    std::ofstream out_;
};

/// One decoupling stage: what trains, what stays frozen, and the loss mix.
struct StageConfig {
    int stage = 1;  // 1 face-pose, 2 mouth-eye, 3 expression
    int steps = 3000;
    int batch_pairs = 4;
    double lr = 2e-3;
    double disc_lr = 1e-3;
    uint64_t seed = 1;
    int window_k = 5;               // stage 3 expression averaging window
    bool reinit_expression = true;  // reinitialize EXLN at stage-3 start
    double feather_px = 2.0;
    double orth_penalty_weight = 1.0;  // only used without the QR reparameterization
    int log_every = 10;
    std::map<std::string, double> loss_weights;
    std::set<std::string> trainable, frozen;

    static const std::set<std::string>& known_modules() {
        static const std::set<std::string> k = {"enc",      "gen",     "pose_nav", "mouth_nav",
                                                "eye_nav",  "expr_nav", "eem",     "disc"};
        return k;
    }

    double weight(const std::string& name) const {
        auto it = loss_weights.find(name);
        if (it != loss_weights.end()) return it->second;
        if (stage == 3 && name == "mot") return 10.0;
        return 1.0;
    }

    StageConfig with_defaults() const {
        StageConfig c = *this;
        if (c.trainable.empty() && c.frozen.empty()) {
            switch (c.stage) {
                case 1:
                    c.trainable = {"enc", "gen", "pose_nav", "mouth_nav", "eye_nav", "expr_nav",
                                   "disc"};
                    c.frozen = {"eem"};
                    break;
                case 2:
                    c.trainable = {"enc", "gen", "mouth_nav", "eye_nav", "expr_nav", "disc"};
                    c.frozen = {"pose_nav", "eem"};
                    break;
                default:
                    c.trainable = {"expr_nav", "eem", "disc"};
                    c.frozen = {"enc", "gen", "pose_nav", "mouth_nav", "eye_nav"};
                    break;
            }
        }
        return c;
    }

    void validate() const {
        if (stage < 1 || stage > 3) throw ConfigError("stage config: stage must be 1..3");
        if (steps < 0 || batch_pairs < 1) throw ConfigError("stage config: bad steps/batch");
        if (window_k < 1) throw ConfigError("stage config: window_k must be >= 1");
        for (auto& m : trainable)
            if (!known_modules().count(m)) throw ConfigError("stage config: unknown module " + m);
        for (auto& m : frozen) {
            if (!known_modules().count(m)) throw ConfigError("stage config: unknown module " + m);
            if (trainable.count(m))
                throw ConfigError("stage config: module both trainable and frozen: " + m);
        }
    }
};

inline const char* stage_name(int stage) {
    switch (stage) {
        case 1: return "face_pose";
        case 2: return "mouth_eye";
        default: return "expression";
    }
}

/// Parameter-name prefixes of one logical module.
inline std::vector<std::string> module_prefixes(const std::string& module) {
    if (module == "enc") return {"enc."};
    if (module == "gen") return {"gen."};
    if (module == "eem") return {"eem."};
    if (module == "disc") return {"disc."};
    if (module == "pose_nav") return {"banks.pose", "heads.pose", "direct.pose"};
    if (module == "mouth_nav") return {"banks.mouth", "heads.mouth", "direct.mouth"};
    if (module == "eye_nav") return {"banks.eye", "heads.eye", "direct.eye"};
    if (module == "expr_nav") return {"banks.expression", "heads.expression", "direct.expression"};
    throw ConfigError("unknown module: " + module);
}

template <typename T>
void set_module_frozen(ParamStore<T>& store, const std::string& module, bool frozen) {
    for (auto& prefix : module_prefixes(module)) {
        if (frozen) {
            store.freeze_prefix(prefix);
        } else {
            for (auto& name : store.names_with_prefix(prefix)) store.frozen.erase(name);
        }
    }
}

template <typename T>
std::map<std::string, Tensor<T>> filter_grads(const std::map<std::string, Tensor<T>>& grads,
                                              const std::string& prefix, bool keep) {
    std::map<std::string, Tensor<T>> out;
    for (auto& [name, g] : grads) {
        bool match = name.rfind(prefix, 0) == 0;
        if (match == keep) out.emplace(name, g);
    }
    return out;
}

/// Runs the three decoupling stages over a toy dataset.
template <typename T>
class Trainer {
public:
    Trainer(const toyworld::Dataset& data, FaceModel<T>& model, ToyNets<T>& nets,
            ParamStore<T>& store)
        : data_(data), model_(model), nets_(nets), store_(&store) {}

    CheckpointMeta run_stage(StageConfig cfg_in, CheckpointMeta meta, MetricsLog& log) {
        StageConfig cfg = cfg_in.with_defaults();
        cfg.validate();
        if (cfg.stage >= 2 && !meta.has_stage(cfg.stage - 1))
            throw ConfigError("stage " + std::to_string(cfg.stage) + " requires a stage-" +
                              std::to_string(cfg.stage - 1) + " checkpoint");
        const auto subject_ids =
            cfg.stage == 3 ? data_.emotional_subject_ids() : data_.neutral_subject_ids();
        if (subject_ids.empty())
            throw DataError(std::string("stage ") + std::to_string(cfg.stage) +
                            ": no suitable subjects in dataset");
        for (int s : subject_ids)
            if (data_.train_frames(s) < 2)
                throw DataError("stage training requires >= 2 frames per subject");

        for (auto& m : cfg.trainable) set_module_frozen(*store_, m, false);
        for (auto& m : cfg.frozen) set_module_frozen(*store_, m, true);

        Adam<T> opt(static_cast<T>(cfg.lr));
        Adam<T> dopt(static_cast<T>(cfg.disc_lr));
        if (cfg.stage == 3 && cfg.reinit_expression) model_.reinit_expression(cfg.seed);

        for (int step = 0; step < cfg.steps; ++step) {
            auto t0 = std::chrono::steady_clock::now();
            StepResult res = cfg.stage == 3 ? step_expression(cfg, step)
                                            : step_cross_reconstruction(cfg, step);
            opt.step(*store_, res.gen_grads);
            dopt.step(*store_, res.disc_grads);
            if (log && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) {
                double wall = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - t0)
                                  .count();
                nlohmann::json rec{{"step", step},
                                   {"stage", stage_name(cfg.stage)},
                                   {"loss", res.losses},
                                   {"orthogonality_max_offdiag", model_.max_offdiagonal()},
                                   {"wall_ms", wall}};
                log.append(rec);
            }
        }

        // freeze schedule: modules finished by this stage never train again
        if (cfg.stage == 1) set_module_frozen(*store_, "pose_nav", true);
        if (cfg.stage == 2) {
            set_module_frozen(*store_, "mouth_nav", true);
            set_module_frozen(*store_, "eye_nav", true);
        }
        if (cfg.stage == 3) {
            set_module_frozen(*store_, "expr_nav", true);
            set_module_frozen(*store_, "eem", true);
            set_module_frozen(*store_, "enc", true);
            set_module_frozen(*store_, "gen", true);
        }
        meta.stage_completed = std::to_string(cfg.stage);
        meta.rng_state["stage_" + std::to_string(cfg.stage) + "_seed"] = cfg.seed;
        return meta;
    }

private:
    struct StepResult {
        std::map<std::string, Tensor<T>> gen_grads, disc_grads;
        nlohmann::json losses;
    };

    struct PairSample {
        int sa, fa, fa2, sb, fb, fb2;
        toyworld::Region region;
    };

    int pick_frame(Rng& rng, int subject) const {
        return static_cast<int>(rng.below(static_cast<uint64_t>(data_.train_frames(subject))));
    }

    int pick_other_frame(Rng& rng, int subject, int avoid) const {
        int n = data_.train_frames(subject);
        int f = avoid;
        while (f == avoid) f = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
        return f;
    }

    struct PairOutput {
        std::map<std::string, Tensor<T>> gen_grads, disc_grads;
        std::map<std::string, double> losses;
    };

    StepResult step_cross_reconstruction(const StageConfig& cfg, int step) {
        const auto ids =
            cfg.stage == 3 ? data_.emotional_subject_ids() : data_.neutral_subject_ids();
        std::vector<PairSample> samples;
        for (int b = 0; b < cfg.batch_pairs; ++b) {
            Rng rng = Rng::derive(cfg.seed, std::string("sample.") + stage_name(cfg.stage),
                                  static_cast<uint64_t>(step) * cfg.batch_pairs + b);
            PairSample ps{};
            ps.sa = ids[rng.below(ids.size())];
            ps.sb = ps.sa;
            if (ids.size() > 1)
                while (ps.sb == ps.sa) ps.sb = ids[rng.below(ids.size())];
            ps.fa = pick_frame(rng, ps.sa);
            ps.fa2 = pick_other_frame(rng, ps.sa, ps.fa);
            ps.fb = pick_frame(rng, ps.sb);
            ps.fb2 = pick_other_frame(rng, ps.sb, ps.fb);
            ps.region = cfg.stage == 1 ? toyworld::Region::face
                                       : (b % 2 == 0 ? toyworld::Region::mouth
                                                     : toyworld::Region::eyes);
            samples.push_back(ps);
            // warm the render cache serially; worker threads then only read
            data_.frame(ps.sa, ps.fa);
            data_.frame(ps.sa, ps.fa2);
            data_.frame(ps.sb, ps.fb);
            data_.frame(ps.sb, ps.fb2);
        }

        std::vector<PairOutput> outs(samples.size());
        int nt = std::min<int>(worker_threads(), static_cast<int>(samples.size()));
#ifdef _OPENMP
#pragma omp parallel for num_threads(nt) schedule(static)
#endif
        for (int i = 0; i < static_cast<int>(samples.size()); ++i)
            outs[static_cast<size_t>(i)] = pair_pass(cfg, samples[static_cast<size_t>(i)]);
        (void)nt;
        return reduce(cfg, outs);
    }

    PairOutput pair_pass(const StageConfig& cfg, const PairSample& ps) const {
        using toyworld::Region;
        PairOutput out;
        toyworld::ToyFrame A = data_.toy_frame(ps.sa, ps.fa);
        toyworld::ToyFrame B = data_.toy_frame(ps.sb, ps.fb);
        Tensor<T> IA = A.image.template cast<T>();
        Tensor<T> IB = B.image.template cast<T>();
        Tensor<T> IA2 = data_.frame(ps.sa, ps.fa2).template cast<T>();
        Tensor<T> IB2 = data_.frame(ps.sb, ps.fb2).template cast<T>();
        Tensor<T> SWa = toyworld::swap_region(A, B, ps.region, cfg.feather_px).template cast<T>();
        Tensor<T> SWb = toyworld::swap_region(B, A, ps.region, cfg.feather_px).template cast<T>();

        Graph<T> g(store_);
        Var<T> basis = model_.basis(g);
        auto encIdA = model_.encode(g, IA2);
        auto encIdB = model_.encode(g, IB2);
        Var<T> latSWa = model_.encode(g, SWa).latent;
        Var<T> latSWb = model_.encode(g, SWb).latent;
        Var<T> latA = model_.encode(g, IA).latent;
        Var<T> latB = model_.encode(g, IB).latent;

        auto nav = [&](Component c, Var<T> lat) {
            return model_.navigate(g, c, lat, basis).motion;
        };
        auto gen_from = [&](Var<T> m, Var<T> p, Var<T> ey, Var<T> ex, auto& encId) {
            auto [frd, fid] = FaceModel<T>::compose(m, p, ey, ex, encId.latent);
            (void)frd;
            return model_.generate(g, fid, encId.pyramid);
        };

        Var<T> outA, outB, feaA, feaB;
        if (ps.region == Region::face) {
            // swapped composite SWa carries A's whole face, B's pose (stage 1)
            outA = gen_from(nav(Component::mouth, latSWa), nav(Component::pose, latSWb),
                            nav(Component::eye, latSWa), nav(Component::expression, latSWa),
                            encIdA);
            outB = gen_from(nav(Component::mouth, latSWb), nav(Component::pose, latSWa),
                            nav(Component::eye, latSWb), nav(Component::expression, latSWb),
                            encIdB);
            auto face_sum = [&](Var<T> lat) {
                return add(nav(Component::mouth, lat),
                           add(nav(Component::eye, lat), nav(Component::expression, lat)));
            };
            feaA = add(cosine_penalty(nav(Component::pose, latSWb), nav(Component::pose, latA)),
                       cosine_penalty(face_sum(latSWa), face_sum(latA)));
            feaB = add(cosine_penalty(nav(Component::pose, latSWa), nav(Component::pose, latB)),
                       cosine_penalty(face_sum(latSWb), face_sum(latB)));
        } else {
            // stage 2: swap one facial part, take the rest from the mirror composite
            Component swapped = ps.region == Region::mouth ? Component::mouth : Component::eye;
            auto mix = [&](Var<T> part_lat, Var<T> rest_lat, auto& encId) {
                Var<T> m = nav(Component::mouth, swapped == Component::mouth ? part_lat : rest_lat);
                Var<T> ey = nav(Component::eye, swapped == Component::eye ? part_lat : rest_lat);
                return gen_from(m, nav(Component::pose, rest_lat), ey,
                                nav(Component::expression, rest_lat), encId);
            };
            outA = mix(latSWa, latSWb, encIdA);
            outB = mix(latSWb, latSWa, encIdB);
            feaA = add(cosine_penalty(nav(swapped, latSWa), nav(swapped, latA)),
                       cosine_penalty(nav(Component::pose, latSWb), nav(Component::pose, latA)));
            feaB = add(cosine_penalty(nav(swapped, latSWb), nav(swapped, latB)),
                       cosine_penalty(nav(Component::pose, latSWa), nav(Component::pose, latB)));
        }

        Var<T> vIA = g.input(IA), vIB = g.input(IB);
        const Tensor<T>*maskA = nullptr, *maskB = nullptr;
        Tensor<T> eyeMaskA, eyeMaskB;
        if (cfg.stage == 2) {
            eyeMaskA = toyworld::region_mask(A.factors, data_.resolution(), Region::eyes)
                           .mask.template cast<T>();
            eyeMaskB = toyworld::region_mask(B.factors, data_.resolution(), Region::eyes)
                           .mask.template cast<T>();
            maskA = &eyeMaskA;
            maskB = &eyeMaskB;
        }
        Var<T> l_rec = add(loss_reconstruction(outA, vIA, maskA),
                           loss_reconstruction(outB, vIB, maskB));
        Var<T> l_per = add(loss_perceptual(nets_, outA, vIA), loss_perceptual(nets_, outB, vIB));
        Var<T> l_adv = add(adversarial_generator_loss(nets_.discriminator_logits(g, outA)),
                           adversarial_generator_loss(nets_.discriminator_logits(g, outB)));

        auto self_recon = [&](Var<T> lat, auto& encId, Var<T> target, const Tensor<T>* mask) {
            Var<T> img = gen_from(nav(Component::mouth, lat), nav(Component::pose, lat),
                                  nav(Component::eye, lat), nav(Component::expression, lat),
                                  encId);
            return add(loss_reconstruction(img, target, mask), loss_perceptual(nets_, img, target));
        };
        Var<T> l_self = add(self_recon(latA, encIdA, vIA, maskA),
                            self_recon(latB, encIdB, vIB, maskB));
        Var<T> l_fea = add(feaA, feaB);

        Var<T> total = add(add(scale(l_rec, static_cast<T>(cfg.weight("rec"))),
                               scale(l_per, static_cast<T>(cfg.weight("per")))),
                           add(scale(l_adv, static_cast<T>(cfg.weight("adv"))),
                               add(scale(l_self, static_cast<T>(cfg.weight("self"))),
                                   scale(l_fea, static_cast<T>(cfg.weight("fea"))))));
        if (!model_.config().orthogonal_reparam)
            total = add(total, scale(model_.orthogonality_penalty(g, basis),
                                     static_cast<T>(cfg.orth_penalty_weight)));
        g.backward(total);
        out.gen_grads = filter_grads(g.param_grads(), "disc.", false);

        out.losses["rec"] = static_cast<double>(l_rec.val()[0]);
        out.losses["per"] = static_cast<double>(l_per.val()[0]);
        out.losses["adv_g"] = static_cast<double>(l_adv.val()[0]);
        out.losses["self"] = static_cast<double>(l_self.val()[0]);
        out.losses["fea"] = static_cast<double>(l_fea.val()[0]);
        out.losses["total"] = static_cast<double>(total.val()[0]);

        Graph<T> gd(store_);
        Var<T> d_loss =
            add(adversarial_discriminator_loss(
                    nets_.discriminator_logits(gd, gd.input(IA)),
                    nets_.discriminator_logits(gd, gd.input(outA.val()))),
                adversarial_discriminator_loss(
                    nets_.discriminator_logits(gd, gd.input(IB)),
                    nets_.discriminator_logits(gd, gd.input(outB.val()))));
        gd.backward(d_loss);
        out.disc_grads = filter_grads(gd.param_grads(), "disc.", true);
        out.losses["adv_d"] = static_cast<double>(d_loss.val()[0]);
        return out;
    }

    StepResult step_expression(const StageConfig& cfg, int step) {
        const auto ids = data_.emotional_subject_ids();
        struct ExprSample {
            int s, d, i, w0, w1;
        };
        std::vector<ExprSample> samples;
        for (int b = 0; b < cfg.batch_pairs; ++b) {
            Rng rng = Rng::derive(cfg.seed, "sample.expression",
                                  static_cast<uint64_t>(step) * cfg.batch_pairs + b);
            ExprSample es{};
            es.s = ids[rng.below(ids.size())];
            es.d = pick_frame(rng, es.s);
            es.i = pick_other_frame(rng, es.s, es.d);
            int half = cfg.window_k / 2;
            es.w0 = std::max(0, es.d - half);
            es.w1 = std::min(data_.train_frames(es.s) - 1, es.d + half);
            samples.push_back(es);
            for (int f = es.w0; f <= es.w1; ++f) data_.frame(es.s, f);
            data_.frame(es.s, es.i);
        }

        std::vector<PairOutput> outs(samples.size());
        int nt = std::min<int>(worker_threads(), static_cast<int>(samples.size()));
#ifdef _OPENMP
#pragma omp parallel for num_threads(nt) schedule(static)
#endif
        for (int bi = 0; bi < static_cast<int>(samples.size()); ++bi) {
            const auto& es = samples[static_cast<size_t>(bi)];
            PairOutput& out = outs[static_cast<size_t>(bi)];
            Tensor<T> Id = data_.frame(es.s, es.d).template cast<T>();
            Tensor<T> Ii = data_.frame(es.s, es.i).template cast<T>();

            Graph<T> g(store_);
            Var<T> basis = model_.basis(g);
            auto encI = model_.encode(g, Ii);
            Var<T> latD = model_.encode(g, Id).latent;

            // expression feature: window-averaged head weights on the frozen encoder
            std::vector<Var<T>> ws;
            for (int f = es.w0; f <= es.w1; ++f) {
                Var<T> lat = f == es.d
                                 ? latD
                                 : model_.encode(g, data_.frame(es.s, f).template cast<T>()).latent;
                ws.push_back(model_.head(g, Component::expression, lat));
            }
            Var<T> wsum = ws[0];
            for (size_t k = 1; k < ws.size(); ++k) wsum = add(wsum, ws[k]);
            Var<T> wmean = scale(wsum, T(1) / static_cast<T>(ws.size()));
            Var<T> f_ex = model_.config().use_banks
                              ? model_.motion_from_weights(g, Component::expression, wmean, basis)
                              : model_.navigate(g, Component::expression, latD, basis).motion;

            Var<T> m = model_.navigate(g, Component::mouth, latD, basis).motion;
            Var<T> p = model_.navigate(g, Component::pose, latD, basis).motion;
            Var<T> ey = model_.navigate(g, Component::eye, latD, basis).motion;
            auto [frd, fid] = FaceModel<T>::compose(m, p, ey, f_ex, encI.latent);
            (void)frd;
            auto pyr = model_.eem_modulate(g, encI.pyramid, f_ex);
            Var<T> img = model_.generate(g, fid, pyr);

            Var<T> vId = g.input(Id);
            Tensor<T> eyeMask =
                toyworld::region_mask(data_.factors(es.s, es.d), data_.resolution(),
                                      toyworld::Region::eyes)
                    .mask.template cast<T>();
            Var<T> l_rec = loss_reconstruction(img, vId, &eyeMask);
            Var<T> l_per = loss_perceptual(nets_, img, vId);
            Var<T> l_adv = adversarial_generator_loss(nets_.discriminator_logits(g, img));
            Var<T> l_mot = loss_motion(nets_, img, vId);
            Var<T> mouth_gen = model_.navigate(g, Component::mouth,
                                               model_.encode(g, img).latent, basis).motion;
            Var<T> l_mc = cosine_penalty(mouth_gen, m);

            Var<T> total = add(add(scale(l_rec, static_cast<T>(cfg.weight("rec"))),
                                   scale(l_per, static_cast<T>(cfg.weight("per")))),
                               add(scale(l_adv, static_cast<T>(cfg.weight("adv"))),
                                   add(scale(l_mot, static_cast<T>(cfg.weight("mot"))),
                                       scale(l_mc, static_cast<T>(cfg.weight("mc"))))));
            if (!model_.config().orthogonal_reparam)
                total = add(total, scale(model_.orthogonality_penalty(g, basis),
                                         static_cast<T>(cfg.orth_penalty_weight)));
            g.backward(total);
            out.gen_grads = filter_grads(g.param_grads(), "disc.", false);
            out.losses["rec"] = static_cast<double>(l_rec.val()[0]);
            out.losses["per"] = static_cast<double>(l_per.val()[0]);
            out.losses["adv_g"] = static_cast<double>(l_adv.val()[0]);
            out.losses["mot"] = static_cast<double>(l_mot.val()[0]);
            out.losses["mc"] = static_cast<double>(l_mc.val()[0]);
            out.losses["total"] = static_cast<double>(total.val()[0]);

            Graph<T> gd(store_);
            Var<T> d_loss = adversarial_discriminator_loss(
                nets_.discriminator_logits(gd, gd.input(Id)),
                nets_.discriminator_logits(gd, gd.input(img.val())));
            gd.backward(d_loss);
            out.disc_grads = filter_grads(gd.param_grads(), "disc.", true);
            out.losses["adv_d"] = static_cast<double>(d_loss.val()[0]);
        }
        (void)nt;
        return reduce(cfg, outs);
    }

    StepResult reduce(const StageConfig& cfg, const std::vector<PairOutput>& outs) {
        StepResult res;
        GradAccum<T> gacc, dacc;
        std::map<std::string, double> lsum;
        T inv = T(1) / static_cast<T>(outs.size());
        for (const auto& o : outs) {
            gacc.add(o.gen_grads, inv);
            dacc.add(o.disc_grads, inv);
            for (auto& [k, v] : o.losses) lsum[k] += v / static_cast<double>(outs.size());
        }
        (void)cfg;
        res.gen_grads = std::move(gacc.sums);
        res.disc_grads = std::move(dacc.sums);
        res.losses = lsum;
        return res;
    }

    const toyworld::Dataset& data_;
    FaceModel<T>& model_;
    ToyNets<T>& nets_;
    ParamStore<T>* store_;
};

/// Restore the freeze flags implied by a checkpoint's completed stages.
template <typename T>
void apply_freeze_schedule(ParamStore<T>& store, const CheckpointMeta& meta) {
    store.freeze_prefix("aux.");
    if (meta.stage_completed == "none") return;
    set_module_frozen(store, "pose_nav", true);
    if (meta.stage_completed == "1") return;
    set_module_frozen(store, "mouth_nav", true);
    set_module_frozen(store, "eye_nav", true);
    if (meta.stage_completed == "2") return;
    for (const char* m : {"expr_nav", "eem", "enc", "gen"}) set_module_frozen(store, m, true);
}

}  // namespace edtalk::disentangle
