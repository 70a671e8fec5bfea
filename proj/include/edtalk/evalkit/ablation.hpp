#pragma once

#include <string>
#include <vector>

#include "edtalk/disentangle/stages.hpp"
#include "edtalk/evalkit/leakage.hpp"

namespace edtalk::evalkit {

using disentangle::StageConfig;
using disentangle::Trainer;
using latentcore::CheckpointMeta;
using latentcore::ModelConfig;

struct AblationConfig {
    uint64_t seed = 7;
    int steps_stage1 = 700;
    int steps_stage2 = 500;
    int steps_stage3 = 500;
    int batch_pairs = 4;
    double lr = 2e-3;
    int leakage_pairs = 16;
    int recon_samples = 24;
    std::vector<int> sweep_sizes = {2, 4, 8, 16};
    ModelConfig base_model;
};

template <typename T>
void copy_params_with_prefix(const ParamStore<T>& src, ParamStore<T>& dst,
                             const std::string& prefix) {
    for (auto& [name, t] : src.params)
        if (name.rfind(prefix, 0) == 0) dst.params[name] = t;
}

/// One trained variant: builds a fresh model sharing the fitted aux nets,
/// runs the decoupling chain, and measures leakage + reconstruction.
template <typename T>
struct AblationRun {
    ParamStore<T> store;
    FaceModel<T> model;
    disentangle::ToyNets<T> nets;
    CheckpointMeta meta;

    AblationRun(const toyworld::Dataset& data, const ModelConfig& mc,
                const disentangle::ToyNets<T>& master_nets, const ParamStore<T>& master_store,
                const AblationConfig& cfg, uint64_t variant_seed, bool with_stage3)
        : model(mc, store, variant_seed), nets(store, data.resolution(), variant_seed) {
        copy_params_with_prefix(master_store, store, "aux.");
        for (int f = 0; f < 4; ++f)
            nets.probe(f).set_heldout_rmse(master_nets.probe(f).heldout_rmse());
        store.freeze_prefix("aux.");

        Trainer<T> trainer(data, model, nets, store);
        disentangle::MetricsLog nolog;
        StageConfig s1;
        s1.stage = 1;
        s1.steps = cfg.steps_stage1;
        s1.batch_pairs = cfg.batch_pairs;
        s1.lr = cfg.lr;
        s1.seed = variant_seed;
        meta.config = mc;
        meta = trainer.run_stage(s1, meta, nolog);
        StageConfig s2 = s1;
        s2.stage = 2;
        s2.steps = cfg.steps_stage2;
        meta = trainer.run_stage(s2, meta, nolog);
        if (with_stage3) {
            StageConfig s3 = s1;
            s3.stage = 3;
            s3.steps = cfg.steps_stage3;
            meta = trainer.run_stage(s3, meta, nolog);
        }
    }
};

/// Reruns of the latent-space ablations at toy scale: banks removed,
/// orthogonality by penalty instead of reparameterization, and the bank-size
/// sweep over the mouth and expression banks.
template <typename T>
nlohmann::json ablation_suite(const toyworld::Dataset& data,
                              const disentangle::ToyNets<T>& master_nets,
                              const ParamStore<T>& master_store, const AblationConfig& cfg) {
    nlohmann::json report;
    const std::vector<int> motion_rows = {kFactorPose, kFactorMouth, kFactorEye};

    auto evaluate = [&](AblationRun<T>& run, bool with_expr) {
        LeakageMatrix lm = leakage_matrix(run.model, run.store, run.nets, cfg.leakage_pairs,
                                          cfg.seed, with_expr);
        auto [ps, ss] = self_reconstruction_metrics(run.model, run.store, data,
                                                    cfg.recon_samples, cfg.seed);
        nlohmann::json j;
        j["leakage"] = lm.to_json();
        j["psnr"] = ps;
        j["ssim"] = ss;
        j["diag_mean_motion"] = lm.diag_mean(motion_rows);
        j["offdiag_mean_motion"] = lm.offdiag_mean(motion_rows);
        j["max_offdiagonal_basis"] = run.model.max_offdiagonal();
        return j;
    };

    {
        ModelConfig mc = cfg.base_model;
        mc.use_banks = false;
        AblationRun<T> run(data, mc, master_nets, master_store, cfg,
                           Rng::derive(cfg.seed, "wo_bank").next_u64(), true);
        auto j = evaluate(run, true);
        LeakageMatrix lm = leakage_matrix(run.model, run.store, run.nets, cfg.leakage_pairs,
                                          cfg.seed, true);
        j["expression_mouth_leakage"] =
            lm.values[kFactorExpression][kFactorMouth];
        report["wo_bank"] = j;
    }
    {
        ModelConfig mc = cfg.base_model;
        mc.orthogonal_reparam = false;
        AblationRun<T> run(data, mc, master_nets, master_store, cfg,
                           Rng::derive(cfg.seed, "wo_orthogonal").next_u64(), false);
        report["wo_orthogonal"] = evaluate(run, false);
    }
    {
        nlohmann::json sweep = nlohmann::json::array();
        for (int n : cfg.sweep_sizes) {
            ModelConfig mc = cfg.base_model;
            mc.bank_sizes[static_cast<size_t>(latentcore::Component::mouth)] = n;
            AblationRun<T> run(data, mc, master_nets, master_store, cfg,
                               Rng::derive(cfg.seed, "sweep_mouth", static_cast<uint64_t>(n)).next_u64(),
                               false);
            auto j = evaluate(run, false);
            j["bank"] = "mouth";
            j["size"] = n;
            LeakageMatrix lm = leakage_matrix(run.model, run.store, run.nets, cfg.leakage_pairs,
                                              cfg.seed, false);
            j["score"] = lm.values[kFactorMouth][kFactorMouth] -
                         (lm.values[kFactorMouth][kFactorPose] +
                          lm.values[kFactorMouth][kFactorEye] +
                          lm.values[kFactorMouth][kFactorExpression]) / 3.0;
            sweep.push_back(j);
        }
        report["sweep_mouth"] = sweep;
    }
    {
        nlohmann::json sweep = nlohmann::json::array();
        for (int n : cfg.sweep_sizes) {
            ModelConfig mc = cfg.base_model;
            mc.bank_sizes[static_cast<size_t>(latentcore::Component::expression)] = n;
            AblationRun<T> run(data, mc, master_nets, master_store, cfg,
                               Rng::derive(cfg.seed, "sweep_expr", static_cast<uint64_t>(n)).next_u64(),
                               true);
            auto j = evaluate(run, true);
            j["bank"] = "expression";
            j["size"] = n;
            LeakageMatrix lm = leakage_matrix(run.model, run.store, run.nets, cfg.leakage_pairs,
                                              cfg.seed, true);
            double agree = expression_sign_agreement(run.model, run.store, run.nets, data,
                                                     cfg.recon_samples, cfg.seed);
            j["expression_sign_agreement"] = agree;
            j["score"] = lm.values[kFactorExpression][kFactorExpression] -
                         (lm.values[kFactorExpression][kFactorPose] +
                          lm.values[kFactorExpression][kFactorMouth] +
                          lm.values[kFactorExpression][kFactorEye]) / 3.0;
            sweep.push_back(j);
        }
        report["sweep_expression"] = sweep;
    }
    return report;
}

}  // namespace edtalk::evalkit
