#pragma once

#include <array>
#include <vector>

#include <json.hpp>

#include "edtalk/disentangle/toynets.hpp"
#include "edtalk/evalkit/metrics.hpp"
#include "edtalk/latentcore/animate.hpp"

namespace edtalk::evalkit {

using disentangle::ToyNets;
using latentcore::Component;
using latentcore::DriveSpec;
using latentcore::FaceModel;

/// Rows: swapped component, cols: measured factor, both in (pose, mouth, eye,
/// expression) order. Diagonal = transfer strength, off-diagonal = leakage,
/// normalized by each factor's full range.
struct LeakageMatrix {
    std::array<std::array<double, 4>, 4> values{};

    double diag_mean(const std::vector<int>& rows) const {
        double s = 0;
        for (int r : rows) s += values[static_cast<size_t>(r)][static_cast<size_t>(r)];
        return s / static_cast<double>(rows.size());
    }
    double offdiag_max(const std::vector<int>& rows) const {
        double m = 0;
        for (int r : rows)
            for (int c = 0; c < 4; ++c)
                if (c != r) m = std::max(m, values[static_cast<size_t>(r)][static_cast<size_t>(c)]);
        return m;
    }
    double offdiag_mean(const std::vector<int>& rows) const {
        double s = 0;
        int n = 0;
        for (int r : rows)
            for (int c = 0; c < 4; ++c)
                if (c != r) {
                    s += values[static_cast<size_t>(r)][static_cast<size_t>(c)];
                    ++n;
                }
        return n ? s / n : 0.0;
    }
    /// Diagonal dominance: mean diag / mean offdiag over the given rows.
    double structure_score(const std::vector<int>& rows) const {
        return diag_mean(rows) / std::max(offdiag_mean(rows), 1e-9);
    }

    nlohmann::json to_json() const {
        nlohmann::json rows = nlohmann::json::object();
        for (int r = 0; r < 4; ++r) {
            nlohmann::json cols = nlohmann::json::object();
            for (int c = 0; c < 4; ++c)
                cols[factor_name(c)] = values[static_cast<size_t>(r)][static_cast<size_t>(c)];
            rows[factor_name(r)] = cols;
        }
        return rows;
    }
};

/// Test pair for one leakage row: the swapped factor sits at opposite range
/// extremes so the diagonal reads transfer over the full range.
struct LeakagePair {
    toyworld::FactorVector a, b;
};

inline std::vector<LeakagePair> make_leakage_pairs(int factor, int count, Rng& rng) {
    std::vector<LeakagePair> out;
    auto [lo, hi] = factor_bounds(factor);
    for (int i = 0; i < count; ++i) {
        LeakagePair p;
        p.a = random_factors(rng);
        p.b = random_factors(rng);
        bool flip = (i % 2) == 1;
        apply_factor(p.a, factor, flip ? hi : lo);
        apply_factor(p.b, factor, flip ? lo : hi);
        out.push_back(std::move(p));
    }
    return out;
}

/// Map Component to the factor index of its ground-truth counterpart.
inline int component_factor(Component c) {
    switch (c) {
        case Component::pose: return kFactorPose;
        case Component::mouth: return kFactorMouth;
        case Component::eye: return kFactorEye;
        default: return kFactorExpression;
    }
}

/// Swap one component's latent between pair frames, generate, and probe all
/// four factors. Requires the probe oracle gate to have passed.
template <typename T>
LeakageMatrix leakage_matrix(const FaceModel<T>& model, const ParamStore<T>& store,
                             const ToyNets<T>& nets, int pairs_per_row, uint64_t seed,
                             bool use_eem_for_expression = true) {
    if (!nets.probes_ready())
        throw DataError("leakage_matrix: factor probes have not passed the RMSE gate");
    int res = model.config().resolution;
    LeakageMatrix out;
    for (Component comp : {Component::pose, Component::mouth, Component::eye,
                           Component::expression}) {
        int row = component_factor(comp);
        Rng rng = Rng::derive(seed, std::string("leakage.") + latentcore::component_name(comp));
        auto pairs = make_leakage_pairs(row, pairs_per_row, rng);
        std::array<double, 4> acc{};
        for (auto& pr : pairs) {
            Tensor<T> imgA = toyworld::render_frame(pr.a, res).image.template cast<T>();
            Tensor<T> imgB = toyworld::render_frame(pr.b, res).image.template cast<T>();
            DriveSpec<T> base;  // all components follow the identity frame A
            base.use_eem = use_eem_for_expression;
            Tensor<T> img_base = latentcore::animate(model, store, imgA, base);
            DriveSpec<T> swapped;
            swapped.use_eem = use_eem_for_expression;
            swapped.set_frame(comp, imgB);
            Tensor<T> img_swap = latentcore::animate(model, store, imgA, swapped);
            for (int f = 0; f < 4; ++f) {
                double pb = nets.probe(f).predict(store, img_base);
                double ps = nets.probe(f).predict(store, img_swap);
                acc[static_cast<size_t>(f)] +=
                    std::abs(ps - pb) / toyworld::factor_range(f);
            }
        }
        for (int f = 0; f < 4; ++f)
            out.values[static_cast<size_t>(row)][static_cast<size_t>(f)] =
                acc[static_cast<size_t>(f)] / pairs_per_row;
    }
    return out;
}

/// Pearson correlation between probe-predicted mouth openness and the audio
/// envelope, per frame.
template <typename T>
double sync_correlation(const std::vector<Tensor<T>>& frames,
                        const toyworld::AudioFeatureSeq& audio, const ToyNets<T>& nets,
                        const ParamStore<T>& store) {
    if (!nets.probes_ready())
        throw DataError("sync_correlation: factor probes have not passed the RMSE gate");
    if (static_cast<int>(frames.size()) != audio.frames())
        throw ShapeError("sync_correlation: frame/audio length mismatch");
    std::vector<double> mouth, env;
    for (size_t t = 0; t < frames.size(); ++t) {
        mouth.push_back(nets.probe(kFactorMouth).predict(store, frames[t]));
        env.push_back(static_cast<double>(audio.envelope(static_cast<int>(t))));
    }
    return pearson(mouth, env);
}

/// Held-out self-reconstruction quality: drive a frame with its own features,
/// identity skips from another held-out frame of the same subject.
template <typename T>
std::pair<double, double> self_reconstruction_metrics(const FaceModel<T>& model,
                                                      const ParamStore<T>& store,
                                                      const toyworld::Dataset& data,
                                                      int samples, uint64_t seed) {
    Rng rng = Rng::derive(seed, "self_recon");
    double psnr_sum = 0, ssim_sum = 0;
    auto ids = data.neutral_subject_ids();
    if (ids.empty()) throw DataError("self_reconstruction_metrics: empty dataset");
    for (int i = 0; i < samples; ++i) {
        int s = ids[rng.below(ids.size())];
        int h0 = data.train_frames(s);
        int nheld = data.frame_count(s) - h0;
        if (nheld < 2) throw DataError("self_reconstruction_metrics: need >= 2 held-out frames");
        int f = h0 + static_cast<int>(rng.below(static_cast<uint64_t>(nheld)));
        int f2 = f;
        while (f2 == f) f2 = h0 + static_cast<int>(rng.below(static_cast<uint64_t>(nheld)));
        Tensor<T> target = data.frame(s, f).template cast<T>();
        Tensor<T> idimg = data.frame(s, f2).template cast<T>();
        DriveSpec<T> spec;
        for (Component c : latentcore::kComponents) spec.set_frame(c, target);
        Tensor<T> out = latentcore::animate(model, store, idimg, spec);
        psnr_sum += psnr(out, target);
        ssim_sum += ssim(out, target);
    }
    return {psnr_sum / samples, ssim_sum / samples};
}

/// Share of held-out emotional references whose probe-measured expression
/// sign survives transfer onto a neutral identity frame.
template <typename T>
double expression_sign_agreement(const FaceModel<T>& model, const ParamStore<T>& store,
                                 const ToyNets<T>& nets, const toyworld::Dataset& data,
                                 int samples, uint64_t seed, double min_magnitude = 0.5) {
    if (!nets.probes_ready())
        throw DataError("expression_sign_agreement: probes have not passed the RMSE gate");
    Rng rng = Rng::derive(seed, "expr_sign");
    auto emo = data.emotional_subject_ids();
    auto neu = data.neutral_subject_ids();
    if (emo.empty() || neu.empty())
        throw DataError("expression_sign_agreement: need both neutral and emotional subjects");
    int hits = 0, total = 0, guard = 0;
    while (total < samples && guard < samples * 200) {
        ++guard;
        int se = emo[rng.below(emo.size())];
        int h0 = data.train_frames(se);
        int f = h0 + static_cast<int>(rng.below(static_cast<uint64_t>(data.frame_count(se) - h0)));
        double expr = data.factors(se, f).expression;
        if (std::abs(expr) < min_magnitude) continue;
        int sn = neu[rng.below(neu.size())];
        int fi = static_cast<int>(rng.below(static_cast<uint64_t>(data.frame_count(sn))));
        Tensor<T> idimg = data.frame(sn, fi).template cast<T>();
        DriveSpec<T> spec;
        spec.use_eem = true;
        spec.set_frame(Component::expression, data.frame(se, f).template cast<T>());
        Tensor<T> out = latentcore::animate(model, store, idimg, spec);
        double probe = nets.probe(kFactorExpression).predict(store, out);
        if ((probe > 0) == (expr > 0)) ++hits;
        ++total;
    }
    if (total == 0) throw DataError("expression_sign_agreement: no strong references found");
    return static_cast<double>(hits) / total;
}

/// Max |<b_i, b_j>| plus the per-pair table of the current banks.
template <typename T>
nlohmann::json orthogonality_report(const FaceModel<T>& model, const ParamStore<T>& store) {
    Graph<T> g(&store);
    Var<T> basis = model.basis(g);
    const Tensor<T>& q = basis.val();
    int n = q.dim(0), d = q.dim(1);
    double maxoff = 0.0;
    nlohmann::json table = nlohmann::json::array();
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double acc = 0;
            for (int k = 0; k < d; ++k) acc += static_cast<double>(q.at(i, k)) * q.at(j, k);
            maxoff = std::max(maxoff, std::abs(acc));
            table.push_back({{"i", i}, {"j", j}, {"dot", acc}});
        }
    return nlohmann::json{{"max_offdiag", maxoff}, {"pairs", table}};
}

}  // namespace edtalk::evalkit
