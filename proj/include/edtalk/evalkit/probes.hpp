#pragma once

#include <string>
#include <vector>

#include "edtalk/core/nn.hpp"
#include "edtalk/toyworld/render.hpp"

namespace edtalk::evalkit {

// factor indices used throughout evaluation
inline constexpr int kFactorPose = 0;
inline constexpr int kFactorMouth = 1;
inline constexpr int kFactorEye = 2;
inline constexpr int kFactorExpression = 3;

inline const char* factor_name(int f) {
    switch (f) {
        case kFactorPose: return "pose";
        case kFactorMouth: return "mouth";
        case kFactorEye: return "eye";
        default: return "expression";
    }
}

inline double apply_factor(toyworld::FactorVector& fv, int factor, double v) {
    switch (factor) {
        case kFactorPose: fv.pose = v; break;
        case kFactorMouth: fv.mouth = v; break;
        case kFactorEye: fv.eye = v; break;
        default: fv.expression = v; break;
    }
    return v;
}

inline double get_factor(const toyworld::FactorVector& fv, int factor) {
    switch (factor) {
        case kFactorPose: return fv.pose;
        case kFactorMouth: return fv.mouth;
        case kFactorEye: return fv.eye;
        default: return fv.expression;
    }
}

inline std::pair<double, double> factor_bounds(int factor) {
    return (factor == kFactorPose || factor == kFactorExpression)
               ? std::pair<double, double>{-1.0, 1.0}
               : std::pair<double, double>{0.0, 1.0};
}

inline toyworld::FactorVector random_factors(Rng& rng) {
    toyworld::FactorVector f;
    f.identity_params = toyworld::sample_identity(rng);
    f.pose = rng.uniform(-1.0, 1.0);
    f.mouth = rng.uniform(0.0, 1.0);
    f.eye = rng.uniform(0.0, 1.0);
    f.expression = rng.uniform(-1.0, 1.0);
    return f;
}

/// Small conv regressor from a rendered image to one factor value; fitted on
/// procedurally rendered ground truth, then frozen and used as an oracle.
template <typename T>
class FactorProbe {
public:
    FactorProbe() = default;

    FactorProbe(ParamStore<T>& store, const std::string& prefix, int factor, int resolution,
                Rng& rng)
        : prefix_(prefix), factor_(factor), resolution_(resolution) {
        c1_ = Conv2dLayer<T>(store, prefix + ".c1", 3, 8, 3, 2, 1, rng);
        c2_ = Conv2dLayer<T>(store, prefix + ".c2", 8, 16, 3, 2, 1, rng);
        c3_ = Conv2dLayer<T>(store, prefix + ".c3", 16, 32, 3, 2, 1, rng);
        int flat = 32 * (resolution / 8) * (resolution / 8);
        f1_ = Linear<T>(store, prefix + ".f1", flat, 64, rng);
        f2_ = Linear<T>(store, prefix + ".f2", 64, 1, rng);
    }

    int factor() const { return factor_; }
    const std::string& prefix() const { return prefix_; }
    double heldout_rmse() const { return heldout_rmse_; }
    void set_heldout_rmse(double r) { heldout_rmse_ = r; }

    /// Scalar prediction node; differentiable w.r.t. the image input.
    Var<T> apply(Graph<T>& g, Var<T> image) const {
        Var<T> h = relu(c1_.apply(g, image));
        h = relu(c2_.apply(g, h));
        h = relu(c3_.apply(g, h));
        Var<T> flat = reshape(h, {static_cast<int>(h.val().size())});
        return f2_.apply(g, relu(f1_.apply(g, flat)));
    }

    double predict(const ParamStore<T>& store, const Tensor<T>& image) const {
        Graph<T> g(&store);
        return static_cast<double>(apply(g, g.input(image)).val()[0]);
    }

    /// Supervised fit on freshly rendered random faces. Returns held-out RMSE.
    double fit(ParamStore<T>& store, uint64_t seed, int steps = 1200, int batch = 16,
               double lr = 1e-3) {
        Adam<T> opt(static_cast<T>(lr));
        Rng rng = Rng::derive(seed, prefix_ + ".fit");
        for (int step = 0; step < steps; ++step) {
            GradAccum<T> acc;
            for (int b = 0; b < batch; ++b) {
                auto fv = random_factors(rng);
                auto frame = toyworld::render_frame(fv, resolution_);
                Graph<T> g(&store);
                Var<T> pred = apply(g, g.input(frame.image.template cast<T>()));
                Var<T> target = g.input(Tensor<T>::scalar(static_cast<T>(get_factor(fv, factor_))));
                Var<T> loss = mean(square(sub(pred, target)));
                g.backward(loss);
                acc.add(g.param_grads(), T(1) / static_cast<T>(batch));
            }
            opt.step(store, acc.sums);
        }
        Rng hrng = Rng::derive(seed, prefix_ + ".heldout");
        double se = 0.0;
        const int held = 256;
        for (int i = 0; i < held; ++i) {
            auto fv = random_factors(hrng);
            auto frame = toyworld::render_frame(fv, resolution_);
            double p = predict(store, frame.image.template cast<T>());
            double d = p - get_factor(fv, factor_);
            se += d * d;
        }
        heldout_rmse_ = std::sqrt(se / held);
        return heldout_rmse_;
    }

private:
    std::string prefix_;
    int factor_ = 0;
    int resolution_ = 64;
    double heldout_rmse_ = 1e9;
    Conv2dLayer<T> c1_, c2_, c3_;
    Linear<T> f1_, f2_;
};

}  // namespace edtalk::evalkit
