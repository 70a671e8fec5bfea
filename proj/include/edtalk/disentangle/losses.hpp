#pragma once

#include <optional>

#include "edtalk/disentangle/toynets.hpp"

namespace edtalk::disentangle {

/// L1 reconstruction; with a region mask the per-pixel error is weighted by
/// (1 + mask), emphasizing that region.
template <typename T>
Var<T> loss_reconstruction(Var<T> pred, Var<T> target, const Tensor<T>* mask = nullptr) {
    if (!pred.val().same_shape(target.val()))
        throw ShapeError("loss_reconstruction: shape mismatch");
    Var<T> diff = abs_op(sub(pred, target));
    if (mask) {
        const Tensor<T>& img = pred.val();
        if (mask->ndim() != 2 || mask->dim(0) != img.dim(1) || mask->dim(1) != img.dim(2))
            throw ShapeError("loss_reconstruction: mask shape mismatch");
        Tensor<T> weight(img.shape);
        int64_t hw = static_cast<int64_t>(img.dim(1)) * img.dim(2);
        for (int c = 0; c < img.dim(0); ++c)
            for (int64_t i = 0; i < hw; ++i)
                weight[c * hw + i] = T(1) + (*mask)[i];
        diff = mul(diff, pred.g->input(weight));
    }
    return mean(diff);
}

/// Sum over pyramid levels of mean squared feature differences.
template <typename T>
Var<T> loss_perceptual(const ToyNets<T>& nets, Var<T> pred, Var<T> target) {
    if (!pred.val().same_shape(target.val())) throw ShapeError("loss_perceptual: shape mismatch");
    Graph<T>& g = *pred.g;
    auto fp = nets.perceptual_pyramid(g, pred);
    auto ft = nets.perceptual_pyramid(g, target);
    Var<T> total = g.scalar(T(0));
    for (size_t l = 0; l < fp.size(); ++l)
        total = add(total, mean(square(sub(fp[l], ft[l]))));
    return total;
}

/// Non-saturating generator loss: -log D(fake), mean over patches.
template <typename T>
Var<T> adversarial_generator_loss(Var<T> fake_logits) {
    return neg(mean(log_sigmoid(fake_logits)));
}

/// Discriminator loss: -[log D(real) + log(1 - D(fake))], mean over patches.
template <typename T>
Var<T> adversarial_discriminator_loss(Var<T> real_logits, Var<T> fake_logits) {
    return sub(neg(mean(log_sigmoid(real_logits))), mean(log_sigmoid(neg(fake_logits))));
}

/// Convenience pair (g_loss, d_loss) for a real/fake image pair; gradients are
/// not needed here, both sides are evaluated on fresh graphs.
template <typename T>
std::pair<double, double> loss_adversarial(const ToyNets<T>& nets, const ParamStore<T>& store,
                                           const Tensor<T>& real_img, const Tensor<T>& fake_img) {
    Graph<T> g(&store);
    Var<T> gl = adversarial_generator_loss(nets.discriminator_logits(g, g.input(fake_img)));
    Var<T> dl = adversarial_discriminator_loss(nets.discriminator_logits(g, g.input(real_img)),
                                               nets.discriminator_logits(g, g.input(fake_img)));
    return {static_cast<double>(gl.val()[0]), static_cast<double>(dl.val()[0])};
}

/// exp(-cos(a, b)): one term of the feature-consistency and mouth-consistency
/// losses. Lies in [1/e, e].
template <typename T>
Var<T> cosine_penalty(Var<T> a, Var<T> b) {
    return exp_op(neg(cosine(a, b)));
}

/// ||phi(target) - phi(pred)||_2 + ||psi(target) - psi(pred)||_2 with the
/// frozen factor probes standing in for the motion/emotion extractors.
template <typename T>
Var<T> loss_motion(const ToyNets<T>& nets, Var<T> pred, Var<T> target) {
    Graph<T>& g = *pred.g;
    Var<T> m = norm2(sub(nets.motion_feature(g, target), nets.motion_feature(g, pred)));
    Var<T> e = norm2(sub(nets.emotion_feature(g, target), nets.emotion_feature(g, pred)));
    return add(m, e);
}

}  // namespace edtalk::disentangle
