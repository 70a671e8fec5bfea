#pragma once

#include <array>
#include <optional>

#include "edtalk/latentcore/model.hpp"

namespace edtalk::latentcore {

/// Per-component driving sources for one generated frame. A component with
/// neither a frame nor explicit weights follows the identity image.
template <typename T>
struct DriveSpec {
    std::array<std::optional<Tensor<T>>, 4> frames;           // indexed by Component
    std::array<std::optional<std::vector<double>>, 4> weights;  // overrides frames
    bool use_eem = false;  // modulate identity features from the expression code

    void set_frame(Component c, Tensor<T> img) { frames[static_cast<size_t>(c)] = std::move(img); }
    void set_weights(Component c, std::vector<double> w) {
        weights[static_cast<size_t>(c)] = std::move(w);
    }
};

/// One-shot driven generation: identity from `identity_image`, each motion
/// component from its own source.
template <typename T>
Tensor<T> animate(const FaceModel<T>& model, const ParamStore<T>& store,
                  const Tensor<T>& identity_image, const DriveSpec<T>& spec) {
    Graph<T> g(&store);
    Var<T> basis = model.basis(g);
    auto encId = model.encode(g, identity_image);

    std::array<Var<T>, 4> motions;
    for (Component c : kComponents) {
        size_t i = static_cast<size_t>(c);
        if (spec.weights[i]) {
            int n = model.config().bank_size(c);
            if (static_cast<int>(spec.weights[i]->size()) != n)
                throw ShapeError(std::string("animate: ") + component_name(c) +
                                 " weight length mismatch");
            Tensor<T> w({n});
            for (int k = 0; k < n; ++k) w[k] = static_cast<T>((*spec.weights[i])[static_cast<size_t>(k)]);
            motions[i] = model.motion_from_weights(g, c, g.input(w), basis);
        } else if (spec.frames[i]) {
            Var<T> lat = model.encode(g, *spec.frames[i]).latent;
            motions[i] = model.navigate(g, c, lat, basis).motion;
        } else {
            motions[i] = model.navigate(g, c, encId.latent, basis).motion;
        }
    }
    auto [frd, fid] = FaceModel<T>::compose(motions[static_cast<size_t>(Component::mouth)],
                                            motions[static_cast<size_t>(Component::pose)],
                                            motions[static_cast<size_t>(Component::eye)],
                                            motions[static_cast<size_t>(Component::expression)],
                                            encId.latent);
    (void)frd;
    auto pyramid = spec.use_eem
                       ? model.eem_modulate(g, encId.pyramid,
                                            motions[static_cast<size_t>(Component::expression)])
                       : encId.pyramid;
    return model.generate(g, fid, pyramid).val();
}

/// Weight vector a trained model assigns to one component of an image.
template <typename T>
WeightVector component_weights(const FaceModel<T>& model, const ParamStore<T>& store,
                               const Tensor<T>& image, Component c) {
    Graph<T> g(&store);
    Var<T> lat = model.encode(g, image).latent;
    Var<T> w = model.head(g, c, lat);
    WeightVector out;
    out.component = c;
    out.w.resize(static_cast<size_t>(w.val().size()));
    for (int64_t i = 0; i < w.val().size(); ++i) out.w[static_cast<size_t>(i)] = static_cast<double>(w.val()[i]);
    return out;
}

}  // namespace edtalk::latentcore
