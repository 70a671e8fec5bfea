#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "edtalk/core/errors.hpp"
#include "edtalk/core/nn.hpp"

namespace edtalk::latentcore {

enum class Component { mouth = 0, pose = 1, eye = 2, expression = 3 };

inline const char* component_name(Component c) {
    switch (c) {
        case Component::mouth: return "mouth";
        case Component::pose: return "pose";
        case Component::eye: return "eye";
        default: return "expression";
    }
}

inline constexpr std::array<Component, 4> kComponents{Component::mouth, Component::pose,
                                                      Component::eye, Component::expression};

/// Coefficients over one bank's bases.
struct WeightVector {
    Component component = Component::mouth;
    std::vector<double> w;
};

/// Eq.-style linear blend of two weight vectors; endpoints are exact.
inline WeightVector interpolate_weights(const WeightVector& w1, const WeightVector& w2,
                                        double alpha) {
    if (w1.component != w2.component)
        throw TypeError("interpolate_weights: component mismatch");
    if (w1.w.size() != w2.w.size()) throw TypeError("interpolate_weights: length mismatch");
    if (alpha < 0.0 || alpha > 1.0) throw RangeError("interpolate_weights: alpha out of [0,1]");
    WeightVector out;
    out.component = w1.component;
    out.w.resize(w1.w.size());
    for (size_t i = 0; i < out.w.size(); ++i)
        out.w[i] = alpha * w1.w[i] + (1.0 - alpha) * w2.w[i];
    return out;
}

struct ModelConfig {
    int resolution = 64;
    int latent_dim = 64;
    // bank sizes in (mouth, pose, eye, expression) order
    std::array<int, 4> bank_sizes{8, 4, 4, 4};
    int base_channels = 8;
    int head_hidden = 64;
    bool orthogonal_reparam = true;  // false: row-normalized banks + loss penalty
    bool use_banks = true;           // false: direct latent regression per component
    double adain_eps = 1e-5;

    int bank_size(Component c) const { return bank_sizes[static_cast<size_t>(c)]; }
    int total_bases() const { return bank_sizes[0] + bank_sizes[1] + bank_sizes[2] + bank_sizes[3]; }

    void validate() const {
        if (resolution < 16 || resolution % 16 != 0)
            throw ConfigError("model: resolution must be a positive multiple of 16");
        if (latent_dim < 1) throw ConfigError("model: latent_dim must be positive");
        for (int n : bank_sizes)
            if (n < 1) throw ConfigError("model: bank sizes must be positive");
        if (use_banks && total_bases() > latent_dim)
            throw ConfigError("model: total bases (" + std::to_string(total_bases()) +
                              ") exceed latent dimension (" + std::to_string(latent_dim) + ")");
    }
};

/// Modified Gram-Schmidt over the rows of a [n, D] matrix; differentiable and
/// exact at every forward pass. Rows are processed in order, so a frozen
/// leading block keeps its effective rows bit-stable while later rows train.
template <typename T>
Var<T> orthonormal_rows(Var<T> raw) {
    const Tensor<T>& x = raw.val();
    if (x.ndim() != 2) throw ShapeError("orthonormal_rows: need [n, D]");
    int n = x.dim(0), d = x.dim(1);
    if (n > d)
        throw ConfigError("orthonormal_rows: cannot orthonormalize " + std::to_string(n) +
                          " rows in dimension " + std::to_string(d));
    std::vector<Var<T>> q;
    q.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        Var<T> r = row(raw, i);
        for (int j = 0; j < i; ++j) r = sub(r, smul(q[static_cast<size_t>(j)], dot(q[static_cast<size_t>(j)], r)));
        q.push_back(smul(r, recip(norm2(r))));
    }
    return stack_rows(q);
}

/// AdaIN: whiten per-channel spatial statistics, then rescale/re-bias.
/// sigma is floored at eps to guard constant channels.
template <typename T>
Var<T> adain(Var<T> x, Var<T> scale, Var<T> bias, T eps = T(1e-5)) {
    const Tensor<T>& xv = x.val();
    if (xv.ndim() != 3) throw ShapeError("adain: need CHW input");
    Var<T> mu = channel_mean(x);
    Var<T> centered = channel_affine(x, x.g->input(Tensor<T>::full({xv.dim(0)}, T(1))), neg(mu));
    Var<T> sigma = clamp_min(sqrt_op(channel_mean(square(centered))), eps);
    Var<T> normalized = channel_affine(centered, recip(sigma),
                                       x.g->input(Tensor<T>::zeros({xv.dim(0)})));
    return channel_affine(normalized, scale, bias);
}

template <typename T>
struct EncodeResult {
    Var<T> latent;
    std::vector<Var<T>> pyramid;  // spatial maps, halving resolution
};

/// Encoder + banks + navigation heads + EEM + generator. Owns parameter
/// names inside a ParamStore; forward passes are built on caller graphs.
template <typename T>
class FaceModel {
public:
    FaceModel(ModelConfig cfg, ParamStore<T>& store, uint64_t seed)
        : cfg_(cfg), store_(&store) {
        cfg_.validate();
        Rng rng = Rng::derive(seed, "model_init");
        int C = cfg_.base_channels;

        enc_in_ = Conv2dLayer<T>(store, "enc.in", 3, C, 3, 2, 1, rng);
        int ch = C;
        for (int l = 0; l < 3; ++l) {
            enc_down_[l] = Conv2dLayer<T>(store, "enc.down" + std::to_string(l), ch, ch * 2, 3,
                                          2, 1, rng);
            enc_res_[l] = Conv2dLayer<T>(store, "enc.res" + std::to_string(l), ch * 2, ch * 2, 3,
                                         1, 1, rng);
            ch *= 2;
        }
        spatial_ = cfg_.resolution / 16;
        enc_fc1_ = Linear<T>(store, "enc.fc1", ch * spatial_ * spatial_, 128, rng);
        enc_fc2_ = Linear<T>(store, "enc.fc2", 128, cfg_.latent_dim, rng);

        gen_fc_ = Linear<T>(store, "gen.fc", cfg_.latent_dim, ch * spatial_ * spatial_, rng);
        int gch = ch;  // 8C
        const int skip_ch[4] = {8 * C, 4 * C, 2 * C, C};
        const int out_ch[4] = {4 * C, 2 * C, C, C};
        for (int l = 0; l < 4; ++l) {
            gen_up_[l] = Conv2dLayer<T>(store, "gen.up" + std::to_string(l), gch + skip_ch[l],
                                        out_ch[l], 3, 1, 1, rng);
            gch = out_ch[l];
        }
        gen_res_ = Conv2dLayer<T>(store, "gen.res", 4 * C, 4 * C, 3, 1, 1, rng);
        gen_out_ = Conv2dLayer<T>(store, "gen.out", C, 3, 3, 1, 1, rng);

        for (Component c : kComponents) {
            std::string base = std::string("banks.") + component_name(c);
            int n = cfg_.bank_size(c);
            register_param(*store_, base + ".raw",
                           randn_tensor<T>({n, cfg_.latent_dim}, rng,
                                           T(1) / std::sqrt(static_cast<T>(cfg_.latent_dim))));
            std::string head = std::string("heads.") + component_name(c);
            head_fc1_[idx(c)] = Linear<T>(store, head + ".fc1", cfg_.latent_dim,
                                          cfg_.head_hidden, rng);
            head_fc2_[idx(c)] = Linear<T>(store, head + ".fc2", cfg_.head_hidden, n, rng);
            if (!cfg_.use_banks)
                direct_[idx(c)] = Linear<T>(store, std::string("direct.") + component_name(c),
                                            cfg_.latent_dim, cfg_.latent_dim, rng, T(0.2));
        }

        const int pyr_ch[4] = {C, 2 * C, 4 * C, 8 * C};
        for (int l = 0; l < 4; ++l) {
            eem_scale_[l] = Linear<T>(store, "eem.scale" + std::to_string(l), cfg_.latent_dim,
                                      pyr_ch[l], rng, T(0.01));
            eem_bias_[l] = Linear<T>(store, "eem.bias" + std::to_string(l), cfg_.latent_dim,
                                     pyr_ch[l], rng, T(0.01));
        }
    }

    const ModelConfig& config() const { return cfg_; }
    ParamStore<T>& store() { return *store_; }
    const ParamStore<T>& store() const { return *store_; }

    /// Reinitialize the expression navigation module (bank + head).
    void reinit_expression(uint64_t seed) {
        Rng rng = Rng::derive(seed, "exln_reinit");
        int n = cfg_.bank_size(Component::expression);
        store_->at("banks.expression.raw") = randn_tensor<T>(
            {n, cfg_.latent_dim}, rng, T(1) / std::sqrt(static_cast<T>(cfg_.latent_dim)));
        store_->at("heads.expression.fc1.w") = randn_tensor<T>(
            {cfg_.head_hidden, cfg_.latent_dim}, rng,
            std::sqrt(T(1) / static_cast<T>(cfg_.latent_dim)));
        store_->at("heads.expression.fc1.b") = Tensor<T>::zeros({cfg_.head_hidden});
        store_->at("heads.expression.fc2.w") = randn_tensor<T>(
            {n, cfg_.head_hidden}, rng, std::sqrt(T(1) / static_cast<T>(cfg_.head_hidden)));
        store_->at("heads.expression.fc2.b") = Tensor<T>::zeros({n});
    }

    EncodeResult<T> encode(Graph<T>& g, Var<T> image) const {
        const Tensor<T>& x = image.val();
        if (x.ndim() != 3 || x.dim(0) != 3 || x.dim(1) != cfg_.resolution ||
            x.dim(2) != cfg_.resolution)
            throw ShapeError("encode: expected [3," + std::to_string(cfg_.resolution) + "," +
                             std::to_string(cfg_.resolution) + "] image, got " +
                             shape_str(x.shape));
        EncodeResult<T> out;
        Var<T> h = relu(enc_in_.apply(g, image));
        out.pyramid.push_back(h);
        for (int l = 0; l < 3; ++l) {
            h = relu(enc_down_[l].apply(g, h));
            h = relu(add(h, enc_res_[l].apply(g, h)));
            out.pyramid.push_back(h);
        }
        Var<T> flat = reshape(h, {static_cast<int>(h.val().size())});
        out.latent = enc_fc2_.apply(g, relu(enc_fc1_.apply(g, flat)));
        return out;
    }

    EncodeResult<T> encode(Graph<T>& g, const Tensor<T>& image) const {
        return encode(g, g.input(image));
    }

    /// Effective basis matrix, pose rows first. Orthonormal under the QR-style
    /// reparameterization; merely row-normalized in penalty mode.
    Var<T> basis(Graph<T>& g) const {
        std::vector<Var<T>> blocks;
        for (Component c : stack_order())
            blocks.push_back(g.param(std::string("banks.") + component_name(c) + ".raw"));
        Var<T> raw = blocks.size() == 1 ? blocks[0] : stack_all(blocks);
        if (cfg_.orthogonal_reparam) return orthonormal_rows(raw);
        // normalize rows only; orthogonality is left to the penalty term
        std::vector<Var<T>> rows;
        int n = raw.val().dim(0);
        rows.reserve(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            Var<T> r = row(raw, i);
            rows.push_back(smul(r, recip(norm2(r))));
        }
        return stack_rows(rows);
    }

    /// Row block of `basis` output belonging to one component.
    Var<T> bank(Graph<T>& g, Var<T> basis_rows, Component c) const {
        (void)g;
        int off = 0;
        for (Component o : stack_order()) {
            if (o == c) break;
            off += cfg_.bank_size(o);
        }
        return slice_rows(basis_rows, off, cfg_.bank_size(c));
    }

    Var<T> head(Graph<T>& g, Component c, Var<T> latent) const {
        return head_fc2_[idx(c)].apply(g, relu(head_fc1_[idx(c)].apply(g, latent)));
    }

    struct Navigation {
        Var<T> weights;
        Var<T> motion;
    };

    /// W = head(latent); motion = sum_i w_i b_i over the component's bank.
    Navigation navigate(Graph<T>& g, Component c, Var<T> latent, Var<T> basis_rows) const {
        Navigation nav;
        nav.weights = head(g, c, latent);
        if (!cfg_.use_banks) {
            nav.motion = direct_[idx(c)].apply(g, latent);
            return nav;
        }
        nav.motion = motion_from_weights(g, c, nav.weights, basis_rows);
        return nav;
    }

    Var<T> motion_from_weights(Graph<T>& g, Component c, Var<T> weights,
                               Var<T> basis_rows) const {
        Var<T> bk = bank(g, basis_rows, c);
        Var<T> w2 = reshape(weights, {1, cfg_.bank_size(c)});
        return reshape(matmul(w2, bk), {cfg_.latent_dim});
    }

    /// f_rd = sum of the four motion codes; returns (f_rd, id_latent + f_rd).
    static std::pair<Var<T>, Var<T>> compose(Var<T> mouth, Var<T> pose, Var<T> eye,
                                             Var<T> expression, Var<T> identity_latent) {
        Var<T> driving = add(add(mouth, pose), add(eye, expression));
        return {driving, add(identity_latent, driving)};
    }

    /// Per-level AdaIN scale/bias derived from the expression motion code.
    std::vector<std::pair<Var<T>, Var<T>>> eem_params(Graph<T>& g, Var<T> f_expression) const {
        std::vector<std::pair<Var<T>, Var<T>>> out;
        for (int l = 0; l < 4; ++l) {
            Var<T> s = add_const(eem_scale_[l].apply(g, f_expression), T(1));
            Var<T> b = eem_bias_[l].apply(g, f_expression);
            out.emplace_back(s, b);
        }
        return out;
    }

    std::vector<Var<T>> eem_modulate(Graph<T>& g, const std::vector<Var<T>>& pyramid,
                                     Var<T> f_expression) const {
        auto params = eem_params(g, f_expression);
        std::vector<Var<T>> out;
        out.reserve(pyramid.size());
        for (size_t l = 0; l < pyramid.size(); ++l)
            out.push_back(adain(pyramid[l], params[l].first, params[l].second,
                                static_cast<T>(cfg_.adain_eps)));
        return out;
    }

    /// Decode a composed latent with identity skip features. `pyramid` comes
    /// from encode() of the identity frame (optionally EEM-modulated).
    Var<T> generate(Graph<T>& g, Var<T> id_latent_composed,
                    const std::vector<Var<T>>& pyramid) const {
        if (pyramid.size() != 4) throw ShapeError("generate: pyramid must have 4 levels");
        int C = cfg_.base_channels;
        const int want[4] = {C, 2 * C, 4 * C, 8 * C};
        for (int l = 0; l < 4; ++l) {
            const Tensor<T>& p = pyramid[static_cast<size_t>(l)].val();
            int res = cfg_.resolution >> (l + 1);
            if (p.ndim() != 3 || p.dim(0) != want[l] || p.dim(1) != res || p.dim(2) != res)
                throw ShapeError("generate: pyramid level " + std::to_string(l) +
                                 " has shape " + shape_str(p.shape));
        }
        Var<T> h = gen_fc_.apply(g, id_latent_composed);
        h = reshape(h, {8 * C, spatial_, spatial_});
        for (int l = 0; l < 4; ++l) {
            h = concat_channels(h, pyramid[static_cast<size_t>(3 - l)]);
            h = relu(gen_up_[l].apply(g, h));
            if (l == 0) h = relu(add(h, gen_res_.apply(g, h)));
            h = upsample2x(h);
        }
        return sigmoid(gen_out_.apply(g, h));
    }

    /// Orthogonality penalty (sum of squared off-diagonals of Q Q^T); used in
    /// penalty mode to reproduce the soft-constraint ablation.
    Var<T> orthogonality_penalty(Graph<T>& g, Var<T> basis_rows) const {
        (void)g;
        Var<T> gram = matmul_nt(basis_rows, basis_rows);
        int n = gram.val().dim(0);
        Tensor<T> eye_mask = Tensor<T>::full({n, n}, T(1));
        for (int i = 0; i < n; ++i) eye_mask.at(i, i) = T(0);
        return sum(square(mul(gram, gram.g->input(eye_mask))));
    }

    /// Max |<b_i, b_j>| over all distinct base pairs of the current parameters.
    double max_offdiagonal() const {
        Graph<T> g(store_);
        Var<T> b = basis(g);
        const Tensor<T>& q = b.val();
        int n = q.dim(0), d = q.dim(1);
        double m = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                double acc = 0.0;
                for (int k = 0; k < d; ++k) acc += static_cast<double>(q.at(i, k)) * q.at(j, k);
                m = std::max(m, std::abs(acc));
            }
        return m;
    }

    static constexpr std::array<Component, 4> stack_order() {
        return {Component::pose, Component::mouth, Component::eye, Component::expression};
    }

    /// Parameter name prefixes of one navigation module (bank + head).
    static std::vector<std::string> navigation_prefixes(Component c) {
        return {std::string("banks.") + component_name(c),
                std::string("heads.") + component_name(c)};
    }

private:
    static size_t idx(Component c) { return static_cast<size_t>(c); }

    static Var<T> stack_all(const std::vector<Var<T>>& blocks) {
        std::vector<Var<T>> rows;
        for (auto& b : blocks) {
            int n = b.val().dim(0);
            for (int i = 0; i < n; ++i) rows.push_back(row(b, i));
        }
        return stack_rows(rows);
    }

    ModelConfig cfg_;
    ParamStore<T>* store_;
    int spatial_ = 4;

    Conv2dLayer<T> enc_in_;
    std::array<Conv2dLayer<T>, 3> enc_down_;
    std::array<Conv2dLayer<T>, 3> enc_res_;
    Linear<T> enc_fc1_, enc_fc2_;
    Linear<T> gen_fc_;
    std::array<Conv2dLayer<T>, 4> gen_up_;
    Conv2dLayer<T> gen_res_;
    Conv2dLayer<T> gen_out_;
    std::array<Linear<T>, 4> head_fc1_, head_fc2_;
    std::array<Linear<T>, 4> direct_;
    std::array<Linear<T>, 4> eem_scale_, eem_bias_;
};

}  // namespace edtalk::latentcore
