#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "edtalk/core/graph.hpp"
#include "edtalk/core/rng.hpp"
#include "edtalk/core/sha256.hpp"
#include "edtalk/core/tensor.hpp"

namespace edtalk {

template <typename T>
Tensor<T> randn_tensor(std::vector<int> shape, Rng& rng, T stddev = T(1)) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.normal()) * stddev;
    return t;
}

template <typename T>
void register_param(ParamStore<T>& ps, const std::string& name, Tensor<T> init) {
    ps.params[name] = std::move(init);
}

/// Fully connected layer wrapper; owns the parameter names, not the values.
template <typename T>
struct Linear {
    std::string wname, bname;
    int in = 0, out = 0;

    Linear() = default;
    Linear(ParamStore<T>& ps, const std::string& name, int in_, int out_, Rng& rng,
           T gain = T(1)) : wname(name + ".w"), bname(name + ".b"), in(in_), out(out_) {
        T std = gain * std::sqrt(T(1) / static_cast<T>(in_));
        register_param(ps, wname, randn_tensor<T>({out_, in_}, rng, std));
        register_param(ps, bname, Tensor<T>::zeros({out_}));
    }

    Var<T> apply(Graph<T>& g, Var<T> x) const {
        return linear(x, g.param(wname), g.param(bname));
    }
};

template <typename T>
struct Conv2dLayer {
    std::string wname, bname;
    int in = 0, out = 0, k = 3, stride = 1, pad = 1;

    Conv2dLayer() = default;
    Conv2dLayer(ParamStore<T>& ps, const std::string& name, int in_, int out_, int k_,
                int stride_, int pad_, Rng& rng, T gain = T(1))
        : wname(name + ".w"), bname(name + ".b"), in(in_), out(out_), k(k_), stride(stride_),
          pad(pad_) {
        T std = gain * std::sqrt(T(2) / static_cast<T>(in_ * k_ * k_));
        register_param(ps, wname, randn_tensor<T>({out_, in_, k_, k_}, rng, std));
        register_param(ps, bname, Tensor<T>::zeros({out_}));
    }

    Var<T> apply(Graph<T>& g, Var<T> x) const {
        return conv2d(x, g.param(wname), g.param(bname), stride, pad);
    }
};

template <typename T>
struct Conv1dLayer {
    std::string wname, bname;
    int in = 0, out = 0, k = 5;

    Conv1dLayer() = default;
    Conv1dLayer(ParamStore<T>& ps, const std::string& name, int in_, int out_, int k_, Rng& rng)
        : wname(name + ".w"), bname(name + ".b"), in(in_), out(out_), k(k_) {
        T std = std::sqrt(T(2) / static_cast<T>(in_ * k_));
        register_param(ps, wname, randn_tensor<T>({out_, in_, k_}, rng, std));
        register_param(ps, bname, Tensor<T>::zeros({out_}));
    }

    Var<T> apply(Graph<T>& g, Var<T> x) const {
        return conv1d_same(x, g.param(wname), g.param(bname));
    }
};

/// Single-layer LSTM unrolled over a sequence of [I] vectors.
template <typename T>
struct LstmLayer {
    std::string wx, wh, bname;
    int in = 0, hidden = 0;

    LstmLayer() = default;
    LstmLayer(ParamStore<T>& ps, const std::string& name, int in_, int hidden_, Rng& rng)
        : wx(name + ".wx"), wh(name + ".wh"), bname(name + ".b"), in(in_), hidden(hidden_) {
        T std = std::sqrt(T(1) / static_cast<T>(in_ + hidden_));
        register_param(ps, wx, randn_tensor<T>({4 * hidden_, in_}, rng, std));
        register_param(ps, wh, randn_tensor<T>({4 * hidden_, hidden_}, rng, std));
        Tensor<T> b = Tensor<T>::zeros({4 * hidden_});
        for (int i = hidden_; i < 2 * hidden_; ++i) b[i] = T(1);  // forget gate bias
        register_param(ps, bname, b);
    }

    std::vector<Var<T>> apply(Graph<T>& g, const std::vector<Var<T>>& xs) const {
        Var<T> wxv = g.param(wx), whv = g.param(wh), bv = g.param(bname);
        Var<T> h = g.input(Tensor<T>::zeros({hidden}));
        Var<T> c = g.input(Tensor<T>::zeros({hidden}));
        std::vector<Var<T>> out;
        out.reserve(xs.size());
        for (auto& x : xs) {
            Var<T> gates = add(linear(x, wxv, bv), reshape(matmul_nt(reshape(h, {1, hidden}), whv),
                                                           {4 * hidden}));
            Var<T> ig = sigmoid(slice_flat(gates, 0, hidden));
            Var<T> fg = sigmoid(slice_flat(gates, hidden, hidden));
            Var<T> gg = tanh_op(slice_flat(gates, 2 * hidden, hidden));
            Var<T> og = sigmoid(slice_flat(gates, 3 * hidden, hidden));
            c = add(mul(fg, c), mul(ig, gg));
            h = mul(og, tanh_op(c));
            out.push_back(h);
        }
        return out;
    }
};

/// Adam with per-name first/second moment state. Frozen names are skipped.
template <typename T>
class Adam {
public:
    T lr = T(1e-3), beta1 = T(0.9), beta2 = T(0.999), eps = T(1e-8);

    explicit Adam(T lr_ = T(1e-3)) : lr(lr_) {}

    void step(ParamStore<T>& ps, const std::map<std::string, Tensor<T>>& grads) {
        ++t_;
        T b1t = T(1) - std::pow(beta1, static_cast<T>(t_));
        T b2t = T(1) - std::pow(beta2, static_cast<T>(t_));
        for (auto& [name, gr] : grads) {
            if (ps.is_frozen(name)) continue;
            Tensor<T>& p = ps.at(name);
            Tensor<T>& m = state(m_, name, p.shape);
            Tensor<T>& v = state(v_, name, p.shape);
            for (int64_t i = 0; i < p.size(); ++i) {
                m[i] = beta1 * m[i] + (T(1) - beta1) * gr[i];
                v[i] = beta2 * v[i] + (T(1) - beta2) * gr[i] * gr[i];
                T mh = m[i] / b1t, vh = v[i] / b2t;
                p[i] -= lr * mh / (std::sqrt(vh) + eps);
            }
        }
    }

    void reset(const std::string& prefix) {
        for (auto it = m_.begin(); it != m_.end();)
            it = (it->first.rfind(prefix, 0) == 0) ? m_.erase(it) : std::next(it);
        for (auto it = v_.begin(); it != v_.end();)
            it = (it->first.rfind(prefix, 0) == 0) ? v_.erase(it) : std::next(it);
    }

private:
    Tensor<T>& state(std::map<std::string, Tensor<T>>& m, const std::string& name,
                     const std::vector<int>& shape) {
        auto it = m.find(name);
        if (it == m.end()) it = m.emplace(name, Tensor<T>::zeros(shape)).first;
        return it->second;
    }

    std::map<std::string, Tensor<T>> m_, v_;
    int64_t t_ = 0;
};

/// Accumulates per-sample gradient maps (deterministic order reduction).
template <typename T>
struct GradAccum {
    std::map<std::string, Tensor<T>> sums;

    void add(const std::map<std::string, Tensor<T>>& grads, T scale = T(1)) {
        for (auto& [name, gr] : grads) {
            auto it = sums.find(name);
            if (it == sums.end()) it = sums.emplace(name, Tensor<T>::zeros(gr.shape)).first;
            for (int64_t i = 0; i < gr.size(); ++i) it->second[i] += gr[i] * scale;
        }
    }
};

/// SHA-256 over (name, shape, raw values) of every parameter under a prefix.
template <typename T>
std::string param_hash(const ParamStore<T>& ps, const std::string& prefix = "") {
    Sha256 h;
    for (auto& [name, tensor] : ps.params) {
        if (!prefix.empty() && name.rfind(prefix, 0) != 0) continue;
        h.update(name.data(), name.size());
        h.update(tensor.shape.data(), tensor.shape.size() * sizeof(int));
        h.update(tensor.data.data(), tensor.data.size() * sizeof(T));
    }
    return h.hex_digest();
}

}  // namespace edtalk
