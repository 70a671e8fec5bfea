#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "edtalk/core/errors.hpp"
#include "edtalk/core/tensor.hpp"

namespace edtalk {

/// Named parameter registry shared by a model and its optimizer. Frozen
/// parameters enter graphs as constants, so no gradient is ever produced
/// for them.
template <typename T>
struct ParamStore {
    std::map<std::string, Tensor<T>> params;
    std::set<std::string> frozen;

    Tensor<T>& at(const std::string& name) {
        auto it = params.find(name);
        if (it == params.end()) throw ConfigError("unknown parameter: " + name);
        return it->second;
    }
    const Tensor<T>& at(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw ConfigError("unknown parameter: " + name);
        return it->second;
    }
    bool is_frozen(const std::string& name) const { return frozen.count(name) > 0; }
    void freeze_prefix(const std::string& prefix) {
        for (auto& [k, v] : params)
            if (k.rfind(prefix, 0) == 0) frozen.insert(k);
    }
    std::vector<std::string> names_with_prefix(const std::string& prefix) const {
        std::vector<std::string> out;
        for (auto& [k, v] : params)
            if (k.rfind(prefix, 0) == 0) out.push_back(k);
        return out;
    }
};

template <typename T>
class Graph;

/// Handle to a node in a Graph tape.
template <typename T>
struct Var {
    Graph<T>* g = nullptr;
    int id = -1;

    const Tensor<T>& val() const;
    const std::vector<int>& shape() const { return val().shape; }
    int64_t size() const { return val().size(); }
    bool valid() const { return g != nullptr && id >= 0; }
};

/// Reverse-mode tape. Build a forward expression with the free functions
/// below, then call backward() once on a scalar output.
template <typename T>
class Graph {
public:
    Graph() = default;
    explicit Graph(const ParamStore<T>* store) : store_(store) {}

    Var<T> input(Tensor<T> v) { return make(std::move(v), false); }
    Var<T> scalar(T v) { return input(Tensor<T>::scalar(v)); }

    /// Explicit differentiable leaf with a caller-provided value.
    Var<T> leaf(Tensor<T> v) { return make(std::move(v), true); }

    /// Bind a store parameter as a leaf (constant when frozen).
    Var<T> param(const std::string& name) {
        if (!store_) throw ConfigError("graph built without a parameter store");
        auto it = param_nodes_.find(name);
        if (it != param_nodes_.end()) return Var<T>{this, it->second};
        bool needs = !store_->is_frozen(name);
        Var<T> v = make(store_->at(name), needs);
        param_nodes_[name] = v.id;
        return v;
    }

    const Tensor<T>& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
    bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

    /// Gradient of the last backward() target w.r.t. node `v` (zeros if unused).
    Tensor<T> grad_of(Var<T> v) const {
        const Node& n = nodes_[static_cast<size_t>(v.id)];
        if (n.grad_live) return n.grad;
        return Tensor<T>::zeros(n.value.shape);
    }

    void backward(Var<T> loss) {
        if (loss.g != this) throw ConfigError("backward: var from another graph");
        Node& ln = nodes_[static_cast<size_t>(loss.id)];
        if (ln.value.size() != 1) throw ShapeError("backward target must be scalar");
        ensure_grad(loss.id)[0] = T(1);
        for (int id = loss.id; id >= 0; --id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (n.grad_live && n.back) n.back();
        }
    }

    /// Gradients keyed by parameter name (absent => zero / frozen).
    std::map<std::string, Tensor<T>> param_grads() const {
        std::map<std::string, Tensor<T>> out;
        for (auto& [name, id] : param_nodes_) {
            const Node& n = nodes_[static_cast<size_t>(id)];
            if (n.needs_grad && n.grad_live) out.emplace(name, n.grad);
        }
        return out;
    }

    size_t num_nodes() const { return nodes_.size(); }

    // -- op construction internals ------------------------------------------

    Var<T> make(Tensor<T> v, bool needs_grad) {
        nodes_.push_back(Node{std::move(v), Tensor<T>(), nullptr, needs_grad, false});
        return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
    }

    void set_back(Var<T> v, std::function<void()> fn) {
        nodes_[static_cast<size_t>(v.id)].back = std::move(fn);
    }

    Tensor<T>& ensure_grad(int id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.grad_live) {
            n.grad = Tensor<T>::zeros(n.value.shape);
            n.grad_live = true;
        }
        return n.grad;
    }

    bool grad_live(int id) const { return nodes_[static_cast<size_t>(id)].grad_live; }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        std::function<void()> back;
        bool needs_grad = false;
        bool grad_live = false;
    };

    std::vector<Node> nodes_;
    const ParamStore<T>* store_ = nullptr;
    std::map<std::string, int> param_nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::val() const {
    return g->value(id);
}

// ---------------------------------------------------------------------------
// Elementwise and scalar ops
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void check_same_graph(Var<T> a, Var<T> b) {
    if (a.g != b.g) throw ConfigError("vars belong to different graphs");
}

template <typename T, typename Fwd, typename Bwd>
Var<T> unary_op(Var<T> a, Fwd fwd, Bwd dydx_from) {
    Graph<T>& g = *a.g;
    const Tensor<T>& x = a.val();
    Tensor<T> y(x.shape);
    for (int64_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
    Var<T> out = g.make(std::move(y), g.needs_grad(a.id));
    if (g.needs_grad(a.id)) {
        g.set_back(out, [&g, ai = a.id, oi = out.id, dydx_from]() {
            const Tensor<T>& go = g.value(oi);  // y
            const Tensor<T>& gx = g.value(ai);  // x
            const Tensor<T>& dy = g.grad_of(Var<T>{&g, oi});
            Tensor<T>& da = g.ensure_grad(ai);
            for (int64_t i = 0; i < da.size(); ++i) da[i] += dy[i] * dydx_from(gx[i], go[i]);
        });
    }
    return out;
}

}  // namespace detail

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    detail::check_same_graph(a, b);
    Graph<T>& g = *a.g;
    const Tensor<T>&x = a.val(), &y = b.val();
    if (!x.same_shape(y)) throw ShapeError("add: shape mismatch " + shape_str(x.shape) + " vs " + shape_str(y.shape));
    Tensor<T> out(x.shape);
    for (int64_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
    bool ng = g.needs_grad(a.id) || g.needs_grad(b.id);
    Var<T> o = g.make(std::move(out), ng);
    if (ng)
        g.set_back(o, [&g, ai = a.id, bi = b.id, oi = o.id]() {
            const Tensor<T>& dy = g.grad_of(Var<T>{&g, oi});
            if (g.needs_grad(ai)) {
                Tensor<T>& da = g.ensure_grad(ai);
                for (int64_t i = 0; i < da.size(); ++i) da[i] += dy[i];
            }
            if (g.needs_grad(bi)) {
                Tensor<T>& db = g.ensure_grad(bi);
                for (int64_t i = 0; i < db.size(); ++i) db[i] += dy[i];
            }
        });
    return o;
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    detail::check_same_graph(a, b);
    Graph<T>& g = *a.g;
    const Tensor<T>&x = a.val(), &y = b.val();
    if (!x.same_shape(y)) throw ShapeError("sub: shape mismatch " + shape_str(x.shape) + " vs " + shape_str(y.shape));
    Tensor<T> out(x.shape);
    for (int64_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
    bool ng = g.needs_grad(a.id) || g.needs_grad(b.id);
    Var<T> o = g.make(std::move(out), ng);
    if (ng)
        g.set_back(o, [&g, ai = a.id, bi = b.id, oi = o.id]() {
            const Tensor<T>& dy = g.grad_of(Var<T>{&g, oi});
            if (g.needs_grad(ai)) {
                Tensor<T>& da = g.ensure_grad(ai);
                for (int64_t i = 0; i < da.size(); ++i) da[i] += dy[i];
            }
            if (g.needs_grad(bi)) {
                Tensor<T>& db = g.ensure_grad(bi);
                for (int64_t i = 0; i < db.size(); ++i) db[i] -= dy[i];
            }
        });
    return o;
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    detail::check_same_graph(a, b);
    Graph<T>& g = *a.g;
    const Tensor<T>&x = a.val(), &y = b.val();
    if (!x.same_shape(y)) throw ShapeError("mul: shape mismatch");
    Tensor<T> out(x.shape);
    for (int64_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
    bool ng = g.needs_grad(a.id) || g.needs_grad(b.id);
    Var<T> o = g.make(std::move(out), ng);
    if (ng)
        g.set_back(o, [&g, ai = a.id, bi = b.id, oi = o.id]() {
            const Tensor<T>& dy = g.grad_of(Var<T>{&g, oi});
            const Tensor<T>&xv = g.value(ai), &yv = g.value(bi);
            if (g.needs_grad(ai)) {
                Tensor<T>& da = g.ensure_grad(ai);
                for (int64_t i = 0; i < da.size(); ++i) da[i] += dy[i] * yv[i];
            }
            if (g.needs_grad(bi)) {
                Tensor<T>& db = g.ensure_grad(bi);
                for (int64_t i = 0; i < db.size(); ++i) db[i] += dy[i] * xv[i];
            }
        });
    return o;
}

template <typename T>
Var<T> scale(Var<T> a, T c) {
    return detail::unary_op(a, [c](T x) { return x * c; }, [c](T, T) { return c; });
}

template <typename T>
Var<T> add_const(Var<T> a, T c) {
    return detail::unary_op(a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> neg(Var<T> a) {
    return scale(a, T(-1));
}

template <typename T>
Var<T> relu(Var<T> a) {
    return detail::unary_op(a, [](T x) { return x > 0 ? x : T(0); },
                            [](T x, T) { return x > 0 ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(Var<T> a, T slope = T(0.2)) {
    return detail::unary_op(a, [slope](T x) { return x > 0 ? x : slope * x; },
                            [slope](T x, T) { return x > 0 ? T(1) : slope; });
}

template <typename T>
Var<T> tanh_op(Var<T> a) {
    return detail::unary_op(a, [](T x) { return std::tanh(x); },
                            [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
    return detail::unary_op(a, [](T x) { return x >= 0 ? T(1) / (T(1) + std::exp(-x))
                                                       : std::exp(x) / (T(1) + std::exp(x)); },
                            [](T, T y) { return y * (T(1) - y); });
}

/// log(sigmoid(x)) in a form stable for large |x|.
template <typename T>
Var<T> log_sigmoid(Var<T> a) {
    return detail::unary_op(
        a,
        [](T x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); },
        [](T x, T) {
            // d/dx log sigmoid(x) = 1 - sigmoid(x) = sigmoid(-x)
            return x >= 0 ? std::exp(-x) / (T(1) + std::exp(-x)) : T(1) / (T(1) + std::exp(x));
        });
}

template <typename T>
Var<T> exp_op(Var<T> a) {
    return detail::unary_op(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log_op(Var<T> a) {
    return detail::unary_op(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Var<T> sqrt_op(Var<T> a) {
    return detail::unary_op(a, [](T x) { return std::sqrt(x); },
                            [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Var<T> abs_op(Var<T> a) {
    return detail::unary_op(a, [](T x) { return std::abs(x); },
                            [](T x, T) { return x > 0 ? T(1) : (x < 0 ? T(-1) : T(0)); });
}

template <typename T>
Var<T> square(Var<T> a) {
    return detail::unary_op(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Var<T> clamp_min(Var<T> a, T lo) {
    return detail::unary_op(a, [lo](T x) { return x < lo ? lo : x; },
                            [lo](T x, T) { return x < lo ? T(0) : T(1); });
}

template <typename T>
Var<T> clamp_op(Var<T> a, T lo, T hi) {
    return detail::unary_op(a, [lo, hi](T x) { return x < lo ? lo : (x > hi ? hi : x); },
                            [lo, hi](T x, T) { return (x < lo || x > hi) ? T(0) : T(1); });
}

template <typename T>
Var<T> recip(Var<T> a) {
    return detail::unary_op(a, [](T x) { return T(1) / x; },
                            [](T x, T) { return T(-1) / (x * x); });
}

/// Multiply a tensor by a scalar-valued node ([1]).
template <typename T>
Var<T> smul(Var<T> a, Var<T> s) {
    detail::check_same_graph(a, s);
    Graph<T>& g = *a.g;
    const Tensor<T>& x = a.val();
    if (s.val().size() != 1) throw ShapeError("smul: scale must be scalar");
    T sv = s.val()[0];
    Tensor<T> y(x.shape);
    for (int64_t i = 0; i < x.size(); ++i) y[i] = x[i] * sv;
    bool ng = g.needs_grad(a.id) || g.needs_grad(s.id);
    Var<T> o = g.make(std::move(y), ng);
    if (ng)
        g.set_back(o, [&g, ai = a.id, si = s.id, oi = o.id]() {
            const Tensor<T>& dy = g.grad_of(Var<T>{&g, oi});
            const Tensor<T>& xv = g.value(ai);
            T sv2 = g.value(si)[0];
            if (g.needs_grad(ai)) {
                Tensor<T>& da = g.ensure_grad(ai);
                for (int64_t i = 0; i < da.size(); ++i) da[i] += dy[i] * sv2;
            }
            if (g.needs_grad(si)) {
                Tensor<T>& ds = g.ensure_grad(si);
                T acc = 0;
                for (int64_t i = 0; i < xv.size(); ++i) acc += dy[i] * xv[i];
                ds[0] += acc;
            }
        });
    return o;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Var<T> sum(Var<T> a) {
    Graph<T>& g = *a.g;
    const Tensor<T>& x = a.val();
    T s = 0;
    for (int64_t i = 0; i < x.size(); ++i) s += x[i];
    Var<T> o = g.make(Tensor<T>::scalar(s), g.needs_grad(a.id));
    if (g.needs_grad(a.id))
        g.set_back(o, [&g, ai = a.id, oi = o.id]() {
            T d = g.grad_of(Var<T>{&g, oi})[0];
            Tensor<T>& da = g.ensure_grad(ai);
            for (int64_t i = 0; i < da.size(); ++i) da[i] += d;
        });
    return o;
}

template <typename T>
Var<T> mean(Var<T> a) {
    return scale(sum(a), T(1) / static_cast<T>(a.val().size()));
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> reshape(Var<T> a, std::vector<int> shape) {
    Graph<T>& g = *a.g;
    Tensor<T> y = a.val().reshaped(shape);
    Var<T> o = g.make(std::move(y), g.needs_grad(a.id));
    if (g.needs_grad(a.id))
        g.set_back(o, [&g, ai = a.id, oi = o.id]() {
            const Tensor<T>& dy = g.grad_of(Var<T>{&g, oi});
            Tensor<T>& da = g.ensure_grad(ai);
            for (int64_t i = 0; i < da.size(); ++i) da[i] += dy[i];
        });
    return o;
}

/// Flat slice [off, off+len) of the underlying buffer, returned as [len].
template <typename T>
Var<T> slice_flat(Var<T> a, int64_t off, int64_t len) {
    Graph<T>& g = *a.g;
    const Tensor<T>& x = a.val();
    if (off < 0 || off + len > x.size()) throw RangeError("slice_flat: out of range");
    Tensor<T> y({static_cast<int>(len)});
    for (int64_t i = 0; i < len; ++i) y[i] = x[off + i];
    Var<T> o = g.make(std::move(y), g.needs_grad(a.id));
    if (g.needs_grad(a.id))
        g.set_back(o, [&g, ai = a.id, oi = o.id, off, len]() {
            const Tensor<T>& dy = g.grad_of(Var<T>{&g, oi});
            Tensor<T>& da = g.ensure_grad(ai);
            for (int64_t i = 0; i < len; ++i) da[off + i] += dy[i];
        });
    return o;
}

/// Rows [r0, r0+rows) of a [R, D] matrix.
template <typename T>
Var<T> slice_rows(Var<T> a, int r0, int rows) {
    const Tensor<T>& x = a.val();
    if (x.ndim() != 2) throw ShapeError("slice_rows: need 2-d input");
    Var<T> flat = slice_flat(a, static_cast<int64_t>(r0) * x.dim(1),
                             static_cast<int64_t>(rows) * x.dim(1));
    return reshape(flat, {rows, x.dim(1)});
}

template <typename T>
Var<T> row(Var<T> a, int r) {
    const Tensor<T>& x = a.val();
    if (x.ndim() != 2) throw ShapeError("row: need 2-d input");
    return slice_flat(a, static_cast<int64_t>(r) * x.dim(1), x.dim(1));
}

/// Concatenate 1-d vectors.
template <typename T>
Var<T> concat_vec(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_vec: empty");
    Graph<T>& g = *parts[0].g;
    int total = 0;
    bool ng = false;
    for (auto& p : parts) {
        total += static_cast<int>(p.val().size());
        ng = ng || g.needs_grad(p.id);
    }
    Tensor<T> y({total});
    int64_t off = 0;
    for (auto& p : parts) {
        const Tensor<T>& x = p.val();
        for (int64_t i = 0; i < x.size(); ++i) y[off + i] = x[i];
        off += x.size();
    }
    Var<T> o = g.make(std::move(y), ng);
    if (ng) {
        std::vector<int> ids;
        for (auto& p : parts) ids.push_back(p.id);
        g.set_back(o, [&g, ids, oi = o.id]() {
            const Tensor<T>& dy = g.grad_of(Var<T>{&g, oi});
            int64_t off2 = 0;
            for (int id : ids) {
                int64_t n = g.value(id).size();
                if (g.needs_grad(id)) {
                    Tensor<T>& da = g.ensure_grad(id);
                    for (int64_t i = 0; i < n; ++i) da[i] += dy[off2 + i];
                }
                off2 += n;
            }
        });
    }
    return o;
}

/// Stack 1-d vectors of equal length D into [n, D].
template <typename T>
Var<T> stack_rows(const std::vector<Var<T>>& rows_in) {
    Var<T> flat = concat_vec(rows_in);
    int d = static_cast<int>(rows_in[0].val().size());
    return reshape(flat, {static_cast<int>(rows_in.size()), d});
}

/// Concatenate CHW maps along the channel axis.
template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
    Graph<T>& g = *a.g;
    const Tensor<T>&x = a.val(), &y = b.val();
    if (x.ndim() != 3 || y.ndim() != 3 || x.dim(1) != y.dim(1) || x.dim(2) != y.dim(2))
        throw ShapeError("concat_channels: spatial mismatch");
    Tensor<T> out({x.dim(0) + y.dim(0), x.dim(1), x.dim(2)});
    std::copy(x.data.begin(), x.data.end(), out.data.begin());
    std::copy(y.data.begin(), y.data.end(), out.data.begin() + x.size());
    bool ng = g.needs_grad(a.id) || g.needs_grad(b.id);
    Var<T> o = g.make(std::move(out), ng);
    if (ng)
        g.set_back(o, [&g, ai = a.id, bi = b.id, oi = o.id]() {
            const Tensor<T>& dy = g.grad_of(Var<T>{&g, oi});
            int64_t na = g.value(ai).size();
            if (g.needs_grad(ai)) {
                Tensor<T>& da = g.ensure_grad(ai);
                for (int64_t i = 0; i < na; ++i) da[i] += dy[i];
            }
            if (g.needs_grad(bi)) {
                Tensor<T>& db = g.ensure_grad(bi);
                for (int64_t i = 0; i < db.size(); ++i) db[i] += dy[na + i];
            }
        });
    return o;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using CMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace detail

/// A[m,k] * B[k,n] -> [m,n]
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    detail::check_same_graph(a, b);
    Graph<T>& g = *a.g;
    const Tensor<T>&x = a.val(), &y = b.val();
    if (x.ndim() != 2 || y.ndim() != 2 || x.dim(1) != y.dim(0))
        throw ShapeError("matmul: incompatible " + shape_str(x.shape) + " x " + shape_str(y.shape));
    int m = x.dim(0), k = x.dim(1), n = y.dim(1);
    Tensor<T> out({m, n});
    {
        detail::CMatMap<T> A(x.data.data(), m, k), B(y.data.data(), k, n);
        detail::MatMap<T> C(out.data.data(), m, n);
        C.noalias() = A * B;
    }
    bool ng = g.needs_grad(a.id) || g.needs_grad(b.id);
    Var<T> o = g.make(std::move(out), ng);
    if (ng)
        g.set_back(o, [&g, ai = a.id, bi = b.id, oi = o.id, m, k, n]() {
            const Tensor<T>& dy = g.grad_of(Var<T>{&g, oi});
            detail::CMatMap<T> dY(dy.data.data(), m, n);
            if (g.needs_grad(ai)) {
                detail::CMatMap<T> B(g.value(bi).data.data(), k, n);
                detail::MatMap<T> dA(g.ensure_grad(ai).data.data(), m, k);
                dA.noalias() += dY * B.transpose();
            }
            if (g.needs_grad(bi)) {
                detail::CMatMap<T> A(g.value(ai).data.data(), m, k);
                detail::MatMap<T> dB(g.ensure_grad(bi).data.data(), k, n);
                dB.noalias() += A.transpose() * dY;
            }
        });
    return o;
}

/// A[m,k] * B[n,k]^T -> [m,n]
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
    detail::check_same_graph(a, b);
    Graph<T>& g = *a.g;
    const Tensor<T>&x = a.val(), &y = b.val();
    if (x.ndim() != 2 || y.ndim() != 2 || x.dim(1) != y.dim(1))
        throw ShapeError("matmul_nt: incompatible shapes");
    int m = x.dim(0), k = x.dim(1), n = y.dim(0);
    Tensor<T> out({m, n});
    {
        detail::CMatMap<T> A(x.data.data(), m, k), B(y.data.data(), n, k);
        detail::MatMap<T> C(out.data.data(), m, n);
        C.noalias() = A * B.transpose();
    }
    bool ng = g.needs_grad(a.id) || g.needs_grad(b.id);
    Var<T> o = g.make(std::move(out), ng);
    if (ng)
        g.set_back(o, [&g, ai = a.id, bi = b.id, oi = o.id, m, k, n]() {
            const Tensor<T>& dy = g.grad_of(Var<T>{&g, oi});
            detail::CMatMap<T> dY(dy.data.data(), m, n);
            if (g.needs_grad(ai)) {
                detail::CMatMap<T> B(g.value(bi).data.data(), n, k);
                detail::MatMap<T> dA(g.ensure_grad(ai).data.data(), m, k);
                dA.noalias() += dY * B;
            }
            if (g.needs_grad(bi)) {
                detail::CMatMap<T> A(g.value(ai).data.data(), m, k);
                detail::MatMap<T> dB(g.ensure_grad(bi).data.data(), n, k);
                dB.noalias() += dY.transpose() * A;
            }
        });
    return o;
}

/// X[m,n] + b[n] broadcast over rows.
template <typename T>
Var<T> add_rowvec(Var<T> a, Var<T> b) {
    detail::check_same_graph(a, b);
    Graph<T>& g = *a.g;
    const Tensor<T>&x = a.val(), &v = b.val();
    if (x.ndim() != 2 || v.ndim() != 1 || x.dim(1) != v.dim(0))
        throw ShapeError("add_rowvec: incompatible shapes");
    int m = x.dim(0), n = x.dim(1);
    Tensor<T> out(x.shape);
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c) out.at(r, c) = x.at(r, c) + v[c];
    bool ng = g.needs_grad(a.id) || g.needs_grad(b.id);
    Var<T> o = g.make(std::move(out), ng);
    if (ng)
        g.set_back(o, [&g, ai = a.id, bi = b.id, oi = o.id, m, n]() {
            const Tensor<T>& dy = g.grad_of(Var<T>{&g, oi});
            if (g.needs_grad(ai)) {
                Tensor<T>& da = g.ensure_grad(ai);
                for (int64_t i = 0; i < da.size(); ++i) da[i] += dy[i];
            }
            if (g.needs_grad(bi)) {
                Tensor<T>& db = g.ensure_grad(bi);
                for (int r = 0; r < m; ++r)
                    for (int c = 0; c < n; ++c) db[c] += dy.at(r, c);
            }
        });
    return o;
}

/// Fully connected layer: x [N,I] (or [I]) with W [O,I], b [O].
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
    bool vec = x.val().ndim() == 1;
    Var<T> x2 = vec ? reshape(x, {1, static_cast<int>(x.val().size())}) : x;
    Var<T> y = add_rowvec(matmul_nt(x2, w), b);
    return vec ? reshape(y, {w.val().dim(0)}) : y;
}

template <typename T>
Var<T> dot(Var<T> a, Var<T> b) {
    return sum(mul(a, b));
}

template <typename T>
Var<T> norm2(Var<T> a, T eps = T(1e-12)) {
    return sqrt_op(add_const(sum(square(a)), eps));
}

/// Cosine similarity of two vectors with denominator guard.
template <typename T>
Var<T> cosine(Var<T> a, Var<T> b, T eps = T(1e-8)) {
    Var<T> num = dot(a, b);
    Var<T> den = clamp_min(mul(norm2(a), norm2(b)), eps);
    return mul(num, detail::unary_op(den, [](T x) { return T(1) / x; },
                                     [](T x, T) { return T(-1) / (x * x); }));
}

// ---------------------------------------------------------------------------
// Image ops (CHW)
// ---------------------------------------------------------------------------

/// 2-d convolution, zero padding. x [C,H,W], w [O,C,K,K], b [O].
template <typename T>
Var<T> conv2d(Var<T> xv, Var<T> wv, Var<T> bv, int stride, int pad) {
    Graph<T>& g = *xv.g;
    const Tensor<T>&x = xv.val(), &w = wv.val(), &b = bv.val();
    if (x.ndim() != 3 || w.ndim() != 4) throw ShapeError("conv2d: need CHW input, OCKK weight");
    int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    int O = w.dim(0), K = w.dim(2);
    if (w.dim(1) != C) throw ShapeError("conv2d: channel mismatch");
    if (b.size() != O) throw ShapeError("conv2d: bias size mismatch");
    int HO = (H + 2 * pad - K) / stride + 1;
    int WO = (W + 2 * pad - K) / stride + 1;
    if (HO <= 0 || WO <= 0) throw ShapeError("conv2d: output would be empty");

    int ck2 = C * K * K, hw = HO * WO;
    auto col = std::make_shared<Tensor<T>>(std::vector<int>{ck2, hw});
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < K; ++ky)
            for (int kx = 0; kx < K; ++kx) {
                T* dst = col->data.data() + (static_cast<size_t>(c) * K * K + ky * K + kx) * hw;
                for (int oy = 0; oy < HO; ++oy) {
                    int iy = oy * stride - pad + ky;
                    for (int ox = 0; ox < WO; ++ox) {
                        int ix = ox * stride - pad + kx;
                        dst[oy * WO + ox] = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                                ? x.at(c, iy, ix)
                                                : T(0);
                    }
                }
            }

    Tensor<T> out({O, HO, WO});
    {
        detail::CMatMap<T> Wm(w.data.data(), O, ck2), Cm(col->data.data(), ck2, hw);
        detail::MatMap<T> Y(out.data.data(), O, hw);
        Y.noalias() = Wm * Cm;
        for (int o = 0; o < O; ++o) Y.row(o).array() += b[o];
    }
    bool ng = g.needs_grad(xv.id) || g.needs_grad(wv.id) || g.needs_grad(bv.id);
    Var<T> ov = g.make(std::move(out), ng);
    if (ng)
        g.set_back(ov, [&g, xi = xv.id, wi = wv.id, bi = bv.id, oi = ov.id, col, C, H, W, O, K,
                        HO, WO, stride, pad]() {
            int ck2b = C * K * K, hwb = HO * WO;
            const Tensor<T>& dy = g.grad_of(Var<T>{&g, oi});
            detail::CMatMap<T> dY(dy.data.data(), O, hwb);
            if (g.needs_grad(bi)) {
                Tensor<T>& db = g.ensure_grad(bi);
                for (int o = 0; o < O; ++o) db[o] += dY.row(o).sum();
            }
            if (g.needs_grad(wi)) {
                detail::MatMap<T> dW(g.ensure_grad(wi).data.data(), O, ck2b);
                detail::CMatMap<T> Cm(col->data.data(), ck2b, hwb);
                dW.noalias() += dY * Cm.transpose();
            }
            if (g.needs_grad(xi)) {
                Tensor<T> dcol({ck2b, hwb});
                detail::CMatMap<T> Wm(g.value(wi).data.data(), O, ck2b);
                detail::MatMap<T> dC(dcol.data.data(), ck2b, hwb);
                dC.noalias() = Wm.transpose() * dY;
                Tensor<T>& dx = g.ensure_grad(xi);
                for (int c = 0; c < C; ++c)
                    for (int ky = 0; ky < K; ++ky)
                        for (int kx = 0; kx < K; ++kx) {
                            const T* src =
                                dcol.data.data() +
                                (static_cast<size_t>(c) * K * K + ky * K + kx) * hwb;
                            for (int oy = 0; oy < HO; ++oy) {
                                int iy = oy * stride - pad + ky;
                                if (iy < 0 || iy >= H) continue;
                                for (int ox = 0; ox < WO; ++ox) {
                                    int ix = ox * stride - pad + kx;
                                    if (ix < 0 || ix >= W) continue;
                                    dx.at(c, iy, ix) += src[oy * WO + ox];
                                }
                            }
                        }
            }
        });
    return ov;
}

/// 1-d convolution over time with same padding. x [C,Tn], w [O,C,K], b [O].
template <typename T>
Var<T> conv1d_same(Var<T> xv, Var<T> wv, Var<T> bv) {
    Graph<T>& g = *xv.g;
    const Tensor<T>&x = xv.val(), &w = wv.val();
    if (x.ndim() != 2 || w.ndim() != 3) throw ShapeError("conv1d: need [C,T] input, [O,C,K] weight");
    int C = x.dim(0), Tn = x.dim(1), O = w.dim(0), K = w.dim(2);
    if (w.dim(1) != C) throw ShapeError("conv1d: channel mismatch");
    int pad = K / 2;
    Var<T> x3 = reshape(xv, {C, 1, Tn});
    Var<T> w4 = reshape(wv, {O, C, 1, K});
    // reuse conv2d with a 1xK kernel; pad only along time
    // conv2d pads both dims, so pad height must be zero: emulate by K=1 in height.
    const Tensor<T>& xt = x3.val();
    (void)xt;
    // conv2d with kernel [O,C,1,K], stride 1, pad handled manually below.
    // Manual time padding keeps height untouched.
    Tensor<T> padded({C, 1, Tn + 2 * pad});
    for (int c = 0; c < C; ++c)
        for (int t = 0; t < Tn; ++t) padded.at(c, 0, t + pad) = x.at(c, t);
    Var<T> xp = g.make(std::move(padded), g.needs_grad(xv.id));
    if (g.needs_grad(xv.id))
        g.set_back(xp, [&g, ai = xv.id, oi = xp.id, C, Tn, pad]() {
            const Tensor<T>& dy = g.grad_of(Var<T>{&g, oi});
            Tensor<T>& da = g.ensure_grad(ai);
            for (int c = 0; c < C; ++c)
                for (int t = 0; t < Tn; ++t) da.at(c, t) += dy.at(c, 0, t + pad);
        });
    Var<T> y = conv2d(xp, w4, bv, 1, 0);
    return reshape(y, {O, Tn});
}

/// Nearest-neighbour 2x upsample of CHW.
template <typename T>
Var<T> upsample2x(Var<T> a) {
    Graph<T>& g = *a.g;
    const Tensor<T>& x = a.val();
    if (x.ndim() != 3) throw ShapeError("upsample2x: need CHW");
    int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    Tensor<T> y({C, H * 2, W * 2});
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < H * 2; ++i)
            for (int j = 0; j < W * 2; ++j) y.at(c, i, j) = x.at(c, i / 2, j / 2);
    Var<T> o = g.make(std::move(y), g.needs_grad(a.id));
    if (g.needs_grad(a.id))
        g.set_back(o, [&g, ai = a.id, oi = o.id, C, H, W]() {
            const Tensor<T>& dy = g.grad_of(Var<T>{&g, oi});
            Tensor<T>& da = g.ensure_grad(ai);
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < H * 2; ++i)
                    for (int j = 0; j < W * 2; ++j) da.at(c, i / 2, j / 2) += dy.at(c, i, j);
        });
    return o;
}

/// Per-channel spatial mean of CHW -> [C].
template <typename T>
Var<T> channel_mean(Var<T> a) {
    Graph<T>& g = *a.g;
    const Tensor<T>& x = a.val();
    if (x.ndim() != 3) throw ShapeError("channel_mean: need CHW");
    int C = x.dim(0);
    int64_t hw = static_cast<int64_t>(x.dim(1)) * x.dim(2);
    Tensor<T> y({C});
    for (int c = 0; c < C; ++c) {
        T s = 0;
        const T* p = x.data.data() + c * hw;
        for (int64_t i = 0; i < hw; ++i) s += p[i];
        y[c] = s / static_cast<T>(hw);
    }
    Var<T> o = g.make(std::move(y), g.needs_grad(a.id));
    if (g.needs_grad(a.id))
        g.set_back(o, [&g, ai = a.id, oi = o.id, C, hw]() {
            const Tensor<T>& dy = g.grad_of(Var<T>{&g, oi});
            Tensor<T>& da = g.ensure_grad(ai);
            for (int c = 0; c < C; ++c) {
                T d = dy[c] / static_cast<T>(hw);
                T* p = da.data.data() + c * hw;
                for (int64_t i = 0; i < hw; ++i) p[i] += d;
            }
        });
    return o;
}

/// y[c,h,w] = s[c] * x[c,h,w] + b[c]
template <typename T>
Var<T> channel_affine(Var<T> a, Var<T> sv, Var<T> bv) {
    Graph<T>& g = *a.g;
    const Tensor<T>&x = a.val(), &s = sv.val(), &b = bv.val();
    if (x.ndim() != 3 || s.ndim() != 1 || b.ndim() != 1 || s.dim(0) != x.dim(0) ||
        b.dim(0) != x.dim(0))
        throw ShapeError("channel_affine: shape mismatch");
    int C = x.dim(0);
    int64_t hw = static_cast<int64_t>(x.dim(1)) * x.dim(2);
    Tensor<T> y(x.shape);
    for (int c = 0; c < C; ++c) {
        const T* p = x.data.data() + c * hw;
        T* q = y.data.data() + c * hw;
        for (int64_t i = 0; i < hw; ++i) q[i] = s[c] * p[i] + b[c];
    }
    bool ng = g.needs_grad(a.id) || g.needs_grad(sv.id) || g.needs_grad(bv.id);
    Var<T> o = g.make(std::move(y), ng);
    if (ng)
        g.set_back(o, [&g, ai = a.id, si = sv.id, bi = bv.id, oi = o.id, C, hw]() {
            const Tensor<T>& dy = g.grad_of(Var<T>{&g, oi});
            const Tensor<T>&xv2 = g.value(ai), &sv2 = g.value(si);
            if (g.needs_grad(ai)) {
                Tensor<T>& da = g.ensure_grad(ai);
                for (int c = 0; c < C; ++c) {
                    const T* d = dy.data.data() + c * hw;
                    T* p = da.data.data() + c * hw;
                    for (int64_t i = 0; i < hw; ++i) p[i] += sv2[c] * d[i];
                }
            }
            if (g.needs_grad(si)) {
                Tensor<T>& ds = g.ensure_grad(si);
                for (int c = 0; c < C; ++c) {
                    const T* d = dy.data.data() + c * hw;
                    const T* p = xv2.data.data() + c * hw;
                    T acc = 0;
                    for (int64_t i = 0; i < hw; ++i) acc += d[i] * p[i];
                    ds[c] += acc;
                }
            }
            if (g.needs_grad(bi)) {
                Tensor<T>& db = g.ensure_grad(bi);
                for (int c = 0; c < C; ++c) {
                    const T* d = dy.data.data() + c * hw;
                    T acc = 0;
                    for (int64_t i = 0; i < hw; ++i) acc += d[i];
                    db[c] += acc;
                }
            }
        });
    return o;
}

/// Column t of a [C, T] matrix -> [C].
template <typename T>
Var<T> take_column(Var<T> a, int t) {
    Graph<T>& g = *a.g;
    const Tensor<T>& x = a.val();
    if (x.ndim() != 2) throw ShapeError("take_column: need 2-d input");
    int C = x.dim(0), Tn = x.dim(1);
    if (t < 0 || t >= Tn) throw RangeError("take_column: index out of range");
    Tensor<T> y({C});
    for (int c = 0; c < C; ++c) y[c] = x.at(c, t);
    Var<T> o = g.make(std::move(y), g.needs_grad(a.id));
    if (g.needs_grad(a.id))
        g.set_back(o, [&g, ai = a.id, oi = o.id, t, C]() {
            const Tensor<T>& dy = g.grad_of(Var<T>{&g, oi});
            Tensor<T>& da = g.ensure_grad(ai);
            for (int c = 0; c < C; ++c) da.at(c, t) += dy[c];
        });
    return o;
}

/// Mean of selected embedding-table rows -> [E]. Gradient flows to the table.
template <typename T>
Var<T> embed_mean(Var<T> table, const std::vector<int>& ids) {
    Graph<T>& g = *table.g;
    const Tensor<T>& w = table.val();
    if (w.ndim() != 2) throw ShapeError("embed_mean: table must be [V,E]");
    if (ids.empty()) throw ShapeError("embed_mean: empty id list");
    int E = w.dim(1);
    Tensor<T> y({E});
    for (int id : ids) {
        if (id < 0 || id >= w.dim(0)) throw RangeError("embed_mean: id out of range");
        for (int e = 0; e < E; ++e) y[e] += w.at(id, e);
    }
    for (int e = 0; e < E; ++e) y[e] /= static_cast<T>(ids.size());
    Var<T> o = g.make(std::move(y), g.needs_grad(table.id));
    if (g.needs_grad(table.id))
        g.set_back(o, [&g, ti = table.id, oi = o.id, ids, E]() {
            const Tensor<T>& dy = g.grad_of(Var<T>{&g, oi});
            Tensor<T>& dt = g.ensure_grad(ti);
            T inv = T(1) / static_cast<T>(ids.size());
            for (int id : ids)
                for (int e = 0; e < E; ++e) dt.at(id, e) += dy[e] * inv;
        });
    return o;
}

}  // namespace edtalk
