// Reverse-mode differentiable tensor library.
//
// Dynamic-graph design: every op records its parents and a backward closure
// on the result node; backward() topo-sorts from the loss and visits each
// node exactly once. float for training, double for verification runs
// (gradient-check tolerances are unreachable at 32-bit).
//
// Any op that would produce NaN/Inf throws instead of propagating it.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace avd {

using Shape = std::vector<int>;

inline int64_t numel_of(const Shape& s) {
    int64_t n = 1;
    for (int d : s) {
        if (d <= 0) throw std::runtime_error("tensor: non-positive extent");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string r = "[";
    for (size_t i = 0; i < s.size(); ++i) r += std::to_string(s[i]) + (i + 1 < s.size() ? "," : "");
    return r + "]";
}

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // allocated lazily, only when requires_grad
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backfn;  // scatter this->grad into parents

    int64_t numel() const { return (int64_t)data.size(); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
    void zero_grad() { if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0)); }
};

template <typename T>
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

    static Tensor zeros(const Shape& s, bool requires_grad = false) {
        return filled(s, T(0), requires_grad);
    }
    static Tensor filled(const Shape& s, T v, bool requires_grad = false) {
        auto n = std::make_shared<Node<T>>();
        n->shape = s;
        n->data.assign((size_t)numel_of(s), v);
        n->requires_grad = requires_grad;
        if (requires_grad) n->ensure_grad();
        return Tensor(n);
    }
    static Tensor from_data(const Shape& s, std::vector<T> d, bool requires_grad = false) {
        if ((int64_t)d.size() != numel_of(s)) throw std::runtime_error("tensor: data/shape mismatch");
        auto n = std::make_shared<Node<T>>();
        n->shape = s;
        n->data = std::move(d);
        n->requires_grad = requires_grad;
        if (requires_grad) n->ensure_grad();
        return Tensor(n);
    }
    static Tensor scalar(T v, bool requires_grad = false) { return filled({1}, v, requires_grad); }

    template <typename Rng>
    static Tensor randn(const Shape& s, Rng& rng, T stddev = T(1), bool requires_grad = false) {
        std::normal_distribution<double> nd(0.0, 1.0);
        auto t = zeros(s, requires_grad);
        for (auto& v : t.node_->data) v = (T)(nd(rng) * (double)stddev);
        return t;
    }
    template <typename Rng>
    static Tensor uniform(const Shape& s, Rng& rng, T lo, T hi, bool requires_grad = false) {
        std::uniform_real_distribution<double> ud((double)lo, (double)hi);
        auto t = zeros(s, requires_grad);
        for (auto& v : t.node_->data) v = (T)ud(rng);
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t numel() const { return node_->numel(); }
    std::vector<T>& data() { return node_->data; }
    const std::vector<T>& data() const { return node_->data; }
    std::vector<T>& grad() { node_->ensure_grad(); return node_->grad; }
    const std::vector<T>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool b) { node_->requires_grad = b; if (b) node_->ensure_grad(); }
    void zero_grad() { node_->zero_grad(); }
    std::shared_ptr<Node<T>> node() const { return node_; }
    T item() const {
        if (numel() != 1) throw std::runtime_error("item() on non-scalar " + shape_str(shape()));
        return node_->data[0];
    }

    // Detached copy: identity forward, zero backward.
    Tensor detach() const {
        auto n = std::make_shared<Node<T>>();
        n->shape = node_->shape;
        n->data = node_->data;
        n->requires_grad = false;
        return Tensor(n);
    }

    void backward() const;

  private:
    std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
inline void check_finite(const std::vector<T>& v, const char* op) {
    for (const T x : v)
        if (!std::isfinite((double)x))
            throw std::runtime_error(std::string("non-finite value produced by ") + op);
}

template <typename T>
inline std::shared_ptr<Node<T>> make_result(const Shape& s,
                                            std::initializer_list<Tensor<T>> parents) {
    auto n = std::make_shared<Node<T>>();
    n->shape = s;
    n->data.assign((size_t)numel_of(s), T(0));
    for (const auto& p : parents) {
        n->parents.push_back(p.node());
        if (p.requires_grad() || !p.node()->parents.empty()) n->requires_grad = true;
    }
    return n;
}

// Grad flows into a node if it is a grad-leaf or an interior node on a live tape.
template <typename T>
inline bool wants_grad(const std::shared_ptr<Node<T>>& n) {
    return n->requires_grad || !n->parents.empty();
}

}  // namespace detail

template <typename T>
void Tensor<T>::backward() const {
    if (numel() != 1) throw std::runtime_error("backward: loss must be scalar, got " + shape_str(shape()));
    if (!node_->requires_grad && node_->parents.empty())
        throw std::runtime_error("backward: detached tape (loss has no graph)");
    // iterative post-order topo sort
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.push_back({node_.get(), 0});
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node<T>* p = n->parents[i++].get();
            if (!seen.count(p) && detail::wants_grad(std::shared_ptr<Node<T>>(n->parents[i - 1]))) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    node_->ensure_grad();
    node_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backfn && !n->grad.empty()) n->backfn(*n);
    }
}

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw std::runtime_error("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    auto n = detail::make_result<T>(a.shape(), {a, b});
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (size_t i = 0; i < n->data.size(); ++i) n->data[i] = ad[i] + bd[i];
    detail::check_finite(n->data, "add");
    n->backfn = [](Node<T>& self) {
        for (int k = 0; k < 2; ++k) {
            auto& p = self.parents[k];
            if (!detail::wants_grad(p)) continue;
            p->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        }
    };
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) throw std::runtime_error("sub: shape mismatch");
    auto n = detail::make_result<T>(a.shape(), {a, b});
    for (size_t i = 0; i < n->data.size(); ++i) n->data[i] = a.data()[i] - b.data()[i];
    detail::check_finite(n->data, "sub");
    n->backfn = [](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (detail::wants_grad(pa)) {
            pa->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
        }
        if (detail::wants_grad(pb)) {
            pb->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
        }
    };
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) throw std::runtime_error("mul: shape mismatch");
    auto n = detail::make_result<T>(a.shape(), {a, b});
    for (size_t i = 0; i < n->data.size(); ++i) n->data[i] = a.data()[i] * b.data()[i];
    detail::check_finite(n->data, "mul");
    n->backfn = [](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (detail::wants_grad(pa)) {
            pa->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * pb->data[i];
        }
        if (detail::wants_grad(pb)) {
            pb->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i] * pa->data[i];
        }
    };
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> scalar_mul(const Tensor<T>& a, T c) {
    auto n = detail::make_result<T>(a.shape(), {a});
    for (size_t i = 0; i < n->data.size(); ++i) n->data[i] = a.data()[i] * c;
    detail::check_finite(n->data, "scalar_mul");
    n->backfn = [c](Node<T>& self) {
        auto& p = self.parents[0];
        if (!detail::wants_grad(p)) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * c;
    };
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> scalar_add(const Tensor<T>& a, T c) {
    auto n = detail::make_result<T>(a.shape(), {a});
    for (size_t i = 0; i < n->data.size(); ++i) n->data[i] = a.data()[i] + c;
    detail::check_finite(n->data, "scalar_add");
    n->backfn = [](Node<T>& self) {
        auto& p = self.parents[0];
        if (!detail::wants_grad(p)) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    };
    return Tensor<T>(n);
}

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, T c) { return scalar_mul(a, c); }
template <typename T> Tensor<T> operator*(T c, const Tensor<T>& a) { return scalar_mul(a, c); }
template <typename T> Tensor<T> operator+(const Tensor<T>& a, T c) { return scalar_add(a, c); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a) { return scalar_mul(a, T(-1)); }

template <typename T, typename Fwd, typename Dfn>
Tensor<T> unary_op(const Tensor<T>& a, Fwd f, Dfn df, const char* name) {
    auto n = detail::make_result<T>(a.shape(), {a});
    for (size_t i = 0; i < n->data.size(); ++i) n->data[i] = f(a.data()[i]);
    detail::check_finite(n->data, name);
    n->backfn = [df](Node<T>& self) {
        auto& p = self.parents[0];
        if (!detail::wants_grad(p)) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            p->grad[i] += self.grad[i] * df(p->data[i], self.data[i]);
    };
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    return unary_op(a, [](T x) { return x > T(0) ? x : T(0); },
                    [](T x, T) { return x > T(0) ? T(1) : T(0); }, "relu");
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope = T(0.1)) {
    return unary_op(a, [slope](T x) { return x > T(0) ? x : slope * x; },
                    [slope](T x, T) { return x > T(0) ? T(1) : slope; }, "leaky_relu");
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    return unary_op(a, [](T x) { return T(1) / (T(1) + std::exp(-x)); },
                    [](T, T y) { return y * (T(1) - y); }, "sigmoid");
}

template <typename T>
Tensor<T> exp_(const Tensor<T>& a) {
    return unary_op(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; }, "exp");
}

template <typename T>
Tensor<T> log_(const Tensor<T>& a) {
    return unary_op(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; }, "log");
}

template <typename T>
Tensor<T> rsqrt_(const Tensor<T>& a) {
    return unary_op(a, [](T x) { return T(1) / std::sqrt(x); },
                    [](T, T y) { return T(-0.5) * y * y * y; }, "rsqrt");
}

template <typename T>
Tensor<T> abs_(const Tensor<T>& a) {
    return unary_op(a, [](T x) { return std::abs(x); },
                    [](T x, T) { return x >= T(0) ? T(1) : T(-1); }, "abs");
}

// Identity forward, zero backward.
template <typename T>
Tensor<T> stop_grad(const Tensor<T>& a) {
    return a.detach();
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
    auto n = detail::make_result<T>({1}, {a});
    T acc = 0;
    for (T v : a.data()) acc += v;
    n->data[0] = acc;
    detail::check_finite(n->data, "sum_all");
    n->backfn = [](Node<T>& self) {
        auto& p = self.parents[0];
        if (!detail::wants_grad(p)) return;
        p->ensure_grad();
        const T g = self.grad[0];
        for (auto& gi : p->grad) gi += g;
    };
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
    return scalar_mul(sum_all(a), T(1) / (T)a.numel());
}

namespace detail {
// Decompose a shape around a reduction axis: outer × axis × inner.
inline void axis_split(const Shape& s, int axis, int64_t& outer, int64_t& n, int64_t& inner) {
    if (axis < 0 || axis >= (int)s.size()) throw std::runtime_error("reduce: bad axis");
    outer = 1; inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    n = s[axis];
    for (int i = axis + 1; i < (int)s.size(); ++i) inner *= s[i];
}
inline Shape drop_axis(const Shape& s, int axis) {
    Shape r;
    for (int i = 0; i < (int)s.size(); ++i) if (i != axis) r.push_back(s[i]);
    if (r.empty()) r.push_back(1);
    return r;
}
}  // namespace detail

template <typename T>
Tensor<T> sum_axis(const Tensor<T>& a, int axis) {
    int64_t outer, m, inner;
    detail::axis_split(a.shape(), axis, outer, m, inner);
    auto n = detail::make_result<T>(detail::drop_axis(a.shape(), axis), {a});
    const auto& ad = a.data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t k = 0; k < m; ++k)
            for (int64_t i = 0; i < inner; ++i)
                n->data[o * inner + i] += ad[(o * m + k) * inner + i];
    detail::check_finite(n->data, "sum_axis");
    n->backfn = [outer, m, inner](Node<T>& self) {
        auto& p = self.parents[0];
        if (!detail::wants_grad(p)) return;
        p->ensure_grad();
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t k = 0; k < m; ++k)
                for (int64_t i = 0; i < inner; ++i)
                    p->grad[(o * m + k) * inner + i] += self.grad[o * inner + i];
    };
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& a, int axis) {
    int64_t outer, m, inner;
    detail::axis_split(a.shape(), axis, outer, m, inner);
    return scalar_mul(sum_axis(a, axis), T(1) / (T)m);
}

// Population variance along one axis (divide by the axis extent).
template <typename T>
Tensor<T> var_axis(const Tensor<T>& a, int axis) {
    int64_t outer, m, inner;
    detail::axis_split(a.shape(), axis, outer, m, inner);
    auto n = detail::make_result<T>(detail::drop_axis(a.shape(), axis), {a});
    const auto& ad = a.data();
    std::vector<T> means(n->data.size(), T(0));
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t k = 0; k < m; ++k)
            for (int64_t i = 0; i < inner; ++i)
                means[o * inner + i] += ad[(o * m + k) * inner + i];
    for (auto& v : means) v /= (T)m;
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t k = 0; k < m; ++k)
            for (int64_t i = 0; i < inner; ++i) {
                T d = ad[(o * m + k) * inner + i] - means[o * inner + i];
                n->data[o * inner + i] += d * d;
            }
    for (auto& v : n->data) v /= (T)m;
    detail::check_finite(n->data, "var_axis");
    n->backfn = [outer, m, inner, means](Node<T>& self) {
        auto& p = self.parents[0];
        if (!detail::wants_grad(p)) return;
        p->ensure_grad();
        const T inv = T(2) / (T)m;
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t k = 0; k < m; ++k)
                for (int64_t i = 0; i < inner; ++i) {
                    int64_t idx = (o * m + k) * inner + i;
                    p->grad[idx] += self.grad[o * inner + i] * inv * (p->data[idx] - means[o * inner + i]);
                }
    };
    return Tensor<T>(n);
}

// Normalize each row of [N,D] to zero mean / unit variance (population).
// dL/dx_i = (g_i - mean(g) - y_i * mean(g*y)) / std, per row.
template <typename T>
Tensor<T> row_norm(const Tensor<T>& a, T eps = T(1e-5)) {
    if (a.shape().size() != 2) throw std::runtime_error("row_norm: rank must be 2");
    const int N = a.shape()[0], D = a.shape()[1];
    auto n = detail::make_result<T>(a.shape(), {a});
    auto stds = std::make_shared<std::vector<T>>(N);
    for (int r = 0; r < N; ++r) {
        const T* x = a.data().data() + (int64_t)r * D;
        T mu = 0;
        for (int i = 0; i < D; ++i) mu += x[i];
        mu /= (T)D;
        T var = 0;
        for (int i = 0; i < D; ++i) var += (x[i] - mu) * (x[i] - mu);
        var /= (T)D;
        const T sd = std::sqrt(var + eps);
        (*stds)[r] = sd;
        T* y = n->data.data() + (int64_t)r * D;
        for (int i = 0; i < D; ++i) y[i] = (x[i] - mu) / sd;
    }
    detail::check_finite(n->data, "row_norm");
    n->backfn = [N, D, stds](Node<T>& self) {
        auto& p = self.parents[0];
        if (!detail::wants_grad(p)) return;
        p->ensure_grad();
        for (int r = 0; r < N; ++r) {
            const T* g = self.grad.data() + (int64_t)r * D;
            const T* y = self.data.data() + (int64_t)r * D;
            T gmean = 0, gymean = 0;
            for (int i = 0; i < D; ++i) {
                gmean += g[i];
                gymean += g[i] * y[i];
            }
            gmean /= (T)D;
            gymean /= (T)D;
            T* gx = p->grad.data() + (int64_t)r * D;
            const T inv_sd = T(1) / (*stds)[r];
            for (int i = 0; i < D; ++i) gx[i] += (g[i] - gmean - y[i] * gymean) * inv_sd;
        }
    };
    return Tensor<T>(n);
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& s) {
    if (numel_of(s) != a.numel()) throw std::runtime_error("reshape: numel mismatch");
    auto n = detail::make_result<T>(s, {a});
    n->data = a.data();
    n->backfn = [](Node<T>& self) {
        auto& p = self.parents[0];
        if (!detail::wants_grad(p)) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    };
    return Tensor<T>(n);
}

// Contiguous slice along one axis.
template <typename T>
Tensor<T> slice_axis(const Tensor<T>& a, int axis, int start, int len) {
    int64_t outer, m, inner;
    detail::axis_split(a.shape(), axis, outer, m, inner);
    if (start < 0 || len <= 0 || start + len > m) throw std::runtime_error("slice_axis: out of range");
    Shape s = a.shape();
    s[axis] = len;
    auto n = detail::make_result<T>(s, {a});
    const auto& ad = a.data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t k = 0; k < len; ++k)
            std::copy(ad.begin() + ((o * m + start + k) * inner),
                      ad.begin() + ((o * m + start + k) * inner) + inner,
                      n->data.begin() + (o * len + k) * inner);
    n->backfn = [outer, m, inner, start, len](Node<T>& self) {
        auto& p = self.parents[0];
        if (!detail::wants_grad(p)) return;
        p->ensure_grad();
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t k = 0; k < len; ++k)
                for (int64_t i = 0; i < inner; ++i)
                    p->grad[(o * m + start + k) * inner + i] += self.grad[(o * len + k) * inner + i];
    };
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, int axis) {
    if (a.shape().size() != b.shape().size()) throw std::runtime_error("concat: rank mismatch");
    for (int i = 0; i < (int)a.shape().size(); ++i)
        if (i != axis && a.shape()[i] != b.shape()[i]) throw std::runtime_error("concat: shape mismatch");
    int64_t outer, ma, inner, mb, ib2, ob2;
    detail::axis_split(a.shape(), axis, outer, ma, inner);
    detail::axis_split(b.shape(), axis, ob2, mb, ib2);
    Shape s = a.shape();
    s[axis] = (int)(ma + mb);
    auto n = detail::make_result<T>(s, {a, b});
    const int64_t m = ma + mb;
    for (int64_t o = 0; o < outer; ++o) {
        std::copy(a.data().begin() + o * ma * inner, a.data().begin() + (o + 1) * ma * inner,
                  n->data.begin() + o * m * inner);
        std::copy(b.data().begin() + o * mb * inner, b.data().begin() + (o + 1) * mb * inner,
                  n->data.begin() + o * m * inner + ma * inner);
    }
    n->backfn = [outer, ma, mb, inner](Node<T>& self) {
        const int64_t m = ma + mb;
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (detail::wants_grad(pa)) {
            pa->ensure_grad();
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t i = 0; i < ma * inner; ++i)
                    pa->grad[o * ma * inner + i] += self.grad[o * m * inner + i];
        }
        if (detail::wants_grad(pb)) {
            pb->ensure_grad();
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t i = 0; i < mb * inner; ++i)
                    pb->grad[o * mb * inner + i] += self.grad[o * m * inner + ma * inner + i];
        }
    };
    return Tensor<T>(n);
}

// x [B,D] + bias [D], broadcast over rows.
template <typename T>
Tensor<T> add_row_bias(const Tensor<T>& x, const Tensor<T>& b) {
    if (x.shape().size() != 2 || b.shape().size() != 1 || x.shape()[1] != b.shape()[0])
        throw std::runtime_error("add_row_bias: shape mismatch");
    const int B = x.shape()[0], D = x.shape()[1];
    auto n = detail::make_result<T>(x.shape(), {x, b});
    for (int r = 0; r < B; ++r)
        for (int d = 0; d < D; ++d) n->data[(int64_t)r * D + d] = x.data()[(int64_t)r * D + d] + b.data()[d];
    detail::check_finite(n->data, "add_row_bias");
    n->backfn = [B, D](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pb = self.parents[1];
        if (detail::wants_grad(px)) {
            px->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i];
        }
        if (detail::wants_grad(pb)) {
            pb->ensure_grad();
            for (int r = 0; r < B; ++r)
                for (int d = 0; d < D; ++d) pb->grad[d] += self.grad[(int64_t)r * D + d];
        }
    };
    return Tensor<T>(n);
}

// Embedding-table row gather; backward scatter-adds.
template <typename T>
Tensor<T> rows(const Tensor<T>& table, const std::vector<int>& idx) {
    if (table.shape().size() != 2) throw std::runtime_error("rows: table must be rank 2");
    const int R = table.shape()[0], D = table.shape()[1];
    for (int i : idx)
        if (i < 0 || i >= R) throw std::runtime_error("rows: index out of range");
    auto n = detail::make_result<T>({(int)idx.size(), D}, {table});
    for (size_t r = 0; r < idx.size(); ++r)
        std::copy(table.data().begin() + (int64_t)idx[r] * D,
                  table.data().begin() + (int64_t)(idx[r] + 1) * D, n->data.begin() + r * D);
    n->backfn = [idx, D](Node<T>& self) {
        auto& p = self.parents[0];
        if (!detail::wants_grad(p)) return;
        p->ensure_grad();
        for (size_t r = 0; r < idx.size(); ++r)
            for (int d = 0; d < D; ++d)
                p->grad[(int64_t)idx[r] * D + d] += self.grad[r * D + d];
    };
    return Tensor<T>(n);
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
        throw std::runtime_error("matmul: bad shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const int M = a.shape()[0], K = a.shape()[1], N = b.shape()[1];
    auto n = detail::make_result<T>({M, N}, {a, b});
    const T* A = a.data().data();
    const T* B = b.data().data();
    T* C = n->data.data();
    for (int i = 0; i < M; ++i)
        for (int k = 0; k < K; ++k) {
            const T aik = A[(int64_t)i * K + k];
            const T* brow = B + (int64_t)k * N;
            T* crow = C + (int64_t)i * N;
            for (int j = 0; j < N; ++j) crow[j] += aik * brow[j];
        }
    detail::check_finite(n->data, "matmul");
    n->backfn = [M, K, N](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        const T* G = self.grad.data();
        if (detail::wants_grad(pa)) {
            pa->ensure_grad();
            const T* B = pb->data.data();
            for (int i = 0; i < M; ++i)
                for (int j = 0; j < N; ++j) {
                    const T g = G[(int64_t)i * N + j];
                    const T* brow = B + (int64_t)j;  // column j
                    for (int k = 0; k < K; ++k) pa->grad[(int64_t)i * K + k] += g * B[(int64_t)k * N + j];
                    (void)brow;
                }
        }
        if (detail::wants_grad(pb)) {
            pb->ensure_grad();
            const T* A = pa->data.data();
            for (int i = 0; i < M; ++i)
                for (int k = 0; k < K; ++k) {
                    const T aik = A[(int64_t)i * K + k];
                    for (int j = 0; j < N; ++j) pb->grad[(int64_t)k * N + j] += aik * G[(int64_t)i * N + j];
                }
        }
    };
    return Tensor<T>(n);
}

}  // namespace avd
