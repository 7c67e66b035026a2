#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "unmix/errors.hpp"
#include "unmix/rng.hpp"

namespace unmix {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

class Tensor;

namespace detail {

struct Node;

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;      // sized lazily, kept across backward calls for leaves
    std::shared_ptr<Node> node;    // producing op; null for leaves

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

struct Node {
    const char* op = "";
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    // Reads out.grad, accumulates into the inputs' grads.
    std::function<void(const TensorImpl&)> backward;
};

}  // namespace detail

/// Thread-local switch; ops built while disabled record no graph.
class GradMode {
  public:
    static bool enabled() { return state(); }
    static void set(bool on) { state() = on; }

  private:
    static bool& state() {
        thread_local bool enabled = true;
        return enabled;
    }
};

struct NoGradGuard {
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
    ~NoGradGuard() { GradMode::set(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

/// Dense row-major float64 tensor participating in a reverse-mode graph.
/// Value-semantics handle: copies share the underlying buffer.
class Tensor {
  public:
    Tensor() = default;

    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
        if (numel(shape) != static_cast<std::int64_t>(data.size()))
            throw DimensionError("tensor: shape " + shape_str(shape) + " does not match buffer of " +
                                 std::to_string(data.size()) + " values");
        auto impl = std::make_shared<detail::TensorImpl>();
        impl->shape = std::move(shape);
        impl->data = std::move(data);
        impl->requires_grad = requires_grad;
        Tensor t;
        t.impl_ = std::move(impl);
        return t;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::vector<double> d(static_cast<std::size_t>(numel(shape)), 0.0);
        return from(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor full(Shape shape, double value, bool requires_grad = false) {
        std::vector<double> d(static_cast<std::size_t>(numel(shape)), value);
        return from(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor scalar(double value, bool requires_grad = false) {
        return from({1}, {value}, requires_grad);
    }

    static Tensor uniform(Shape shape, double lo, double hi, RngStream& rng,
                          bool requires_grad = false) {
        std::vector<double> d(static_cast<std::size_t>(numel(shape)));
        for (auto& v : d) v = rng.uniform(lo, hi);
        return from(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor normal(Shape shape, double mean, double stddev, RngStream& rng,
                         bool requires_grad = false) {
        std::vector<double> d(static_cast<std::size_t>(numel(shape)));
        for (auto& v : d) v = rng.normal(mean, stddev);
        return from(std::move(shape), std::move(d), requires_grad);
    }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::int64_t rank() const { return static_cast<std::int64_t>(impl_->shape.size()); }
    std::int64_t dim(std::int64_t i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(impl_->data.size()); }

    std::vector<double>& data() { return impl_->data; }
    const std::vector<double>& data() const { return impl_->data; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool on) { impl_->requires_grad = on; }

    bool has_grad() const { return impl_->grad.size() == impl_->data.size(); }
    std::vector<double>& grad() {
        impl_->ensure_grad();
        return impl_->grad;
    }
    const std::vector<double>& grad() const {
        if (!has_grad()) throw ContractError("grad accessed before backward");
        return impl_->grad;
    }
    void zero_grad() {
        if (has_grad()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
    }

    bool is_leaf() const { return impl_->node == nullptr; }

    double value() const {
        if (size() != 1) throw ContractError("value(): tensor is not scalar, shape " + shape_str(shape()));
        return impl_->data[0];
    }

    double at(std::initializer_list<std::int64_t> idx) const {
        return impl_->data[static_cast<std::size_t>(flat_index(idx))];
    }

    std::int64_t flat_index(std::initializer_list<std::int64_t> idx) const {
        if (static_cast<std::int64_t>(idx.size()) != rank())
            throw DimensionError("index rank mismatch");
        std::int64_t flat = 0;
        std::size_t k = 0;
        for (auto i : idx) {
            flat = flat * impl_->shape[k] + i;
            ++k;
        }
        return flat;
    }

    std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

  private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

namespace detail {

inline bool grad_wanted(std::initializer_list<const Tensor*> ins) {
    if (!GradMode::enabled()) return false;
    for (auto* t : ins)
        if (t->requires_grad()) return true;
    return false;
}

inline void attach(Tensor& out, const char* op, std::initializer_list<Tensor> inputs,
                   std::function<void(const TensorImpl&)> backward) {
    auto node = std::make_shared<Node>();
    node->op = op;
    for (const auto& t : inputs) node->inputs.push_back(t.impl());
    node->backward = std::move(backward);
    out.impl()->node = std::move(node);
}

}  // namespace detail

/// Reverse-mode sweep from a scalar loss. Visits each graph node exactly once
/// in reverse topological order; leaf grads accumulate across calls,
/// intermediate grads are reset per call.
inline void backward(const Tensor& loss) {
    if (loss.size() != 1) throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    if (!loss.requires_grad())
        throw ContractError("backward: loss does not require grad (no graph to traverse)");

    std::vector<detail::TensorImpl*> order;
    std::unordered_set<detail::TensorImpl*> seen;
    // Iterative postorder DFS.
    std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
    stack.emplace_back(loss.impl().get(), 0);
    seen.insert(loss.impl().get());
    while (!stack.empty()) {
        auto& [cur, next_child] = stack.back();
        const auto& inputs = cur->node ? cur->node->inputs : std::vector<std::shared_ptr<detail::TensorImpl>>{};
        if (next_child < inputs.size()) {
            detail::TensorImpl* child = inputs[next_child++].get();
            if (child->requires_grad && !seen.count(child)) {
                seen.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(cur);
            stack.pop_back();
        }
    }

    for (auto* impl : order) {
        impl->ensure_grad();
        if (impl->node != nullptr)  // intermediates start clean; leaves accumulate
            std::fill(impl->grad.begin(), impl->grad.end(), 0.0);
    }
    loss.impl()->grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto* impl = *it;
        if (impl->node && impl->node->backward) impl->node->backward(*impl);
    }
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

namespace detail {
inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
}
}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape(), detail::grad_wanted({&a, &b}));
    const std::size_t n = a.data().size();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    if (out.requires_grad()) {
        detail::attach(out, "add", {a, b}, [a, b](const detail::TensorImpl& o) {
            if (a.requires_grad()) {
                auto& g = a.impl()->grad;
                a.impl()->ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
            }
            if (b.requires_grad()) {
                b.impl()->ensure_grad();
                auto& g = b.impl()->grad;
                for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
            }
        });
    }
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "sub");
    Tensor out = Tensor::zeros(a.shape(), detail::grad_wanted({&a, &b}));
    const std::size_t n = a.data().size();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
    if (out.requires_grad()) {
        detail::attach(out, "sub", {a, b}, [a, b](const detail::TensorImpl& o) {
            if (a.requires_grad()) {
                a.impl()->ensure_grad();
                auto& g = a.impl()->grad;
                for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
            }
            if (b.requires_grad()) {
                b.impl()->ensure_grad();
                auto& g = b.impl()->grad;
                for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
            }
        });
    }
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "mul");
    Tensor out = Tensor::zeros(a.shape(), detail::grad_wanted({&a, &b}));
    const std::size_t n = a.data().size();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
    if (out.requires_grad()) {
        detail::attach(out, "mul", {a, b}, [a, b](const detail::TensorImpl& o) {
            if (a.requires_grad()) {
                a.impl()->ensure_grad();
                auto& g = a.impl()->grad;
                for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * b.data()[i];
            }
            if (b.requires_grad()) {
                b.impl()->ensure_grad();
                auto& g = b.impl()->grad;
                for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * a.data()[i];
            }
        });
    }
    return out;
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "div");
    Tensor out = Tensor::zeros(a.shape(), detail::grad_wanted({&a, &b}));
    const std::size_t n = a.data().size();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] / b.data()[i];
    if (out.requires_grad()) {
        detail::attach(out, "div", {a, b}, [a, b](const detail::TensorImpl& o) {
            if (a.requires_grad()) {
                a.impl()->ensure_grad();
                auto& g = a.impl()->grad;
                for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] / b.data()[i];
            }
            if (b.requires_grad()) {
                b.impl()->ensure_grad();
                auto& g = b.impl()->grad;
                for (std::size_t i = 0; i < o.grad.size(); ++i) {
                    const double bv = b.data()[i];
                    g[i] -= o.grad[i] * a.data()[i] / (bv * bv);
                }
            }
        });
    }
    return out;
}

inline Tensor mul_scalar(const Tensor& a, double s) {
    Tensor out = Tensor::zeros(a.shape(), detail::grad_wanted({&a}));
    for (std::size_t i = 0; i < a.data().size(); ++i) out.data()[i] = a.data()[i] * s;
    if (out.requires_grad()) {
        detail::attach(out, "mul_scalar", {a}, [a, s](const detail::TensorImpl& o) {
            a.impl()->ensure_grad();
            auto& g = a.impl()->grad;
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * s;
        });
    }
    return out;
}

inline Tensor add_scalar(const Tensor& a, double s) {
    Tensor out = Tensor::zeros(a.shape(), detail::grad_wanted({&a}));
    for (std::size_t i = 0; i < a.data().size(); ++i) out.data()[i] = a.data()[i] + s;
    if (out.requires_grad()) {
        detail::attach(out, "add_scalar", {a}, [a](const detail::TensorImpl& o) {
            a.impl()->ensure_grad();
            auto& g = a.impl()->grad;
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
        });
    }
    return out;
}

inline Tensor sqrt_t(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape(), detail::grad_wanted({&a}));
    for (std::size_t i = 0; i < a.data().size(); ++i) out.data()[i] = std::sqrt(a.data()[i]);
    if (out.requires_grad()) {
        // Reads the result through `o`; capturing `out` itself would cycle the graph.
        detail::attach(out, "sqrt", {a}, [a](const detail::TensorImpl& o) {
            a.impl()->ensure_grad();
            auto& g = a.impl()->grad;
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * 0.5 / o.data[i];
        });
    }
    return out;
}

inline Tensor acos_t(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape(), detail::grad_wanted({&a}));
    for (std::size_t i = 0; i < a.data().size(); ++i) out.data()[i] = std::acos(a.data()[i]);
    if (out.requires_grad()) {
        detail::attach(out, "acos", {a}, [a](const detail::TensorImpl& o) {
            a.impl()->ensure_grad();
            auto& g = a.impl()->grad;
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                const double x = a.data()[i];
                g[i] -= o.grad[i] / std::sqrt(1.0 - x * x);
            }
        });
    }
    return out;
}

/// Elementwise clamp. Gradient passes only strictly inside (lo, hi).
inline Tensor clamp(const Tensor& a, double lo, double hi) {
    Tensor out = Tensor::zeros(a.shape(), detail::grad_wanted({&a}));
    for (std::size_t i = 0; i < a.data().size(); ++i)
        out.data()[i] = std::min(hi, std::max(lo, a.data()[i]));
    if (out.requires_grad()) {
        detail::attach(out, "clamp", {a}, [a, lo, hi](const detail::TensorImpl& o) {
            a.impl()->ensure_grad();
            auto& g = a.impl()->grad;
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                const double x = a.data()[i];
                if (x > lo && x < hi) g[i] += o.grad[i];
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// [m x k] . [k x n] -> [m x n]. Backward: dA = G.B^T, dB = A^T.G.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw DimensionError("matmul: operands must be rank 2, got " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    if (a.dim(1) != b.dim(0))
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::zeros({m, n}, detail::grad_wanted({&a, &b}));
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    double* od = out.data().data();
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const double av = ad[i * k + kk];
            const double* brow = bd + kk * n;
            double* orow = od + i * n;
            for (std::int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    if (out.requires_grad()) {
        detail::attach(out, "matmul", {a, b}, [a, b, m, k, n](const detail::TensorImpl& o) {
            const double* go = o.grad.data();
            if (a.requires_grad()) {
                a.impl()->ensure_grad();
                double* ga = a.impl()->grad.data();
                const double* bd = b.data().data();
                for (std::int64_t i = 0; i < m; ++i)
                    for (std::int64_t kk = 0; kk < k; ++kk) {
                        const double* brow = bd + kk * n;
                        const double* grow = go + i * n;
                        double acc = 0.0;
                        for (std::int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        ga[i * k + kk] += acc;
                    }
            }
            if (b.requires_grad()) {
                b.impl()->ensure_grad();
                double* gb = b.impl()->grad.data();
                const double* ad = a.data().data();
                for (std::int64_t kk = 0; kk < k; ++kk)
                    for (std::int64_t i = 0; i < m; ++i) {
                        const double av = ad[i * k + kk];
                        const double* grow = go + i * n;
                        double* gbrow = gb + kk * n;
                        for (std::int64_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                    }
            }
        });
    }
    return out;
}

inline Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw DimensionError("transpose: rank-2 only, got " + shape_str(a.shape()));
    const std::int64_t m = a.dim(0), n = a.dim(1);
    Tensor out = Tensor::zeros({n, m}, detail::grad_wanted({&a}));
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) out.data()[j * m + i] = a.data()[i * n + j];
    if (out.requires_grad()) {
        detail::attach(out, "transpose", {a}, [a, m, n](const detail::TensorImpl& o) {
            a.impl()->ensure_grad();
            auto& g = a.impl()->grad;
            for (std::int64_t i = 0; i < m; ++i)
                for (std::int64_t j = 0; j < n; ++j) g[i * n + j] += o.grad[j * m + i];
        });
    }
    return out;
}

/// Fused x.W^T + b for row-major batches: x [N x D], w [M x D], b [M] (optional).
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = Tensor()) {
    if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1))
        throw DimensionError("linear: need x [NxD], w [MxD]; got " + shape_str(x.shape()) + ", " +
                             shape_str(w.shape()));
    const std::int64_t n = x.dim(0), d = x.dim(1), m = w.dim(0);
    const bool with_bias = b.defined();
    if (with_bias && (b.rank() != 1 || b.dim(0) != m))
        throw DimensionError("linear: bias must be [M]");
    bool rg = with_bias ? detail::grad_wanted({&x, &w, &b}) : detail::grad_wanted({&x, &w});
    Tensor out = Tensor::zeros({n, m}, rg);
    const double* xd = x.data().data();
    const double* wd = w.data().data();
    double* od = out.data().data();
    for (std::int64_t i = 0; i < n; ++i) {
        const double* xrow = xd + i * d;
        double* orow = od + i * m;
        for (std::int64_t j = 0; j < m; ++j) {
            const double* wrow = wd + j * d;
            double acc = with_bias ? b.data()[static_cast<std::size_t>(j)] : 0.0;
            for (std::int64_t kk = 0; kk < d; ++kk) acc += xrow[kk] * wrow[kk];
            orow[j] = acc;
        }
    }
    if (out.requires_grad()) {
        auto back = [x, w, b, n, d, m, with_bias](const detail::TensorImpl& o) {
            const double* go = o.grad.data();
            if (x.requires_grad()) {
                x.impl()->ensure_grad();
                double* gx = x.impl()->grad.data();
                const double* wd = w.data().data();
                for (std::int64_t i = 0; i < n; ++i) {
                    const double* grow = go + i * m;
                    double* gxrow = gx + i * d;
                    for (std::int64_t j = 0; j < m; ++j) {
                        const double gv = grow[j];
                        const double* wrow = wd + j * d;
                        for (std::int64_t kk = 0; kk < d; ++kk) gxrow[kk] += gv * wrow[kk];
                    }
                }
            }
            if (w.requires_grad()) {
                w.impl()->ensure_grad();
                double* gw = w.impl()->grad.data();
                const double* xd = x.data().data();
                for (std::int64_t i = 0; i < n; ++i) {
                    const double* grow = go + i * m;
                    const double* xrow = xd + i * d;
                    for (std::int64_t j = 0; j < m; ++j) {
                        const double gv = grow[j];
                        double* gwrow = gw + j * d;
                        for (std::int64_t kk = 0; kk < d; ++kk) gwrow[kk] += gv * xrow[kk];
                    }
                }
            }
            if (with_bias && b.requires_grad()) {
                b.impl()->ensure_grad();
                double* gb = b.impl()->grad.data();
                for (std::int64_t i = 0; i < n; ++i)
                    for (std::int64_t j = 0; j < m; ++j) gb[j] += go[i * m + j];
            }
        };
        if (with_bias)
            detail::attach(out, "linear", {x, w, b}, back);
        else
            detail::attach(out, "linear", {x, w}, back);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.size())
        throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                             " changes element count");
    Tensor out = Tensor::from(std::move(shape), a.data(), detail::grad_wanted({&a}));
    if (out.requires_grad()) {
        detail::attach(out, "reshape", {a}, [a](const detail::TensorImpl& o) {
            a.impl()->ensure_grad();
            auto& g = a.impl()->grad;
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
        });
    }
    return out;
}

inline Tensor concat_rows(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
        throw DimensionError("concat_rows: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::int64_t ra = a.dim(0), rb = b.dim(0), c = a.dim(1);
    Tensor out = Tensor::zeros({ra + rb, c}, detail::grad_wanted({&a, &b}));
    std::copy(a.data().begin(), a.data().end(), out.data().begin());
    std::copy(b.data().begin(), b.data().end(), out.data().begin() + ra * c);
    if (out.requires_grad()) {
        detail::attach(out, "concat_rows", {a, b}, [a, b, ra, c](const detail::TensorImpl& o) {
            if (a.requires_grad()) {
                a.impl()->ensure_grad();
                auto& g = a.impl()->grad;
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
            }
            if (b.requires_grad()) {
                b.impl()->ensure_grad();
                auto& g = b.impl()->grad;
                const std::size_t off = static_cast<std::size_t>(ra * c);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[off + i];
            }
        });
    }
    return out;
}

/// Concatenate rank-2 tensors (equal row counts) along columns.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: empty list");
    const std::int64_t rows = parts.front().dim(0);
    std::int64_t cols = 0;
    bool rg = false;
    for (const auto& t : parts) {
        if (t.rank() != 2 || t.dim(0) != rows)
            throw DimensionError("concat_cols: row counts disagree");
        cols += t.dim(1);
        rg = rg || (GradMode::enabled() && t.requires_grad());
    }
    Tensor out = Tensor::zeros({rows, cols}, rg);
    std::int64_t off = 0;
    for (const auto& t : parts) {
        const std::int64_t c = t.dim(1);
        for (std::int64_t i = 0; i < rows; ++i)
            std::copy(t.data().begin() + i * c, t.data().begin() + (i + 1) * c,
                      out.data().begin() + i * cols + off);
        off += c;
    }
    if (rg) {
        auto node = std::make_shared<detail::Node>();
        node->op = "concat_cols";
        for (const auto& t : parts) node->inputs.push_back(t.impl());
        auto parts_copy = parts;
        node->backward = [parts_copy, rows, cols](const detail::TensorImpl& o) {
            std::int64_t off = 0;
            for (const auto& t : parts_copy) {
                const std::int64_t c = t.dim(1);
                if (t.requires_grad()) {
                    t.impl()->ensure_grad();
                    auto& g = t.impl()->grad;
                    for (std::int64_t i = 0; i < rows; ++i)
                        for (std::int64_t j = 0; j < c; ++j)
                            g[i * c + j] += o.grad[i * cols + off + j];
                }
                off += c;
            }
        };
        out.impl()->node = std::move(node);
    }
    return out;
}

inline Tensor slice_rows(const Tensor& a, std::int64_t r0, std::int64_t r1) {
    if (a.rank() != 2 || r0 < 0 || r1 > a.dim(0) || r0 >= r1)
        throw DimensionError("slice_rows: invalid range [" + std::to_string(r0) + "," + std::to_string(r1) +
                             ") for " + shape_str(a.shape()));
    const std::int64_t c = a.dim(1);
    Tensor out = Tensor::zeros({r1 - r0, c}, detail::grad_wanted({&a}));
    std::copy(a.data().begin() + r0 * c, a.data().begin() + r1 * c, out.data().begin());
    if (out.requires_grad()) {
        detail::attach(out, "slice_rows", {a}, [a, r0, c](const detail::TensorImpl& o) {
            a.impl()->ensure_grad();
            auto& g = a.impl()->grad;
            const std::size_t off = static_cast<std::size_t>(r0 * c);
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[off + i] += o.grad[i];
        });
    }
    return out;
}

/// Slice [offset, offset+len) along the last axis, any rank.
inline Tensor slice_last(const Tensor& a, std::int64_t offset, std::int64_t len) {
    const std::int64_t d = a.shape().back();
    if (offset < 0 || len <= 0 || offset + len > d)
        throw DimensionError("slice_last: invalid slice for " + shape_str(a.shape()));
    Shape out_shape = a.shape();
    out_shape.back() = len;
    const std::int64_t outer = a.size() / d;
    Tensor out = Tensor::zeros(out_shape, detail::grad_wanted({&a}));
    for (std::int64_t o = 0; o < outer; ++o)
        std::copy(a.data().begin() + o * d + offset, a.data().begin() + o * d + offset + len,
                  out.data().begin() + o * len);
    if (out.requires_grad()) {
        detail::attach(out, "slice_last", {a}, [a, offset, len, d, outer](const detail::TensorImpl& o) {
            a.impl()->ensure_grad();
            auto& g = a.impl()->grad;
            for (std::int64_t ou = 0; ou < outer; ++ou)
                for (std::int64_t j = 0; j < len; ++j) g[ou * d + offset + j] += o.grad[ou * len + j];
        });
    }
    return out;
}

/// [C x H x W] -> [H x W x C] channels-last permutation.
inline Tensor chw_to_hwc(const Tensor& a) {
    if (a.rank() != 3) throw DimensionError("chw_to_hwc: rank-3 only, got " + shape_str(a.shape()));
    const std::int64_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
    Tensor out = Tensor::zeros({h, w, c}, detail::grad_wanted({&a}));
    for (std::int64_t ci = 0; ci < c; ++ci)
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x)
                out.data()[(y * w + x) * c + ci] = a.data()[(ci * h + y) * w + x];
    if (out.requires_grad()) {
        detail::attach(out, "chw_to_hwc", {a}, [a, c, h, w](const detail::TensorImpl& o) {
            a.impl()->ensure_grad();
            auto& g = a.impl()->grad;
            for (std::int64_t ci = 0; ci < c; ++ci)
                for (std::int64_t y = 0; y < h; ++y)
                    for (std::int64_t x = 0; x < w; ++x)
                        g[(ci * h + y) * w + x] += o.grad[(y * w + x) * c + ci];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
    Tensor out = Tensor::zeros({1}, detail::grad_wanted({&a}));
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    out.data()[0] = acc;
    if (out.requires_grad()) {
        detail::attach(out, "sum", {a}, [a](const detail::TensorImpl& o) {
            a.impl()->ensure_grad();
            auto& g = a.impl()->grad;
            for (auto& v : g) v += o.grad[0];
        });
    }
    return out;
}

inline Tensor mean(const Tensor& a) { return mul_scalar(sum(a), 1.0 / static_cast<double>(a.size())); }

/// Rank-2 reduction along one axis. axis=0: [m x n] -> [n]; axis=1: -> [m].
inline Tensor sum_axis(const Tensor& a, int axis) {
    if (a.rank() != 2 || (axis != 0 && axis != 1))
        throw DimensionError("sum_axis: rank-2 with axis 0|1, got " + shape_str(a.shape()));
    const std::int64_t m = a.dim(0), n = a.dim(1);
    Tensor out = Tensor::zeros({axis == 0 ? n : m}, detail::grad_wanted({&a}));
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) out.data()[axis == 0 ? j : i] += a.data()[i * n + j];
    if (out.requires_grad()) {
        detail::attach(out, "sum_axis", {a}, [a, m, n, axis](const detail::TensorImpl& o) {
            a.impl()->ensure_grad();
            auto& g = a.impl()->grad;
            for (std::int64_t i = 0; i < m; ++i)
                for (std::int64_t j = 0; j < n; ++j) g[i * n + j] += o.grad[axis == 0 ? j : i];
        });
    }
    return out;
}

}  // namespace unmix
