#pragma once

// Reverse-mode differentiation over dense row-major double tensors.
//
// Every op records a node holding its value, its inputs and a gradient rule.
// backward() walks the recorded graph once in reverse topological order and
// accumulates into the grad buffers of requires_grad leaves. Gradients must be
// zeroed between two backward passes that reach the same leaf; a second pass
// over dirty leaves throws ContractError instead of accumulating silently.

#include <tcnd/errors.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace tcnd {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << " x ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

class Tensor;

// Receives the output gradient and one span per input. Spans of inputs that
// do not require grad are empty and must be skipped.
using BackwardFn =
    std::function<void(std::span<const double> grad_out, std::span<const std::span<double>> grad_in)>;

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool leaf = true;
    bool grad_dirty = false;
    std::vector<std::shared_ptr<Node>> inputs;
    BackwardFn backward;
    std::string op = "leaf";
};

inline thread_local bool grad_mode_enabled = true;

inline void require_finite(std::span<const double> values, const std::string& where) {
    for (double v : values) {
        if (!std::isfinite(v)) throw NumericError("non-finite value produced by " + where);
    }
}

}  // namespace detail

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode_enabled) { detail::grad_mode_enabled = false; }
    ~NoGradGuard() { detail::grad_mode_enabled = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode_enabled; }

class Tensor {
public:
    Tensor() : node_(std::make_shared<detail::Node>()) { node_->value.assign(1, 0.0); }

    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
        if (shape_numel(shape) != data.size()) {
            throw DimensionError("tensor data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_string(shape));
        }
        detail::require_finite(data, "tensor construction");
        auto node = std::make_shared<detail::Node>();
        node->shape = std::move(shape);
        node->value = std::move(data);
        node->requires_grad = requires_grad;
        if (requires_grad) node->grad.assign(node->value.size(), 0.0);
        return Tensor(std::move(node));
    }

    static Tensor full(Shape shape, double fill, bool requires_grad = false) {
        std::vector<double> data(shape_numel(shape), fill);
        return from(std::move(shape), std::move(data), requires_grad);
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return full(std::move(shape), 0.0, requires_grad);
    }

    static Tensor scalar(double value, bool requires_grad = false) {
        return from({}, {value}, requires_grad);
    }

    const Shape& shape() const noexcept { return node_->shape; }
    std::size_t rank() const noexcept { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t numel() const noexcept { return node_->value.size(); }

    std::span<const double> data() const noexcept { return node_->value; }

    // Direct write access, restricted to leaves (parameters, inputs).
    std::span<double> mutable_data() {
        if (!node_->leaf) throw ContractError("cannot mutate the value of a recorded op output");
        return node_->value;
    }

    double item() const {
        if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
        return node_->value[0];
    }

    double at(std::size_t i) const { return node_->value.at(i); }
    double at(std::size_t row, std::size_t col) const {
        if (rank() != 2) throw DimensionError("2-D index into tensor of shape " + shape_string(shape()));
        return node_->value.at(row * node_->shape[1] + col);
    }

    bool requires_grad() const noexcept { return node_->requires_grad; }
    bool is_leaf() const noexcept { return node_->leaf; }
    const std::string& op_name() const noexcept { return node_->op; }

    // Present iff requires_grad.
    std::span<const double> grad() const {
        if (!node_->requires_grad) throw ContractError("grad() on tensor that does not require grad");
        return node_->grad;
    }

    void zero_grad() {
        if (!node_->requires_grad) return;
        std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
        node_->grad_dirty = false;
    }

    // Fresh leaf holding a copy of the value, with no history.
    Tensor detach(bool requires_grad = false) const {
        return from(shape(), node_->value, requires_grad);
    }

    bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

    std::shared_ptr<detail::Node> node_;

    friend Tensor record_op(std::string op, Shape shape, std::vector<double> value,
                            std::vector<Tensor> inputs, BackwardFn backward);
    friend class Graph;
    friend void backward(const Tensor& loss);
};

// Creates an op output. The node is attached to the graph only when grad mode
// is on and at least one input requires grad; otherwise it is a plain leaf.
inline Tensor record_op(std::string op, Shape shape, std::vector<double> value,
                        std::vector<Tensor> inputs, BackwardFn backward_fn) {
    if (shape_numel(shape) != value.size()) {
        throw DimensionError(op + ": produced " + std::to_string(value.size()) +
                             " values for shape " + shape_string(shape));
    }
    detail::require_finite(value, op);
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = std::move(op);
    node->leaf = false;
    const bool any_grad = std::any_of(inputs.begin(), inputs.end(),
                                      [](const Tensor& t) { return t.requires_grad(); });
    if (any_grad && grad_enabled()) {
        node->requires_grad = true;
        node->backward = std::move(backward_fn);
        node->inputs.reserve(inputs.size());
        for (auto& in : inputs) node->inputs.push_back(in.node_);
    }
    return Tensor(std::move(node));
}

// Topologically ordered view of the ops that contribute to a root tensor.
// Inputs precede the ops that consume them; each node appears once.
class Graph {
public:
    static Graph trace(const Tensor& root) {
        Graph g;
        if (!root.requires_grad()) return g;
        std::unordered_set<const detail::Node*> seen;
        std::vector<std::pair<detail::Node*, std::size_t>> stack;
        stack.emplace_back(root.node_.get(), 0);
        seen.insert(root.node_.get());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->inputs.size()) {
                detail::Node* child = node->inputs[next++].get();
                if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
            } else {
                g.order_.push_back(node);
                stack.pop_back();
            }
        }
        return g;
    }

    std::size_t size() const noexcept { return order_.size(); }

    std::vector<std::string> op_names() const {
        std::vector<std::string> names;
        names.reserve(order_.size());
        for (const auto* n : order_) names.push_back(n->op);
        return names;
    }

    std::size_t leaf_count() const {
        return static_cast<std::size_t>(
            std::count_if(order_.begin(), order_.end(), [](const auto* n) { return n->leaf; }));
    }

private:
    std::vector<detail::Node*> order_;

    friend void backward(const Tensor& loss);
};

inline void backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw ContractError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
    }
    if (!loss.requires_grad() || loss.is_leaf()) {
        throw ContractError("backward() on a tensor with no recorded operations");
    }
    Graph graph = Graph::trace(loss);
    for (const auto* node : graph.order_) {
        if (node->leaf && node->grad_dirty) {
            throw ContractError("backward() reached a leaf whose gradient was not zeroed since the last pass");
        }
    }
    for (auto* node : graph.order_) {
        if (!node->leaf) node->grad.assign(node->value.size(), 0.0);
    }
    graph.order_.back()->grad[0] = 1.0;

    std::vector<std::span<double>> grad_in;
    for (auto it = graph.order_.rbegin(); it != graph.order_.rend(); ++it) {
        detail::Node* node = *it;
        if (node->leaf) {
            detail::require_finite(node->grad, "backward pass");
            node->grad_dirty = true;
            continue;
        }
        grad_in.clear();
        for (auto& in : node->inputs) {
            grad_in.push_back(in->requires_grad ? std::span<double>(in->grad) : std::span<double>());
        }
        node->backward(node->grad, grad_in);
        std::vector<double>().swap(node->grad);
    }
}

// ---------------------------------------------------------------------------
// Elementwise and linear-algebra ops. No broadcasting beyond scalars.

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

inline void require_rank(const Tensor& a, std::size_t rank, const char* op) {
    if (a.rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                             shape_string(a.shape()));
    }
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
    return record_op("add", a.shape(), std::move(out), {a, b},
                     [](std::span<const double> g, std::span<const std::span<double>> gin) {
                         for (auto dst : gin) {
                             for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
                         }
                     });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
    return record_op("sub", a.shape(), std::move(out), {a, b},
                     [](std::span<const double> g, std::span<const std::span<double>> gin) {
                         for (std::size_t i = 0; i < gin[0].size(); ++i) gin[0][i] += g[i];
                         for (std::size_t i = 0; i < gin[1].size(); ++i) gin[1][i] -= g[i];
                     });
}

// Hadamard product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
    return record_op("mul", a.shape(), std::move(out), {a, b},
                     [a, b](std::span<const double> g, std::span<const std::span<double>> gin) {
                         auto x = a.data(), y = b.data();
                         for (std::size_t i = 0; i < gin[0].size(); ++i) gin[0][i] += g[i] * y[i];
                         for (std::size_t i = 0; i < gin[1].size(); ++i) gin[1][i] += g[i] * x[i];
                     });
}

inline Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (double& v : out) v *= s;
    return record_op("scale", a.shape(), std::move(out), {a},
                     [s](std::span<const double> g, std::span<const std::span<double>> gin) {
                         for (std::size_t i = 0; i < gin[0].size(); ++i) gin[0][i] += s * g[i];
                     });
}

inline Tensor add(const Tensor& a, double s) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (double& v : out) v += s;
    return record_op("add_scalar", a.shape(), std::move(out), {a},
                     [](std::span<const double> g, std::span<const std::span<double>> gin) {
                         for (std::size_t i = 0; i < gin[0].size(); ++i) gin[0][i] += g[i];
                     });
}

inline Tensor mul(const Tensor& a, double s) { return scale(a, s); }

inline Tensor sum(const Tensor& a) {
    auto x = a.data();
    double total = std::accumulate(x.begin(), x.end(), 0.0);
    return record_op("sum", {}, {total}, {a},
                     [](std::span<const double> g, std::span<const std::span<double>> gin) {
                         for (double& v : gin[0]) v += g[0];
                     });
}

inline Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw DimensionError("mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

// Sum of a list of equally shaped tensors.
inline Tensor add_n(std::span<const Tensor> terms) {
    if (terms.empty()) throw DimensionError("add_n of no tensors");
    for (const auto& t : terms) detail::require_same_shape(terms.front(), t, "add_n");
    std::vector<double> out(terms.front().numel(), 0.0);
    for (const auto& t : terms) {
        auto x = t.data();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += x[i];
    }
    return record_op("add_n", terms.front().shape(), std::move(out),
                     std::vector<Tensor>(terms.begin(), terms.end()),
                     [](std::span<const double> g, std::span<const std::span<double>> gin) {
                         for (auto dst : gin) {
                             for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
                         }
                     });
}

// C = A·B for A [M×K], B [K×N]. dA = dC·Bᵀ, dB = Aᵀ·dC.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_rank(a, 2, "matmul");
    detail::require_rank(b, 2, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner extents differ " + shape_string(a.shape()) + " · " +
                             shape_string(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = x[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = y.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
        }
    }
    return record_op(
        "matmul", {m, n}, std::move(out), {a, b},
        [a, b, m, k, n](std::span<const double> g, std::span<const std::span<double>> gin) {
            auto x = a.data(), y = b.data();
            if (!gin[0].empty()) {
                for (std::size_t i = 0; i < m; ++i) {
                    const double* grow = g.data() + i * n;
                    for (std::size_t p = 0; p < k; ++p) {
                        const double* brow = y.data() + p * n;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        gin[0][i * k + p] += acc;
                    }
                }
            }
            if (!gin[1].empty()) {
                for (std::size_t i = 0; i < m; ++i) {
                    const double* grow = g.data() + i * n;
                    for (std::size_t p = 0; p < k; ++p) {
                        const double aip = x[i * k + p];
                        if (aip == 0.0) continue;
                        double* drow = gin[1].data() + p * n;
                        for (std::size_t j = 0; j < n; ++j) drow[j] += aip * grow[j];
                    }
                }
            }
        });
}

inline Tensor transpose(const Tensor& a) {
    detail::require_rank(a, 2, "transpose");
    const std::size_t rows = a.dim(0), cols = a.dim(1);
    std::vector<double> out(a.numel());
    auto x = a.data();
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = x[i * cols + j];
    }
    return record_op("transpose", {cols, rows}, std::move(out), {a},
                     [rows, cols](std::span<const double> g, std::span<const std::span<double>> gin) {
                         for (std::size_t i = 0; i < rows; ++i) {
                             for (std::size_t j = 0; j < cols; ++j) gin[0][i * cols + j] += g[j * rows + i];
                         }
                     });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw DimensionError("reshape " + shape_string(a.shape()) + " -> " + shape_string(shape));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    return record_op("reshape", std::move(shape), std::move(out), {a},
                     [](std::span<const double> g, std::span<const std::span<double>> gin) {
                         for (std::size_t i = 0; i < gin[0].size(); ++i) gin[0][i] += g[i];
                     });
}

// ---------------------------------------------------------------------------
// Verification.

// Max over coordinates of |analytic - central| / max(|analytic|, |central|, 1e-12),
// where analytic comes from backward() through f and central is
// (f(x + h e_i) - f(x - h e_i)) / 2h.
inline double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                      double h = 1e-6) {
    if (!(h > 0.0)) throw ContractError("finite_difference_check: step must be positive");
    Tensor probe = x.detach(true);
    backward(f(probe));
    const std::vector<double> analytic(probe.grad().begin(), probe.grad().end());

    NoGradGuard no_grad;
    std::vector<double> values(x.data().begin(), x.data().end());
    double worst = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double orig = values[i];
        values[i] = orig + h;
        const double up = f(Tensor::from(x.shape(), values)).item();
        values[i] = orig - h;
        const double down = f(Tensor::from(x.shape(), values)).item();
        values[i] = orig;
        const double central = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(analytic[i]), std::abs(central), 1e-12});
        worst = std::max(worst, std::abs(analytic[i] - central) / denom);
    }
    return worst;
}

// Same measure over a set of parameter leaves that a loss closure reads in
// place. Each parameter is perturbed and restored; grads are zeroed on exit.
inline double finite_difference_check_params(const std::function<Tensor()>& loss_fn,
                                             std::span<Tensor> params, double h = 1e-6) {
    if (!(h > 0.0)) throw ContractError("finite_difference_check_params: step must be positive");
    for (auto& p : params) p.zero_grad();
    backward(loss_fn());
    double worst = 0.0;
    for (auto& p : params) {
        const std::vector<double> analytic(p.grad().begin(), p.grad().end());
        auto values = p.mutable_data();
        NoGradGuard no_grad;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double orig = values[i];
            values[i] = orig + h;
            const double up = loss_fn().item();
            values[i] = orig - h;
            const double down = loss_fn().item();
            values[i] = orig;
            const double central = (up - down) / (2.0 * h);
            const double denom = std::max({std::abs(analytic[i]), std::abs(central), 1e-12});
            worst = std::max(worst, std::abs(analytic[i] - central) / denom);
        }
    }
    for (auto& p : params) p.zero_grad();
    return worst;
}

}  // namespace tcnd
