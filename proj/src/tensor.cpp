#include "realm/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace realm {

namespace {

std::atomic<std::uint64_t> g_next_node_id{1};

} // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

namespace detail {

void Node::ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Tensor basics
// ---------------------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
    for (std::size_t e : shape) {
        if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("shape " + shape_str(shape) + " expects " +
                             std::to_string(shape_numel(shape)) + " values, got " +
                             std::to_string(values.size()));
    }
    node_ = std::make_shared<detail::Node>();
    node_->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
    node_->shape = std::move(shape);
    node_->values = std::move(values);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return Tensor({1}, {v}, requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::ones(Shape shape, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 1.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
}

const Shape& Tensor::shape() const {
    if (!node_) throw ContractError("use of undefined tensor");
    return node_->shape;
}

std::size_t Tensor::numel() const { return values().size(); }

const std::vector<double>& Tensor::values() const {
    if (!node_) throw ContractError("use of undefined tensor");
    return node_->values;
}

bool Tensor::requires_grad() const {
    if (!node_) throw ContractError("use of undefined tensor");
    return node_->requires_grad;
}

double Tensor::value() const {
    if (numel() != 1) throw ContractError("value() requires a scalar tensor, shape is " + shape_str(shape()));
    return values()[0];
}

double Tensor::at(std::size_t i) const { return values().at(i); }

double Tensor::at(std::size_t i, std::size_t j) const {
    const Shape& s = shape();
    if (s.size() != 2) throw DimensionError("at(i,j) on tensor of shape " + shape_str(s));
    return values()[i * s[1] + j];
}

double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
    const Shape& s = shape();
    if (s.size() != 3) throw DimensionError("at(i,j,k) on tensor of shape " + shape_str(s));
    return values()[(i * s[1] + j) * s[2] + k];
}

bool Tensor::has_grad() const {
    return node_ && node_->grad.size() == node_->values.size();
}

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) throw ContractError("gradient not available; run backward() first");
    return node_->grad;
}

void Tensor::clear_grad() {
    if (node_) node_->grad.clear();
}

std::vector<double>& Tensor::values_mut() {
    if (!node_) throw ContractError("use of undefined tensor");
    return node_->values;
}

Tensor Tensor::detach() const {
    return Tensor(shape(), values(), false);
}

// ---------------------------------------------------------------------------
// Tape construction
// ---------------------------------------------------------------------------

Tensor make_op_result(Shape shape, std::vector<double> values,
                      std::vector<Tensor> parents,
                      std::function<void(detail::Node&)> backward_fn) {
    auto n = std::make_shared<detail::Node>();
    n->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
    n->shape = std::move(shape);
    n->values = std::move(values);
    bool rg = false;
    for (const Tensor& p : parents) {
        rg = rg || p.requires_grad();
        n->parents.push_back(p.node());
    }
    n->requires_grad = rg;
    if (rg) n->backward_fn = std::move(backward_fn);
    return Tensor(std::move(n));
}

void Tensor::backward() const {
    if (!node_) throw ContractError("backward() on undefined tensor");
    if (numel() != 1) {
        throw ContractError("backward() requires a scalar loss, shape is " + shape_str(shape()));
    }
    if (node_->backward_consumed) {
        throw ContractError("backward() already ran on this tape; rebuild the forward pass first");
    }
    if (!node_->requires_grad) {
        throw ContractError("loss is not connected to any tensor that requires gradients");
    }

    // Collect the tape: nodes reachable from the root that participate in
    // gradient flow. Creation ids give the topological order.
    std::vector<detail::Node*> tape;
    std::unordered_set<const detail::Node*> seen;
    std::vector<detail::Node*> stack{node_.get()};
    seen.insert(node_.get());
    while (!stack.empty()) {
        detail::Node* cur = stack.back();
        stack.pop_back();
        tape.push_back(cur);
        for (const auto& p : cur->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(tape.begin(), tape.end(),
              [](const detail::Node* a, const detail::Node* b) { return a->id > b->id; });

    for (detail::Node* n : tape) {
        n->grad.assign(n->values.size(), 0.0);
    }
    node_->grad[0] = 1.0;
    for (detail::Node* n : tape) {
        if (n->backward_fn) n->backward_fn(*n);
    }
    node_->backward_consumed = true;
}

// ---------------------------------------------------------------------------
// Broadcasting helpers (trailing-dimension alignment)
// ---------------------------------------------------------------------------

namespace {

Shape broadcast_shape(const Shape& a, const Shape& b) {
    std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    for (std::size_t j = 0; j < rank; ++j) {
        std::size_t da = j < rank - a.size() ? 1 : a[j - (rank - a.size())];
        std::size_t db = j < rank - b.size() ? 1 : b[j - (rank - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw DimensionError("shapes " + shape_str(a) + " and " + shape_str(b) +
                                 " are not broadcastable by the trailing-dimension rule");
        }
        out[j] = std::max(da, db);
    }
    return out;
}

// Per-output-dimension strides into `in`, right-aligned; 0 where broadcast.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
    std::vector<std::size_t> s(out.size(), 0);
    std::size_t stride = 1;
    for (std::size_t n = 0; n < in.size(); ++n) {
        std::size_t k = in.size() - 1 - n;          // dim of `in`
        std::size_t j = out.size() - 1 - n;         // aligned dim of `out`
        s[j] = (in[k] == 1 && out[j] != 1) ? 0 : stride;
        stride *= in[k];
    }
    return s;
}

struct BroadcastIter {
    const Shape& out;
    std::vector<std::size_t> sa, sb;
    std::vector<std::size_t> coord;

    BroadcastIter(const Shape& a, const Shape& b, const Shape& o)
        : out(o), sa(broadcast_strides(a, o)), sb(broadcast_strides(b, o)), coord(o.size(), 0) {}

    // Calls fn(out_flat, a_flat, b_flat) for every output element, row-major.
    template <typename Fn>
    void run(Fn&& fn) {
        std::size_t n = shape_numel(out);
        std::size_t ia = 0, ib = 0;
        for (std::size_t of = 0; of < n; ++of) {
            fn(of, ia, ib);
            for (std::size_t j = out.size(); j-- > 0;) {
                ++coord[j];
                ia += sa[j];
                ib += sb[j];
                if (coord[j] < out[j]) break;
                ia -= sa[j] * out[j];
                ib -= sb[j] * out[j];
                coord[j] = 0;
            }
        }
    }
};

using BinaryVal = double (*)(double, double);

Tensor binary_op(const Tensor& a, const Tensor& b, BinaryVal f,
                 // dval(a, b, out, g) -> contribution to grad_a / grad_b
                 double (*dfa)(double, double, double, double),
                 double (*dfb)(double, double, double, double)) {
    Shape out_shape = broadcast_shape(a.shape(), b.shape());
    std::vector<double> out(shape_numel(out_shape));
    {
        BroadcastIter it(a.shape(), b.shape(), out_shape);
        const auto& av = a.values();
        const auto& bv = b.values();
        it.run([&](std::size_t of, std::size_t ia, std::size_t ib) {
            out[of] = f(av[ia], bv[ib]);
        });
    }
    Shape ash = a.shape(), bsh = b.shape();
    return make_op_result(
        out_shape, std::move(out), {a, b},
        [ash, bsh, dfa, dfb](detail::Node& n) {
            auto& pa = *n.parents[0];
            auto& pb = *n.parents[1];
            if (pa.requires_grad) pa.ensure_grad();
            if (pb.requires_grad) pb.ensure_grad();
            BroadcastIter it(ash, bsh, n.shape);
            it.run([&](std::size_t of, std::size_t ia, std::size_t ib) {
                double g = n.grad[of];
                if (pa.requires_grad) pa.grad[ia] += dfa(pa.values[ia], pb.values[ib], n.values[of], g);
                if (pb.requires_grad) pb.grad[ib] += dfb(pa.values[ia], pb.values[ib], n.values[of], g);
            });
        });
}

Tensor unary_op(const Tensor& a, double (*f)(double),
                // d(in, out, g) -> grad contribution
                double (*df)(double, double, double)) {
    std::vector<double> out(a.numel());
    const auto& av = a.values();
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
    return make_op_result(
        a.shape(), std::move(out), {a},
        [df](detail::Node& n) {
            auto& p = *n.parents[0];
            p.ensure_grad();
            for (std::size_t i = 0; i < n.values.size(); ++i) {
                p.grad[i] += df(p.values[i], n.values[i], n.grad[i]);
            }
        });
}

} // namespace

// ---------------------------------------------------------------------------
// Elementwise suite
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, +[](double x, double y) { return x + y; },
        +[](double, double, double, double g) { return g; },
        +[](double, double, double, double g) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, +[](double x, double y) { return x - y; },
        +[](double, double, double, double g) { return g; },
        +[](double, double, double, double g) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, +[](double x, double y) { return x * y; },
        +[](double, double y, double, double g) { return g * y; },
        +[](double x, double, double, double g) { return g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, +[](double x, double y) { return x / y; },
        +[](double, double y, double, double g) { return g / y; },
        +[](double, double y, double out, double g) { return -g * out / y; });
}

Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.numel());
    const auto& av = a.values();
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + s;
    return make_op_result(a.shape(), std::move(out), {a}, [](detail::Node& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    });
}

Tensor mul_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.numel());
    const auto& av = a.values();
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * s;
    return make_op_result(a.shape(), std::move(out), {a}, [s](detail::Node& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * s;
    });
}

Tensor div_scalar(const Tensor& a, double s) {
    if (s == 0.0) throw DomainError("division by zero scalar");
    std::vector<double> out(a.numel());
    const auto& av = a.values();
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] / s;
    return make_op_result(a.shape(), std::move(out), {a}, [s](detail::Node& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] / s;
    });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor relu(const Tensor& a) {
    return unary_op(
        a, +[](double x) { return x > 0.0 ? x : 0.0; },
        +[](double x, double, double g) { return x > 0.0 ? g : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(
        a, +[](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        +[](double, double y, double g) { return g * y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
    return unary_op(
        a, +[](double x) { return std::tanh(x); },
        +[](double, double y, double g) { return g * (1.0 - y * y); });
}

Tensor exp(const Tensor& a) {
    return unary_op(
        a, +[](double x) { return std::exp(x); },
        +[](double, double y, double g) { return g * y; });
}

Tensor log(const Tensor& a) {
    for (double v : a.values()) {
        if (!(v > 0.0)) throw DomainError("log of non-positive input " + std::to_string(v));
    }
    return unary_op(
        a, +[](double x) { return std::log(x); },
        +[](double x, double, double g) { return g / x; });
}

Tensor sqrt(const Tensor& a) {
    for (double v : a.values()) {
        if (v < 0.0) throw DomainError("sqrt of negative input " + std::to_string(v));
    }
    return unary_op(
        a, +[](double x) { return std::sqrt(x); },
        +[](double, double y, double g) { return g / (2.0 * y); });
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.size() != 2 || bs.size() != 2) {
        throw DimensionError("matmul expects 2-D operands, got " + shape_str(as) + " and " + shape_str(bs));
    }
    if (as[1] != bs[0]) {
        throw DimensionError("matmul inner dimensions disagree: " + shape_str(as) + " x " + shape_str(bs));
    }
    std::size_t m = as[0], k = as[1], n = bs[1];
    std::vector<double> out(m * n, 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            double aik = av[i * k + p];
            for (std::size_t j = 0; j < n; ++j) {
                out[i * n + j] += aik * bv[p * n + j];
            }
        }
    }
    return make_op_result(
        {m, n}, std::move(out), {a, b},
        [m, k, n](detail::Node& nd) {
            auto& pa = *nd.parents[0];
            auto& pb = *nd.parents[1];
            // grad_a = g . b^T ; grad_b = a^T . g
            if (pa.requires_grad) {
                pa.ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        double g = nd.grad[i * n + j];
                        for (std::size_t p = 0; p < k; ++p)
                            pa.grad[i * k + p] += g * pb.values[p * n + j];
                    }
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        double g = nd.grad[i * n + j];
                        for (std::size_t p = 0; p < k; ++p)
                            pb.grad[p * n + j] += pa.values[i * k + p] * g;
                    }
            }
        });
}

Tensor transpose(const Tensor& a) {
    const Shape& as = a.shape();
    if (as.size() != 2) throw DimensionError("transpose expects a 2-D tensor, got " + shape_str(as));
    std::size_t m = as[0], n = as[1];
    std::vector<double> out(m * n);
    const auto& av = a.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
    return make_op_result({n, m}, std::move(out), {a}, [m, n](detail::Node& nd) {
        auto& p = *nd.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += nd.grad[j * m + i];
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw DimensionError("reshape from " + shape_str(a.shape()) + " to " + shape_str(shape) +
                             " changes element count");
    }
    return make_op_result(std::move(shape), a.values(), {a}, [](detail::Node& nd) {
        auto& p = *nd.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < nd.grad.size(); ++i) p.grad[i] += nd.grad[i];
    });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    return make_op_result({1}, {acc}, {a}, [](detail::Node& nd) {
        auto& p = *nd.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += nd.grad[0];
    });
}

namespace {

struct AxisSplit {
    std::size_t outer, extent, inner;
};

AxisSplit axis_split(const Shape& s, std::size_t axis, const char* op) {
    if (axis >= s.size()) {
        throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                             " out of range for shape " + shape_str(s));
    }
    AxisSplit sp{1, s[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) sp.outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) sp.inner *= s[i];
    return sp;
}

Shape reduced_shape(const Shape& s, std::size_t axis, bool keepdims) {
    Shape out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i == axis) {
            if (keepdims) out.push_back(1);
        } else {
            out.push_back(s[i]);
        }
    }
    if (out.empty()) out.push_back(1);
    return out;
}

} // namespace

Tensor sum(const Tensor& a, std::size_t axis, bool keepdims) {
    AxisSplit sp = axis_split(a.shape(), axis, "sum");
    std::vector<double> out(sp.outer * sp.inner, 0.0);
    const auto& av = a.values();
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t t = 0; t < sp.extent; ++t)
            for (std::size_t i = 0; i < sp.inner; ++i)
                out[o * sp.inner + i] += av[(o * sp.extent + t) * sp.inner + i];
    return make_op_result(reduced_shape(a.shape(), axis, keepdims), std::move(out), {a},
                          [sp](detail::Node& nd) {
                              auto& p = *nd.parents[0];
                              p.ensure_grad();
                              for (std::size_t o = 0; o < sp.outer; ++o)
                                  for (std::size_t t = 0; t < sp.extent; ++t)
                                      for (std::size_t i = 0; i < sp.inner; ++i)
                                          p.grad[(o * sp.extent + t) * sp.inner + i] +=
                                              nd.grad[o * sp.inner + i];
                          });
}

Tensor mean(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    double n = static_cast<double>(a.numel());
    return make_op_result({1}, {acc / n}, {a}, [n](detail::Node& nd) {
        auto& p = *nd.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += nd.grad[0] / n;
    });
}

Tensor mean(const Tensor& a, std::size_t axis, bool keepdims) {
    AxisSplit sp = axis_split(a.shape(), axis, "mean");
    double n = static_cast<double>(sp.extent);
    std::vector<double> out(sp.outer * sp.inner, 0.0);
    const auto& av = a.values();
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t t = 0; t < sp.extent; ++t)
            for (std::size_t i = 0; i < sp.inner; ++i)
                out[o * sp.inner + i] += av[(o * sp.extent + t) * sp.inner + i];
    for (double& v : out) v /= n;
    return make_op_result(reduced_shape(a.shape(), axis, keepdims), std::move(out), {a},
                          [sp, n](detail::Node& nd) {
                              auto& p = *nd.parents[0];
                              p.ensure_grad();
                              for (std::size_t o = 0; o < sp.outer; ++o)
                                  for (std::size_t t = 0; t < sp.extent; ++t)
                                      for (std::size_t i = 0; i < sp.inner; ++i)
                                          p.grad[(o * sp.extent + t) * sp.inner + i] +=
                                              nd.grad[o * sp.inner + i] / n;
                          });
}

// ---------------------------------------------------------------------------
// Normalizations
// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& a, std::size_t axis) {
    AxisSplit sp = axis_split(a.shape(), axis, "softmax");
    std::vector<double> out(a.numel());
    const auto& av = a.values();
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            double mx = av[(o * sp.extent) * sp.inner + i];
            for (std::size_t t = 1; t < sp.extent; ++t)
                mx = std::max(mx, av[(o * sp.extent + t) * sp.inner + i]);
            double z = 0.0;
            for (std::size_t t = 0; t < sp.extent; ++t) {
                double e = std::exp(av[(o * sp.extent + t) * sp.inner + i] - mx);
                out[(o * sp.extent + t) * sp.inner + i] = e;
                z += e;
            }
            for (std::size_t t = 0; t < sp.extent; ++t)
                out[(o * sp.extent + t) * sp.inner + i] /= z;
        }
    }
    return make_op_result(a.shape(), std::move(out), {a}, [sp](detail::Node& nd) {
        // dx = (g - sum(g*y)) * y per slice
        auto& p = *nd.parents[0];
        p.ensure_grad();
        for (std::size_t o = 0; o < sp.outer; ++o) {
            for (std::size_t i = 0; i < sp.inner; ++i) {
                double dot = 0.0;
                for (std::size_t t = 0; t < sp.extent; ++t) {
                    std::size_t idx = (o * sp.extent + t) * sp.inner + i;
                    dot += nd.grad[idx] * nd.values[idx];
                }
                for (std::size_t t = 0; t < sp.extent; ++t) {
                    std::size_t idx = (o * sp.extent + t) * sp.inner + i;
                    p.grad[idx] += (nd.grad[idx] - dot) * nd.values[idx];
                }
            }
        }
    });
}

Tensor logsumexp(const Tensor& a, std::size_t axis) {
    AxisSplit sp = axis_split(a.shape(), axis, "logsumexp");
    std::vector<double> out(sp.outer * sp.inner);
    // softmax of the input is the gradient; save it for backward
    auto sm = std::make_shared<std::vector<double>>(a.numel());
    const auto& av = a.values();
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            double mx = av[(o * sp.extent) * sp.inner + i];
            for (std::size_t t = 1; t < sp.extent; ++t)
                mx = std::max(mx, av[(o * sp.extent + t) * sp.inner + i]);
            double z = 0.0;
            for (std::size_t t = 0; t < sp.extent; ++t) {
                double e = std::exp(av[(o * sp.extent + t) * sp.inner + i] - mx);
                (*sm)[(o * sp.extent + t) * sp.inner + i] = e;
                z += e;
            }
            out[o * sp.inner + i] = mx + std::log(z);
            for (std::size_t t = 0; t < sp.extent; ++t)
                (*sm)[(o * sp.extent + t) * sp.inner + i] /= z;
        }
    }
    Shape out_shape = a.shape();
    out_shape[axis] = 1;
    return make_op_result(std::move(out_shape), std::move(out), {a}, [sp, sm](detail::Node& nd) {
        auto& p = *nd.parents[0];
        p.ensure_grad();
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t t = 0; t < sp.extent; ++t)
                for (std::size_t i = 0; i < sp.inner; ++i)
                    p.grad[(o * sp.extent + t) * sp.inner + i] +=
                        nd.grad[o * sp.inner + i] * (*sm)[(o * sp.extent + t) * sp.inner + i];
    });
}

Tensor layer_norm(const Tensor& a, double eps) {
    const Shape& s = a.shape();
    std::size_t d = s.back();
    if (d < 2) {
        throw DimensionError("layer_norm needs a last dimension of at least 2, got " + shape_str(s));
    }
    std::size_t rows = a.numel() / d;
    std::vector<double> out(a.numel());
    auto inv_sigma = std::make_shared<std::vector<double>>(rows);
    const auto& av = a.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = av.data() + r * d;
        double mu = 0.0;
        for (std::size_t i = 0; i < d; ++i) mu += x[i];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) var += (x[i] - mu) * (x[i] - mu);
        var /= static_cast<double>(d);
        double is = 1.0 / std::sqrt(var + eps);
        (*inv_sigma)[r] = is;
        for (std::size_t i = 0; i < d; ++i) out[r * d + i] = (x[i] - mu) * is;
    }
    return make_op_result(s, std::move(out), {a}, [d, rows, inv_sigma](detail::Node& nd) {
        // dx = inv_sigma * (g - mean(g) - yhat * mean(g*yhat)) per row
        auto& p = *nd.parents[0];
        p.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* g = nd.grad.data() + r * d;
            const double* y = nd.values.data() + r * d;
            double mg = 0.0, mgy = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                mg += g[i];
                mgy += g[i] * y[i];
            }
            mg /= static_cast<double>(d);
            mgy /= static_cast<double>(d);
            double is = (*inv_sigma)[r];
            for (std::size_t i = 0; i < d; ++i) {
                p.grad[r * d + i] += is * (g[i] - mg - y[i] * mgy);
            }
        }
    });
}

} // namespace realm
