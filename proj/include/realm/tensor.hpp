#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "realm/errors.hpp"

namespace realm {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {

// One recorded operation (or leaf) on the tape. Parents always carry smaller
// ids than their children, so id order is a topological order.
struct Node {
    std::uint64_t id = 0;
    Shape shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad;          // sized on demand during backward
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn; // pushes this->grad into parents
    bool backward_consumed = false;    // set on a loss root after backward()

    void ensure_grad();
};

} // namespace detail

// Dense 64-bit real tensor, row-major, with reverse-mode autodiff recorded
// implicitly through shared parent links. Values are immutable after
// construction except for gradient accumulation and explicit leaf updates
// between training steps (values_mut).
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor ones(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;
    const std::vector<double>& values() const;
    bool requires_grad() const;

    // Scalar convenience; contract error unless numel() == 1.
    double value() const;
    double at(std::size_t i) const;
    double at(std::size_t i, std::size_t j) const;
    double at(std::size_t i, std::size_t j, std::size_t k) const;

    bool has_grad() const;
    const std::vector<double>& grad() const; // contract error if absent
    void clear_grad();

    // Leaf update hook for optimizers; must only be called between tapes.
    std::vector<double>& values_mut();

    // Constant copy sharing no tape history.
    Tensor detach() const;

    // Reverse-mode sweep from a scalar loss. Visits each reachable node once,
    // in reverse creation order. A second call on the same root is an error.
    void backward() const;

    std::shared_ptr<detail::Node> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::Node> node_;

    friend Tensor make_op_result(Shape shape, std::vector<double> values,
                                 std::vector<Tensor> parents,
                                 std::function<void(detail::Node&)> backward_fn);
};

// Records one op on the tape. `backward_fn` must add this node's grad into
// each parent's grad (calling parent.ensure_grad() first).
Tensor make_op_result(Shape shape, std::vector<double> values,
                      std::vector<Tensor> parents,
                      std::function<void(detail::Node&)> backward_fn);

// --- elementwise suite (broadcast by trailing-dimension alignment) ---
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor div_scalar(const Tensor& a, double s); // IEEE division, not mul by 1/s
Tensor neg(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // domain error on non-positive input
Tensor sqrt(const Tensor& a); // domain error on negative input

// --- structural ---
Tensor matmul(const Tensor& a, const Tensor& b); // 2-D only
Tensor transpose(const Tensor& a);               // 2-D only
Tensor reshape(const Tensor& a, Shape shape);

// --- reductions ---
Tensor sum(const Tensor& a);                                        // scalar
Tensor sum(const Tensor& a, std::size_t axis, bool keepdims = false);
Tensor mean(const Tensor& a);                                       // scalar
Tensor mean(const Tensor& a, std::size_t axis, bool keepdims = false);

// --- normalizations ---
// Row-wise softmax along `axis`, max-stabilized; each slice sums to 1.
Tensor softmax(const Tensor& a, std::size_t axis);
// log(sum(exp(.))) along `axis`, keepdims semantics (axis extent becomes 1).
Tensor logsumexp(const Tensor& a, std::size_t axis);
// Normalizes the last dimension to mean 0 / population variance 1.
// No learned affine terms. Last dimension must be >= 2.
Tensor layer_norm(const Tensor& a, double eps = 1e-5);

// operator sugar
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator+(double s, const Tensor& a) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator/(const Tensor& a, double s) { return div_scalar(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

} // namespace realm
