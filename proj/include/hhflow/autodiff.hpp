#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "hhflow/tensor.hpp"

namespace hhflow {

/// Primitive operations recorded on a Tape.
///
/// Elementwise binary ops require identical shapes. The only broadcasting is
/// `add_bias` (a length-n vector added to every row of a B x n matrix) and the
/// row-wise pair `row_dot` / `row_scale`, which are the batched forms of `dot`
/// and `scale` used by the Householder flow.
enum class OpKind : std::uint8_t {
    leaf,
    constant,
    matvec,
    matmul,
    add,
    subtract,
    hadamard,
    divide,
    scale,
    sigmoid,
    softplus,
    exp,
    log,
    square,
    clamp,
    reduce_sum,
    dot,
    add_bias,
    row_dot,
    row_scale,
    concat,
    slice,
};

std::string_view op_name(OpKind kind);

/// Handle to a node on a Tape.
struct Var {
    std::uint32_t id = 0;
    bool operator==(const Var&) const = default;
};

/// Non-tensor attributes of an op: the factor of `scale`, the bounds of
/// `clamp`, the [begin, end) column range of `slice`.
struct OpAttrs {
    double a = 0.0;
    double b = 0.0;
};

/// Adjoints of the differentiable leaves, keyed by leaf node id.
class Gradients {
public:
    /// Adjoint of `leaf`, or zeros of `shape` when the leaf received none.
    Tensor get(Var leaf, const Shape& shape) const;
    const Tensor* find(Var leaf) const;
    void set(Var leaf, Tensor adjoint) { adjoints_[leaf.id] = std::move(adjoint); }
    std::size_t size() const { return adjoints_.size(); }

private:
    std::map<std::uint32_t, Tensor> adjoints_;
};

/// Append-only record of a define-by-run computation.
///
/// Node ids are assigned in creation order, so every node only references
/// nodes with smaller ids. A tape is single-writer; build one per minibatch.
class Tape {
public:
    /// Differentiable input (a parameter).
    Var leaf(Tensor value);
    /// Non-differentiable input (data, noise).
    Var constant(Tensor value);

    /// Generic entry point; every named helper below routes through here.
    Var apply(OpKind kind, std::span<const Var> inputs, OpAttrs attrs = {});

    Var matvec(Var a, Var x) { return apply2(OpKind::matvec, a, x); }
    Var matmul(Var a, Var b) { return apply2(OpKind::matmul, a, b); }
    Var add(Var a, Var b) { return apply2(OpKind::add, a, b); }
    Var subtract(Var a, Var b) { return apply2(OpKind::subtract, a, b); }
    Var hadamard(Var a, Var b) { return apply2(OpKind::hadamard, a, b); }
    Var divide(Var a, Var b) { return apply2(OpKind::divide, a, b); }
    Var scale(Var a, double factor) { return apply1(OpKind::scale, a, {factor, 0.0}); }
    Var sigmoid(Var a) { return apply1(OpKind::sigmoid, a); }
    Var softplus(Var a) { return apply1(OpKind::softplus, a); }
    Var exp(Var a) { return apply1(OpKind::exp, a); }
    Var log(Var a) { return apply1(OpKind::log, a); }
    Var square(Var a) { return apply1(OpKind::square, a); }
    Var clamp(Var a, double lo, double hi) { return apply1(OpKind::clamp, a, {lo, hi}); }
    Var reduce_sum(Var a) { return apply1(OpKind::reduce_sum, a); }
    Var dot(Var a, Var b) { return apply2(OpKind::dot, a, b); }
    Var add_bias(Var x, Var bias) { return apply2(OpKind::add_bias, x, bias); }
    Var row_dot(Var a, Var b) { return apply2(OpKind::row_dot, a, b); }
    Var row_scale(Var a, Var s) { return apply2(OpKind::row_scale, a, s); }
    Var concat(Var a, Var b) { return apply2(OpKind::concat, a, b); }
    Var slice(Var a, std::size_t begin, std::size_t end) {
        return apply1(OpKind::slice, a, {static_cast<double>(begin), static_cast<double>(end)});
    }

    /// Elementwise `a + c` for a scalar constant c.
    Var add_scalar(Var a, double c);

    const Tensor& value(Var v) const { return node(v).value; }
    OpKind kind(Var v) const { return node(v).kind; }
    std::span<const Var> inputs(Var v) const;
    std::size_t size() const { return nodes_.size(); }

    /// Recompute the forward value of `v` from the cached values of its inputs.
    Tensor recompute(Var v) const;

    /// Reverse-mode accumulation from a one-element root. Returns the adjoint
    /// of every differentiable leaf that the root depends on.
    Gradients backward(Var root) const;

private:
    struct Node {
        OpKind kind;
        std::uint8_t arity = 0;
        Var inputs[2];
        OpAttrs attrs;
        Tensor value;
    };

    const Node& node(Var v) const;
    Var apply1(OpKind kind, Var a, OpAttrs attrs = {}) { return apply(kind, std::span<const Var>(&a, 1), attrs); }
    Var apply2(OpKind kind, Var a, Var b) {
        const Var in[2] = {a, b};
        return apply(kind, in);
    }

    std::vector<Node> nodes_;
};

/// Central finite-difference gradient of a scalar function:
/// (f(theta + h e_i) - f(theta - h e_i)) / (2 h) per coordinate.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& theta, double step);

}  // namespace hhflow
