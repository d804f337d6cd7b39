#include "hhflow/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace hhflow {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;
using MatMap = Eigen::Map<RowMat>;

[[noreturn]] void shape_error(OpKind kind, const Shape& a, const Shape& b) {
    throw ShapeError(std::string("shape mismatch in ") + std::string(op_name(kind)) + ": " +
                     a.str() + " vs " + b.str());
}

[[noreturn]] void shape_error(OpKind kind, const Shape& a, const std::string& what) {
    throw ShapeError(std::string("invalid shape for ") + std::string(op_name(kind)) + ": " +
                     a.str() + " (" + what + ")");
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

template <class F>
Tensor map_unary(const Tensor& a, F f) {
    Tensor out(a.shape());
    auto src = a.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
    return out;
}

template <class F>
Tensor map_binary(OpKind kind, const Tensor& a, const Tensor& b, F f) {
    if (a.shape() != b.shape()) shape_error(kind, a.shape(), b.shape());
    Tensor out(a.shape());
    auto x = a.data();
    auto y = b.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
    return out;
}

Tensor forward(OpKind kind, const Tensor* a, const Tensor* b, OpAttrs attrs) {
    switch (kind) {
        case OpKind::leaf:
        case OpKind::constant:
            break;
        case OpKind::matvec: {
            if (a->shape().rank() != 2 || b->shape().rank() != 1 || a->cols() != b->size())
                shape_error(kind, a->shape(), b->shape());
            Tensor out(Shape{a->rows()});
            Eigen::Map<Eigen::VectorXd>(out.data().data(), a->rows()).noalias() =
                ConstMatMap(a->data().data(), a->rows(), a->cols()) *
                Eigen::Map<const Eigen::VectorXd>(b->data().data(), b->size());
            return out;
        }
        case OpKind::matmul: {
            if (a->shape().rank() != 2 || b->shape().rank() != 2 || a->cols() != b->rows())
                shape_error(kind, a->shape(), b->shape());
            Tensor out(Shape{a->rows(), b->cols()});
            MatMap(out.data().data(), a->rows(), b->cols()).noalias() =
                ConstMatMap(a->data().data(), a->rows(), a->cols()) *
                ConstMatMap(b->data().data(), b->rows(), b->cols());
            return out;
        }
        case OpKind::add:
            return map_binary(kind, *a, *b, [](double x, double y) { return x + y; });
        case OpKind::subtract:
            return map_binary(kind, *a, *b, [](double x, double y) { return x - y; });
        case OpKind::hadamard:
            return map_binary(kind, *a, *b, [](double x, double y) { return x * y; });
        case OpKind::divide:
            return map_binary(kind, *a, *b, [](double x, double y) { return x / y; });
        case OpKind::scale:
            return map_unary(*a, [c = attrs.a](double x) { return c * x; });
        case OpKind::sigmoid:
            return map_unary(*a, stable_sigmoid);
        case OpKind::softplus:
            return map_unary(*a, stable_softplus);
        case OpKind::exp:
            return map_unary(*a, [](double x) { return std::exp(x); });
        case OpKind::log:
            return map_unary(*a, [](double x) { return std::log(x); });
        case OpKind::square:
            return map_unary(*a, [](double x) { return x * x; });
        case OpKind::clamp:
            if (!(attrs.a <= attrs.b)) shape_error(kind, a->shape(), "clamp bounds out of order");
            return map_unary(*a, [lo = attrs.a, hi = attrs.b](double x) { return std::clamp(x, lo, hi); });
        case OpKind::reduce_sum: {
            double s = 0.0;
            for (double x : a->data()) s += x;
            return Tensor::scalar(s);
        }
        case OpKind::dot: {
            if (a->shape() != b->shape()) shape_error(kind, a->shape(), b->shape());
            double s = 0.0;
            for (std::size_t i = 0; i < a->size(); ++i) s += (*a)[i] * (*b)[i];
            return Tensor::scalar(s);
        }
        case OpKind::add_bias: {
            if (b->shape().rank() != 1 || a->cols() != b->size()) shape_error(kind, a->shape(), b->shape());
            Tensor out = *a;
            for (std::size_t r = 0; r < out.rows(); ++r) {
                auto row = out.row(r);
                for (std::size_t c = 0; c < row.size(); ++c) row[c] += (*b)[c];
            }
            return out;
        }
        case OpKind::row_dot: {
            if (a->shape() != b->shape()) shape_error(kind, a->shape(), b->shape());
            Tensor out(Shape{a->rows()});
            for (std::size_t r = 0; r < a->rows(); ++r) {
                auto x = a->row(r);
                auto y = b->row(r);
                double s = 0.0;
                for (std::size_t c = 0; c < x.size(); ++c) s += x[c] * y[c];
                out[r] = s;
            }
            return out;
        }
        case OpKind::row_scale: {
            if (b->shape().rank() != 1 || b->size() != a->rows()) shape_error(kind, a->shape(), b->shape());
            Tensor out = *a;
            for (std::size_t r = 0; r < out.rows(); ++r) {
                for (double& x : out.row(r)) x *= (*b)[r];
            }
            return out;
        }
        case OpKind::concat: {
            if (a->shape().rank() != b->shape().rank() || a->rows() != b->rows())
                shape_error(kind, a->shape(), b->shape());
            const std::size_t cols = a->cols() + b->cols();
            Tensor out(a->shape().rank() == 2 ? Shape{a->rows(), cols} : Shape{cols});
            for (std::size_t r = 0; r < out.rows(); ++r) {
                auto dst = out.row(r);
                std::copy(a->row(r).begin(), a->row(r).end(), dst.begin());
                std::copy(b->row(r).begin(), b->row(r).end(), dst.begin() + a->cols());
            }
            return out;
        }
        case OpKind::slice: {
            const auto begin = static_cast<std::size_t>(attrs.a);
            const auto end = static_cast<std::size_t>(attrs.b);
            if (begin >= end || end > a->cols()) shape_error(kind, a->shape(), "slice range out of bounds");
            const std::size_t cols = end - begin;
            Tensor out(a->shape().rank() == 2 ? Shape{a->rows(), cols} : Shape{cols});
            for (std::size_t r = 0; r < out.rows(); ++r) {
                auto src = a->row(r).subspan(begin, cols);
                std::copy(src.begin(), src.end(), out.row(r).begin());
            }
            return out;
        }
    }
    throw Error("forward: unsupported op kind");
}

std::size_t expected_arity(OpKind kind) {
    switch (kind) {
        case OpKind::leaf:
        case OpKind::constant:
            return 0;
        case OpKind::scale:
        case OpKind::sigmoid:
        case OpKind::softplus:
        case OpKind::exp:
        case OpKind::log:
        case OpKind::square:
        case OpKind::clamp:
        case OpKind::reduce_sum:
        case OpKind::slice:
            return 1;
        default:
            return 2;
    }
}

void accumulate(Tensor& dst, char& has, const Tensor& delta) {
    if (!has) {
        dst = delta;
        has = true;
        return;
    }
    auto d = dst.data();
    auto s = delta.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

std::string_view op_name(OpKind kind) {
    switch (kind) {
        case OpKind::leaf: return "leaf";
        case OpKind::constant: return "constant";
        case OpKind::matvec: return "matvec";
        case OpKind::matmul: return "matmul";
        case OpKind::add: return "add";
        case OpKind::subtract: return "subtract";
        case OpKind::hadamard: return "hadamard";
        case OpKind::divide: return "divide";
        case OpKind::scale: return "scalar-scale";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::softplus: return "softplus";
        case OpKind::exp: return "exp";
        case OpKind::log: return "log";
        case OpKind::square: return "square";
        case OpKind::clamp: return "clamp";
        case OpKind::reduce_sum: return "reduce-sum";
        case OpKind::dot: return "dot";
        case OpKind::add_bias: return "broadcast-add-bias";
        case OpKind::row_dot: return "row-dot";
        case OpKind::row_scale: return "row-scale";
        case OpKind::concat: return "concat";
        case OpKind::slice: return "slice";
    }
    return "unknown";
}

Tensor Gradients::get(Var leaf, const Shape& shape) const {
    if (const Tensor* t = find(leaf)) return *t;
    return Tensor(shape);
}

const Tensor* Gradients::find(Var leaf) const {
    auto it = adjoints_.find(leaf.id);
    return it == adjoints_.end() ? nullptr : &it->second;
}

Var Tape::leaf(Tensor value) {
    if (!value.all_finite()) throw NumericError("non-finite value passed as tape leaf");
    nodes_.push_back(Node{OpKind::leaf, 0, {}, {}, std::move(value)});
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) {
    if (!value.all_finite()) throw NumericError("non-finite value passed as tape constant");
    nodes_.push_back(Node{OpKind::constant, 0, {}, {}, std::move(value)});
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::apply(OpKind kind, std::span<const Var> inputs, OpAttrs attrs) {
    if (kind == OpKind::leaf || kind == OpKind::constant)
        throw Error("apply: use leaf() or constant() to create input nodes");
    if (inputs.size() != expected_arity(kind))
        throw Error(std::string("apply: wrong number of inputs for ") + std::string(op_name(kind)));
    Node n{kind, static_cast<std::uint8_t>(inputs.size()), {}, attrs, {}};
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        node(inputs[i]);  // range check
        n.inputs[i] = inputs[i];
    }
    const Tensor* a = &node(n.inputs[0]).value;
    const Tensor* b = n.arity > 1 ? &node(n.inputs[1]).value : nullptr;
    n.value = forward(kind, a, b, attrs);
    if (!n.value.all_finite())
        throw NumericError(std::string("non-finite value produced by ") + std::string(op_name(kind)));
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::add_scalar(Var a, double c) {
    return add(a, constant(Tensor(value(a).shape(), c)));
}

std::span<const Var> Tape::inputs(Var v) const {
    const Node& n = node(v);
    return {n.inputs, n.arity};
}

const Tape::Node& Tape::node(Var v) const {
    if (v.id >= nodes_.size())
        throw Error("node id " + std::to_string(v.id) + " outside tape of size " + std::to_string(nodes_.size()));
    return nodes_[v.id];
}

Tensor Tape::recompute(Var v) const {
    const Node& n = node(v);
    if (n.arity == 0) return n.value;
    const Tensor* a = &node(n.inputs[0]).value;
    const Tensor* b = n.arity > 1 ? &node(n.inputs[1]).value : nullptr;
    return forward(n.kind, a, b, n.attrs);
}

Gradients Tape::backward(Var root) const {
    const Node& r = node(root);
    if (r.value.size() != 1)
        throw ShapeError("backward: root must be scalar, got shape " + r.value.shape().str());

    const std::size_t count = root.id + 1;
    std::vector<bool> needs(count, false);
    for (std::size_t i = 0; i < count; ++i) {
        const Node& n = nodes_[i];
        if (n.kind == OpKind::leaf) {
            needs[i] = true;
        } else {
            for (std::size_t k = 0; k < n.arity; ++k) needs[i] = needs[i] || needs[n.inputs[k].id];
        }
    }

    std::vector<Tensor> adj(count);
    std::vector<char> has(count, 0);
    adj[root.id] = Tensor(r.value.shape(), 1.0);
    has[root.id] = true;

    Gradients grads;
    for (std::size_t idx = count; idx-- > 0;) {
        if (!has[idx] || !needs[idx]) continue;
        const Node& n = nodes_[idx];
        const Tensor& g = adj[idx];
        if (n.kind == OpKind::leaf) {
            grads.set(Var{static_cast<std::uint32_t>(idx)}, g);
            continue;
        }
        if (n.kind == OpKind::constant) continue;

        const std::uint32_t ia = n.inputs[0].id;
        const std::uint32_t ib = n.arity > 1 ? n.inputs[1].id : 0;
        const Tensor& a = nodes_[ia].value;
        const Tensor* b = n.arity > 1 ? &nodes_[ib].value : nullptr;
        const bool need_a = needs[ia];
        const bool need_b = n.arity > 1 && needs[ib];
        const Tensor& y = n.value;

        auto elementwise_a = [&](auto f) {
            if (!need_a) return;
            Tensor d(a.shape());
            for (std::size_t i = 0; i < d.size(); ++i) d[i] = f(i);
            accumulate(adj[ia], has[ia], d);
        };
        auto elementwise_b = [&](auto f) {
            if (!need_b) return;
            Tensor d(b->shape());
            for (std::size_t i = 0; i < d.size(); ++i) d[i] = f(i);
            accumulate(adj[ib], has[ib], d);
        };

        switch (n.kind) {
            case OpKind::leaf:
            case OpKind::constant:
                break;
            case OpKind::matvec: {
                if (need_a) {
                    Tensor d(a.shape());
                    MatMap(d.data().data(), a.rows(), a.cols()).noalias() =
                        Eigen::Map<const Eigen::VectorXd>(g.data().data(), g.size()) *
                        Eigen::Map<const Eigen::RowVectorXd>(b->data().data(), b->size());
                    accumulate(adj[ia], has[ia], d);
                }
                if (need_b) {
                    Tensor d(b->shape());
                    Eigen::Map<Eigen::VectorXd>(d.data().data(), d.size()).noalias() =
                        ConstMatMap(a.data().data(), a.rows(), a.cols()).transpose() *
                        Eigen::Map<const Eigen::VectorXd>(g.data().data(), g.size());
                    accumulate(adj[ib], has[ib], d);
                }
                break;
            }
            case OpKind::matmul: {
                ConstMatMap G(g.data().data(), g.rows(), g.cols());
                if (need_a) {
                    ConstMatMap B(b->data().data(), b->rows(), b->cols());
                    if (!has[ia]) {
                        adj[ia] = Tensor(a.shape());
                        has[ia] = true;
                    }
                    MatMap(adj[ia].data().data(), a.rows(), a.cols()).noalias() += G * B.transpose();
                }
                if (need_b) {
                    ConstMatMap A(a.data().data(), a.rows(), a.cols());
                    if (!has[ib]) {
                        adj[ib] = Tensor(b->shape());
                        has[ib] = true;
                    }
                    MatMap(adj[ib].data().data(), b->rows(), b->cols()).noalias() += A.transpose() * G;
                }
                break;
            }
            case OpKind::add:
                if (need_a) accumulate(adj[ia], has[ia], g);
                if (need_b) accumulate(adj[ib], has[ib], g);
                break;
            case OpKind::subtract:
                if (need_a) accumulate(adj[ia], has[ia], g);
                elementwise_b([&](std::size_t i) { return -g[i]; });
                break;
            case OpKind::hadamard:
                elementwise_a([&](std::size_t i) { return g[i] * (*b)[i]; });
                elementwise_b([&](std::size_t i) { return g[i] * a[i]; });
                break;
            case OpKind::divide:
                elementwise_a([&](std::size_t i) { return g[i] / (*b)[i]; });
                elementwise_b([&](std::size_t i) { return -g[i] * a[i] / ((*b)[i] * (*b)[i]); });
                break;
            case OpKind::scale:
                elementwise_a([&](std::size_t i) { return n.attrs.a * g[i]; });
                break;
            case OpKind::sigmoid:
                elementwise_a([&](std::size_t i) { return g[i] * y[i] * (1.0 - y[i]); });
                break;
            case OpKind::softplus:
                elementwise_a([&](std::size_t i) { return g[i] * stable_sigmoid(a[i]); });
                break;
            case OpKind::exp:
                elementwise_a([&](std::size_t i) { return g[i] * y[i]; });
                break;
            case OpKind::log:
                elementwise_a([&](std::size_t i) { return g[i] / a[i]; });
                break;
            case OpKind::square:
                elementwise_a([&](std::size_t i) { return 2.0 * a[i] * g[i]; });
                break;
            case OpKind::clamp:
                elementwise_a([&](std::size_t i) {
                    return (a[i] >= n.attrs.a && a[i] <= n.attrs.b) ? g[i] : 0.0;
                });
                break;
            case OpKind::reduce_sum:
                elementwise_a([&](std::size_t) { return g[0]; });
                break;
            case OpKind::dot:
                elementwise_a([&](std::size_t i) { return g[0] * (*b)[i]; });
                elementwise_b([&](std::size_t i) { return g[0] * a[i]; });
                break;
            case OpKind::add_bias:
                if (need_a) accumulate(adj[ia], has[ia], g);
                if (need_b) {
                    Tensor d(b->shape());
                    for (std::size_t r = 0; r < g.rows(); ++r) {
                        auto row = g.row(r);
                        for (std::size_t c = 0; c < row.size(); ++c) d[c] += row[c];
                    }
                    accumulate(adj[ib], has[ib], d);
                }
                break;
            case OpKind::row_dot:
                elementwise_a([&](std::size_t i) { return g[i / a.cols()] * (*b)[i]; });
                elementwise_b([&](std::size_t i) { return g[i / a.cols()] * a[i]; });
                break;
            case OpKind::row_scale:
                elementwise_a([&](std::size_t i) { return g[i] * (*b)[i / a.cols()]; });
                if (need_b) {
                    Tensor d(b->shape());
                    for (std::size_t r = 0; r < a.rows(); ++r) {
                        auto gr = g.row(r);
                        auto ar = a.row(r);
                        double s = 0.0;
                        for (std::size_t c = 0; c < ar.size(); ++c) s += gr[c] * ar[c];
                        d[r] = s;
                    }
                    accumulate(adj[ib], has[ib], d);
                }
                break;
            case OpKind::concat:
                elementwise_a([&](std::size_t i) { return g.row(i / a.cols())[i % a.cols()]; });
                elementwise_b([&](std::size_t i) {
                    return g.row(i / b->cols())[a.cols() + i % b->cols()];
                });
                break;
            case OpKind::slice: {
                const auto begin = static_cast<std::size_t>(n.attrs.a);
                const std::size_t width = y.cols();
                elementwise_a([&](std::size_t i) {
                    const std::size_t c = i % a.cols();
                    if (c < begin || c >= begin + width) return 0.0;
                    return g.row(i / a.cols())[c - begin];
                });
                break;
            }
        }
    }
    return grads;
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& theta,
                                  double step) {
    if (!(step > 0.0)) throw Error("finite_difference_gradient: step must be positive");
    Tensor grad(theta.shape());
    Tensor probe = theta;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + step;
        const double up = f(probe);
        probe[i] = orig - step;
        const double down = f(probe);
        probe[i] = orig;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw NumericError("finite_difference_gradient: non-finite value at coordinate " + std::to_string(i));
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

}  // namespace hhflow
