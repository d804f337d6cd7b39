#include "hhflow/flows.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace hhflow {

Var householder_apply(Tape& tape, Var z, Var v) {
    if (tape.value(z).shape() != tape.value(v).shape()) {
        throw ShapeError("householder_apply: length mismatch " + tape.value(z).shape().str() + " vs " +
                         tape.value(v).shape().str());
    }
    Var vz = tape.row_dot(v, z);
    Var vv = tape.clamp(tape.row_dot(v, v), kHouseholderFloor, std::numeric_limits<double>::max());
    Var coeff = tape.scale(tape.divide(vz, vv), 2.0);
    return tape.subtract(z, tape.row_scale(v, coeff));
}

FlowChain flow_forward(Tape& tape, Var z0, std::span<const Var> vectors) {
    FlowChain chain;
    chain.states.reserve(vectors.size() + 1);
    chain.states.push_back(z0);
    for (Var v : vectors) chain.states.push_back(householder_apply(tape, chain.states.back(), v));
    return chain;
}

Var flow_log_det(Tape& tape, const FlowChain& chain) {
    double total = 0.0;
    for (std::size_t t = 0; t < chain.length(); ++t) total += jacobian_log_det_contribution();
    return tape.constant(Tensor::scalar(total));
}

std::vector<double> householder_apply(std::span<const double> z, std::span<const double> v) {
    if (z.size() != v.size()) {
        throw ShapeError("householder_apply: length mismatch " + std::to_string(z.size()) + " vs " +
                         std::to_string(v.size()));
    }
    double vz = 0.0;
    double vv = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        vz += v[i] * z[i];
        vv += v[i] * v[i];
    }
    const double coeff = 2.0 * vz / std::max(vv, kHouseholderFloor);
    std::vector<double> out(z.begin(), z.end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= coeff * v[i];
    return out;
}

std::vector<double> flow_forward(std::span<const double> z0, const std::vector<std::vector<double>>& vectors) {
    std::vector<double> z(z0.begin(), z0.end());
    for (const auto& v : vectors) z = householder_apply(z, v);
    return z;
}

}  // namespace hhflow
