#pragma once

#include <span>
#include <vector>

#include "hhflow/autodiff.hpp"

namespace hhflow {

/// Floor on ||v||^2 in the reflection denominator. With the floor, v = 0
/// degrades to the identity map instead of producing NaNs.
inline constexpr double kHouseholderFloor = 1e-12;

/// Reflect every row of `z` about the hyperplane orthogonal to the matching
/// row of `v`: z - 2 (v.z / max(||v||^2, floor)) v. Shapes must agree
/// (B x M, or length M). The matrix I - 2 v v^T / ||v||^2 is never formed.
Var householder_apply(Tape& tape, Var z, Var v);

/// States z(0) ... z(T) of a Householder flow.
struct FlowChain {
    std::vector<Var> states;

    Var input() const { return states.front(); }
    Var output() const { return states.back(); }
    std::size_t length() const { return states.size() - 1; }
};

/// Apply the reflections in order: z(t) = H_t z(t-1). An empty `vectors`
/// returns a chain holding only z(0).
FlowChain flow_forward(Tape& tape, Var z0, std::span<const Var> vectors);

/// ln |det d(H_t z)/dz| for one reflection. Always 0: reflections are orthogonal.
constexpr double jacobian_log_det_contribution() { return 0.0; }

/// Sum of the per-step log-det terms of a chain, as a scalar tape node.
Var flow_log_det(Tape& tape, const FlowChain& chain);

// Plain-vector forms used outside of training (inspection, oracles).

std::vector<double> householder_apply(std::span<const double> z, std::span<const double> v);
std::vector<double> flow_forward(std::span<const double> z0, const std::vector<std::vector<double>>& vectors);

}  // namespace hhflow
