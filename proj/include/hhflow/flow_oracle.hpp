#pragma once

// Dense-matrix counterparts of the Householder flow. The flow itself never
// materializes a matrix; these exist to check it and to inspect trained
// posteriors.

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace hhflow::oracle {

using HouseholderVectors = std::vector<std::vector<double>>;

/// I - 2 v v^T / max(||v||^2, floor).
Eigen::MatrixXd householder_matrix(std::span<const double> v);

/// Orthogonal matrix U = H_K ... H_1 in basis-kernel form U = I - Y S Y^T,
/// with Y = [v_K ... v_1] and S upper triangular, S_kk = 2 / ||Y_k||^2.
struct OrthogonalOracle {
    Eigen::MatrixXd U;
    Eigen::MatrixXd Y;
    Eigen::MatrixXd S;
};

/// Product of the reflections in flow order (v_1 is applied first).
/// Requires K <= M; K = 0 gives the identity.
OrthogonalOracle orthogonal_from_householders(const HouseholderVectors& vectors, std::size_t dim);

/// U diag(sigma2) U^T for the U generated by `vectors`: the covariance of a
/// diagonal Gaussian sample after the flow.
Eigen::MatrixXd covariance_transport_check(std::span<const double> sigma2, const HouseholderVectors& vectors);

/// Recover flow vectors v_1 ... v_M with U = H_M ... H_1 from an orthogonal U
/// by reflecting each column onto the matching unit vector in turn.
HouseholderVectors householders_from_orthogonal(const Eigen::MatrixXd& U);

}  // namespace hhflow::oracle
