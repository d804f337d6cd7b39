#include "hhflow/flow_oracle.hpp"

#include <algorithm>
#include <string>

#include "hhflow/flows.hpp"
#include "hhflow/tensor.hpp"

namespace hhflow::oracle {

Eigen::MatrixXd householder_matrix(std::span<const double> v) {
    const auto m = static_cast<Eigen::Index>(v.size());
    Eigen::Map<const Eigen::VectorXd> vec(v.data(), m);
    const double denom = std::max(vec.squaredNorm(), kHouseholderFloor);
    return Eigen::MatrixXd::Identity(m, m) - (2.0 / denom) * vec * vec.transpose();
}

OrthogonalOracle orthogonal_from_householders(const HouseholderVectors& vectors, std::size_t dim) {
    if (vectors.size() > dim) {
        throw Error("orthogonal_from_householders: " + std::to_string(vectors.size()) +
                    " reflections exceed dimension " + std::to_string(dim));
    }
    const auto m = static_cast<Eigen::Index>(dim);
    const auto k = static_cast<Eigen::Index>(vectors.size());
    OrthogonalOracle out;
    out.U = Eigen::MatrixXd::Identity(m, m);
    out.Y = Eigen::MatrixXd::Zero(m, k);
    out.S = Eigen::MatrixXd::Zero(k, k);

    for (const auto& v : vectors) {
        if (v.size() != dim) throw ShapeError("orthogonal_from_householders: vector length mismatch");
        out.U = householder_matrix(v) * out.U;
    }

    // Compact WY accumulation of U = G_1 G_2 ... G_K with G_j = H_{K+1-j}:
    // S_j = [[S_{j-1}, -tau_j S_{j-1} Y_{j-1}^T y_j], [0, tau_j]].
    for (Eigen::Index j = 0; j < k; ++j) {
        const auto& v = vectors[static_cast<std::size_t>(k - 1 - j)];
        Eigen::Map<const Eigen::VectorXd> y(v.data(), m);
        const double tau = 2.0 / std::max(y.squaredNorm(), kHouseholderFloor);
        out.Y.col(j) = y;
        if (j > 0) {
            out.S.block(0, j, j, 1) =
                -tau * out.S.topLeftCorner(j, j) * (out.Y.leftCols(j).transpose() * y);
        }
        out.S(j, j) = tau;
    }
    return out;
}

Eigen::MatrixXd covariance_transport_check(std::span<const double> sigma2, const HouseholderVectors& vectors) {
    for (double s : sigma2) {
        if (!(s > 0.0)) throw Error("covariance_transport_check: variances must be positive");
    }
    const Eigen::MatrixXd u = orthogonal_from_householders(vectors, sigma2.size()).U;
    Eigen::Map<const Eigen::VectorXd> d(sigma2.data(), static_cast<Eigen::Index>(sigma2.size()));
    return u * d.asDiagonal() * u.transpose();
}

HouseholderVectors householders_from_orthogonal(const Eigen::MatrixXd& U) {
    if (U.rows() != U.cols()) throw ShapeError("householders_from_orthogonal: matrix must be square");
    const Eigen::Index m = U.rows();
    Eigen::MatrixXd a = U;
    HouseholderVectors reflectors;
    for (Eigen::Index k = 0; k < m; ++k) {
        Eigen::VectorXd w = Eigen::VectorXd::Zero(m);
        w.tail(m - k) = a.col(k).tail(m - k);
        w(k) -= 1.0;
        if (w.squaredNorm() < 1e-24) w.setZero();
        a = householder_matrix(std::span<const double>(w.data(), static_cast<std::size_t>(m))) * a;
        reflectors.emplace_back(w.data(), w.data() + m);
    }
    // P_{M-1} ... P_0 U = I, so U = P_0 ... P_{M-1}: in flow order P_{M-1} acts first.
    std::reverse(reflectors.begin(), reflectors.end());
    return reflectors;
}

}  // namespace hhflow::oracle
