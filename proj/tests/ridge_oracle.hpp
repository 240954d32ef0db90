#pragma once

#include <Eigen/SVD>

#include "dwnet/tensor.hpp"

namespace testing {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline RowMatrix to_eigen(const dwnet::Tensor& t) {
    return Eigen::Map<const RowMatrix>(t.data().data(), static_cast<Eigen::Index>(t.dim(0)),
                                       static_cast<Eigen::Index>(t.dim(1)));
}

/// (A'A + lambda I)^-1 A'Y through the thin SVD: V diag(s / (s^2 + lambda)) U'Y.
/// With lambda = 0 this is the Moore-Penrose pseudo-inverse solution.
inline dwnet::Tensor svd_ridge(const dwnet::Tensor& a, const dwnet::Tensor& y, double lambda) {
    const RowMatrix am = to_eigen(a);
    const RowMatrix ym = to_eigen(y);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(am, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd s = svd.singularValues();
    Eigen::VectorXd shrink(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        const double d = s[i] * s[i] + lambda;
        shrink[i] = d > 0.0 ? s[i] / d : 0.0;
    }
    const RowMatrix w = svd.matrixV() * shrink.asDiagonal() * svd.matrixU().transpose() * ym;
    return dwnet::Tensor({a.dim(1), y.dim(1)}, std::vector<double>(w.data(), w.data() + w.size()));
}

/// Condition number of A from its singular values.
inline double condition_number(const dwnet::Tensor& a) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(a));
    const auto s = svd.singularValues();
    return s[s.size() - 1] > 0.0 ? s[0] / s[s.size() - 1] : INFINITY;
}

}  // namespace testing
