#ifndef PMDESIGN_COVARIANCE_HPP
#define PMDESIGN_COVARIANCE_HPP

#include <Eigen/Dense>

#include "pmdesign/core.hpp"

namespace pmdesign {

/// Unbiased sample covariance of the covariate rows (divisor 2n - 1), with a
/// ridge of 1e-8 * trace / p added to the diagonal when the matrix is
/// near-singular (smallest eigenvalue <= 1e-12 times the largest).
inline Eigen::MatrixXd regularized_covariance(const CovariateMatrix& x) {
  const Eigen::MatrixXd& v = x.values();
  const Eigen::RowVectorXd mean = v.colwise().mean();
  const Eigen::MatrixXd centered = v.rowwise() - mean;
  Eigen::MatrixXd s = (centered.transpose() * centered) / static_cast<double>(v.rows() - 1);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s, Eigen::EigenvaluesOnly);
  const double largest = eig.eigenvalues().maxCoeff();
  const double smallest = eig.eigenvalues().minCoeff();
  if (smallest <= 1e-12 * largest) {
    const double ridge = 1e-8 * s.trace() / static_cast<double>(s.rows());
    s.diagonal().array() += ridge;
  }
  return s;
}

/// Rows mapped to coordinates where the regularized covariance is the
/// identity, so squared Euclidean distance equals Mahalanobis distance.
/// A covariate matrix with all rows identical maps to all zeros.
inline Eigen::MatrixXd whitened_rows(const CovariateMatrix& x) {
  const Eigen::MatrixXd s = regularized_covariance(x);
  const Eigen::MatrixXd& v = x.values();
  if (!(s.trace() > 0.0)) return Eigen::MatrixXd::Zero(v.rows(), v.cols());
  const Eigen::LLT<Eigen::MatrixXd> llt(s);
  // z_i = L^{-1} x_i so that z_i' z_j = x_i' S^{-1} x_j.
  return llt.matrixL().solve(v.transpose()).transpose();
}

}  // namespace pmdesign

#endif  // PMDESIGN_COVARIANCE_HPP
