#pragma once

// Independent reference implementations used to pin expected values. These
// deliberately avoid the library's Cholesky code paths: densities go through
// a full-pivot LU determinant/inverse, conditioning through explicit block
// algebra, gradients through central differences on the objective callable.

#include <Eigen/Dense>
#include <Eigen/LU>
#include <cmath>
#include <functional>

namespace oracles {

inline double mvn_logpdf(const Eigen::VectorXd& y, const Eigen::MatrixXd& cov) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(cov);
  const double logdet = std::log(lu.determinant());
  const Eigen::VectorXd solved = lu.solve(y);
  return -0.5 * y.dot(solved) - 0.5 * logdet -
         0.5 * static_cast<double>(y.size()) * std::log(2.0 * M_PI);
}

struct Conditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// p(tail | head = y) for a zero-mean Gaussian with the given joint
/// covariance over [head; tail].
inline Conditional condition_joint(const Eigen::MatrixXd& joint, const Eigen::VectorXd& y,
                                   Eigen::Index n_obs) {
  const Eigen::Index m = joint.rows() - n_obs;
  const Eigen::MatrixXd a = joint.topLeftCorner(n_obs, n_obs);
  const Eigen::MatrixXd b = joint.topRightCorner(n_obs, m);
  const Eigen::MatrixXd c = joint.bottomRightCorner(m, m);
  const Eigen::MatrixXd a_inv = Eigen::FullPivLU<Eigen::MatrixXd>(a).inverse();
  Conditional out;
  out.mean = b.transpose() * a_inv * y;
  out.cov = c - b.transpose() * a_inv * b;
  return out;
}

inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& at, double rel_step = 1e-5) {
  Eigen::VectorXd g(at.size());
  Eigen::VectorXd probe = at;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    const double h = rel_step * std::max(1.0, std::abs(at[i]));
    probe[i] = at[i] + h;
    const double fp = f(probe);
    probe[i] = at[i] - h;
    const double fm = f(probe);
    probe[i] = at[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace oracles
