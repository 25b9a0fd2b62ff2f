#pragma once

#include <Eigen/Cholesky>
#include <atomic>
#include <memory>
#include <optional>
#include <vector>

#include "windgp/dataset.hpp"
#include "windgp/kernels.hpp"

namespace windgp {

/// Posterior predictive moments in raw target units.
struct Prediction {
  double mean = 0.0;      // kW, after inverse target transform
  double variance = 0.0;  // kW^2
  bool includes_noise = false;
};

/// Exact GP regressor: cached Cholesky factor of A = K(X,X) + sigma_n^2 I and
/// weights alpha = A^{-1} y. Prior mean is identically 0 in standardized
/// space. Immutable after fit; predictions over disjoint batches may run
/// concurrently.
class TrainedGP {
public:
  static TrainedGP fit(const Dataset& train, const KernelModel& kernel);

  double log_marginal_likelihood() const { return lml_; }

  /// Predictive mean/variance per row of x_star; + sigma_n^2 on the variance
  /// when include_noise (the right choice when scoring observations).
  std::vector<Prediction> predict(const Eigen::MatrixXd& x_star, bool include_noise) const;

  Prediction predict_one(const Eigen::VectorXd& x_star, bool include_noise) const {
    Eigen::MatrixXd row(1, x_star.size());
    row.row(0) = x_star.transpose();
    return predict(row, include_noise).front();
  }

  const Dataset& train() const { return train_; }
  const KernelModel& kernel() const { return kernel_; }
  double jitter_applied() const { return jitter_; }
  double gram_log_det() const { return log_det_; }
  const Eigen::VectorXd& weights() const { return alpha_; }

  /// Count of predictive variances in (-1e-8, 0) clamped to 0 so far.
  long variance_clamp_count() const { return *clamp_count_; }

  /// Triangular-factor solve against A (for gradient computations).
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const { return llt_.solve(rhs); }

private:
  TrainedGP() = default;

  Dataset train_;
  KernelModel kernel_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double jitter_ = 0.0;
  double log_det_ = 0.0;
  Eigen::VectorXd alpha_;
  double lml_ = 0.0;
  std::optional<GsmDecoded> anchor_values_;  // GSM: decoded latents at the anchors
  std::shared_ptr<const GsmExtender> extender_;
  std::shared_ptr<std::atomic<long>> clamp_count_;
};

inline TrainedGP fit(const Dataset& train, const KernelModel& kernel) {
  return TrainedGP::fit(train, kernel);
}
inline double log_marginal_likelihood(const TrainedGP& model) {
  return model.log_marginal_likelihood();
}
inline std::vector<Prediction> predict(const TrainedGP& model, const Eigen::MatrixXd& x_star,
                                       bool include_noise) {
  return model.predict(x_star, include_noise);
}

}  // namespace windgp
