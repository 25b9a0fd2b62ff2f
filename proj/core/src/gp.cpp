#include "windgp/gp.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace windgp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kVarianceClampFloor = -1e-8;

bool equals(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

}  // namespace

TrainedGP TrainedGP::fit(const Dataset& train, const KernelModel& kernel) {
  if (train.empty()) throw EmptySet("fit: training set is empty");
  validate_kernel(kernel);

  TrainedGP model;
  model.train_ = train;
  model.kernel_ = kernel;
  model.clamp_count_ = std::make_shared<std::atomic<long>>(0);

  const Eigen::MatrixXd& x = train.features();
  const Eigen::VectorXd& y = train.targets();

  Eigen::MatrixXd a;
  if (kernel.family() == KernelFamily::Gsm) {
    const GsmLatents& lat = kernel.gsm();
    if (!equals(lat.anchors, x)) {
      throw DimensionMismatch("fit: GSM latent anchors must equal the training inputs");
    }
    model.anchor_values_ = decode_latents(lat);
    auto priors = std::make_shared<GsmPriorSet>(lat.anchors, lat.prior);
    model.extender_ = std::make_shared<GsmExtender>(lat, priors);
    a = gram_gsm(x, *model.anchor_values_, x, *model.anchor_values_);
  } else {
    a = gram(kernel, x, x, false);
  }
  a.diagonal().array() += kernel.noise_variance;

  // Noiseless fits get a single strict factorization attempt; with observation
  // noise present the jitter ladder may rescue a marginal factorization.
  static const std::vector<double> strict{0.0};
  const auto& ladder = kernel.noise_variance > 0.0 ? gram_jitter_ladder() : strict;
  auto fac = cholesky_with_jitter(a, ladder);
  if (!fac) {
    std::ostringstream os;
    os << "fit: Gram factorization failed (n=" << train.size()
       << ", noise=" << kernel.noise_variance << ")"
       << (kernel.noise_variance > 0.0 ? " at maximum jitter" : "");
    throw SingularGram(os.str());
  }
  model.llt_ = std::move(fac->llt);
  model.jitter_ = fac->jitter;
  model.log_det_ = fac->log_det;
  model.alpha_ = model.llt_.solve(y);
  model.lml_ = -0.5 * y.dot(model.alpha_) - 0.5 * model.log_det_ -
               0.5 * static_cast<double>(train.size()) * kLog2Pi;
  return model;
}

std::vector<Prediction> TrainedGP::predict(const Eigen::MatrixXd& x_star,
                                           bool include_noise) const {
  if (x_star.cols() != train_.features().cols()) {
    throw DimensionMismatch("predict: test input dimension does not match training inputs");
  }
  const Eigen::MatrixXd& x = train_.features();
  const Eigen::Index m = x_star.rows();

  Eigen::MatrixXd k_star;  // m x n
  Eigen::VectorXd prior_diag;
  switch (kernel_.family()) {
    case KernelFamily::Rbf:
      k_star = gram_rbf(kernel_.rbf(), x_star, x);
      prior_diag = gram_diag(kernel_, x_star, nullptr, false);
      break;
    case KernelFamily::Sm:
      k_star = gram_sm(kernel_.sm(), x_star, x);
      prior_diag = gram_diag(kernel_, x_star, nullptr, false);
      break;
    case KernelFamily::Gsm: {
      const GsmDecoded star_values =
          equals(x_star, x) ? *anchor_values_ : extender_->extend(x_star);
      k_star = gram_gsm(x_star, star_values, x, *anchor_values_);
      prior_diag = gram_diag(kernel_, x_star, &star_values, false);
      break;
    }
  }

  // V(y*) = k(x*,x*) - k_*' A^{-1} k_*, evaluated through the factor.
  Eigen::MatrixXd v = llt_.matrixL().solve(k_star.transpose());  // n x m
  Eigen::VectorXd mean_std = k_star * alpha_;

  const AffineTransform& tf = train_.target_transform();
  std::vector<Prediction> out(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    double var = prior_diag[i] - v.col(i).squaredNorm();
    if (include_noise) var += kernel_.noise_variance;
    if (var < 0.0) {
      if (var < kVarianceClampFloor) {
        std::ostringstream os;
        os << "predict: variance " << var << " below clamp floor " << kVarianceClampFloor;
        throw NegativeVariance(os.str());
      }
      var = 0.0;
      ++*clamp_count_;
    }
    Prediction& p = out[static_cast<std::size_t>(i)];
    p.mean = tf.invert(mean_std[i]);
    p.variance = tf.invert_variance(var);
    p.includes_noise = include_noise;
  }
  return out;
}

}  // namespace windgp
