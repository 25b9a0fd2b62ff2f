#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "windgp/dataset.hpp"
#include "windgp/kernels.hpp"

namespace testutil {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double gauss(std::mt19937_64& rng, double sd = 1.0) {
  return std::normal_distribution<double>(0.0, sd)(rng);
}

inline Eigen::MatrixXd random_inputs(std::mt19937_64& rng, Eigen::Index n, int dim,
                                     double lo = 0.0, double hi = 4.0) {
  Eigen::MatrixXd x(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int d = 0; d < dim; ++d) x(i, d) = uniform(rng, lo, hi);
  }
  return x;
}

inline windgp::RbfParams random_rbf(std::mt19937_64& rng, int dim) {
  windgp::RbfParams p;
  p.signal_variance = uniform(rng, 0.3, 3.0);
  p.lengthscales.resize(dim);
  for (int d = 0; d < dim; ++d) p.lengthscales[d] = uniform(rng, 0.4, 2.5);
  return p;
}

inline windgp::SmParams random_sm(std::mt19937_64& rng, int q, int dim, double f_max = 1.0) {
  windgp::SmParams p;
  p.weights.resize(q);
  p.spectral_means.resize(q, dim);
  p.spectral_variances.resize(q, dim);
  p.f_max = Eigen::VectorXd::Constant(dim, f_max);
  for (int k = 0; k < q; ++k) {
    p.weights[k] = uniform(rng, 0.2, 2.0);
    for (int d = 0; d < dim; ++d) {
      p.spectral_means(k, d) = uniform(rng, 0.05, 0.95) * f_max;
      p.spectral_variances(k, d) = uniform(rng, 0.005, 0.2);
    }
  }
  return p;
}

// Correlated draw from the latent prior gram: smooth over the anchors, so
// posterior-mean extension between anchors stays bounded (wild i.i.d. values
// would be interpolated with huge overshoot and overflow exp()).
inline Eigen::VectorXd smooth_latent_column(std::mt19937_64& rng, const Eigen::VectorXd& coords,
                                            double lengthscale, double amplitude, double mean) {
  const Eigen::Index n = coords.size();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = coords[i] - coords[j];
      k(i, j) = std::exp(-d * d / (2.0 * lengthscale * lengthscale));
    }
  }
  k.diagonal().array() += 1e-8;
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = gauss(rng, 1.0);
  const Eigen::VectorXd correlated = k.llt().matrixL() * z;
  return Eigen::VectorXd::Constant(n, mean) + amplitude * correlated;
}

inline windgp::GsmLatents random_gsm(std::mt19937_64& rng, const Eigen::MatrixXd& anchors,
                                     int q, double f_max = 1.0) {
  windgp::GsmLatents lat;
  lat.anchors = anchors;
  const int dim = static_cast<int>(anchors.cols());
  lat.f_max = Eigen::VectorXd::Constant(dim, f_max);
  lat.log_w.resize(dim);
  lat.log_l.resize(dim);
  lat.logit_mu.resize(dim);
  for (int d = 0; d < dim; ++d) {
    const Eigen::VectorXd coords = anchors.col(d);
    const double range = std::max(1e-3, coords.maxCoeff() - coords.minCoeff());
    const double ell = lat.prior.lengthscale_scale_w * range;
    lat.log_w[d].resize(coords.size(), q);
    lat.log_l[d].resize(coords.size(), q);
    lat.logit_mu[d].resize(coords.size(), q);
    for (int k = 0; k < q; ++k) {
      const double base_l = std::log(uniform(rng, 0.15, 0.5) * range);
      lat.log_w[d].col(k) = smooth_latent_column(rng, coords, ell, 0.3, 0.0);
      lat.log_l[d].col(k) = smooth_latent_column(rng, coords, ell, 0.15, base_l);
      lat.logit_mu[d].col(k) = smooth_latent_column(rng, coords, ell, 0.8, 0.0);
    }
  }
  return lat;
}

/// Constant-latent variant encoding SM-style component parameters.
inline windgp::GsmLatents constant_gsm(const Eigen::MatrixXd& anchors,
                                       const Eigen::VectorXd& sm_weights,
                                       const Eigen::VectorXd& sm_means,
                                       const Eigen::VectorXd& sm_variances, double f_max) {
  windgp::GsmLatents lat;
  lat.anchors = anchors;
  const Eigen::Index n = anchors.rows();
  const int q = static_cast<int>(sm_weights.size());
  lat.f_max = Eigen::VectorXd::Constant(1, f_max);
  lat.log_w.resize(1);
  lat.log_l.resize(1);
  lat.logit_mu.resize(1);
  lat.log_w[0].resize(n, q);
  lat.log_l[0].resize(n, q);
  lat.logit_mu[0].resize(n, q);
  for (int k = 0; k < q; ++k) {
    const double w_latent = 0.5 * std::log(sm_weights[k]);  // w_sm = w_gsm^2
    const double l_latent =
        std::log(windgp::gibbs_lengthscale_from_spectral_variance(sm_variances[k]));
    const double mu_latent = windgp::logit(sm_means[k] / f_max);
    lat.log_w[0].col(k).setConstant(w_latent);
    lat.log_l[0].col(k).setConstant(l_latent);
    lat.logit_mu[0].col(k).setConstant(mu_latent);
  }
  return lat;
}

/// Dataset over the rows of x with 10-minute timestamps and identity
/// transforms (values already treated as standardized).
inline windgp::Dataset make_dataset(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  std::vector<std::int64_t> ts(static_cast<std::size_t>(x.rows()));
  for (std::size_t i = 0; i < ts.size(); ++i) ts[i] = 1500000000 + 600 * static_cast<std::int64_t>(i);
  return windgp::Dataset(std::move(ts), x, y);
}

/// Draws y from the GP prior implied by the model (plus observation noise).
inline Eigen::VectorXd sample_targets(std::mt19937_64& rng, const windgp::KernelModel& model,
                                      const Eigen::MatrixXd& x) {
  Eigen::MatrixXd k = windgp::gram(model, x, x, false);
  k.diagonal().array() += model.noise_variance + 1e-9 * k.diagonal().mean();
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  Eigen::VectorXd z(x.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = gauss(rng);
  return llt.matrixL() * z;
}

}  // namespace testutil
