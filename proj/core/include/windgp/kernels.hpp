#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "windgp/errors.hpp"

namespace windgp {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Spectral-variance <-> Gibbs-lengthscale convention.
///
/// A one-component stationary SM kernel has envelope exp(-2*pi^2*tau^2*v);
/// the Gibbs kernel with constant lengthscale l has envelope
/// exp(-tau^2/(2*l^2)). Equating exponents gives 1/(2*l^2) = 2*pi^2*v, i.e.
/// l = 1/(2*pi*sqrt(v)) with mapping constant exactly 1. Weights map as
/// w_sm = w_gsm^2 because the GSM sum carries w(x_i)*w(x_j).
inline double gibbs_lengthscale_from_spectral_variance(double v) {
  return 1.0 / (kTwoPi * std::sqrt(v));
}
inline double spectral_variance_from_gibbs_lengthscale(double l) {
  return 1.0 / (4.0 * kPi * kPi * l * l);
}

/// Overflow-safe logistic and its inverse.
inline double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}
inline double logit(double p) { return std::log(p) - std::log1p(-p); }

// ---------------------------------------------------------------------------
// Parameter types
// ---------------------------------------------------------------------------

struct RbfParams {
  double signal_variance = 1.0;   // sigma_f^2
  Eigen::VectorXd lengthscales;   // per dimension, > 0

  int dim() const { return static_cast<int>(lengthscales.size()); }
};

struct SmParams {
  Eigen::VectorXd weights;             // Q, > 0
  Eigen::MatrixXd spectral_means;      // Q x D, each in (0, f_max_d)
  Eigen::MatrixXd spectral_variances;  // Q x D, > 0
  Eigen::VectorXd f_max;               // per-dimension frequency bound

  int q() const { return static_cast<int>(weights.size()); }
  int dim() const { return static_cast<int>(spectral_means.cols()); }
};

/// Hyperparameters of the RBF priors placed on the latent functions. The
/// lengthscales are relative to the per-dimension anchor range. These are
/// held fixed during optimization.
struct LatentPriorConfig {
  double lengthscale_scale_w = 0.2;
  double lengthscale_scale_l = 0.2;
  double lengthscale_scale_mu = 0.2;
  double variance_w = 1.0;
  double variance_l = 1.0;
  double variance_mu = 1.0;
  // i.i.d. variance added to the prior covariance at the anchors. Zero gives
  // the literal smooth prior and noise-free interpolating extension; positive
  // values keep the MAP density proper when anchors oversample the
  // lengthscale, and turn the extension into the matching posterior-mean
  // smoother of noisy anchor values.
  double nugget = 0.0;
};

/// GSM latent hyperparameter functions, stored as their unconstrained values
/// at the N training inputs (the anchors). Per dimension d the three N x Q
/// matrices hold log w_q, log l_q and logit mu_q columnwise.
struct GsmLatents {
  Eigen::MatrixXd anchors;                 // N x D
  std::vector<Eigen::MatrixXd> log_w;      // per dim: N x Q
  std::vector<Eigen::MatrixXd> log_l;      // per dim: N x Q
  std::vector<Eigen::MatrixXd> logit_mu;   // per dim: N x Q
  Eigen::VectorXd f_max;                   // per dim, > 0
  LatentPriorConfig prior;

  int q() const { return log_w.empty() ? 0 : static_cast<int>(log_w[0].cols()); }
  int dim() const { return static_cast<int>(anchors.cols()); }
  Eigen::Index anchor_count() const { return anchors.rows(); }
};

enum class KernelFamily { Rbf, Sm, Gsm };

const char* to_string(KernelFamily f);
KernelFamily kernel_family_from_string(const std::string& s);

/// Tagged union over the three kernel parameterizations plus the observation
/// noise variance.
struct KernelModel {
  std::variant<RbfParams, SmParams, GsmLatents> params;
  double noise_variance = 0.0;  // sigma_n^2 >= 0 (0 only for noiseless fits)

  KernelFamily family() const {
    return static_cast<KernelFamily>(params.index());
  }
  const RbfParams& rbf() const { return std::get<RbfParams>(params); }
  const SmParams& sm() const { return std::get<SmParams>(params); }
  const GsmLatents& gsm() const { return std::get<GsmLatents>(params); }
};

/// Structural validation: positivity of variances/lengthscales/weights,
/// consistent latent shapes, non-negative finite noise.
void validate_kernel(const KernelModel& model);

// ---------------------------------------------------------------------------
// Scalar kernel evaluations
// ---------------------------------------------------------------------------

double rbf_eval(const Eigen::VectorXd& xi, const Eigen::VectorXd& xj, const RbfParams& p);

/// Stationary spectral mixture kernel evaluated at a separation tau.
double sm_eval(const Eigen::VectorXd& tau, const SmParams& p);

/// Non-stationary squared-exponential with input-dependent lengthscales.
double gibbs_eval(double xi, double xj, double li, double lj);

/// Decoded latent values (w, l, mu) at a single input; per dimension a
/// length-Q vector each.
struct GsmPointValues {
  std::vector<Eigen::VectorXd> w;   // per dim: Q
  std::vector<Eigen::VectorXd> l;   // per dim: Q
  std::vector<Eigen::VectorXd> mu;  // per dim: Q
};

/// One-dimensional GSM kernel from decoded per-point latent values.
double gsm_eval_1d(double xi, double xj,
                   const Eigen::VectorXd& wi, const Eigen::VectorXd& wj,
                   const Eigen::VectorXd& li, const Eigen::VectorXd& lj,
                   const Eigen::VectorXd& mui, const Eigen::VectorXd& muj);

/// Product of the per-dimension GSM factors.
double gsm_eval(const Eigen::VectorXd& xi, const Eigen::VectorXd& xj,
                const GsmPointValues& vi, const GsmPointValues& vj);

// ---------------------------------------------------------------------------
// Latent decode / extend
// ---------------------------------------------------------------------------

/// Decoded latent values for a whole input set; per dimension an M x Q matrix.
struct GsmDecoded {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::MatrixXd> l;
  std::vector<Eigen::MatrixXd> mu;
};

/// Decode all anchors: w = exp(log_w), l = exp(log_l),
/// mu = f_max * logistic(logit_mu).
GsmDecoded decode_latents(const GsmLatents& lat);

/// Decoded values of every latent function at one anchor.
GsmPointValues latent_decode(const GsmLatents& lat, Eigen::Index anchor_index);

/// Cached factorization of a 1-D RBF prior Gram over anchor coordinates,
/// jittered so that noise-free interpolation is well posed.
class LatentPrior {
public:
  LatentPrior(Eigen::VectorXd coords, double variance, double lengthscale,
              double nugget = 0.0);

  double log_det() const { return log_det_; }
  double variance() const { return variance_; }
  double lengthscale() const { return lengthscale_; }
  double nugget() const { return nugget_; }
  Eigen::Index size() const { return coords_.size(); }

  Eigen::VectorXd solve(const Eigen::VectorXd& v) const;       // K^{-1} v
  double quad_form(const Eigen::VectorXd& v) const;            // v' K^{-1} v
  Eigen::MatrixXd cross(const Eigen::VectorXd& xstar) const;   // M x N, k(x*, coords)

  // Whitened coordinates z with natural = L z, K = L L'. In the whitened
  // basis the Gaussian prior is an identity quadratic, which keeps the MAP
  // penalty well conditioned however densely the anchors sample the
  // lengthscale.
  Eigen::VectorXd whiten(const Eigen::VectorXd& natural) const;    // L^{-1} v
  Eigen::VectorXd unwhiten(const Eigen::VectorXd& white) const;    // L v
  Eigen::VectorXd grad_to_white(const Eigen::VectorXd& g) const;   // L' g

private:
  Eigen::VectorXd coords_;
  double variance_;
  double lengthscale_;
  double nugget_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double log_det_ = 0.0;
};

/// The per-dimension latent priors of a GSM model. Identical (variance,
/// lengthscale) pairs share one factorization.
class GsmPriorSet {
public:
  GsmPriorSet(const Eigen::MatrixXd& anchors, const LatentPriorConfig& cfg);

  const LatentPrior& w_prior(int d) const { return *w_[static_cast<std::size_t>(d)]; }
  const LatentPrior& l_prior(int d) const { return *l_[static_cast<std::size_t>(d)]; }
  const LatentPrior& mu_prior(int d) const { return *mu_[static_cast<std::size_t>(d)]; }

private:
  std::vector<std::shared_ptr<LatentPrior>> w_, l_, mu_;
};

/// Extends the latent functions of a fitted GSM model to arbitrary inputs via
/// the posterior mean of their RBF-prior GPs conditioned on the anchor values.
class GsmExtender {
public:
  explicit GsmExtender(const GsmLatents& lat);
  GsmExtender(const GsmLatents& lat, std::shared_ptr<const GsmPriorSet> priors);

  /// Decoded latent values at every row of X (M x D).
  GsmDecoded extend(const Eigen::MatrixXd& X) const;
  GsmPointValues extend_point(const Eigen::VectorXd& xstar) const;

  const GsmPriorSet& priors() const { return *priors_; }

private:
  GsmLatents latents_;
  std::shared_ptr<const GsmPriorSet> priors_;
  // beta = K_prior^{-1} v for every latent vector; layout matches latents.
  std::vector<Eigen::MatrixXd> beta_w_, beta_l_, beta_mu_;
};

/// Spec'd single-point extension; builds a throwaway extender.
GsmPointValues latent_extend(const GsmLatents& lat, const Eigen::VectorXd& xstar);

// ---------------------------------------------------------------------------
// Gram construction
// ---------------------------------------------------------------------------

/// Per-dimension GSM factor matrices between two input sets with given
/// decoded latent values. The full GSM Gram is their elementwise product.
std::vector<Eigen::MatrixXd> gsm_factor_matrices(const Eigen::MatrixXd& X1, const GsmDecoded& d1,
                                                 const Eigen::MatrixXd& X2, const GsmDecoded& d2);

Eigen::MatrixXd gram_rbf(const RbfParams& p, const Eigen::MatrixXd& X1, const Eigen::MatrixXd& X2);
Eigen::MatrixXd gram_sm(const SmParams& p, const Eigen::MatrixXd& X1, const Eigen::MatrixXd& X2);
Eigen::MatrixXd gram_gsm(const Eigen::MatrixXd& X1, const GsmDecoded& d1,
                         const Eigen::MatrixXd& X2, const GsmDecoded& d2);

/// Pairwise kernel matrix; adds noise_variance * I when include_noise.
/// include_noise requires X1 and X2 to be the same input set.
/// For GSM, inputs that coincide with the anchors use the stored latent
/// values; any other input set goes through latent_extend.
Eigen::MatrixXd gram(const KernelModel& model, const Eigen::MatrixXd& X1,
                     const Eigen::MatrixXd& X2, bool include_noise = false);

/// Diagonal of gram(model, X, X, include_noise) without forming the matrix.
Eigen::VectorXd gram_diag(const KernelModel& model, const Eigen::MatrixXd& X,
                          const GsmDecoded* decoded, bool include_noise);

/// Per-dimension frequency bound: half the reciprocal of the median positive
/// spacing of the sorted coordinate values (0.5 when degenerate).
Eigen::VectorXd nyquist_fmax(const Eigen::MatrixXd& X);

// ---------------------------------------------------------------------------
// Jittered Cholesky (shared policy)
// ---------------------------------------------------------------------------

struct JitteredLlt {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;  // absolute value added to the diagonal
  double log_det = 0.0; // log|A + jitter*I|
};

/// Factor A (+ jitter*I) trying each relative jitter level in order; levels
/// are multiplied by mean(diag(A)). Returns nullopt if every level fails.
std::optional<JitteredLlt> cholesky_with_jitter(const Eigen::MatrixXd& A,
                                                const std::vector<double>& relative_levels);

/// Ladder used for noisy kernel Grams: {0, 1e-8, 1e-7, ..., 1e-4}.
const std::vector<double>& gram_jitter_ladder();
/// Ladder used for latent priors (noise-free interpolation): {1e-8, ..., 1e-4}.
const std::vector<double>& latent_jitter_ladder();

}  // namespace windgp
