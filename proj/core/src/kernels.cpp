#include "windgp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace windgp {

namespace {

// (x1_i - x2_j) as a dense matrix for one coordinate.
Eigen::MatrixXd pairwise_diff(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2) {
  return x1.replicate(1, x2.size()) - x2.transpose().replicate(x1.size(), 1);
}

bool same_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  if (a.data() == b.data()) return true;
  return a == b;
}

void require_same_dim(Eigen::Index da, Eigen::Index db, const char* where) {
  if (da != db) {
    std::ostringstream os;
    os << where << ": dimension mismatch (" << da << " vs " << db << ")";
    throw DimensionMismatch(os.str());
  }
}

}  // namespace

const char* to_string(KernelFamily f) {
  switch (f) {
    case KernelFamily::Rbf: return "rbf";
    case KernelFamily::Sm: return "sm";
    case KernelFamily::Gsm: return "gsm";
  }
  return "?";
}

KernelFamily kernel_family_from_string(const std::string& s) {
  if (s == "rbf" || s == "RBF") return KernelFamily::Rbf;
  if (s == "sm" || s == "SM") return KernelFamily::Sm;
  if (s == "gsm" || s == "GSM") return KernelFamily::Gsm;
  throw ConfigError("unknown kernel family '" + s + "' (expected rbf, sm or gsm)");
}

// ---------------------------------------------------------------------------
// Scalar evaluations
// ---------------------------------------------------------------------------

double rbf_eval(const Eigen::VectorXd& xi, const Eigen::VectorXd& xj, const RbfParams& p) {
  require_same_dim(xi.size(), xj.size(), "rbf_eval");
  require_same_dim(xi.size(), p.lengthscales.size(), "rbf_eval lengthscales");
  double s = 0.0;
  for (Eigen::Index d = 0; d < xi.size(); ++d) {
    const double dd = (xi[d] - xj[d]) / p.lengthscales[d];
    s += dd * dd;
  }
  return p.signal_variance * std::exp(-0.5 * s);
}

double sm_eval(const Eigen::VectorXd& tau, const SmParams& p) {
  require_same_dim(tau.size(), p.spectral_means.cols(), "sm_eval");
  double total = 0.0;
  for (int q = 0; q < p.q(); ++q) {
    const double phase = kTwoPi * p.spectral_means.row(q).dot(tau);
    double envelope = 0.0;
    for (Eigen::Index d = 0; d < tau.size(); ++d) {
      envelope += tau[d] * tau[d] * p.spectral_variances(q, d);
    }
    total += p.weights[q] * std::cos(phase) * std::exp(-2.0 * kPi * kPi * envelope);
  }
  return total;
}

double gibbs_eval(double xi, double xj, double li, double lj) {
  if (!(li > 0.0) || !(lj > 0.0)) {
    throw NonPositiveLengthscale("gibbs_eval: lengthscales must be > 0");
  }
  const double s = li * li + lj * lj;
  const double d = xi - xj;
  return std::sqrt(2.0 * li * lj / s) * std::exp(-d * d / s);
}

double gsm_eval_1d(double xi, double xj,
                   const Eigen::VectorXd& wi, const Eigen::VectorXd& wj,
                   const Eigen::VectorXd& li, const Eigen::VectorXd& lj,
                   const Eigen::VectorXd& mui, const Eigen::VectorXd& muj) {
  const Eigen::Index q = wi.size();
  if (wj.size() != q || li.size() != q || lj.size() != q || mui.size() != q || muj.size() != q) {
    throw DimensionMismatch("gsm_eval_1d: latent vectors must share Q");
  }
  double total = 0.0;
  for (Eigen::Index k = 0; k < q; ++k) {
    if (!(wi[k] > 0.0) || !(wj[k] > 0.0)) {
      throw NonPositiveLatent("gsm_eval_1d: weights must be > 0");
    }
    if (!(li[k] > 0.0) || !(lj[k] > 0.0)) {
      throw NonPositiveLatent("gsm_eval_1d: lengthscales must be > 0");
    }
    const double phase = kTwoPi * (mui[k] * xi - muj[k] * xj);
    total += wi[k] * wj[k] * gibbs_eval(xi, xj, li[k], lj[k]) * std::cos(phase);
  }
  return total;
}

double gsm_eval(const Eigen::VectorXd& xi, const Eigen::VectorXd& xj,
                const GsmPointValues& vi, const GsmPointValues& vj) {
  require_same_dim(xi.size(), xj.size(), "gsm_eval");
  if (static_cast<Eigen::Index>(vi.w.size()) != xi.size() ||
      static_cast<Eigen::Index>(vj.w.size()) != xj.size()) {
    throw DimensionMismatch("gsm_eval: decoded values must cover every dimension");
  }
  double prod = 1.0;
  for (Eigen::Index d = 0; d < xi.size(); ++d) {
    const auto du = static_cast<std::size_t>(d);
    prod *= gsm_eval_1d(xi[d], xj[d], vi.w[du], vj.w[du], vi.l[du], vj.l[du],
                        vi.mu[du], vj.mu[du]);
  }
  return prod;
}

// ---------------------------------------------------------------------------
// Latent decode / extend
// ---------------------------------------------------------------------------

GsmDecoded decode_latents(const GsmLatents& lat) {
  GsmDecoded out;
  const int dim = lat.dim();
  out.w.resize(static_cast<std::size_t>(dim));
  out.l.resize(static_cast<std::size_t>(dim));
  out.mu.resize(static_cast<std::size_t>(dim));
  for (int d = 0; d < dim; ++d) {
    const auto du = static_cast<std::size_t>(d);
    out.w[du] = lat.log_w[du].array().exp();
    out.l[du] = lat.log_l[du].array().exp();
    out.mu[du] =
        lat.f_max[d] * lat.logit_mu[du].unaryExpr([](double z) { return logistic(z); });
  }
  return out;
}

GsmPointValues latent_decode(const GsmLatents& lat, Eigen::Index anchor_index) {
  if (anchor_index < 0 || anchor_index >= lat.anchor_count()) {
    throw OutOfRange("latent_decode: anchor index out of range");
  }
  GsmPointValues out;
  const int dim = lat.dim();
  out.w.resize(static_cast<std::size_t>(dim));
  out.l.resize(static_cast<std::size_t>(dim));
  out.mu.resize(static_cast<std::size_t>(dim));
  for (int d = 0; d < dim; ++d) {
    const auto du = static_cast<std::size_t>(d);
    out.w[du] = lat.log_w[du].row(anchor_index).array().exp();
    out.l[du] = lat.log_l[du].row(anchor_index).array().exp();
    out.mu[du] = lat.f_max[d] * lat.logit_mu[du]
                                    .row(anchor_index)
                                    .unaryExpr([](double z) { return logistic(z); })
                                    .transpose();
  }
  return out;
}

LatentPrior::LatentPrior(Eigen::VectorXd coords, double variance, double lengthscale,
                         double nugget)
    : coords_(std::move(coords)),
      variance_(variance),
      lengthscale_(lengthscale),
      nugget_(nugget) {
  if (!(variance_ > 0.0) || !(lengthscale_ > 0.0)) {
    throw NonPositiveLengthscale("latent prior: variance and lengthscale must be > 0");
  }
  if (!(nugget_ >= 0.0)) {
    throw OutOfRange("latent prior: nugget must be >= 0");
  }
  const Eigen::Index n = coords_.size();
  Eigen::MatrixXd diff = pairwise_diff(coords_, coords_);
  Eigen::MatrixXd k =
      variance_ * (-diff.array().square() / (2.0 * lengthscale_ * lengthscale_)).exp();
  k.diagonal().array() += nugget_;
  auto fac = cholesky_with_jitter(k, latent_jitter_ladder());
  if (!fac) {
    std::ostringstream os;
    os << "latent prior Gram (n=" << n << ", lengthscale=" << lengthscale_
       << ") not factorizable at maximum jitter";
    throw SingularLatentGram(os.str());
  }
  llt_ = std::move(fac->llt);
  log_det_ = fac->log_det;
}

Eigen::VectorXd LatentPrior::solve(const Eigen::VectorXd& v) const {
  return llt_.solve(v);
}

double LatentPrior::quad_form(const Eigen::VectorXd& v) const {
  return v.dot(llt_.solve(v));
}

Eigen::MatrixXd LatentPrior::cross(const Eigen::VectorXd& xstar) const {
  Eigen::MatrixXd diff = pairwise_diff(xstar, coords_);
  return variance_ * (-diff.array().square() / (2.0 * lengthscale_ * lengthscale_))
                         .exp()
                         .matrix();
}

Eigen::VectorXd LatentPrior::whiten(const Eigen::VectorXd& natural) const {
  return llt_.matrixL().solve(natural);
}

Eigen::VectorXd LatentPrior::unwhiten(const Eigen::VectorXd& white) const {
  return llt_.matrixL() * white;
}

Eigen::VectorXd LatentPrior::grad_to_white(const Eigen::VectorXd& g) const {
  return llt_.matrixL().transpose() * g;
}

namespace {

double resolved_lengthscale(const Eigen::VectorXd& coords, double scale) {
  const double range = coords.size() > 0 ? coords.maxCoeff() - coords.minCoeff() : 0.0;
  const double ls = scale * range;
  return ls > 0.0 ? ls : 1.0;  // degenerate anchor spread falls back to unit scale
}

}  // namespace

GsmPriorSet::GsmPriorSet(const Eigen::MatrixXd& anchors, const LatentPriorConfig& cfg) {
  const double nugget = cfg.nugget;
  const int dim = static_cast<int>(anchors.cols());
  w_.resize(static_cast<std::size_t>(dim));
  l_.resize(static_cast<std::size_t>(dim));
  mu_.resize(static_cast<std::size_t>(dim));
  for (int d = 0; d < dim; ++d) {
    const auto du = static_cast<std::size_t>(d);
    const Eigen::VectorXd coords = anchors.col(d);
    std::map<std::pair<double, double>, std::shared_ptr<LatentPrior>> cache;
    auto get = [&](double variance, double scale) {
      const double ls = resolved_lengthscale(coords, scale);
      auto key = std::make_pair(variance, ls);
      auto it = cache.find(key);
      if (it != cache.end()) return it->second;
      auto p = std::make_shared<LatentPrior>(coords, variance, ls, nugget);
      cache.emplace(key, p);
      return p;
    };
    w_[du] = get(cfg.variance_w, cfg.lengthscale_scale_w);
    l_[du] = get(cfg.variance_l, cfg.lengthscale_scale_l);
    mu_[du] = get(cfg.variance_mu, cfg.lengthscale_scale_mu);
  }
}

GsmExtender::GsmExtender(const GsmLatents& lat)
    : GsmExtender(lat, std::make_shared<GsmPriorSet>(lat.anchors, lat.prior)) {}

GsmExtender::GsmExtender(const GsmLatents& lat, std::shared_ptr<const GsmPriorSet> priors)
    : latents_(lat), priors_(std::move(priors)) {
  const int dim = lat.dim();
  const int q = lat.q();
  beta_w_.resize(static_cast<std::size_t>(dim));
  beta_l_.resize(static_cast<std::size_t>(dim));
  beta_mu_.resize(static_cast<std::size_t>(dim));
  for (int d = 0; d < dim; ++d) {
    const auto du = static_cast<std::size_t>(d);
    beta_w_[du].resize(lat.anchor_count(), q);
    beta_l_[du].resize(lat.anchor_count(), q);
    beta_mu_[du].resize(lat.anchor_count(), q);
    for (int k = 0; k < q; ++k) {
      beta_w_[du].col(k) = priors_->w_prior(d).solve(lat.log_w[du].col(k));
      beta_l_[du].col(k) = priors_->l_prior(d).solve(lat.log_l[du].col(k));
      beta_mu_[du].col(k) = priors_->mu_prior(d).solve(lat.logit_mu[du].col(k));
    }
  }
}

GsmDecoded GsmExtender::extend(const Eigen::MatrixXd& X) const {
  require_same_dim(X.cols(), latents_.anchors.cols(), "latent_extend");
  GsmDecoded out;
  const int dim = latents_.dim();
  out.w.resize(static_cast<std::size_t>(dim));
  out.l.resize(static_cast<std::size_t>(dim));
  out.mu.resize(static_cast<std::size_t>(dim));
  for (int d = 0; d < dim; ++d) {
    const auto du = static_cast<std::size_t>(d);
    const Eigen::VectorXd xs = X.col(d);
    out.w[du] = (priors_->w_prior(d).cross(xs) * beta_w_[du]).array().exp();
    out.l[du] = (priors_->l_prior(d).cross(xs) * beta_l_[du]).array().exp();
    out.mu[du] = latents_.f_max[d] * (priors_->mu_prior(d).cross(xs) * beta_mu_[du])
                                         .unaryExpr([](double z) { return logistic(z); });
  }
  return out;
}

GsmPointValues GsmExtender::extend_point(const Eigen::VectorXd& xstar) const {
  GsmDecoded dec = extend(xstar.transpose());
  GsmPointValues out;
  const auto dim = dec.w.size();
  out.w.resize(dim);
  out.l.resize(dim);
  out.mu.resize(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    out.w[d] = dec.w[d].row(0).transpose();
    out.l[d] = dec.l[d].row(0).transpose();
    out.mu[d] = dec.mu[d].row(0).transpose();
  }
  return out;
}

GsmPointValues latent_extend(const GsmLatents& lat, const Eigen::VectorXd& xstar) {
  if (lat.anchor_count() < 1) throw EmptySet("latent_extend: no anchors");
  return GsmExtender(lat).extend_point(xstar);
}

// ---------------------------------------------------------------------------
// Gram construction
// ---------------------------------------------------------------------------

Eigen::MatrixXd gram_rbf(const RbfParams& p, const Eigen::MatrixXd& X1,
                         const Eigen::MatrixXd& X2) {
  require_same_dim(X1.cols(), X2.cols(), "gram rbf");
  require_same_dim(X1.cols(), p.lengthscales.size(), "gram rbf lengthscales");
  Eigen::ArrayXXd w = Eigen::ArrayXXd::Zero(X1.rows(), X2.rows());
  for (Eigen::Index d = 0; d < X1.cols(); ++d) {
    const double l2 = p.lengthscales[d] * p.lengthscales[d];
    w += pairwise_diff(X1.col(d), X2.col(d)).array().square() / l2;
  }
  return p.signal_variance * (-0.5 * w).exp().matrix();
}

Eigen::MatrixXd gram_sm(const SmParams& p, const Eigen::MatrixXd& X1,
                        const Eigen::MatrixXd& X2) {
  require_same_dim(X1.cols(), X2.cols(), "gram sm");
  require_same_dim(X1.cols(), p.spectral_means.cols(), "gram sm means");
  const Eigen::Index n = X1.rows(), m = X2.rows(), dim = X1.cols();
  std::vector<Eigen::ArrayXXd> sqdist(static_cast<std::size_t>(dim));
  for (Eigen::Index d = 0; d < dim; ++d) {
    sqdist[static_cast<std::size_t>(d)] =
        pairwise_diff(X1.col(d), X2.col(d)).array().square();
  }
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, m);
  for (int q = 0; q < p.q(); ++q) {
    Eigen::ArrayXXd envelope = Eigen::ArrayXXd::Zero(n, m);
    for (Eigen::Index d = 0; d < dim; ++d) {
      envelope += p.spectral_variances(q, d) * sqdist[static_cast<std::size_t>(d)];
    }
    const Eigen::ArrayXd a1 = kTwoPi * (X1 * p.spectral_means.row(q).transpose()).array();
    const Eigen::ArrayXd a2 = kTwoPi * (X2 * p.spectral_means.row(q).transpose()).array();
    // cos(a1_i - a2_j) expanded as rank-2 outer products.
    Eigen::ArrayXXd cosphi = (a1.cos().matrix() * a2.cos().matrix().transpose() +
                              a1.sin().matrix() * a2.sin().matrix().transpose())
                                 .array();
    k.array() += p.weights[q] * cosphi * (-2.0 * kPi * kPi * envelope).exp();
  }
  return k;
}

std::vector<Eigen::MatrixXd> gsm_factor_matrices(const Eigen::MatrixXd& X1,
                                                 const GsmDecoded& d1,
                                                 const Eigen::MatrixXd& X2,
                                                 const GsmDecoded& d2) {
  require_same_dim(X1.cols(), X2.cols(), "gsm factors");
  const Eigen::Index n = X1.rows(), m = X2.rows(), dim = X1.cols();
  const Eigen::Index q = d1.w.empty() ? 0 : d1.w[0].cols();
  std::vector<Eigen::MatrixXd> factors(static_cast<std::size_t>(dim));
  for (Eigen::Index d = 0; d < dim; ++d) {
    const auto du = static_cast<std::size_t>(d);
    const Eigen::ArrayXd x1 = X1.col(d).array(), x2 = X2.col(d).array();
    const Eigen::ArrayXXd sq = pairwise_diff(X1.col(d), X2.col(d)).array().square();
    Eigen::ArrayXXd f = Eigen::ArrayXXd::Zero(n, m);
    for (Eigen::Index k = 0; k < q; ++k) {
      const Eigen::ArrayXd w1 = d1.w[du].col(k), w2 = d2.w[du].col(k);
      const Eigen::ArrayXd l1 = d1.l[du].col(k), l2 = d2.l[du].col(k);
      const Eigen::ArrayXd a1 = kTwoPi * d1.mu[du].col(k).array() * x1;
      const Eigen::ArrayXd a2 = kTwoPi * d2.mu[du].col(k).array() * x2;
      const Eigen::ArrayXd l1sq = l1.square(), l2sq = l2.square();
      Eigen::ArrayXXd s =
          l1sq.matrix().replicate(1, m).array() + l2sq.matrix().transpose().replicate(n, 1).array();
      Eigen::ArrayXXd gibbs =
          (2.0 * (l1.matrix() * l2.matrix().transpose()).array() / s).sqrt() * (-sq / s).exp();
      // w_i w_j cos(a_i - a_j) as rank-2 outer products.
      Eigen::ArrayXXd wcos = ((w1 * a1.cos()).matrix() * (w2 * a2.cos()).matrix().transpose() +
                              (w1 * a1.sin()).matrix() * (w2 * a2.sin()).matrix().transpose())
                                 .array();
      f += wcos * gibbs;
    }
    factors[du] = f.matrix();
  }
  return factors;
}

Eigen::MatrixXd gram_gsm(const Eigen::MatrixXd& X1, const GsmDecoded& d1,
                         const Eigen::MatrixXd& X2, const GsmDecoded& d2) {
  std::vector<Eigen::MatrixXd> factors = gsm_factor_matrices(X1, d1, X2, d2);
  Eigen::MatrixXd k = factors.empty()
                          ? Eigen::MatrixXd::Ones(X1.rows(), X2.rows())
                          : std::move(factors[0]);
  for (std::size_t d = 1; d < factors.size(); ++d) k = k.cwiseProduct(factors[d]);
  return k;
}

Eigen::MatrixXd gram(const KernelModel& model, const Eigen::MatrixXd& X1,
                     const Eigen::MatrixXd& X2, bool include_noise) {
  require_same_dim(X1.cols(), X2.cols(), "gram");
  const bool same = same_matrix(X1, X2);
  if (include_noise && !same) {
    throw IllegalNoise("gram: include_noise requires a single input set");
  }
  Eigen::MatrixXd k;
  switch (model.family()) {
    case KernelFamily::Rbf:
      k = gram_rbf(model.rbf(), X1, X2);
      break;
    case KernelFamily::Sm:
      k = gram_sm(model.sm(), X1, X2);
      break;
    case KernelFamily::Gsm: {
      const GsmLatents& lat = model.gsm();
      std::optional<GsmExtender> ext;
      auto decoded_for = [&](const Eigen::MatrixXd& x) {
        if (same_matrix(x, lat.anchors)) return decode_latents(lat);
        if (!ext) ext.emplace(lat);
        return ext->extend(x);
      };
      const GsmDecoded dec1 = decoded_for(X1);
      const GsmDecoded dec2 = same ? dec1 : decoded_for(X2);
      k = gram_gsm(X1, dec1, X2, dec2);
      break;
    }
  }
  if (include_noise) k.diagonal().array() += model.noise_variance;
  return k;
}

Eigen::VectorXd gram_diag(const KernelModel& model, const Eigen::MatrixXd& X,
                          const GsmDecoded* decoded, bool include_noise) {
  Eigen::VectorXd diag(X.rows());
  switch (model.family()) {
    case KernelFamily::Rbf:
      diag.setConstant(model.rbf().signal_variance);
      break;
    case KernelFamily::Sm:
      diag.setConstant(model.sm().weights.sum());
      break;
    case KernelFamily::Gsm: {
      const GsmLatents& lat = model.gsm();
      GsmDecoded local;
      if (!decoded) {
        if (same_matrix(X, lat.anchors)) {
          local = decode_latents(lat);
        } else {
          local = GsmExtender(lat).extend(X);
        }
        decoded = &local;
      }
      diag.setOnes();
      for (std::size_t d = 0; d < decoded->w.size(); ++d) {
        diag.array() *= decoded->w[d].array().square().rowwise().sum();
      }
      break;
    }
  }
  if (include_noise) diag.array() += model.noise_variance;
  return diag;
}

Eigen::VectorXd nyquist_fmax(const Eigen::MatrixXd& X) {
  Eigen::VectorXd out(X.cols());
  for (Eigen::Index d = 0; d < X.cols(); ++d) {
    std::vector<double> coords(X.col(d).data(), X.col(d).data() + X.rows());
    std::sort(coords.begin(), coords.end());
    std::vector<double> gaps;
    gaps.reserve(coords.size());
    for (std::size_t i = 1; i < coords.size(); ++i) {
      const double g = coords[i] - coords[i - 1];
      if (g > 0.0) gaps.push_back(g);
    }
    if (gaps.empty()) {
      out[d] = 0.5;
      continue;
    }
    std::sort(gaps.begin(), gaps.end());
    const std::size_t h = gaps.size() / 2;
    const double median =
        (gaps.size() % 2 == 1) ? gaps[h] : 0.5 * (gaps[h - 1] + gaps[h]);
    out[d] = 0.5 / median;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

void validate_kernel(const KernelModel& model) {
  if (!std::isfinite(model.noise_variance) || model.noise_variance < 0.0) {
    throw NegativeVariance("kernel model: noise variance must be finite and >= 0");
  }
  switch (model.family()) {
    case KernelFamily::Rbf: {
      const RbfParams& p = model.rbf();
      if (!(p.signal_variance > 0.0) || !std::isfinite(p.signal_variance)) {
        throw OutOfRange("rbf: signal variance must be positive and finite");
      }
      if (p.lengthscales.size() == 0 || !(p.lengthscales.array() > 0.0).all() ||
          !p.lengthscales.allFinite()) {
        throw NonPositiveLengthscale("rbf: lengthscales must be positive and finite");
      }
      break;
    }
    case KernelFamily::Sm: {
      const SmParams& p = model.sm();
      if (p.q() < 1) throw OutOfRange("sm: at least one mixture component required");
      if (p.spectral_means.rows() != p.q() || p.spectral_variances.rows() != p.q() ||
          p.spectral_means.cols() != p.spectral_variances.cols()) {
        throw DimensionMismatch("sm: parameter shapes disagree");
      }
      if (!(p.weights.array() > 0.0).all() || !p.weights.allFinite()) {
        throw OutOfRange("sm: weights must be positive and finite");
      }
      if (!(p.spectral_variances.array() > 0.0).all() || !p.spectral_variances.allFinite()) {
        throw OutOfRange("sm: spectral variances must be positive and finite");
      }
      if (!p.spectral_means.allFinite()) {
        throw OutOfRange("sm: spectral means must be finite");
      }
      break;
    }
    case KernelFamily::Gsm: {
      const GsmLatents& lat = model.gsm();
      const int dim = lat.dim();
      const Eigen::Index n = lat.anchor_count();
      if (n < 1) throw EmptySet("gsm: at least one anchor required");
      if (static_cast<int>(lat.log_w.size()) != dim ||
          static_cast<int>(lat.log_l.size()) != dim ||
          static_cast<int>(lat.logit_mu.size()) != dim || lat.f_max.size() != dim) {
        throw DimensionMismatch("gsm: latent containers must cover every dimension");
      }
      const int q = lat.q();
      if (q < 1) throw OutOfRange("gsm: at least one mixture component required");
      for (int d = 0; d < dim; ++d) {
        const auto du = static_cast<std::size_t>(d);
        if (lat.log_w[du].rows() != n || lat.log_l[du].rows() != n ||
            lat.logit_mu[du].rows() != n || lat.log_w[du].cols() != q ||
            lat.log_l[du].cols() != q || lat.logit_mu[du].cols() != q) {
          throw DimensionMismatch("gsm: latent vectors must be N x Q in every dimension");
        }
        if (!lat.log_w[du].allFinite() || !lat.log_l[du].allFinite() ||
            !lat.logit_mu[du].allFinite()) {
          throw NonPositiveLatent("gsm: latent vectors must be finite");
        }
        if (!(lat.f_max[d] > 0.0) || !std::isfinite(lat.f_max[d])) {
          throw OutOfRange("gsm: f_max must be positive and finite");
        }
      }
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Jittered Cholesky
// ---------------------------------------------------------------------------

std::optional<JitteredLlt> cholesky_with_jitter(const Eigen::MatrixXd& A,
                                                const std::vector<double>& relative_levels) {
  const double mean_diag = A.rows() > 0 ? A.diagonal().mean() : 0.0;
  if (!std::isfinite(mean_diag)) return std::nullopt;
  Eigen::MatrixXd work(A.rows(), A.cols());
  for (double level : relative_levels) {
    const double jitter = level * mean_diag;
    work = A;
    if (jitter != 0.0) work.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(work);
    if (llt.info() != Eigen::Success) continue;
    const Eigen::VectorXd ldiag = llt.matrixLLT().diagonal();
    if (!(ldiag.array() > 0.0).all() || !ldiag.allFinite()) continue;
    JitteredLlt out;
    out.llt = std::move(llt);
    out.jitter = jitter;
    out.log_det = 2.0 * ldiag.array().log().sum();
    return out;
  }
  return std::nullopt;
}

const std::vector<double>& gram_jitter_ladder() {
  static const std::vector<double> ladder{0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4};
  return ladder;
}

const std::vector<double>& latent_jitter_ladder() {
  static const std::vector<double> ladder{1e-8, 1e-7, 1e-6, 1e-5, 1e-4};
  return ladder;
}

}  // namespace windgp
