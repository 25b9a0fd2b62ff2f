#include "windgp/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "windgp/metrics.hpp"

namespace windgp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr Eigen::Index kGradBlockRows = 256;

std::string dq_name(const char* base, int d, int q) {
  return std::string(base) + "_d" + std::to_string(d) + "_q" + std::to_string(q);
}

double sample_variance(const Eigen::VectorXd& y) {
  if (y.size() < 2) return 1.0;
  const double mean = y.mean();
  return (y.array() - mean).square().sum() / static_cast<double>(y.size() - 1);
}

Eigen::VectorXd column_ranges(const Eigen::MatrixXd& x) {
  Eigen::VectorXd r(x.cols());
  for (Eigen::Index d = 0; d < x.cols(); ++d) {
    const double range = x.rows() > 0 ? x.col(d).maxCoeff() - x.col(d).minCoeff() : 0.0;
    r[d] = range > 0.0 ? range : 1.0;
  }
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// FlatParams layout
// ---------------------------------------------------------------------------

const ParamSlice& FlatParams::slice(const std::string& name) const {
  for (const ParamSlice& s : layout) {
    if (s.name == name) return s;
  }
  throw OutOfRange("flat params: no slice named '" + name + "'");
}

namespace {

/// Builds the canonical layout with zeroed values.
FlatParams build_flat(KernelFamily family, int q, int dim, Eigen::Index n_anchors,
                      const Eigen::VectorXd& f_max) {
  FlatParams p;
  p.family = family;
  p.q = q;
  p.dim = dim;
  p.f_max = f_max;
  std::size_t total = 0;
  auto add = [&](std::string name, std::size_t size, ParamTransform tf, double scale = 1.0) {
    ParamSlice s;
    s.name = std::move(name);
    s.offset = total;
    s.size = size;
    s.transform = tf;
    s.scale = scale;
    p.layout.push_back(std::move(s));
    total += size;
  };
  const auto nd = static_cast<std::size_t>(dim);
  const auto nq = static_cast<std::size_t>(q);
  const auto nn = static_cast<std::size_t>(n_anchors);
  switch (family) {
    case KernelFamily::Rbf:
      add("log_signal_variance", 1, ParamTransform::Log);
      add("log_lengthscales", nd, ParamTransform::Log);
      break;
    case KernelFamily::Sm:
      add("log_weights", nq, ParamTransform::Log);
      for (int d = 0; d < dim; ++d) {
        add("logit_means_d" + std::to_string(d), nq, ParamTransform::ScaledLogit, f_max[d]);
      }
      for (int d = 0; d < dim; ++d) {
        add("log_spectral_variances_d" + std::to_string(d), nq, ParamTransform::Log);
      }
      break;
    case KernelFamily::Gsm:
      for (int d = 0; d < dim; ++d) {
        for (int k = 0; k < q; ++k) add(dq_name("log_w", d, k), nn, ParamTransform::Log);
      }
      for (int d = 0; d < dim; ++d) {
        for (int k = 0; k < q; ++k) add(dq_name("log_l", d, k), nn, ParamTransform::Log);
      }
      for (int d = 0; d < dim; ++d) {
        for (int k = 0; k < q; ++k) {
          add(dq_name("logit_mu", d, k), nn, ParamTransform::ScaledLogit, f_max[d]);
        }
      }
      break;
  }
  add("log_noise_variance", 1, ParamTransform::Log);
  p.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(total));
  return p;
}

Eigen::VectorXd constrain(const ParamSlice& s, const Eigen::VectorXd& seg) {
  switch (s.transform) {
    case ParamTransform::Log:
      return seg.array().exp();
    case ParamTransform::ScaledLogit:
      return s.scale * seg.unaryExpr([](double z) { return logistic(z); });
    case ParamTransform::Identity:
      return seg;
  }
  return seg;
}

Eigen::VectorXd unconstrain(const ParamSlice& s, const Eigen::VectorXd& seg) {
  switch (s.transform) {
    case ParamTransform::Log:
      if (!(seg.array() > 0.0).all()) {
        throw OutOfRange("encode: slice '" + s.name + "' requires positive values");
      }
      return seg.array().log();
    case ParamTransform::ScaledLogit: {
      Eigen::VectorXd out(seg.size());
      for (Eigen::Index i = 0; i < seg.size(); ++i) {
        const double r = seg[i] / s.scale;
        if (!(r > 0.0) || !(r < 1.0)) {
          throw OutOfRange("encode: slice '" + s.name + "' requires values in (0, scale)");
        }
        out[i] = logit(r);
      }
      return out;
    }
    case ParamTransform::Identity:
      return seg;
  }
  return seg;
}

}  // namespace

FlatParams flat_prototype(KernelFamily family, int q, int dim, const Eigen::VectorXd& f_max,
                          const Eigen::MatrixXd& anchors, const LatentPriorConfig& prior) {
  if (f_max.size() != dim) {
    throw DimensionMismatch("flat_prototype: f_max length must equal dim");
  }
  if (family == KernelFamily::Gsm && (anchors.rows() == 0 || anchors.cols() != dim)) {
    throw DimensionMismatch("flat_prototype: GSM requires anchors of matching dimension");
  }
  FlatParams p = build_flat(family, q, dim, anchors.rows(), f_max);
  p.anchors = anchors;
  p.latent_prior = prior;
  if (family == KernelFamily::Gsm) {
    p.whitener = std::make_shared<GsmPriorSet>(p.anchors, p.latent_prior);
  }
  return p;
}

namespace {

// Factorizing the prior Grams is the expensive part; reuse the stored set
// when the caller carried one.
std::shared_ptr<const GsmPriorSet> whitener_for(const FlatParams& p) {
  if (p.whitener) return p.whitener;
  return std::make_shared<GsmPriorSet>(p.anchors, p.latent_prior);
}

}  // namespace

KernelModel decode(const FlatParams& p) {
  KernelModel m;
  auto seg = [&](const std::string& name) {
    const ParamSlice& s = p.slice(name);
    return constrain(s, p.values.segment(static_cast<Eigen::Index>(s.offset),
                                         static_cast<Eigen::Index>(s.size)));
  };
  switch (p.family) {
    case KernelFamily::Rbf: {
      RbfParams r;
      r.signal_variance = seg("log_signal_variance")[0];
      r.lengthscales = seg("log_lengthscales");
      m.params = std::move(r);
      break;
    }
    case KernelFamily::Sm: {
      SmParams s;
      s.weights = seg("log_weights");
      s.spectral_means.resize(p.q, p.dim);
      s.spectral_variances.resize(p.q, p.dim);
      for (int d = 0; d < p.dim; ++d) {
        s.spectral_means.col(d) = seg("logit_means_d" + std::to_string(d));
        s.spectral_variances.col(d) = seg("log_spectral_variances_d" + std::to_string(d));
      }
      s.f_max = p.f_max;
      m.params = std::move(s);
      break;
    }
    case KernelFamily::Gsm: {
      GsmLatents g;
      g.anchors = p.anchors;
      g.f_max = p.f_max;
      g.prior = p.latent_prior;
      const auto nd = static_cast<std::size_t>(p.dim);
      g.log_w.resize(nd);
      g.log_l.resize(nd);
      g.logit_mu.resize(nd);
      const Eigen::Index n = p.anchors.rows();
      const std::shared_ptr<const GsmPriorSet> priors = whitener_for(p);
      for (int d = 0; d < p.dim; ++d) {
        const auto du = static_cast<std::size_t>(d);
        g.log_w[du].resize(n, p.q);
        g.log_l[du].resize(n, p.q);
        g.logit_mu[du].resize(n, p.q);
        for (int k = 0; k < p.q; ++k) {
          // latent slices stay unconstrained in the model; the stored vector
          // holds them whitened, so map back through the prior factor
          const ParamSlice& sw = p.slice(dq_name("log_w", d, k));
          const ParamSlice& sl = p.slice(dq_name("log_l", d, k));
          const ParamSlice& smu = p.slice(dq_name("logit_mu", d, k));
          g.log_w[du].col(k) = priors->w_prior(d).unwhiten(
              p.values.segment(static_cast<Eigen::Index>(sw.offset), n));
          g.log_l[du].col(k) = priors->l_prior(d).unwhiten(
              p.values.segment(static_cast<Eigen::Index>(sl.offset), n));
          g.logit_mu[du].col(k) = priors->mu_prior(d).unwhiten(
              p.values.segment(static_cast<Eigen::Index>(smu.offset), n));
        }
      }
      m.params = std::move(g);
      break;
    }
  }
  m.noise_variance = seg("log_noise_variance")[0];
  return m;
}

FlatParams encode(const KernelModel& m) {
  validate_kernel(m);
  if (!(m.noise_variance > 0.0)) {
    throw OutOfRange("encode: noise variance must be positive for unconstrained form");
  }
  FlatParams p;
  auto set = [&](const std::string& name, const Eigen::VectorXd& constrained) {
    const ParamSlice& s = p.slice(name);
    p.values.segment(static_cast<Eigen::Index>(s.offset), static_cast<Eigen::Index>(s.size)) =
        unconstrain(s, constrained);
  };
  switch (m.family()) {
    case KernelFamily::Rbf: {
      const RbfParams& r = m.rbf();
      p = build_flat(KernelFamily::Rbf, 1, r.dim(), 0, Eigen::VectorXd());
      set("log_signal_variance", Eigen::VectorXd::Constant(1, r.signal_variance));
      set("log_lengthscales", r.lengthscales);
      break;
    }
    case KernelFamily::Sm: {
      const SmParams& s = m.sm();
      p = build_flat(KernelFamily::Sm, s.q(), s.dim(), 0, s.f_max);
      set("log_weights", s.weights);
      for (int d = 0; d < s.dim(); ++d) {
        set("logit_means_d" + std::to_string(d), s.spectral_means.col(d));
        set("log_spectral_variances_d" + std::to_string(d), s.spectral_variances.col(d));
      }
      break;
    }
    case KernelFamily::Gsm: {
      const GsmLatents& g = m.gsm();
      p = build_flat(KernelFamily::Gsm, g.q(), g.dim(), g.anchor_count(), g.f_max);
      p.anchors = g.anchors;
      p.latent_prior = g.prior;
      p.whitener = std::make_shared<GsmPriorSet>(p.anchors, p.latent_prior);
      for (int d = 0; d < g.dim(); ++d) {
        const auto du = static_cast<std::size_t>(d);
        for (int k = 0; k < g.q(); ++k) {
          const Eigen::Index n = g.anchor_count();
          p.values.segment(
              static_cast<Eigen::Index>(p.slice(dq_name("log_w", d, k)).offset), n) =
              p.whitener->w_prior(d).whiten(g.log_w[du].col(k));
          p.values.segment(
              static_cast<Eigen::Index>(p.slice(dq_name("log_l", d, k)).offset), n) =
              p.whitener->l_prior(d).whiten(g.log_l[du].col(k));
          p.values.segment(
              static_cast<Eigen::Index>(p.slice(dq_name("logit_mu", d, k)).offset), n) =
              p.whitener->mu_prior(d).whiten(g.logit_mu[du].col(k));
        }
      }
      break;
    }
  }
  set("log_noise_variance", Eigen::VectorXd::Constant(1, m.noise_variance));
  return p;
}

// ---------------------------------------------------------------------------
// Objectives
// ---------------------------------------------------------------------------

double Objective::value_and_gradient(const Eigen::VectorXd& v, Eigen::VectorXd& grad) const {
  const double f = value(v);
  grad = gradient(*this, v, GradientMode::FiniteDifference);
  return f;
}

NllObjective::NllObjective(FlatParams prototype, const Dataset& train)
    : prototype_(std::move(prototype)), x_(train.features()), y_(train.targets()) {
  if (train.empty()) throw EmptySet("objective: empty training set");
  if (x_.cols() != prototype_.dim) {
    throw DimensionMismatch("objective: prototype dimension does not match the data");
  }
  if (prototype_.family == KernelFamily::Gsm &&
      (prototype_.anchors.rows() != x_.rows() || prototype_.anchors != x_)) {
    throw DimensionMismatch("objective: GSM anchors must equal the training inputs");
  }
}

FlatParams NllObjective::with_values(const Eigen::VectorXd& v) const {
  if (v.size() != prototype_.size()) {
    throw DimensionMismatch("with_values: parameter vector length mismatch");
  }
  FlatParams p = prototype_;
  p.values = v;
  return p;
}

namespace {

/// Everything the NLL gradient sweep needs after one factorization.
struct NllEval {
  double nll = 0.0;
  Eigen::MatrixXd k;          // noise-free Gram
  Eigen::VectorXd alpha;      // A^{-1} y
  Eigen::LLT<Eigen::MatrixXd> llt;
  double noise = 0.0;
};

NllEval evaluate_nll(const KernelModel& model, const Eigen::MatrixXd& x,
                     const Eigen::VectorXd& y, const GsmDecoded* decoded,
                     std::vector<Eigen::MatrixXd>* gsm_factors_out) {
  NllEval ev;
  ev.noise = model.noise_variance;
  if (model.family() == KernelFamily::Gsm) {
    std::vector<Eigen::MatrixXd> factors =
        gsm_factor_matrices(x, *decoded, x, *decoded);
    ev.k = factors[0];
    for (std::size_t d = 1; d < factors.size(); ++d) ev.k = ev.k.cwiseProduct(factors[d]);
    if (gsm_factors_out) *gsm_factors_out = std::move(factors);
  } else {
    ev.k = gram(model, x, x, false);
  }
  Eigen::MatrixXd a = ev.k;
  a.diagonal().array() += ev.noise;
  static const std::vector<double> strict{0.0};
  auto fac = cholesky_with_jitter(a, ev.noise > 0.0 ? gram_jitter_ladder() : strict);
  if (!fac) {
    throw SingularGram("objective: Gram factorization failed at maximum jitter");
  }
  ev.llt = std::move(fac->llt);
  ev.alpha = ev.llt.solve(y);
  const double n = static_cast<double>(y.size());
  ev.nll = 0.5 * y.dot(ev.alpha) + 0.5 * fac->log_det + 0.5 * n * kLog2Pi;
  return ev;
}

/// M = A^{-1} - alpha alpha'; dNLL/dtheta = 0.5 <M, dA/dtheta>.
Eigen::MatrixXd influence_matrix(const NllEval& ev) {
  const Eigen::Index n = ev.alpha.size();
  Eigen::MatrixXd m = ev.llt.solve(Eigen::MatrixXd::Identity(n, n));
  m.noalias() -= ev.alpha * ev.alpha.transpose();
  return m;
}

double frob_inner(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a.array() * b.array()).sum();
}

}  // namespace

double NllObjective::value(const Eigen::VectorXd& v) const {
  const KernelModel model = decode(with_values(v));
  if (model.family() == KernelFamily::Gsm) {
    const GsmDecoded decoded = decode_latents(model.gsm());
    return evaluate_nll(model, x_, y_, &decoded, nullptr).nll;
  }
  return evaluate_nll(model, x_, y_, nullptr, nullptr).nll;
}

namespace {

/// Gradient of the NLL part with respect to every unconstrained parameter.
/// Shared by NllObjective and MapObjective.
void nll_gradient(const FlatParams& p, const KernelModel& model, const Eigen::MatrixXd& x,
                  const NllEval& ev, const GsmDecoded* decoded,
                  const std::vector<Eigen::MatrixXd>* gsm_factors, Eigen::VectorXd& grad) {
  grad.setZero(p.size());
  const Eigen::MatrixXd m = influence_matrix(ev);
  const Eigen::Index n = x.rows();

  auto grad_at = [&](const std::string& name) -> Eigen::VectorBlock<Eigen::VectorXd> {
    const ParamSlice& s = p.slice(name);
    return grad.segment(static_cast<Eigen::Index>(s.offset),
                        static_cast<Eigen::Index>(s.size));
  };

  switch (p.family) {
    case KernelFamily::Rbf: {
      const RbfParams& r = model.rbf();
      grad_at("log_signal_variance")[0] = 0.5 * frob_inner(m, ev.k);
      auto gl = grad_at("log_lengthscales");
      Eigen::MatrixXd mk = m.cwiseProduct(ev.k);
      for (int d = 0; d < p.dim; ++d) {
        const Eigen::VectorXd xd = x.col(d);
        double acc = 0.0;
        for (Eigen::Index r0 = 0; r0 < n; r0 += kGradBlockRows) {
          const Eigen::Index b = std::min(kGradBlockRows, n - r0);
          Eigen::ArrayXXd sq = (xd.segment(r0, b).replicate(1, n) -
                                xd.transpose().replicate(b, 1))
                                   .array()
                                   .square();
          acc += (mk.middleRows(r0, b).array() * sq).sum();
        }
        gl[d] = 0.5 * acc / (r.lengthscales[d] * r.lengthscales[d]);
      }
      break;
    }
    case KernelFamily::Sm: {
      const SmParams& s = model.sm();
      auto gw = grad_at("log_weights");
      for (int k = 0; k < p.q; ++k) {
        const Eigen::ArrayXd a1 = kTwoPi * (x * s.spectral_means.row(k).transpose()).array();
        const Eigen::ArrayXd ca = a1.cos(), sa = a1.sin();
        // E = exp(-2 pi^2 sum_d v_d sqdist_d), assembled blockwise with the
        // phase and distance terms to bound temporaries.
        double acc_w = 0.0;
        Eigen::VectorXd acc_v = Eigen::VectorXd::Zero(p.dim);
        Eigen::VectorXd acc_mu = Eigen::VectorXd::Zero(p.dim);
        for (Eigen::Index r0 = 0; r0 < n; r0 += kGradBlockRows) {
          const Eigen::Index b = std::min(kGradBlockRows, n - r0);
          Eigen::ArrayXXd env = Eigen::ArrayXXd::Zero(b, n);
          for (int d = 0; d < p.dim; ++d) {
            const Eigen::VectorXd xd = x.col(d);
            env += s.spectral_variances(k, d) *
                   (xd.segment(r0, b).replicate(1, n) - xd.transpose().replicate(b, 1))
                       .array()
                       .square();
          }
          env = (-2.0 * kPi * kPi * env).exp();
          Eigen::ArrayXXd cosphi =
              (ca.segment(r0, b).matrix() * ca.matrix().transpose() +
               sa.segment(r0, b).matrix() * sa.matrix().transpose())
                  .array();
          Eigen::ArrayXXd sinphi =
              (sa.segment(r0, b).matrix() * ca.matrix().transpose() -
               ca.segment(r0, b).matrix() * sa.matrix().transpose())
                  .array();
          Eigen::ArrayXXd mblk = m.middleRows(r0, b).array();
          Eigen::ArrayXXd mt = mblk * cosphi * env;  // M o (C o E)
          acc_w += mt.sum();
          Eigen::ArrayXd sin_rows = (mblk * sinphi * env).rowwise().sum();
          for (int d = 0; d < p.dim; ++d) {
            const Eigen::VectorXd xd = x.col(d);
            Eigen::ArrayXXd sq =
                (xd.segment(r0, b).replicate(1, n) - xd.transpose().replicate(b, 1))
                    .array()
                    .square();
            acc_v[d] += (mt * sq).sum();
            acc_mu[d] += (xd.segment(r0, b).array() * sin_rows).sum();
          }
        }
        gw[k] = 0.5 * s.weights[k] * acc_w;
        for (int d = 0; d < p.dim; ++d) {
          const double mu = s.spectral_means(k, d);
          const double dmu_dz = mu * (1.0 - mu / p.f_max[d]);
          grad_at("logit_means_d" + std::to_string(d))[k] =
              -kTwoPi * s.weights[k] * acc_mu[d] * dmu_dz;
          grad_at("log_spectral_variances_d" + std::to_string(d))[k] =
              -kPi * kPi * s.weights[k] * s.spectral_variances(k, d) * acc_v[d];
        }
      }
      break;
    }
    case KernelFamily::Gsm: {
      for (int d = 0; d < p.dim; ++d) {
        const auto du = static_cast<std::size_t>(d);
        // MP = M o (product of the other dimensions' factors)
        Eigen::MatrixXd mp = m;
        for (int d2 = 0; d2 < p.dim; ++d2) {
          if (d2 != d) mp = mp.cwiseProduct((*gsm_factors)[static_cast<std::size_t>(d2)]);
        }
        const Eigen::VectorXd xd = x.col(d);
        for (int k = 0; k < p.q; ++k) {
          const Eigen::ArrayXd w = decoded->w[du].col(k);
          const Eigen::ArrayXd l = decoded->l[du].col(k);
          const Eigen::ArrayXd mu = decoded->mu[du].col(k);
          const Eigen::ArrayXd l2 = l.square();
          const Eigen::ArrayXd phase = kTwoPi * mu * xd.array();
          const Eigen::ArrayXd ca = phase.cos(), sa = phase.sin();
          const Eigen::ArrayXd wc = w * ca, ws = w * sa;
          Eigen::VectorXd glw(n), gll(n), gmu(n);
          for (Eigen::Index r0 = 0; r0 < n; r0 += kGradBlockRows) {
            const Eigen::Index b = std::min(kGradBlockRows, n - r0);
            Eigen::ArrayXXd sq = (xd.segment(r0, b).replicate(1, n) -
                                  xd.transpose().replicate(b, 1))
                                     .array()
                                     .square();
            Eigen::ArrayXXd sl = l2.segment(r0, b).replicate(1, n).array() +
                                 l2.matrix().transpose().replicate(b, 1).array();
            Eigen::ArrayXXd gibbs =
                (2.0 * (l.segment(r0, b).matrix() * l.matrix().transpose()).array() / sl)
                    .sqrt() *
                (-sq / sl).exp();
            Eigen::ArrayXXd wcos =
                (wc.segment(r0, b).matrix() * wc.matrix().transpose() +
                 ws.segment(r0, b).matrix() * ws.matrix().transpose())
                    .array();
            Eigen::ArrayXXd wsin =
                (ws.segment(r0, b).matrix() * wc.matrix().transpose() -
                 wc.segment(r0, b).matrix() * ws.matrix().transpose())
                    .array();
            Eigen::ArrayXXd mp_blk = mp.middleRows(r0, b).array();
            Eigen::ArrayXXd mpt = mp_blk * wcos * gibbs;  // MP o T_q
            glw.segment(r0, b) = mpt.rowwise().sum();
            // d log Gibbs / d log l_i = 1/2 - l_i^2/S + 2 sq l_i^2 / S^2
            Eigen::ArrayXXd l2rows = l2.segment(r0, b).replicate(1, n).array();
            Eigen::ArrayXXd hfac = 0.5 - l2rows / sl + 2.0 * sq * l2rows / sl.square();
            gll.segment(r0, b) = (mpt * hfac).rowwise().sum();
            gmu.segment(r0, b) = (mp_blk * wsin * gibbs).rowwise().sum();
          }
          grad_at(dq_name("log_w", d, k)) = glw;
          grad_at(dq_name("log_l", d, k)) = gll;
          const Eigen::ArrayXd dmu_dz = mu * (1.0 - mu / p.f_max[d]);
          grad_at(dq_name("logit_mu", d, k)) =
              (-kTwoPi * xd.array() * dmu_dz * gmu.array()).matrix();
        }
      }
      break;
    }
  }
  // d NLL / d log sigma_n^2 = 0.5 sigma_n^2 tr(M)
  grad_at("log_noise_variance")[0] = 0.5 * ev.noise * m.trace();
}

}  // namespace

double NllObjective::value_and_gradient(const Eigen::VectorXd& v, Eigen::VectorXd& grad) const {
  const FlatParams p = with_values(v);
  const KernelModel model = decode(p);
  if (model.family() == KernelFamily::Gsm) {
    const GsmDecoded decoded = decode_latents(model.gsm());
    std::vector<Eigen::MatrixXd> factors;
    const NllEval ev = evaluate_nll(model, x_, y_, &decoded, &factors);
    nll_gradient(p, model, x_, ev, &decoded, &factors, grad);
    return ev.nll;
  }
  const NllEval ev = evaluate_nll(model, x_, y_, nullptr, nullptr);
  nll_gradient(p, model, x_, ev, nullptr, nullptr, grad);
  return ev.nll;
}

MapObjective::MapObjective(FlatParams prototype, const Dataset& train)
    : NllObjective(std::move(prototype), train) {
  if (prototype_.family != KernelFamily::Gsm) {
    throw OutOfRange("map objective: only defined for the GSM family");
  }
  priors_ = std::make_shared<GsmPriorSet>(prototype_.anchors, prototype_.latent_prior);
}

double MapObjective::prior_terms(const Eigen::VectorXd& v, Eigen::VectorXd* grad) const {
  const double n = static_cast<double>(prototype_.anchors.rows());
  double total = 0.0;
  for (int d = 0; d < prototype_.dim; ++d) {
    struct Fn {
      const char* base;
      const LatentPrior* prior;
    };
    const Fn fns[3] = {{"log_w", &priors_->w_prior(d)},
                       {"log_l", &priors_->l_prior(d)},
                       {"logit_mu", &priors_->mu_prior(d)}};
    for (const Fn& fn : fns) {
      const double log_norm = 0.5 * (fn.prior->log_det() + n * kLog2Pi);
      for (int k = 0; k < prototype_.q; ++k) {
        const ParamSlice& s = prototype_.slice(dq_name(fn.base, d, k));
        const Eigen::VectorXd vec =
            v.segment(static_cast<Eigen::Index>(s.offset), static_cast<Eigen::Index>(s.size));
        const Eigen::VectorXd solved = fn.prior->solve(vec);
        total += 0.5 * vec.dot(solved) + log_norm;
        if (grad) {
          grad->segment(static_cast<Eigen::Index>(s.offset),
                        static_cast<Eigen::Index>(s.size)) += solved;
        }
      }
    }
  }
  return total;
}

double MapObjective::value(const Eigen::VectorXd& v) const {
  return NllObjective::value(v) + prior_terms(v, nullptr);
}

double MapObjective::value_and_gradient(const Eigen::VectorXd& v, Eigen::VectorXd& grad) const {
  const double nll = NllObjective::value_and_gradient(v, grad);
  return nll + prior_terms(v, &grad);
}

double nll_objective(const FlatParams& params, const Dataset& train) {
  return NllObjective(params, train).value(params.values);
}

double map_objective(const FlatParams& params, const Dataset& train) {
  return MapObjective(params, train).value(params.values);
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

const char* to_string(GradientMode m) {
  return m == GradientMode::Analytic ? "analytic" : "finite-difference";
}

Eigen::VectorXd gradient(const Objective& obj, const Eigen::VectorXd& at, GradientMode mode,
                         GradientMode* used) {
  Eigen::VectorXd g(at.size());
  if (mode == GradientMode::Analytic && obj.has_analytic_gradient()) {
    obj.value_and_gradient(at, g);
    if (used) *used = GradientMode::Analytic;
  } else {
    Eigen::VectorXd probe = at;
    for (Eigen::Index i = 0; i < at.size(); ++i) {
      const double h = 1e-5 * std::max(1.0, std::abs(at[i]));
      auto probe_value = [&](double shifted) {
        probe[i] = shifted;
        try {
          return obj.value(probe);
        } catch (const SingularGram&) {
          return std::numeric_limits<double>::infinity();
        }
      };
      const double fp = probe_value(at[i] + h);
      const double fm = probe_value(at[i] - h);
      probe[i] = at[i];
      g[i] = (fp - fm) / (2.0 * h);
    }
    if (used) *used = GradientMode::FiniteDifference;
  }
  if (!g.allFinite()) {
    throw NonFiniteGradient("gradient: non-finite component encountered");
  }
  return g;
}

// ---------------------------------------------------------------------------
// ADAM
// ---------------------------------------------------------------------------

void OptimConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("optim: learning_rate must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("optim: beta1 and beta2 must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("optim: epsilon must be > 0");
  if (max_iters < 0) throw ConfigError("optim: max_iters must be >= 0");
  if (convergence_window < 1) throw ConfigError("optim: convergence window must be >= 1");
}

Eigen::VectorXd adam_update_moments(AdamState& state, const Eigen::VectorXd& grad,
                                    const OptimConfig& cfg) {
  if (state.m.size() == 0) {
    state.m = Eigen::VectorXd::Zero(grad.size());
    state.v = Eigen::VectorXd::Zero(grad.size());
  }
  if (state.m.size() != grad.size()) {
    throw DimensionMismatch("adam: state and gradient dimensions disagree");
  }
  state.t += 1;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v.array().matrix() +
            (1.0 - cfg.beta2) * grad.array().square().matrix();
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  return ((state.m / bc1).array() / ((state.v / bc2).array().sqrt() + cfg.epsilon)).matrix();
}

void adam_step(AdamState& state, const Eigen::VectorXd& grad, const OptimConfig& cfg,
               Eigen::VectorXd& params) {
  params -= cfg.learning_rate * adam_update_moments(state, grad, cfg);
}

// ---------------------------------------------------------------------------
// Optimization loop
// ---------------------------------------------------------------------------

namespace {

constexpr long kMaxConsecutiveNonFinite = 10;

}  // namespace

OptimResult optimize(const Objective& obj, const Eigen::VectorXd& init, const OptimConfig& cfg,
                     const IterationCallback& callback, const OptimCheckpoint* resume,
                     OptimCheckpoint* snapshot_out) {
  cfg.validate();
  const GradientMode mode =
      (cfg.gradient_mode == GradientMode::Analytic && obj.has_analytic_gradient())
          ? GradientMode::Analytic
          : GradientMode::FiniteDifference;

  // Evaluate objective and gradient; any failure (singular Gram, non-finite
  // value or gradient) is reported as +inf so the optimizer can retreat.
  Eigen::VectorXd g(obj.dim());
  auto eval = [&](const Eigen::VectorXd& at, Eigen::VectorXd& grad_out) -> double {
    try {
      double f;
      if (mode == GradientMode::Analytic) {
        f = obj.value_and_gradient(at, grad_out);
      } else {
        f = obj.value(at);
        if (std::isfinite(f)) grad_out = gradient(obj, at, GradientMode::FiniteDifference);
      }
      if (!std::isfinite(f)) return std::numeric_limits<double>::infinity();
      if (!grad_out.allFinite()) return std::numeric_limits<double>::infinity();
      return f;
    } catch (const SingularGram&) {
      return std::numeric_limits<double>::infinity();
    } catch (const NonFiniteGradient&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  Eigen::VectorXd p;
  AdamState state;
  long first_iter = 1;
  std::vector<double> trace;
  Eigen::VectorXd best_p;
  double best_f = std::numeric_limits<double>::infinity();
  double last_accepted;

  if (resume) {
    p = resume->params;
    state = resume->state;
    first_iter = resume->next_iter;
    trace = resume->trace;
    best_p = resume->best_params;
    best_f = resume->best_objective;
    last_accepted = eval(p, g);
    if (!std::isfinite(last_accepted)) {
      throw DivergedToInfinity("optimize: objective non-finite at the resume point");
    }
  } else {
    if (init.size() != obj.dim()) {
      throw DimensionMismatch("optimize: init length does not match objective dimension");
    }
    p = init;
    last_accepted = eval(p, g);
    trace.assign(1, last_accepted);
    if (!std::isfinite(last_accepted)) {
      throw DivergedToInfinity("optimize: objective non-finite at the initial parameters");
    }
    best_p = p;
    best_f = last_accepted;
  }

  long consecutive_bad = 0;
  long conv_streak = 0;
  bool converged = false;
  bool have_direction = false;
  double step_scale = 1.0;
  Eigen::VectorXd direction;
  Eigen::VectorXd cand_grad(obj.dim());

  for (long iter = first_iter; iter <= cfg.max_iters; ++iter) {
    if (!have_direction) {
      direction = adam_update_moments(state, g, cfg);
      step_scale = 1.0;
      have_direction = true;
    }
    const Eigen::VectorXd cand = p - cfg.learning_rate * step_scale * direction;
    const double fc = eval(cand, cand_grad);
    trace.push_back(fc);
    if (!std::isfinite(fc)) {
      // retreat: halve the step and retry the same direction
      if (++consecutive_bad >= kMaxConsecutiveNonFinite) {
        throw DivergedToInfinity("optimize: objective non-finite for " +
                                 std::to_string(kMaxConsecutiveNonFinite) +
                                 " consecutive iterations");
      }
      step_scale *= 0.5;
      continue;
    }
    consecutive_bad = 0;
    have_direction = false;
    const double rel =
        std::abs(fc - last_accepted) / std::max(1.0, std::abs(last_accepted));
    conv_streak = rel < cfg.convergence_rel_tol ? conv_streak + 1 : 0;
    p = cand;
    g = cand_grad;
    last_accepted = fc;
    if (fc < best_f) {
      best_f = fc;
      best_p = p;
    }
    // snapshot first so callbacks may persist it
    if (snapshot_out) {
      snapshot_out->params = p;
      snapshot_out->state = state;
      snapshot_out->next_iter = iter + 1;
      snapshot_out->best_params = best_p;
      snapshot_out->best_objective = best_f;
      snapshot_out->trace = trace;
    }
    if (callback) callback(iter, fc, p, state);
    if (conv_streak >= cfg.convergence_window) {
      converged = true;
      break;
    }
  }

  OptimResult res;
  res.best_params = std::move(best_p);
  res.best_objective = best_f;
  res.iterations = static_cast<long>(trace.size()) - 1;
  res.trace = std::move(trace);
  res.converged = converged;
  res.gradient_mode = mode;
  return res;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

FlatParams initialize(KernelFamily family, const Dataset& train, std::uint64_t seed,
                      const InitConfig& cfg) {
  if (train.empty()) throw EmptySet("initialize: empty training set");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  auto lognormal_jitter = [&]() { return std::exp(0.3 * normal(rng)); };
  // keep uniform draws away from {0,1} so the logit stays finite
  auto unit_open = [&]() { return std::clamp(uniform(rng), 1e-6, 1.0 - 1e-6); };

  const Eigen::MatrixXd& x = train.features();
  const double var_y = sample_variance(train.targets());
  const Eigen::VectorXd ranges = column_ranges(x);
  const int dim = train.dim();
  Eigen::VectorXd f_max = cfg.f_max ? Eigen::VectorXd::Constant(dim, *cfg.f_max)
                                    : nyquist_fmax(x);
  for (Eigen::Index d = 0; d < f_max.size(); ++d) {
    if (!(f_max[d] > 0.0) || !std::isfinite(f_max[d])) {
      throw OutOfRange("initialize: frequency bound must be positive and finite");
    }
  }

  // implied lengthscales are drawn log-uniformly in [0.05, 0.5] x range
  auto draw_lengthscale = [&](int d) {
    const double lo = 0.05 * ranges[d];
    return lo * std::pow(10.0, unit_open());
  };

  switch (family) {
    case KernelFamily::Rbf: {
      FlatParams p = build_flat(family, 1, dim, 0, Eigen::VectorXd());
      Eigen::VectorXd sf2(1), ls(dim), noise(1);
      sf2[0] = var_y * lognormal_jitter();
      for (int d = 0; d < dim; ++d) ls[d] = 0.5 * ranges[d] * lognormal_jitter();
      noise[0] = 0.1 * var_y * lognormal_jitter();
      auto put = [&](const char* name, const Eigen::VectorXd& vals) {
        const ParamSlice& s = p.slice(name);
        p.values.segment(static_cast<Eigen::Index>(s.offset),
                         static_cast<Eigen::Index>(s.size)) = vals.array().log();
      };
      put("log_signal_variance", sf2);
      put("log_lengthscales", ls);
      put("log_noise_variance", noise);
      return p;
    }
    case KernelFamily::Sm: {
      const int q = cfg.q_sm;
      if (q < 1) throw OutOfRange("initialize: SM mixture count must be >= 1");
      FlatParams p = build_flat(family, q, dim, 0, f_max);
      for (int k = 0; k < q; ++k) {
        const double w = var_y / static_cast<double>(q) * lognormal_jitter();
        p.values[static_cast<Eigen::Index>(p.slice("log_weights").offset) + k] = std::log(w);
      }
      for (int k = 0; k < q; ++k) {
        for (int d = 0; d < dim; ++d) {
          const double u = unit_open();  // mean = u * f_max
          p.values[static_cast<Eigen::Index>(
                       p.slice("logit_means_d" + std::to_string(d)).offset) +
                   k] = logit(u);
        }
      }
      for (int k = 0; k < q; ++k) {
        for (int d = 0; d < dim; ++d) {
          const double l = draw_lengthscale(d);
          p.values[static_cast<Eigen::Index>(
                       p.slice("log_spectral_variances_d" + std::to_string(d)).offset) +
                   k] = std::log(spectral_variance_from_gibbs_lengthscale(l));
        }
      }
      p.values[static_cast<Eigen::Index>(p.slice("log_noise_variance").offset)] =
          std::log(0.1 * var_y * lognormal_jitter());
      return p;
    }
    case KernelFamily::Gsm: {
      const int q = cfg.q_gsm;
      if (q < 1) throw OutOfRange("initialize: GSM mixture count must be >= 1");
      FlatParams p = build_flat(family, q, dim, x.rows(), f_max);
      p.anchors = x;
      p.latent_prior = cfg.latent_prior;
      const Eigen::Index n = x.rows();
      // SM-style constants per (q, d), encoded, then elementwise jitter
      Eigen::VectorXd const_w(q);
      Eigen::MatrixXd const_mu(q, dim), const_l(q, dim);
      for (int k = 0; k < q; ++k) {
        // the GSM diagonal carries w^2, so take the square root of an
        // SM-style weight
        const_w[k] = 0.5 * std::log(var_y / static_cast<double>(q) * lognormal_jitter());
      }
      for (int k = 0; k < q; ++k) {
        for (int d = 0; d < dim; ++d) const_mu(k, d) = logit(unit_open());
      }
      for (int k = 0; k < q; ++k) {
        for (int d = 0; d < dim; ++d) const_l(k, d) = std::log(draw_lengthscale(d));
      }
      auto fill = [&](const std::string& name, double center) {
        const ParamSlice& s = p.slice(name);
        for (Eigen::Index i = 0; i < n; ++i) {
          p.values[static_cast<Eigen::Index>(s.offset) + i] = center + 0.05 * normal(rng);
        }
      };
      for (int d = 0; d < dim; ++d) {
        for (int k = 0; k < q; ++k) fill(dq_name("log_w", d, k), const_w[k]);
      }
      for (int d = 0; d < dim; ++d) {
        for (int k = 0; k < q; ++k) fill(dq_name("log_l", d, k), const_l(k, d));
      }
      for (int d = 0; d < dim; ++d) {
        for (int k = 0; k < q; ++k) fill(dq_name("logit_mu", d, k), const_mu(k, d));
      }
      p.values[static_cast<Eigen::Index>(p.slice("log_noise_variance").offset)] =
          std::log(0.1 * var_y * lognormal_jitter());
      return p;
    }
  }
  throw OutOfRange("initialize: unknown kernel family");
}

// ---------------------------------------------------------------------------
// Restart protocol
// ---------------------------------------------------------------------------

const RestartOutcome& RestartReport::best() const {
  if (best_index < 0 || best_index >= static_cast<int>(restarts.size())) {
    throw OutOfRange("restart report: no successful restart available");
  }
  return restarts[static_cast<std::size_t>(best_index)];
}

RestartReport multi_restart(KernelFamily family, const Dataset& train, const Dataset* test,
                            int n_restarts, std::uint64_t base_seed, const OptimConfig& cfg,
                            const InitConfig& icfg, int max_workers,
                            const RestartObserver& observer) {
  if (n_restarts < 1) throw OutOfRange("multi_restart: need at least one restart");
  cfg.validate();

  std::vector<RestartOutcome> outcomes(static_cast<std::size_t>(n_restarts));
  std::mutex observer_mutex;

  auto run_one = [&](int r) {
    RestartOutcome out;
    out.index = r;
    out.seed = base_seed + static_cast<std::uint64_t>(r);
    try {
      FlatParams init_p = initialize(family, train, out.seed, icfg);
      std::unique_ptr<NllObjective> obj;
      if (family == KernelFamily::Gsm) {
        obj = std::make_unique<MapObjective>(init_p, train);
      } else {
        obj = std::make_unique<NllObjective>(init_p, train);
      }
      OptimResult res = optimize(*obj, init_p.values, cfg);
      out.final_objective = res.best_objective;
      out.iterations = res.iterations;
      out.converged = res.converged;
      out.gradient_mode = res.gradient_mode;
      out.params = obj->with_values(res.best_params);
      const KernelModel model = decode(out.params);
      const TrainedGP gp = TrainedGP::fit(train, model);
      if (test != nullptr && !test->empty()) {
        const std::vector<Prediction> preds = gp.predict(test->features(), true);
        out.test_nlpd = nlpd(make_scored_set(*test, preds));
      }
    } catch (const DivergedToInfinity& e) {
      out.failed = true;
      out.error = e.what();
    } catch (const SingularGram& e) {
      out.failed = true;
      out.error = e.what();
    }
    if (observer) {
      std::lock_guard<std::mutex> lock(observer_mutex);
      observer(out);
    }
    outcomes[static_cast<std::size_t>(r)] = std::move(out);
  };

  int workers = max_workers > 0 ? max_workers
                                : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, n_restarts));
  if (workers == 1) {
    for (int r = 0; r < n_restarts; ++r) run_one(r);
  } else {
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
      for (int r = next.fetch_add(1); r < n_restarts; r = next.fetch_add(1)) {
        try {
          run_one(r);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  RestartReport report;
  report.restarts = std::move(outcomes);
  double nlpd_sum = 0.0;
  std::size_t nlpd_count = 0;
  double best_obj = std::numeric_limits<double>::infinity();
  for (const RestartOutcome& out : report.restarts) {
    if (out.failed) {
      ++report.failed_count;
      continue;
    }
    if (out.test_nlpd) {
      nlpd_sum += *out.test_nlpd;
      ++nlpd_count;
    }
    if (out.final_objective < best_obj) {
      best_obj = out.final_objective;
      report.best_index = out.index;
    }
  }
  if (report.failed_count == n_restarts) {
    throw AllRestartsFailed("multi_restart: all " + std::to_string(n_restarts) +
                            " restarts failed (" + report.restarts.front().error + ")");
  }
  if (nlpd_count > 0) report.mean_nlpd = nlpd_sum / static_cast<double>(nlpd_count);
  return report;
}

}  // namespace windgp
