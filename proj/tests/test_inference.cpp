#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "test_util.hpp"
#include "windgp/gp.hpp"
#include "windgp/inference.hpp"

using namespace windgp;

namespace {

// |a - f| <= max(abs_floor, rel * max(|a|, |f|)) per coordinate
void check_grad_close(const Eigen::VectorXd& analytic, const Eigen::VectorXd& fd,
                      double rel = 1e-4, double abs_floor = 1e-6) {
  REQUIRE(analytic.size() == fd.size());
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double tol =
        std::max(abs_floor, rel * std::max(std::abs(analytic[i]), std::abs(fd[i])));
    CHECK_MESSAGE(std::abs(analytic[i] - fd[i]) <= tol,
                  "component " << i << ": analytic=" << analytic[i] << " fd=" << fd[i]);
  }
}

Dataset gp_sample_dataset(std::mt19937_64& rng, int n, int dim) {
  Eigen::MatrixXd x = testutil::random_inputs(rng, n, dim, 0.0, 4.0);
  RbfParams p;
  p.signal_variance = 1.0;
  p.lengthscales = Eigen::VectorXd::Constant(dim, 0.8);
  KernelModel m{p, 0.1};
  Eigen::VectorXd y = testutil::sample_targets(rng, m, x);
  return testutil::make_dataset(x, y);
}

// simple convex quadratic with analytic gradient, minimum at center
class Quadratic : public Objective {
public:
  explicit Quadratic(Eigen::VectorXd center) : c_(std::move(center)) {}
  Eigen::Index dim() const override { return c_.size(); }
  double value(const Eigen::VectorXd& v) const override { return 0.5 * (v - c_).squaredNorm(); }
  bool has_analytic_gradient() const override { return true; }
  double value_and_gradient(const Eigen::VectorXd& v, Eigen::VectorXd& grad) const override {
    grad = v - c_;
    return value(v);
  }

private:
  Eigen::VectorXd c_;
};

// f = -x below the wall, +inf at or above it; drives the optimizer into retreats
class Walled : public Objective {
public:
  Eigen::Index dim() const override { return 1; }
  double value(const Eigen::VectorXd& v) const override {
    return v[0] >= wall_ ? std::numeric_limits<double>::infinity() : -v[0];
  }
  bool has_analytic_gradient() const override { return true; }
  double value_and_gradient(const Eigen::VectorXd& v, Eigen::VectorXd& grad) const override {
    grad = Eigen::VectorXd::Constant(1, -1.0);
    return value(v);
  }

private:
  double wall_ = 1.0;
};

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("encode and decode are inverse to 1e-12") {
  std::mt19937_64 rng(71);
  SUBCASE("rbf") {
    KernelModel m{testutil::random_rbf(rng, 2), 0.07};
    FlatParams p = encode(m);
    CHECK(p.family == KernelFamily::Rbf);
    KernelModel back = decode(p);
    CHECK(std::abs(back.rbf().signal_variance - m.rbf().signal_variance) <= 1e-12);
    CHECK((back.rbf().lengthscales - m.rbf().lengthscales).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::abs(back.noise_variance - m.noise_variance) <= 1e-12);
  }
  SUBCASE("sm") {
    KernelModel m{testutil::random_sm(rng, 3, 2), 0.2};
    FlatParams p = encode(m);
    KernelModel back = decode(p);
    CHECK((back.sm().weights - m.sm().weights).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((back.sm().spectral_means - m.sm().spectral_means).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((back.sm().spectral_variances - m.sm().spectral_variances).cwiseAbs().maxCoeff() <=
          1e-12);
    CHECK(std::abs(back.noise_variance - m.noise_variance) <= 1e-12);
  }
  SUBCASE("gsm") {
    Eigen::MatrixXd anchors = testutil::random_inputs(rng, 6, 1);
    KernelModel m{testutil::random_gsm(rng, anchors, 2), 0.13};
    FlatParams p = encode(m);
    KernelModel back = decode(p);
    const GsmLatents& a = m.gsm();
    const GsmLatents& b = back.gsm();
    CHECK((a.anchors - b.anchors).cwiseAbs().maxCoeff() == 0.0);
    for (int d = 0; d < 1; ++d) {
      CHECK((a.log_w[d] - b.log_w[d]).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((a.log_l[d] - b.log_l[d]).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((a.logit_mu[d] - b.logit_mu[d]).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  SUBCASE("layout ends with the noise slice and covers the vector") {
    KernelModel m{testutil::random_sm(rng, 2, 2), 0.1};
    FlatParams p = encode(m);
    CHECK(p.layout.back().name == "log_noise_variance");
    std::size_t covered = 0;
    for (const auto& s : p.layout) {
      CHECK(s.offset == covered);  // contiguous, in order
      covered += s.size;
    }
    CHECK(covered == static_cast<std::size_t>(p.size()));
  }
  SUBCASE("out-of-band spectral mean cannot be encoded") {
    SmParams s = testutil::random_sm(rng, 2, 1);
    s.spectral_means(0, 0) = 0.0;  // logit(0) undefined
    CHECK_THROWS_AS(encode(KernelModel{s, 0.1}), OutOfRange);
    s.spectral_means(0, 0) = s.f_max[0];
    CHECK_THROWS_AS(encode(KernelModel{s, 0.1}), OutOfRange);
  }
}

TEST_CASE("nll objective equals the negative log marginal likelihood") {
  std::mt19937_64 rng(73);
  Dataset train = gp_sample_dataset(rng, 12, 1);
  for (int rep = 0; rep < 3; ++rep) {
    KernelModel m{testutil::random_rbf(rng, 1), testutil::uniform(rng, 0.05, 0.3)};
    const double nll = nll_objective(encode(m), train);
    TrainedGP gp = TrainedGP::fit(train, m);
    CHECK(nll == doctest::Approx(-gp.log_marginal_likelihood()).epsilon(1e-12));
  }
  Eigen::MatrixXd anchors = train.features();
  KernelModel gsm{testutil::random_gsm(rng, anchors, 2), 0.1};
  const double nll = nll_objective(encode(gsm), train);
  TrainedGP gp = TrainedGP::fit(train, gsm);
  CHECK(nll == doctest::Approx(-gp.log_marginal_likelihood()).epsilon(1e-12));
}

TEST_CASE("map objective adds the latent prior penalty") {
  std::mt19937_64 rng(79);
  Dataset train = gp_sample_dataset(rng, 8, 1);
  FlatParams init = initialize(KernelFamily::Gsm, train, 5);
  NllObjective nll(init, train);
  MapObjective map(init, train);
  const double gap = map.value(init.values) - nll.value(init.values);

  // oracle: sum of -log N(v; 0, Kp + 1e-8 I) over every latent slice
  const Eigen::VectorXd coords = train.features().col(0);
  const double range = coords.maxCoeff() - coords.minCoeff();
  const double ell = init.latent_prior.lengthscale_scale_w * range;
  Eigen::MatrixXd kp(coords.size(), coords.size());
  for (Eigen::Index i = 0; i < coords.size(); ++i) {
    for (Eigen::Index j = 0; j < coords.size(); ++j) {
      const double d = coords[i] - coords[j];
      kp(i, j) = std::exp(-d * d / (2.0 * ell * ell));
    }
  }
  kp.diagonal().array() += 1e-8;
  double expected = 0.0;
  for (const auto& s : init.layout) {
    if (s.name.rfind("log_w", 0) == 0 || s.name.rfind("log_l", 0) == 0 ||
        s.name.rfind("logit_mu", 0) == 0) {
      Eigen::VectorXd v = init.values.segment(s.offset, s.size);
      expected += -oracles::mvn_logpdf(v, kp);
    }
  }
  CHECK(gap == doctest::Approx(expected).epsilon(1e-9));
  CHECK(map_objective(init, train) ==
        doctest::Approx(nll_objective(init, train) + expected).epsilon(1e-9));
}

TEST_CASE("analytic gradients agree with central finite differences") {
  std::mt19937_64 rng(83);

  SUBCASE("rbf") {
    Dataset train = gp_sample_dataset(rng, 20, 2);
    FlatParams proto = initialize(KernelFamily::Rbf, train, 100);
    NllObjective obj(proto, train);
    for (std::uint64_t s = 100; s < 106; ++s) {
      Eigen::VectorXd at = initialize(KernelFamily::Rbf, train, s).values;
      Eigen::VectorXd ga(obj.dim());
      obj.value_and_gradient(at, ga);
      Eigen::VectorXd gf =
          oracles::fd_gradient([&](const Eigen::VectorXd& v) { return obj.value(v); }, at);
      check_grad_close(ga, gf);
    }
  }
  SUBCASE("sm") {
    Dataset train = gp_sample_dataset(rng, 20, 2);
    InitConfig ic;
    ic.q_sm = 2;
    FlatParams proto = initialize(KernelFamily::Sm, train, 200, ic);
    NllObjective obj(proto, train);
    for (std::uint64_t s = 200; s < 204; ++s) {
      Eigen::VectorXd at = initialize(KernelFamily::Sm, train, s, ic).values;
      Eigen::VectorXd ga(obj.dim());
      obj.value_and_gradient(at, ga);
      Eigen::VectorXd gf =
          oracles::fd_gradient([&](const Eigen::VectorXd& v) { return obj.value(v); }, at);
      check_grad_close(ga, gf);
    }
  }
  SUBCASE("gsm nll") {
    Dataset train = gp_sample_dataset(rng, 15, 1);
    InitConfig ic;
    ic.q_gsm = 2;
    FlatParams proto = initialize(KernelFamily::Gsm, train, 300, ic);
    NllObjective obj(proto, train);
    for (std::uint64_t s = 300; s < 303; ++s) {
      Eigen::VectorXd at = initialize(KernelFamily::Gsm, train, s, ic).values;
      Eigen::VectorXd ga(obj.dim());
      obj.value_and_gradient(at, ga);
      Eigen::VectorXd gf =
          oracles::fd_gradient([&](const Eigen::VectorXd& v) { return obj.value(v); }, at);
      check_grad_close(ga, gf);
    }
  }
  SUBCASE("gsm map") {
    Dataset train = gp_sample_dataset(rng, 15, 1);
    InitConfig ic;
    ic.q_gsm = 2;
    FlatParams proto = initialize(KernelFamily::Gsm, train, 400, ic);
    MapObjective obj(proto, train);
    for (std::uint64_t s = 400; s < 403; ++s) {
      Eigen::VectorXd at = initialize(KernelFamily::Gsm, train, s, ic).values;
      Eigen::VectorXd ga(obj.dim());
      obj.value_and_gradient(at, ga);
      Eigen::VectorXd gf =
          oracles::fd_gradient([&](const Eigen::VectorXd& v) { return obj.value(v); }, at);
      check_grad_close(ga, gf);
    }
  }
  SUBCASE("gradient mode reporting") {
    Dataset train = gp_sample_dataset(rng, 10, 1);
    FlatParams proto = initialize(KernelFamily::Rbf, train, 7);
    NllObjective obj(proto, train);
    GradientMode used;
    gradient(obj, proto.values, GradientMode::Analytic, &used);
    CHECK(used == GradientMode::Analytic);
    Eigen::VectorXd ga = gradient(obj, proto.values, GradientMode::Analytic);
    Eigen::VectorXd gf = gradient(obj, proto.values, GradientMode::FiniteDifference, &used);
    CHECK(used == GradientMode::FiniteDifference);
    check_grad_close(ga, gf);
  }
}

TEST_CASE("adam single step matches the hand-computed update") {
  OptimConfig cfg;
  cfg.learning_rate = 0.1;
  AdamState st;
  Eigen::VectorXd grad = Eigen::VectorXd::Constant(1, 1.0);
  Eigen::VectorXd dir = adam_update_moments(st, grad, cfg);
  // t=1: m_hat = g, v_hat = g^2, dir = 1/(1+eps)
  CHECK(dir[0] == doctest::Approx(1.0 / (1.0 + 1e-8)).epsilon(1e-12));
  CHECK(st.t == 1);

  AdamState st2;
  Eigen::VectorXd p = Eigen::VectorXd::Zero(1);
  adam_step(st2, grad, cfg, p);
  CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-7));
  adam_step(st2, grad, cfg, p);
  // constant gradient keeps |step| = lr under bias correction
  CHECK(p[0] == doctest::Approx(-0.2).epsilon(1e-7));
}

TEST_CASE("optimizer minimizes a convex quadratic and reports convergence") {
  Eigen::VectorXd c(2);
  c << 0.3, -0.7;
  Quadratic obj(c);
  OptimConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.max_iters = 4000;
  OptimResult res = optimize(obj, Eigen::VectorXd::Zero(2), cfg);
  CHECK(res.converged);
  CHECK(res.best_objective <= 1e-3);
  CHECK((res.best_params - c).norm() <= 0.1);
  CHECK(res.trace.front() == doctest::Approx(0.5 * c.squaredNorm()).epsilon(1e-12));
  CHECK(res.trace.size() == static_cast<std::size_t>(res.iterations) + 1);
  // best-seen objective is the minimum of the finite trace entries
  double lo = std::numeric_limits<double>::infinity();
  for (double f : res.trace) lo = std::min(lo, f);
  CHECK(res.best_objective == lo);
}

TEST_CASE("optimizer retreats on non-finite evaluations") {
  Walled obj;
  OptimConfig cfg;
  cfg.learning_rate = 0.6;
  cfg.max_iters = 20;
  OptimResult res = optimize(obj, Eigen::VectorXd::Zero(1), cfg);
  bool saw_inf = false;
  for (double f : res.trace) saw_inf |= std::isinf(f);
  CHECK(saw_inf);                      // the wall was hit at least once
  CHECK(res.best_params[0] < 1.0);     // and never accepted
  CHECK(std::isfinite(res.best_objective));
  CHECK(res.best_params[0] > 0.5);     // still made progress toward the wall
}

TEST_CASE("ten consecutive non-finite evaluations abort the run") {
  class Cliff : public Objective {
  public:
    Eigen::Index dim() const override { return 1; }
    double value(const Eigen::VectorXd& v) const override {
      return v[0] > 0.0 ? std::numeric_limits<double>::infinity() : -v[0];
    }
    bool has_analytic_gradient() const override { return true; }
    double value_and_gradient(const Eigen::VectorXd& v, Eigen::VectorXd& g) const override {
      g = Eigen::VectorXd::Constant(1, -1.0);
      return value(v);
    }
  };
  Cliff obj;
  OptimConfig cfg;
  cfg.max_iters = 100;
  CHECK_THROWS_AS(optimize(obj, Eigen::VectorXd::Zero(1), cfg), DivergedToInfinity);
}

TEST_CASE("non-finite initial objective aborts immediately") {
  Quadratic obj(Eigen::VectorXd::Zero(1));
  OptimConfig cfg;
  Eigen::VectorXd bad = Eigen::VectorXd::Constant(1, std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_AS(optimize(obj, bad, cfg), DivergedToInfinity);
}

TEST_CASE("checkpoint resume reproduces an uninterrupted run exactly") {
  Eigen::Vector2d c(4.0, -3.0);
  Quadratic obj(c);
  OptimConfig cfg;
  cfg.learning_rate = 0.02;

  cfg.max_iters = 60;
  OptimResult full = optimize(obj, Eigen::VectorXd::Zero(2), cfg);

  OptimCheckpoint snap;
  cfg.max_iters = 30;
  optimize(obj, Eigen::VectorXd::Zero(2), cfg, {}, nullptr, &snap);
  CHECK(snap.next_iter == 31);
  cfg.max_iters = 60;
  OptimResult resumed = optimize(obj, Eigen::VectorXd::Zero(2), cfg, {}, &snap);

  CHECK((full.best_params - resumed.best_params).norm() == 0.0);
  CHECK(full.best_objective == resumed.best_objective);
  REQUIRE(full.trace.size() == resumed.trace.size());
  for (std::size_t i = 0; i < full.trace.size(); ++i) {
    CHECK(full.trace[i] == resumed.trace[i]);
  }
}

TEST_CASE("iteration callback sees every accepted iteration in order") {
  Quadratic obj((Eigen::VectorXd(1) << 2.0).finished());
  OptimConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.max_iters = 25;
  long calls = 0;
  long last = 0;
  optimize(obj, Eigen::VectorXd::Zero(1), cfg,
           [&](long iter, double f, const Eigen::VectorXd&, const AdamState&) {
             CHECK(iter > last);
             CHECK(std::isfinite(f));
             last = iter;
             ++calls;
           });
  CHECK(calls == 25);
}

TEST_CASE("initialization is seeded and structurally valid") {
  std::mt19937_64 rng(89);
  Dataset train = gp_sample_dataset(rng, 25, 1);

  SUBCASE("same seed reproduces, different seeds differ") {
    for (KernelFamily fam : {KernelFamily::Rbf, KernelFamily::Sm, KernelFamily::Gsm}) {
      FlatParams a = initialize(fam, train, 42);
      FlatParams b = initialize(fam, train, 42);
      FlatParams c = initialize(fam, train, 43);
      CHECK((a.values - b.values).norm() == 0.0);
      CHECK((a.values - c.values).norm() > 0.0);
    }
  }
  SUBCASE("decoded parameters pass validation") {
    for (KernelFamily fam : {KernelFamily::Rbf, KernelFamily::Sm, KernelFamily::Gsm}) {
      for (std::uint64_t s = 0; s < 20; ++s) {
        KernelModel m = decode(initialize(fam, train, s));
        CHECK_NOTHROW(validate_kernel(m));
        CHECK(m.noise_variance > 0.0);
      }
    }
  }
  SUBCASE("sm draws respect the documented bands") {
    const Eigen::VectorXd col = train.features().col(0);
    const double range = col.maxCoeff() - col.minCoeff();
    const Eigen::VectorXd fmax = nyquist_fmax(train.features());
    for (std::uint64_t s = 0; s < 30; ++s) {
      KernelModel m = decode(initialize(KernelFamily::Sm, train, s));
      const SmParams& p = m.sm();
      for (Eigen::Index k = 0; k < p.weights.size(); ++k) {
        CHECK(p.spectral_means(k, 0) > 0.0);
        CHECK(p.spectral_means(k, 0) < fmax[0]);
        const double l = gibbs_lengthscale_from_spectral_variance(p.spectral_variances(k, 0));
        CHECK(l >= 0.05 * range * 0.999);
        CHECK(l <= 0.5 * range * 1.001);
      }
    }
  }
  SUBCASE("gsm anchors are the training inputs") {
    FlatParams p = initialize(KernelFamily::Gsm, train, 3);
    CHECK((p.anchors - train.features()).cwiseAbs().maxCoeff() == 0.0);
    KernelModel m = decode(p);
    CHECK(m.family() == KernelFamily::Gsm);
    CHECK_NOTHROW(TrainedGP::fit(train, m));
  }
}

TEST_CASE("multi restart aggregates deterministically") {
  std::mt19937_64 rng(97);
  Dataset train = gp_sample_dataset(rng, 14, 1);
  Dataset test = gp_sample_dataset(rng, 6, 1);
  OptimConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.max_iters = 40;

  int observed = 0;
  RestartReport a = multi_restart(KernelFamily::Rbf, train, &test, 3, 1000, cfg, {}, 1,
                                  [&](const RestartOutcome&) { ++observed; });
  RestartReport b = multi_restart(KernelFamily::Rbf, train, &test, 3, 1000, cfg, {}, 1);

  CHECK(observed == 3);
  REQUIRE(a.restarts.size() == 3);
  CHECK(a.failed_count == 0);
  REQUIRE(a.mean_nlpd.has_value());
  for (int r = 0; r < 3; ++r) {
    CHECK(a.restarts[r].index == r);
    CHECK(a.restarts[r].seed == 1000 + static_cast<std::uint64_t>(r));
    CHECK(a.restarts[r].final_objective == b.restarts[r].final_objective);
    CHECK((a.restarts[r].params.values - b.restarts[r].params.values).norm() == 0.0);
    REQUIRE(a.restarts[r].test_nlpd.has_value());
    CHECK(*a.restarts[r].test_nlpd == *b.restarts[r].test_nlpd);
  }
  CHECK(*a.mean_nlpd == *b.mean_nlpd);

  // aggregates recompute from the outcomes
  double sum = 0.0;
  double best = std::numeric_limits<double>::infinity();
  int best_idx = -1;
  for (const auto& r : a.restarts) {
    sum += *r.test_nlpd;
    if (r.final_objective < best) {
      best = r.final_objective;
      best_idx = r.index;
    }
  }
  CHECK(*a.mean_nlpd == doctest::Approx(sum / 3.0).epsilon(1e-15));
  CHECK(a.best_index == best_idx);
  CHECK(&a.best() == &a.restarts[best_idx]);
}

TEST_CASE("multi restart records failures and throws when everything fails") {
  std::mt19937_64 rng(101);
  Dataset train = gp_sample_dataset(rng, 10, 1);
  OptimConfig cfg;
  cfg.learning_rate = 1e200;  // guarantees ten consecutive non-finite evaluations
  cfg.max_iters = 30;
  CHECK_THROWS_AS(multi_restart(KernelFamily::Rbf, train, nullptr, 2, 5, cfg, {}, 1),
                  AllRestartsFailed);
}

TEST_CASE("mean nlpd is omitted without a test set") {
  std::mt19937_64 rng(103);
  Dataset train = gp_sample_dataset(rng, 10, 1);
  OptimConfig cfg;
  cfg.max_iters = 10;
  RestartReport rep = multi_restart(KernelFamily::Rbf, train, nullptr, 2, 7, cfg, {}, 1);
  CHECK(!rep.mean_nlpd.has_value());
  for (const auto& r : rep.restarts) CHECK(!r.test_nlpd.has_value());
}

}  // TEST_SUITE
