#include <Eigen/Eigenvalues>
#include <random>

#include "doctest.h"
#include "test_util.hpp"
#include "windgp/kernels.hpp"

using namespace windgp;

namespace {

Eigen::VectorXd scalar_vec(double v) { return Eigen::VectorXd::Constant(1, v); }

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("rbf scalar evaluation") {
  RbfParams p;
  p.signal_variance = 2.5;
  p.lengthscales = scalar_vec(0.7);
  CHECK(rbf_eval(scalar_vec(1.3), scalar_vec(1.3), p) == doctest::Approx(2.5).epsilon(1e-15));

  p.signal_variance = 1.0;
  p.lengthscales = scalar_vec(0.5);
  // separation of exactly one lengthscale
  CHECK(rbf_eval(scalar_vec(0.0), scalar_vec(0.5), p) ==
        doctest::Approx(0.6065306597126334).epsilon(1e-12));

  // deep tail underflows gracefully
  CHECK(rbf_eval(scalar_vec(0.0), scalar_vec(50.0), p) < 1e-300);

  Eigen::VectorXd two(2);
  two << 0.0, 0.0;
  CHECK_THROWS_AS(rbf_eval(two, scalar_vec(0.0), p), DimensionMismatch);
}

TEST_CASE("sm scalar evaluation") {
  SmParams p;
  p.weights = Eigen::VectorXd::Constant(1, 1.0);
  p.spectral_means = Eigen::MatrixXd::Constant(1, 1, 0.0);
  p.spectral_variances = Eigen::MatrixXd::Constant(1, 1, 0.04);
  p.f_max = scalar_vec(1.0);

  SUBCASE("zero separation gives the weight sum") {
    SmParams p3;
    p3.weights.resize(3);
    p3.weights << 0.4, 1.1, 0.25;
    p3.spectral_means = Eigen::MatrixXd::Random(3, 2).cwiseAbs();
    p3.spectral_variances = Eigen::MatrixXd::Random(3, 2).cwiseAbs().array() + 0.01;
    p3.f_max = Eigen::VectorXd::Constant(2, 1.0);
    Eigen::VectorXd tau = Eigen::VectorXd::Zero(2);
    CHECK(sm_eval(tau, p3) == doctest::Approx(1.75).epsilon(1e-15));
  }
  SUBCASE("zero frequency reduces to the squared-exponential envelope") {
    const double tau = 0.37;
    CHECK(sm_eval(scalar_vec(tau), p) ==
          doctest::Approx(std::exp(-2.0 * kPi * kPi * tau * tau * 0.04)).epsilon(1e-14));
  }
  SUBCASE("closed-form case with an active frequency") {
    p.spectral_means(0, 0) = 1.0;
    p.spectral_variances(0, 0) = 0.01;
    CHECK(sm_eval(scalar_vec(0.5), p) ==
          doctest::Approx(-0.9518498073692735).epsilon(1e-12));
  }
  SUBCASE("even in tau") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 50; ++i) {
      SmParams pr = testutil::random_sm(rng, 3, 2);
      Eigen::VectorXd tau(2);
      tau << testutil::uniform(rng, -2, 2), testutil::uniform(rng, -2, 2);
      CHECK(sm_eval(tau, pr) == doctest::Approx(sm_eval(-tau, pr)).epsilon(1e-14));
    }
  }
}

TEST_CASE("gibbs scalar evaluation") {
  // equal inputs: prefactor only
  CHECK(gibbs_eval(0.4, 0.4, 1.0, 2.0) ==
        doctest::Approx(0.8944271909999159).epsilon(1e-14));
  CHECK(gibbs_eval(0.4, 0.4, 1.3, 1.3) == doctest::Approx(1.0).epsilon(1e-15));

  // unit separation, unequal lengthscales: sqrt(4/5) exp(-1/5)
  CHECK(gibbs_eval(1.0, 2.0, 1.0, 2.0) ==
        doctest::Approx(0.732295047660785).epsilon(1e-12));

  // constant lengthscale reduces to the unit-variance RBF form exactly
  for (double delta : {0.0, 0.3, 1.7, -2.4}) {
    for (double l : {0.2, 1.0, 3.5}) {
      CHECK(gibbs_eval(0.0, delta, l, l) == std::exp(-delta * delta / (2.0 * l * l)));
    }
  }

  CHECK_THROWS_AS(gibbs_eval(0.0, 1.0, 0.0, 1.0), NonPositiveLengthscale);
  CHECK_THROWS_AS(gibbs_eval(0.0, 1.0, 1.0, -0.5), NonPositiveLengthscale);
}

TEST_CASE("gsm 1-d evaluation") {
  SUBCASE("zero separation gives the squared weight sum") {
    Eigen::VectorXd w(2), l(2), mu(2);
    w << 0.7, 1.2;
    l << 0.5, 0.9;
    mu << 0.2, 0.4;
    CHECK(gsm_eval_1d(1.1, 1.1, w, w, l, l, mu, mu) ==
          doctest::Approx(0.7 * 0.7 + 1.2 * 1.2).epsilon(1e-15));
  }
  SUBCASE("constant latents, single component closed form") {
    const double w = 0.8, l = 0.6, mu = 0.3, xi = 0.4, xj = 1.5;
    Eigen::VectorXd wv = scalar_vec(w), lv = scalar_vec(l), muv = scalar_vec(mu);
    const double delta = xi - xj;
    const double expected =
        w * w * std::exp(-delta * delta / (2.0 * l * l)) * std::cos(kTwoPi * mu * delta);
    CHECK(gsm_eval_1d(xi, xj, wv, wv, lv, lv, muv, muv) ==
          doctest::Approx(expected).epsilon(1e-13));
  }
  SUBCASE("two components equal the hand-expanded sum") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 20; ++rep) {
      Eigen::VectorXd wi(2), wj(2), li(2), lj(2), mui(2), muj(2);
      for (int k = 0; k < 2; ++k) {
        wi[k] = testutil::uniform(rng, 0.2, 1.5);
        wj[k] = testutil::uniform(rng, 0.2, 1.5);
        li[k] = testutil::uniform(rng, 0.3, 1.2);
        lj[k] = testutil::uniform(rng, 0.3, 1.2);
        mui[k] = testutil::uniform(rng, 0.05, 0.6);
        muj[k] = testutil::uniform(rng, 0.05, 0.6);
      }
      const double xi = testutil::uniform(rng, 0, 3), xj = testutil::uniform(rng, 0, 3);
      double expected = 0.0;
      for (int k = 0; k < 2; ++k) {
        expected += wi[k] * wj[k] * gibbs_eval(xi, xj, li[k], lj[k]) *
                    std::cos(kTwoPi * (mui[k] * xi - muj[k] * xj));
      }
      CHECK(gsm_eval_1d(xi, xj, wi, wj, li, lj, mui, muj) ==
            doctest::Approx(expected).epsilon(1e-13));
    }
  }
  SUBCASE("rejects non-positive latents") {
    Eigen::VectorXd ok = scalar_vec(1.0), bad = scalar_vec(0.0);
    CHECK_THROWS_AS(gsm_eval_1d(0, 1, bad, ok, ok, ok, ok, ok), NonPositiveLatent);
    CHECK_THROWS_AS(gsm_eval_1d(0, 1, ok, ok, ok, bad, ok, ok), NonPositiveLatent);
  }
}

TEST_CASE("gsm multi-dimensional product") {
  GsmPointValues vi, vj;
  vi.w = {scalar_vec(1.0), scalar_vec(1.0)};
  vi.l = {scalar_vec(0.5), scalar_vec(0.8)};
  vi.mu = {scalar_vec(0.2), scalar_vec(0.1)};
  vj = vi;
  Eigen::VectorXd xi(2), xj(2);
  xi << 0.3, 1.0;
  xj << 1.1, 1.0;  // zero separation in dimension 2

  SUBCASE("zero separation in one coordinate leaves the other factor") {
    const double f1 = gsm_eval_1d(xi[0], xj[0], vi.w[0], vj.w[0], vi.l[0], vj.l[0],
                                  vi.mu[0], vj.mu[0]);
    CHECK(gsm_eval(xi, xj, vi, vj) == doctest::Approx(f1).epsilon(1e-14));
  }
  SUBCASE("general case is the product of the per-dimension factors") {
    xj << 1.1, 2.3;
    const double f1 = gsm_eval_1d(xi[0], xj[0], vi.w[0], vj.w[0], vi.l[0], vj.l[0],
                                  vi.mu[0], vj.mu[0]);
    const double f2 = gsm_eval_1d(xi[1], xj[1], vi.w[1], vj.w[1], vi.l[1], vj.l[1],
                                  vi.mu[1], vj.mu[1]);
    CHECK(gsm_eval(xi, xj, vi, vj) == doctest::Approx(f1 * f2).epsilon(1e-14));
  }
  SUBCASE("argument swap symmetry") {
    std::mt19937_64 rng(5);
    Eigen::MatrixXd anchors = testutil::random_inputs(rng, 6, 2);
    GsmLatents lat = testutil::random_gsm(rng, anchors, 2);
    GsmPointValues a = latent_decode(lat, 1), b = latent_decode(lat, 4);
    Eigen::VectorXd xa = anchors.row(1), xb = anchors.row(4);
    CHECK(gsm_eval(xa, xb, a, b) == doctest::Approx(gsm_eval(xb, xa, b, a)).epsilon(1e-13));
  }
}

TEST_CASE("convention mapping between spectral variance and lengthscale") {
  // l = 1/(2 pi sqrt(v)); matching the exponents symbolically leaves no
  // residual constant, so the round trip must be the identity.
  for (double v : {0.001, 0.04, 1.7}) {
    const double l = gibbs_lengthscale_from_spectral_variance(v);
    CHECK(spectral_variance_from_gibbs_lengthscale(l) == doctest::Approx(v).epsilon(1e-14));
  }
  // exponent match: exp(-2 pi^2 tau^2 v) == exp(-tau^2 / (2 l^2))
  const double v = 0.07, tau = 1.3;
  const double l = gibbs_lengthscale_from_spectral_variance(v);
  CHECK(std::exp(-tau * tau / (2.0 * l * l)) ==
        doctest::Approx(std::exp(-2.0 * kPi * kPi * tau * tau * v)).epsilon(1e-15));
}

TEST_CASE("gsm with constant latents matches sm in one dimension") {
  std::mt19937_64 rng(2024);
  const double f_max = 1.0;
  int checked = 0;
  while (checked < 1000) {
    const int q = 1 + static_cast<int>(rng() % 3);
    SmParams sm = testutil::random_sm(rng, q, 1, f_max);
    Eigen::MatrixXd anchors = testutil::random_inputs(rng, 2, 1, 0.0, 5.0);
    GsmLatents lat = testutil::constant_gsm(anchors, sm.weights, sm.spectral_means.col(0),
                                            sm.spectral_variances.col(0), f_max);
    GsmPointValues vi = latent_decode(lat, 0), vj = latent_decode(lat, 1);
    const double gsm_value = gsm_eval_1d(anchors(0, 0), anchors(1, 0), vi.w[0], vj.w[0],
                                         vi.l[0], vj.l[0], vi.mu[0], vj.mu[0]);
    Eigen::VectorXd tau = scalar_vec(anchors(0, 0) - anchors(1, 0));
    const double sm_value = sm_eval(tau, sm);
    CHECK(std::abs(gsm_value - sm_value) <= 1e-10);
    ++checked;
  }
}

TEST_CASE("latent decode") {
  Eigen::MatrixXd anchors(3, 1);
  anchors << 0.0, 1.0, 2.0;
  GsmLatents lat;
  lat.anchors = anchors;
  lat.f_max = scalar_vec(0.5);
  lat.log_w = {Eigen::MatrixXd::Zero(3, 1)};
  lat.log_l = {Eigen::MatrixXd::Constant(3, 1, std::log(2.0))};
  lat.logit_mu = {Eigen::MatrixXd::Zero(3, 1)};
  GsmPointValues v = latent_decode(lat, 1);
  CHECK(v.w[0][0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(v.l[0][0] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(v.mu[0][0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK_THROWS_AS(latent_decode(lat, 3), OutOfRange);
}

TEST_CASE("latent extension") {
  std::mt19937_64 rng(31);
  Eigen::MatrixXd anchors(6, 1);
  anchors << 0.0, 0.5, 1.0, 1.5, 2.0, 2.5;
  GsmLatents lat = testutil::random_gsm(rng, anchors, 2);

  SUBCASE("reproduces anchors within jitter tolerance") {
    for (Eigen::Index i = 0; i < anchors.rows(); ++i) {
      GsmPointValues direct = latent_decode(lat, i);
      GsmPointValues extended = latent_extend(lat, anchors.row(i));
      for (int k = 0; k < 2; ++k) {
        CHECK(extended.w[0][k] == doctest::Approx(direct.w[0][k]).epsilon(1e-6));
        CHECK(extended.l[0][k] == doctest::Approx(direct.l[0][k]).epsilon(1e-6));
        CHECK(extended.mu[0][k] == doctest::Approx(direct.mu[0][k]).epsilon(1e-6));
      }
    }
  }
  SUBCASE("reverts to the prior far from every anchor") {
    GsmPointValues far = latent_extend(lat, scalar_vec(500.0));
    for (int k = 0; k < 2; ++k) {
      CHECK(far.w[0][k] == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(far.l[0][k] == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(far.mu[0][k] == doctest::Approx(0.5 * lat.f_max[0]).epsilon(1e-9));
    }
  }
  SUBCASE("midpoint interpolation stays between neighbor values under a long prior") {
    Eigen::MatrixXd two(2, 1);
    two << 0.0, 1.0;
    GsmLatents simple;
    simple.anchors = two;
    simple.f_max = scalar_vec(1.0);
    simple.prior.lengthscale_scale_w = 5.0;  // much longer than the anchor gap
    simple.prior.lengthscale_scale_l = 5.0;
    simple.prior.lengthscale_scale_mu = 5.0;
    simple.log_w = {(Eigen::MatrixXd(2, 1) << std::log(0.8), std::log(1.4)).finished()};
    simple.log_l = {(Eigen::MatrixXd(2, 1) << std::log(0.5), std::log(0.9)).finished()};
    simple.logit_mu = {(Eigen::MatrixXd(2, 1) << logit(0.3), logit(0.6)).finished()};
    GsmPointValues mid = latent_extend(simple, scalar_vec(0.5));
    CHECK(mid.w[0][0] >= 0.8 - 1e-3);
    CHECK(mid.w[0][0] <= 1.4 + 1e-3);
    CHECK(mid.l[0][0] >= 0.5 - 1e-3);
    CHECK(mid.l[0][0] <= 0.9 + 1e-3);
    CHECK(mid.mu[0][0] >= 0.3 - 1e-3);
    CHECK(mid.mu[0][0] <= 0.6 + 1e-3);
  }
}

TEST_CASE("gram basics") {
  SUBCASE("single point with noise") {
    KernelModel m;
    RbfParams p;
    p.signal_variance = 1.0;
    p.lengthscales = scalar_vec(1.0);
    m.params = p;
    m.noise_variance = 0.1;
    Eigen::MatrixXd x(1, 1);
    x << 0.7;
    Eigen::MatrixXd k = gram(m, x, x, true);
    CHECK(k.rows() == 1);
    CHECK(k(0, 0) == doctest::Approx(1.1).epsilon(1e-15));
  }
  SUBCASE("include_noise rejects distinct input sets") {
    KernelModel m;
    RbfParams p;
    p.signal_variance = 1.0;
    p.lengthscales = scalar_vec(1.0);
    m.params = p;
    m.noise_variance = 0.1;
    Eigen::MatrixXd x1(1, 1), x2(2, 1);
    x1 << 0.0;
    x2 << 0.0, 1.0;
    CHECK_THROWS_AS(gram(m, x1, x2, true), IllegalNoise);
  }
  SUBCASE("symmetry to machine precision") {
    std::mt19937_64 rng(3);
    Eigen::MatrixXd x = testutil::random_inputs(rng, 12, 2);
    KernelModel rbf{testutil::random_rbf(rng, 2), 0.0};
    KernelModel sm{testutil::random_sm(rng, 2, 2), 0.0};
    KernelModel gsm{testutil::random_gsm(rng, x, 2), 0.0};
    for (const KernelModel* m : {&rbf, &sm, &gsm}) {
      Eigen::MatrixXd k = gram(*m, x, x, false);
      CHECK((k - k.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  SUBCASE("cross entries match scalar evaluations") {
    std::mt19937_64 rng(13);
    Eigen::MatrixXd x1 = testutil::random_inputs(rng, 5, 2);
    Eigen::MatrixXd x2 = testutil::random_inputs(rng, 4, 2);
    RbfParams rp = testutil::random_rbf(rng, 2);
    KernelModel rbf{rp, 0.0};
    Eigen::MatrixXd k = gram(rbf, x1, x2, false);
    for (Eigen::Index i = 0; i < 5; ++i) {
      for (Eigen::Index j = 0; j < 4; ++j) {
        CHECK(k(i, j) ==
              doctest::Approx(rbf_eval(x1.row(i), x2.row(j), rp)).epsilon(1e-13));
      }
    }
    SmParams sp = testutil::random_sm(rng, 3, 2);
    KernelModel sm{sp, 0.0};
    k = gram(sm, x1, x2, false);
    for (Eigen::Index i = 0; i < 5; ++i) {
      for (Eigen::Index j = 0; j < 4; ++j) {
        Eigen::VectorXd tau = x1.row(i) - x2.row(j);
        CHECK(k(i, j) == doctest::Approx(sm_eval(tau, sp)).epsilon(1e-12));
      }
    }
  }
  SUBCASE("gsm cross gram extends latents for off-anchor inputs") {
    std::mt19937_64 rng(17);
    Eigen::MatrixXd anchors = testutil::random_inputs(rng, 8, 1);
    GsmLatents lat = testutil::random_gsm(rng, anchors, 2);
    KernelModel m{lat, 0.0};
    Eigen::MatrixXd xs(2, 1);
    xs << 0.33, 2.9;
    Eigen::MatrixXd k = gram(m, xs, anchors, false);
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
      GsmPointValues vi = latent_extend(lat, xs.row(i));
      for (Eigen::Index j = 0; j < anchors.rows(); ++j) {
        GsmPointValues vj = latent_decode(lat, j);
        CHECK(k(i, j) == doctest::Approx(gsm_eval(xs.row(i), anchors.row(j), vi, vj))
                             .epsilon(1e-11));
      }
    }
  }
  SUBCASE("gram diagonal helper agrees with the full matrix") {
    std::mt19937_64 rng(23);
    Eigen::MatrixXd x = testutil::random_inputs(rng, 7, 1);
    KernelModel gsm{testutil::random_gsm(rng, x, 2), 0.05};
    Eigen::VectorXd diag = gram_diag(gsm, x, nullptr, true);
    Eigen::MatrixXd full = gram(gsm, x, x, true);
    CHECK((diag - full.diagonal()).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("positive semidefiniteness with standard jitter") {
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng() % 49);
    const int dim = 1 + static_cast<int>(rng() % 2);
    Eigen::MatrixXd x = testutil::random_inputs(rng, n, dim);
    KernelModel m;
    switch (rep % 3) {
      case 0: m.params = testutil::random_rbf(rng, dim); break;
      case 1: m.params = testutil::random_sm(rng, 1 + static_cast<int>(rng() % 3), dim); break;
      default: m.params = testutil::random_gsm(rng, x, 1 + static_cast<int>(rng() % 2)); break;
    }
    m.noise_variance = 0.0;
    Eigen::MatrixXd k = gram(m, x, x, false);
    k.diagonal().array() += 1e-6 * k.diagonal().mean();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8);
  }
}

TEST_CASE("nyquist frequency bound") {
  Eigen::MatrixXd x(5, 1);
  x << 0.0, 1.0, 2.0, 3.0, 4.0;  // unit spacing
  CHECK(nyquist_fmax(x)[0] == doctest::Approx(0.5).epsilon(1e-15));

  Eigen::MatrixXd halfstep(3, 1);
  halfstep << 0.0, 0.25, 0.5;
  CHECK(nyquist_fmax(halfstep)[0] == doctest::Approx(2.0).epsilon(1e-15));

  Eigen::MatrixXd degenerate(2, 1);
  degenerate << 1.0, 1.0;
  CHECK(nyquist_fmax(degenerate)[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("jittered cholesky ladder") {
  Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(4, 4);  // rank 1, needs jitter
  CHECK(!cholesky_with_jitter(ones, {0.0}).has_value());
  auto rescued = cholesky_with_jitter(ones, gram_jitter_ladder());
  REQUIRE(rescued.has_value());
  CHECK(rescued->jitter > 0.0);

  Eigen::MatrixXd spd(2, 2);
  spd << 2.0, 0.3, 0.3, 1.0;
  auto clean = cholesky_with_jitter(spd, gram_jitter_ladder());
  REQUIRE(clean.has_value());
  CHECK(clean->jitter == 0.0);
  CHECK(clean->log_det == doctest::Approx(std::log(2.0 * 1.0 - 0.09)).epsilon(1e-12));
}

TEST_CASE("kernel validation") {
  KernelModel m;
  RbfParams p;
  p.signal_variance = 1.0;
  p.lengthscales = scalar_vec(-1.0);
  m.params = p;
  m.noise_variance = 0.1;
  CHECK_THROWS_AS(validate_kernel(m), NonPositiveLengthscale);
  p.lengthscales = scalar_vec(1.0);
  m.params = p;
  m.noise_variance = -0.5;
  CHECK_THROWS_AS(validate_kernel(m), NegativeVariance);
}

}  // TEST_SUITE
