#include <cmath>

#include "doctest.h"
#include "windgp/dataset.hpp"

using namespace windgp;

namespace {

Dataset three_points() {
  std::vector<std::int64_t> ts = {100, 200, 300};
  Eigen::MatrixXd x(3, 2);
  x << 0.0, 10.0, 1.0, 20.0, 2.0, 30.0;
  Eigen::VectorXd y(3);
  y << 500.0, 700.0, 900.0;
  return Dataset(std::move(ts), std::move(x), std::move(y));
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("construction and accessors") {
  Dataset d = three_points();
  CHECK(d.size() == 3);
  CHECK(d.dim() == 2);
  CHECK(!d.empty());
  CHECK(d.rated_power_kw() == 2050.0);
  TimePoint p = d.point(1);
  CHECK(p.timestamp == 200);
  CHECK(p.features[1] == 20.0);
  CHECK(p.target == 700.0);
  CHECK_THROWS_AS(d.point(3), OutOfRange);

  // identity transforms before standardization: raw targets are the targets
  CHECK((d.raw_targets() - d.targets()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("construction validates shapes and ordering") {
  Eigen::MatrixXd x(2, 1);
  x << 0.0, 1.0;
  Eigen::VectorXd y(2);
  y << 1.0, 2.0;
  CHECK_THROWS_AS(Dataset({100}, x, y), DimensionMismatch);
  Eigen::VectorXd y3(3);
  y3 << 1.0, 2.0, 3.0;
  CHECK_THROWS_AS(Dataset({100, 200}, x, y3), DimensionMismatch);
  // timestamps must be strictly increasing
  CHECK_THROWS_AS(Dataset({200, 100}, x, y), OutOfRange);
  CHECK_THROWS_AS(Dataset({100, 100}, x, y), OutOfRange);
  CHECK_THROWS_AS(Dataset({100, 200}, x, y, 0.0), NonPositiveRatedPower);
}

TEST_CASE("standardize hits the documented two-point example") {
  // values {0, 2}: mean 1, sample stddev sqrt(2), standardized +-1/sqrt(2)
  std::vector<std::int64_t> ts = {0, 600};
  Eigen::MatrixXd x(2, 1);
  x << 0.0, 2.0;
  Eigen::VectorXd y(2);
  y << 0.0, 2.0;
  Dataset std_d = standardize(Dataset(std::move(ts), std::move(x), std::move(y)));
  CHECK(std_d.features()(0, 0) == doctest::Approx(-0.7071067811865475).epsilon(1e-15));
  CHECK(std_d.features()(1, 0) == doctest::Approx(0.7071067811865475).epsilon(1e-15));
  CHECK(std_d.targets()[0] == doctest::Approx(-0.7071067811865475).epsilon(1e-15));
  CHECK(std_d.target_transform().shift == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std_d.target_transform().scale ==
        doctest::Approx(1.4142135623730951).epsilon(1e-15));
}

TEST_CASE("standardize produces mean zero and unit sample variance") {
  Dataset d = standardize(three_points());
  for (int c = 0; c < 2; ++c) {
    const Eigen::VectorXd col = d.features().col(c);
    CHECK(std::abs(col.mean()) <= 1e-15);
    const double var = col.squaredNorm() / (col.size() - 1);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK(std::abs(d.targets().mean()) <= 1e-15);

  // round trip back to raw units
  Dataset raw = three_points();
  CHECK((d.raw_targets() - raw.targets()).cwiseAbs().maxCoeff() <= 1e-12);
  for (int c = 0; c < 2; ++c) {
    const AffineTransform& tf = d.feature_transforms()[c];
    for (int i = 0; i < 3; ++i) {
      CHECK(tf.invert(d.features()(i, c)) ==
            doctest::Approx(raw.features()(i, c)).epsilon(1e-13));
    }
  }
}

TEST_CASE("standardize rejects constant columns") {
  std::vector<std::int64_t> ts = {0, 600, 1200};
  Eigen::MatrixXd x(3, 2);
  x << 1.0, 5.0, 2.0, 5.0, 3.0, 5.0;  // second column constant
  Eigen::VectorXd y(3);
  y << 1.0, 2.0, 3.0;
  CHECK_THROWS_AS(standardize(Dataset(ts, x, y)), ZeroVariance);
  // fewer than two points cannot be standardized at all
  CHECK_THROWS_AS(standardize(Dataset({0}, Eigen::MatrixXd::Zero(1, 1),
                                      Eigen::VectorXd::Zero(1))),
                  OutOfRange);
}

TEST_CASE("split fits transforms on the train block only") {
  std::vector<std::int64_t> ts;
  Eigen::MatrixXd x(6, 1);
  Eigen::VectorXd y(6);
  for (int i = 0; i < 6; ++i) {
    ts.push_back(600 * i);
    x(i, 0) = i;
    y[i] = 10.0 * i;
  }
  Dataset all(ts, x, y);
  SplitSpec spec;
  spec.train_size = 4;
  spec.test_size = 2;
  auto [train, test] = split(all, spec);

  REQUIRE(train.size() == 4);
  REQUIRE(test.size() == 2);
  CHECK(train.timestamps().front() == 0);
  CHECK(test.timestamps().front() == 2400);

  // train block is standardized to mean zero
  CHECK(std::abs(train.targets().mean()) <= 1e-15);
  // test block reuses the train transforms, so it is not centered
  CHECK(test.targets().mean() > 0.0);
  CHECK(test.target_transform().shift == train.target_transform().shift);
  CHECK(test.target_transform().scale == train.target_transform().scale);
  // inverting recovers the raw values for both blocks
  CHECK(test.raw_targets()[0] == doctest::Approx(40.0).epsilon(1e-13));
  CHECK(test.raw_targets()[1] == doctest::Approx(50.0).epsilon(1e-13));

  SUBCASE("offset shifts both windows") {
    SplitSpec off;
    off.train_size = 2;
    off.test_size = 1;
    off.offset = 3;
    auto [tr2, te2] = split(all, off);
    CHECK(tr2.timestamps().front() == 1800);
    CHECK(te2.timestamps().front() == 3000);
  }
  SUBCASE("out of range windows are rejected") {
    SplitSpec bad;
    bad.train_size = 5;
    bad.test_size = 2;
    CHECK_THROWS_AS(split(all, bad), OutOfRange);
    bad.train_size = 0;
    bad.test_size = 1;
    CHECK_THROWS_AS(split(all, bad), OutOfRange);
  }
}

TEST_CASE("affine transform variance inversion") {
  AffineTransform tf{100.0, 4.0};
  CHECK(tf.apply(108.0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(tf.invert(2.0) == doctest::Approx(108.0).epsilon(1e-15));
  CHECK(tf.invert_variance(0.25) == doctest::Approx(4.0).epsilon(1e-15));
}

}  // TEST_SUITE
