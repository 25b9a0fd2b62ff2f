#include "windgp/dataset.hpp"

#include <cmath>
#include <utility>

namespace windgp {

Dataset::Dataset(std::vector<std::int64_t> timestamps, Eigen::MatrixXd features,
                 Eigen::VectorXd targets, double rated_power_kw)
    : timestamps_(std::move(timestamps)),
      features_(std::move(features)),
      targets_(std::move(targets)),
      rated_power_(rated_power_kw) {
  const auto n = timestamps_.size();
  if (static_cast<std::size_t>(features_.rows()) != n ||
      static_cast<std::size_t>(targets_.size()) != n) {
    throw DimensionMismatch("dataset rows disagree between timestamps, features and targets");
  }
  if (!(rated_power_ > 0.0)) {
    throw NonPositiveRatedPower("dataset rated power must be positive");
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (timestamps_[i] <= timestamps_[i - 1]) {
      throw OutOfRange("timestamps must be strictly increasing");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(targets_[i])) {
      throw OutOfRange("target at row " + std::to_string(i) + " is not finite");
    }
  }
  feature_transforms_.assign(static_cast<std::size_t>(features_.cols()), AffineTransform{});
}

TimePoint Dataset::point(std::size_t i) const {
  if (i >= timestamps_.size()) {
    throw OutOfRange("point index " + std::to_string(i) + " out of range");
  }
  TimePoint p;
  p.timestamp = timestamps_[i];
  p.features = features_.row(static_cast<Eigen::Index>(i)).transpose();
  p.target = targets_[static_cast<Eigen::Index>(i)];
  return p;
}

Eigen::VectorXd Dataset::raw_targets() const {
  Eigen::VectorXd out(targets_.size());
  for (Eigen::Index i = 0; i < targets_.size(); ++i) out[i] = target_transform_.invert(targets_[i]);
  return out;
}

void Dataset::set_transforms(std::vector<AffineTransform> feature_tf, AffineTransform target_tf) {
  if (feature_tf.size() != static_cast<std::size_t>(features_.cols())) {
    throw DimensionMismatch("transform count does not match feature dimension");
  }
  for (const auto& t : feature_tf) {
    if (!(t.scale > 0.0)) throw OutOfRange("feature transform scale must be positive");
  }
  if (!(target_tf.scale > 0.0)) throw OutOfRange("target transform scale must be positive");
  feature_transforms_ = std::move(feature_tf);
  target_transform_ = target_tf;
}

namespace {

// Sample standard deviation (divide by N-1); two-pass for accuracy.
std::pair<double, double> mean_and_sample_sd(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  const double ss = (v.array() - mean).square().sum();
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return {mean, sd};
}

struct FittedTransforms {
  std::vector<AffineTransform> features;
  AffineTransform target;
};

FittedTransforms fit_transforms(const Dataset& d) {
  if (d.size() < 2) throw OutOfRange("standardization needs at least 2 points");
  FittedTransforms out;
  for (int j = 0; j < d.dim(); ++j) {
    auto [m, s] = mean_and_sample_sd(d.features().col(j));
    if (!(s > 0.0)) throw ZeroVariance(j);
    out.features.push_back({m, s});
  }
  auto [tm, ts] = mean_and_sample_sd(d.targets());
  if (!(ts > 0.0)) throw OutOfRange("target has zero variance; cannot standardize");
  out.target = {tm, ts};
  return out;
}

Dataset apply_transforms(const Dataset& d, const FittedTransforms& tf) {
  Eigen::MatrixXd f = d.features();
  for (int j = 0; j < d.dim(); ++j) {
    f.col(j) = (f.col(j).array() - tf.features[static_cast<std::size_t>(j)].shift) /
               tf.features[static_cast<std::size_t>(j)].scale;
  }
  Eigen::VectorXd y = (d.targets().array() - tf.target.shift) / tf.target.scale;
  Dataset out(d.timestamps(), std::move(f), std::move(y), d.rated_power_kw());
  out.set_transforms(tf.features, tf.target);
  return out;
}

Dataset slice(const Dataset& d, std::size_t begin, std::size_t count) {
  std::vector<std::int64_t> ts(d.timestamps().begin() + static_cast<std::ptrdiff_t>(begin),
                               d.timestamps().begin() + static_cast<std::ptrdiff_t>(begin + count));
  Eigen::MatrixXd f = d.features().middleRows(static_cast<Eigen::Index>(begin),
                                              static_cast<Eigen::Index>(count));
  Eigen::VectorXd y = d.targets().segment(static_cast<Eigen::Index>(begin),
                                          static_cast<Eigen::Index>(count));
  return Dataset(std::move(ts), std::move(f), std::move(y), d.rated_power_kw());
}

}  // namespace

Dataset standardize(const Dataset& raw) {
  return apply_transforms(raw, fit_transforms(raw));
}

std::pair<Dataset, Dataset> split(const Dataset& data, const SplitSpec& spec) {
  if (spec.train_size == 0 || spec.test_size == 0) {
    throw OutOfRange("split requires nonzero train and test sizes");
  }
  if (spec.offset + spec.train_size + spec.test_size > data.size()) {
    throw OutOfRange("split spec (offset " + std::to_string(spec.offset) + ", train " +
                     std::to_string(spec.train_size) + ", test " + std::to_string(spec.test_size) +
                     ") exceeds dataset length " + std::to_string(data.size()));
  }
  Dataset train_raw = slice(data, spec.offset, spec.train_size);
  Dataset test_raw = slice(data, spec.offset + spec.train_size, spec.test_size);
  const FittedTransforms tf = fit_transforms(train_raw);
  return {apply_transforms(train_raw, tf), apply_transforms(test_raw, tf)};
}

}  // namespace windgp
