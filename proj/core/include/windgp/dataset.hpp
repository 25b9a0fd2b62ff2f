#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "windgp/errors.hpp"

namespace windgp {

/// One observation: a timestamp, D real covariates and the active power target.
struct TimePoint {
  std::int64_t timestamp = 0;  // seconds since epoch
  Eigen::VectorXd features;    // length D
  double target = 0.0;         // kW
};

/// Affine map x -> (x - shift) / scale, with scale > 0.
struct AffineTransform {
  double shift = 0.0;
  double scale = 1.0;

  double apply(double x) const { return (x - shift) / scale; }
  double invert(double z) const { return z * scale + shift; }
  /// Variances transform with the square of the scale.
  double invert_variance(double v) const { return v * scale * scale; }
};

/// Chronologically ordered regression data plus the transforms that map the
/// stored (standardized) values back to raw units.
///
/// Standardization convention: sample standard deviation, i.e. divide by N-1.
class Dataset {
public:
  Dataset() = default;
  Dataset(std::vector<std::int64_t> timestamps, Eigen::MatrixXd features,
          Eigen::VectorXd targets, double rated_power_kw = 2050.0);

  std::size_t size() const { return timestamps_.size(); }
  int dim() const { return static_cast<int>(features_.cols()); }
  bool empty() const { return timestamps_.empty(); }

  const std::vector<std::int64_t>& timestamps() const { return timestamps_; }
  const Eigen::MatrixXd& features() const { return features_; }   // N x D
  const Eigen::VectorXd& targets() const { return targets_; }     // N

  double rated_power_kw() const { return rated_power_; }

  const std::vector<AffineTransform>& feature_transforms() const { return feature_transforms_; }
  const AffineTransform& target_transform() const { return target_transform_; }

  TimePoint point(std::size_t i) const;

  /// Target values mapped back to raw units (kW).
  Eigen::VectorXd raw_targets() const;

  // Used by standardize()/split(); transforms must match feature count.
  void set_transforms(std::vector<AffineTransform> feature_tf, AffineTransform target_tf);

private:
  std::vector<std::int64_t> timestamps_;
  Eigen::MatrixXd features_;
  Eigen::VectorXd targets_;
  double rated_power_ = 2050.0;
  std::vector<AffineTransform> feature_transforms_;
  AffineTransform target_transform_;
};

/// Contiguous chronological split: train = [offset, offset+train_size),
/// test = the next test_size points.
struct SplitSpec {
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::size_t offset = 0;
};

/// Fit per-dimension affine transforms on `raw` itself (mean 0, sample
/// stddev 1 for every feature dimension and for the target) and return the
/// standardized dataset with the transforms recorded for inversion.
Dataset standardize(const Dataset& raw);

/// Slice `data` per `spec`, fit standardization transforms on the train block
/// only, and return both blocks standardized with those transforms.
std::pair<Dataset, Dataset> split(const Dataset& data, const SplitSpec& spec);

}  // namespace windgp
