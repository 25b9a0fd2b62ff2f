#pragma once

#include <cstdint>

#include "windgp/dataset.hpp"

namespace windgp {

/// Chirp generator: y_u = a(u) sin(2 pi Phi(u)) + eps_u over steps
/// u = 0 .. n_train + n_test - 1, where
///   f(u)   = f0 + (f1 - f0) u / n_train      (cycles per step)
///   Phi(u) = f0 u + (f1 - f0) u^2 / (2 n_train)
///   a(u)   = a0 + (a1 - a0) u / n_train
///   eps_u ~ N(0, s(u)^2), s(u) = noise_sd0 + (noise_sd1 - noise_sd0) u / n_train
/// Profiles keep drifting past u = n_train so the test block continues the
/// train-block trend. f0 = f1 (and flat a, s) gives the stationary null case.
struct SyntheticSpec {
  int n_train = 500;
  int n_test = 500;
  double f0 = 0.01;
  double f1 = 0.05;
  double a0 = 1.0;
  double a1 = 1.0;
  double noise_sd0 = 0.1;
  double noise_sd1 = 0.1;
  std::int64_t start_timestamp = 1500000000;
  std::int64_t cadence_s = 600;

  void validate() const;  // throws ConfigError on a bad generator spec
};

/// Full series (train block followed by test block), features = raw epoch
/// seconds. Identical spec and seed give an identical series.
Dataset generate_chirp(const SyntheticSpec& spec, std::uint64_t seed);

/// Non-stationary benchmark defaults: drifting frequency, growing amplitude,
/// heteroscedastic noise.
SyntheticSpec chirp_benchmark_spec();

/// Stationary control: constant frequency, amplitude and noise scale.
SyntheticSpec null_benchmark_spec();

}  // namespace windgp
