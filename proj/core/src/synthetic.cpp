#include "windgp/synthetic.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "windgp/errors.hpp"

namespace windgp {

void SyntheticSpec::validate() const {
  std::ostringstream bad;
  if (n_train <= 1 || n_test <= 0) bad << "n_train must be > 1 and n_test > 0; ";
  // frequencies in cycles/step must sit below the step-grid Nyquist bound
  if (!(f0 > 0.0) || !(f1 > 0.0) || f0 >= 0.5 || f1 >= 0.5) {
    bad << "f0 and f1 must lie in (0, 0.5) cycles per step; ";
  }
  if (!(a0 > 0.0) || !(a1 > 0.0)) bad << "amplitudes must be positive; ";
  if (!(noise_sd0 > 0.0) || !(noise_sd1 > 0.0)) bad << "noise scales must be positive; ";
  if (cadence_s <= 0) bad << "cadence must be positive; ";
  const std::string msg = bad.str();
  if (!msg.empty()) throw ConfigError("synthetic generator spec: " + msg);
}

Dataset generate_chirp(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int n = spec.n_train + spec.n_test;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<std::int64_t> ts(static_cast<std::size_t>(n));
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd y(n);
  const double nt = static_cast<double>(spec.n_train);
  for (int u = 0; u < n; ++u) {
    const double du = static_cast<double>(u);
    const double phase = spec.f0 * du + (spec.f1 - spec.f0) * du * du / (2.0 * nt);
    const double amp = spec.a0 + (spec.a1 - spec.a0) * du / nt;
    const double sd = std::max(1e-12, spec.noise_sd0 + (spec.noise_sd1 - spec.noise_sd0) * du / nt);
    const std::int64_t t = spec.start_timestamp + spec.cadence_s * u;
    ts[static_cast<std::size_t>(u)] = t;
    x(u, 0) = static_cast<double>(t);
    y[u] = amp * std::sin(2.0 * M_PI * phase) + sd * gauss(rng);
  }
  return Dataset(std::move(ts), std::move(x), std::move(y));
}

SyntheticSpec chirp_benchmark_spec() {
  SyntheticSpec s;
  s.f0 = 0.01;
  s.f1 = 0.05;
  s.a0 = 1.0;
  s.a1 = 1.5;
  s.noise_sd0 = 0.05;
  s.noise_sd1 = 0.15;
  return s;
}

SyntheticSpec null_benchmark_spec() {
  SyntheticSpec s;
  s.f0 = 0.03;
  s.f1 = 0.03;
  s.a0 = 1.0;
  s.a1 = 1.0;
  s.noise_sd0 = 0.1;
  s.noise_sd1 = 0.1;
  return s;
}

}  // namespace windgp
