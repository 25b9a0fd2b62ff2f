#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "windgp/dataset.hpp"
#include "windgp/gp.hpp"
#include "windgp/kernels.hpp"

namespace windgp {

// ---------------------------------------------------------------------------
// Flat parameter vector
// ---------------------------------------------------------------------------

enum class ParamTransform { Log, ScaledLogit, Identity };

struct ParamSlice {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
  ParamTransform transform = ParamTransform::Identity;
  double scale = 1.0;  // upper bound for ScaledLogit
};

/// Every optimizable parameter of a KernelModel as one unconstrained vector.
/// Layout slices are disjoint and cover the vector; decode(encode(m)) == m to
/// 1e-12. The trailing slice is always log(noise_variance).
struct FlatParams {
  Eigen::VectorXd values;
  std::vector<ParamSlice> layout;
  KernelFamily family = KernelFamily::Rbf;
  int q = 1;    // mixture count (SM/GSM); unused for RBF
  int dim = 1;  // input dimension

  // SM/GSM metadata required to rebuild the model.
  Eigen::VectorXd f_max;
  // GSM only.
  Eigen::MatrixXd anchors;
  LatentPriorConfig latent_prior;
  // GSM latent slices are stored in the whitened basis of their prior
  // (values = L^{-1} natural with prior Gram = L L'), so the MAP penalty is an
  // identity quadratic and the optimizer sees well scaled coordinates.
  // decode()/encode() convert; shared across copies since the prior is fixed.
  std::shared_ptr<const GsmPriorSet> whitener;

  Eigen::Index size() const { return values.size(); }
  const ParamSlice& slice(const std::string& name) const;
};

KernelModel decode(const FlatParams& p);
FlatParams encode(const KernelModel& m);

/// Structural prototype with zeroed values; layout identical to encode() for
/// a model of the same shape. anchors/prior are GSM-only.
FlatParams flat_prototype(KernelFamily family, int q, int dim, const Eigen::VectorXd& f_max,
                          const Eigen::MatrixXd& anchors = {},
                          const LatentPriorConfig& prior = {});

// ---------------------------------------------------------------------------
// Objectives
// ---------------------------------------------------------------------------

/// Scalar objective over an unconstrained vector. value() may throw
/// SingularGram; the optimizer maps that to +infinity and retreats.
class Objective {
public:
  virtual ~Objective() = default;
  virtual Eigen::Index dim() const = 0;
  virtual double value(const Eigen::VectorXd& v) const = 0;
  virtual bool has_analytic_gradient() const { return false; }
  /// Default falls back to value() + finite differences via gradient().
  virtual double value_and_gradient(const Eigen::VectorXd& v, Eigen::VectorXd& grad) const;
};

/// Negative log marginal likelihood -log p(y | X, params) for any family.
class NllObjective : public Objective {
public:
  NllObjective(FlatParams prototype, const Dataset& train);

  Eigen::Index dim() const override { return prototype_.size(); }
  double value(const Eigen::VectorXd& v) const override;
  bool has_analytic_gradient() const override { return true; }
  double value_and_gradient(const Eigen::VectorXd& v, Eigen::VectorXd& grad) const override;

  const FlatParams& prototype() const { return prototype_; }
  FlatParams with_values(const Eigen::VectorXd& v) const;

protected:
  FlatParams prototype_;
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
};

/// GSM MAP objective: the NLL part plus Gaussian prior terms on every
/// unconstrained latent vector (log w, log l, logit mu), evaluated against
/// fixed RBF prior Grams over the anchors.
class MapObjective : public NllObjective {
public:
  MapObjective(FlatParams prototype, const Dataset& train);

  double value(const Eigen::VectorXd& v) const override;
  double value_and_gradient(const Eigen::VectorXd& v, Eigen::VectorXd& grad) const override;

  const GsmPriorSet& priors() const { return *priors_; }

private:
  double prior_terms(const Eigen::VectorXd& v, Eigen::VectorXd* grad) const;
  std::shared_ptr<const GsmPriorSet> priors_;
};

/// Convenience evaluations matching the published operation signatures.
double nll_objective(const FlatParams& params, const Dataset& train);
double map_objective(const FlatParams& params, const Dataset& train);

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

enum class GradientMode { Analytic, FiniteDifference };

const char* to_string(GradientMode m);

/// Gradient of the objective at `at`; analytic when implemented and
/// requested, central finite differences otherwise (step 1e-5 * max(1,|p_i|)).
/// Throws NonFiniteGradient when any component is NaN/Inf. `used` reports the
/// mode actually taken.
Eigen::VectorXd gradient(const Objective& obj, const Eigen::VectorXd& at,
                         GradientMode mode = GradientMode::Analytic,
                         GradientMode* used = nullptr);

// ---------------------------------------------------------------------------
// ADAM
// ---------------------------------------------------------------------------

struct OptimConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long max_iters = 2000;
  double convergence_rel_tol = 1e-6;  // relative objective change ...
  long convergence_window = 50;       // ... sustained this many iterations
  GradientMode gradient_mode = GradientMode::Analytic;

  void validate() const;
};

struct AdamState {
  Eigen::VectorXd m;  // first moment
  Eigen::VectorXd v;  // second moment
  long t = 0;         // completed updates
};

/// Advance the moments and return the bias-corrected step direction
/// m_hat / (sqrt(v_hat) + eps); the parameter update is -learning_rate * dir.
Eigen::VectorXd adam_update_moments(AdamState& state, const Eigen::VectorXd& grad,
                                    const OptimConfig& cfg);

/// Standard bias-corrected ADAM update applied in place.
void adam_step(AdamState& state, const Eigen::VectorXd& grad, const OptimConfig& cfg,
               Eigen::VectorXd& params);

// ---------------------------------------------------------------------------
// Optimization loop
// ---------------------------------------------------------------------------

struct OptimResult {
  Eigen::VectorXd best_params;
  double best_objective = std::numeric_limits<double>::infinity();
  std::vector<double> trace;  // objective per evaluation, entry 0 = initial
  long iterations = 0;        // evaluations performed after the initial one
  bool converged = false;
  GradientMode gradient_mode = GradientMode::Analytic;
};

/// Observer called after every accepted iteration.
using IterationCallback = std::function<void(
    long iter, double objective, const Eigen::VectorXd& params, const AdamState& state)>;

/// Serializable mid-run snapshot; pass a previously captured one to resume.
struct OptimCheckpoint {
  Eigen::VectorXd params;
  AdamState state;
  long next_iter = 1;
  Eigen::VectorXd best_params;
  double best_objective = std::numeric_limits<double>::infinity();
  std::vector<double> trace;
};

OptimResult optimize(const Objective& obj, const Eigen::VectorXd& init, const OptimConfig& cfg,
                     const IterationCallback& callback = {},
                     const OptimCheckpoint* resume = nullptr,
                     OptimCheckpoint* snapshot_out = nullptr);

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

struct InitConfig {
  int q_sm = 3;
  int q_gsm = 2;
  std::optional<double> f_max;  // overrides the Nyquist default on every dim
  LatentPriorConfig latent_prior;
};

/// Seeded random initialization in unconstrained space; decoded params are
/// always structurally valid.
FlatParams initialize(KernelFamily family, const Dataset& train, std::uint64_t seed,
                      const InitConfig& cfg = {});

// ---------------------------------------------------------------------------
// Restart protocol
// ---------------------------------------------------------------------------

struct RestartOutcome {
  int index = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;  // set when failed
  double final_objective = std::numeric_limits<double>::quiet_NaN();
  long iterations = 0;
  bool converged = false;
  GradientMode gradient_mode = GradientMode::Analytic;
  std::optional<double> test_nlpd;
  FlatParams params;  // best-seen parameters of this restart
};

struct RestartReport {
  std::vector<RestartOutcome> restarts;  // ordered by restart index
  std::optional<double> mean_nlpd;       // over successful restarts (the headline statistic)
  int best_index = -1;                   // argmin final objective among successes
  int failed_count = 0;

  const RestartOutcome& best() const;
};

using RestartObserver = std::function<void(const RestartOutcome&)>;

/// Restart r runs initialize(base_seed + r) -> optimize -> fit -> predict ->
/// NLPD. Failed restarts (DivergedToInfinity, SingularGram, AllRestartsFailed
/// inputs) are recorded and excluded from the mean. max_workers <= 0 uses the
/// hardware concurrency; outcomes are joined deterministically by index.
RestartReport multi_restart(KernelFamily family, const Dataset& train, const Dataset* test,
                            int n_restarts, std::uint64_t base_seed, const OptimConfig& cfg,
                            const InitConfig& icfg = {}, int max_workers = 0,
                            const RestartObserver& observer = {});

}  // namespace windgp
