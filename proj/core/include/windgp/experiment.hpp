#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "windgp/config.hpp"
#include "windgp/inference.hpp"
#include "windgp/metrics.hpp"
#include "windgp/scada.hpp"

namespace windgp {

/// The experiment's data source resolved to a dataset. SCADA configs carry the
/// raw and filtered records for power-curve export; synthetic configs carry a
/// zeroed audit.
struct LoadedData {
  Dataset data;
  FilterAudit audit;
  std::vector<ScadaRecord> raw_records;
  std::vector<ScadaRecord> kept_records;
  bool synthetic = false;
};

/// Synthetic data is generated with the config's base seed; SCADA data is
/// parsed, filtered and converted with the configured feature set.
LoadedData load_experiment_data(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Report rows (every emitted CSV round-trips through these)
// ---------------------------------------------------------------------------

struct ScenarioTable {
  std::vector<std::string> kernel_names;
  struct Row {
    std::size_t scenario = 0;  // 1-based
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    std::size_t offset = 0;
    std::vector<std::optional<double>> mean_nlpd;  // aligned with kernel_names
  };
  std::vector<Row> rows;
};

std::string scenario_table_to_csv(const ScenarioTable& t);
ScenarioTable scenario_table_from_csv(const std::string& text);
/// Human rendering; the lowest mean NLPD cell in every row is bolded.
std::string scenario_table_to_text(const ScenarioTable& t);

std::string restart_report_to_csv(const RestartReport& r);
/// Per-restart parameters are not stored in the CSV; the persisted model
/// files carry them. Loaded outcomes have empty params.
RestartReport restart_report_from_csv(const std::string& text);

std::string prediction_dump_to_csv(const ScoredSet& s);
ScoredSet prediction_dump_from_csv(const std::string& text);

using PowerScatter = std::vector<std::pair<double, double>>;  // (wind m/s, power kW)
std::string power_scatter_to_csv(const PowerScatter& pts);
PowerScatter power_scatter_from_csv(const std::string& text);

// ---------------------------------------------------------------------------
// Scenario sweep
// ---------------------------------------------------------------------------

struct CellResult {
  std::size_t scenario = 0;  // 1-based
  KernelFamily family = KernelFamily::Rbf;
  RestartReport report;
};

struct ScenarioRunResult {
  std::vector<CellResult> cells;  // scenario-major, kernel order as configured
  std::vector<std::string> files_written;
};

/// For each scenario x kernel: the full restart protocol with per-restart
/// models persisted under <out>/models and live checkpoints (resumable,
/// removed on completion) under <out>/checkpoints. Emits the scenario table
/// in CSV and human-readable form plus per-restart detail CSVs. Partial
/// results are flushed after every completed cell.
ScenarioRunResult run_scenarios(const ExperimentConfig& cfg, std::ostream& log);

// ---------------------------------------------------------------------------
// Forecast report
// ---------------------------------------------------------------------------

struct ForecastResult {
  MetricReport hourly;                        // all kernels side by side
  std::vector<CumulativePoint> cumulative1;   // first kernel's curve (convenience)
  std::vector<std::string> files_written;
};

/// Builds the short-term hourly table, cumulative-horizon curves and
/// per-point prediction dumps for the configured forecast scenario from
/// models persisted by run_scenarios. Throws MissingModel when the trained
/// models are absent. model_selection "best" scores the best-objective
/// restart; "per-restart-mean" averages each metric over the restart models.
ForecastResult run_forecast_report(const ExperimentConfig& cfg, std::ostream& log);

// ---------------------------------------------------------------------------
// Power curve export
// ---------------------------------------------------------------------------

/// Writes (wind_speed, power) scatters before and after operational filtering
/// plus the FilterAudit JSON. Requires a wind-speed bearing data source.
std::vector<std::string> export_power_curve(const ExperimentConfig& cfg, std::ostream& log);

// ---------------------------------------------------------------------------
// Synthetic benchmark
// ---------------------------------------------------------------------------

struct BenchmarkSeedRow {
  std::uint64_t seed = 0;
  // mean test NLPD over the restart protocol per kernel; null when the
  // kernel was skipped or every restart failed
  std::optional<double> rbf;
  std::optional<double> sm;
  std::optional<double> gsm;
};

struct BenchmarkProfileResult {
  std::string profile;  // "chirp" or "null"
  std::vector<BenchmarkSeedRow> rows;
  int gsm_beats_both = 0;  // seeds with gsm <= min(rbf, sm) - margin
  int gsm_sm_close = 0;    // seeds with |gsm - sm| <= margin
  double margin = 0.05;    // nats
};

struct BenchmarkResult {
  std::vector<BenchmarkProfileResult> profiles;
  std::vector<std::string> files_written;
};

std::string benchmark_profile_to_csv(const BenchmarkProfileResult& p);
BenchmarkProfileResult benchmark_profile_from_csv(const std::string& text);

/// Runs the configured profiles (chirp and/or null) over benchmark.seeds
/// generator seeds x all three kernels x benchmark.restarts, and emits a
/// table-shaped comparison per profile plus the win counts above.
BenchmarkResult run_synthetic_benchmark(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace windgp
