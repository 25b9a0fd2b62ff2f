#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "windgp/dataset.hpp"
#include "windgp/errors.hpp"
#include "windgp/gp.hpp"

namespace windgp {

/// Predictions paired with held-out observations, everything in raw kW units.
struct ScoredSet {
  std::vector<std::int64_t> timestamps;  // sorted ascending
  std::vector<Prediction> predictions;
  Eigen::VectorXd actuals_kw;

  std::size_t size() const { return timestamps.size(); }
  bool empty() const { return timestamps.empty(); }
};

/// Pair a test split with its predictions; actuals are mapped back to kW.
ScoredSet make_scored_set(const Dataset& test, std::vector<Prediction> predictions);

/// Mean negative log Gaussian predictive density (natural log). Predictive
/// variances should include observation noise when scoring observations.
double nlpd(const ScoredSet& s);
double rmse(const ScoredSet& s);
double mae(const ScoredSet& s);
/// MAE normalized by rated power, in percent.
double nmape(const ScoredSet& s, double rated_power_kw = 2050.0);

/// One fixed one-hour lead-time window (hour_lo, hour_lo+1] hours after the
/// end of training. Windows with no points keep null metrics (and null
/// energy: no data is not the same as zero output).
struct WindowRow {
  int hour_lo = 0;
  std::string label;  // "(h, h+1]"
  std::size_t count = 0;
  std::optional<double> energy_kwh;
  std::optional<double> nlpd;
  std::optional<double> rmse_kw;
  std::optional<double> mae_kw;
  std::optional<double> nmape_pct;
};

/// Rows for windows (0,1] .. (horizon_hours-1, horizon_hours]. Energy uses
/// the 10-minute cadence: each point contributes actual_kw / 6 kWh.
std::vector<WindowRow> hourly_table(const ScoredSet& s, std::int64_t train_end,
                                    int horizon_hours = 24, double rated_power_kw = 2050.0);

/// Cumulative metrics over nested horizons: entry k covers lead times in
/// (0, k*step].
struct CumulativePoint {
  double horizon_days = 0.0;
  std::size_t count = 0;
  std::optional<double> rmse_kw;
  std::optional<double> nlpd;
};

std::vector<CumulativePoint> cumulative_curve(const ScoredSet& s, std::int64_t train_end,
                                              std::int64_t step_seconds = 86400);

/// Hourly windows for several kernels side by side (the short-term forecast
/// table shape). Column order is stable:
///   window, hour, count, energy_kwh, then per kernel
///   nlpd_<k>, rmse_kw_<k>, mae_kw_<k>, nmape_pct_<k>.
struct MetricReport {
  std::vector<std::string> kernel_names;
  std::vector<std::vector<WindowRow>> per_kernel;  // aligned window lists
};

std::string metric_report_to_csv(const MetricReport& r);
MetricReport metric_report_from_csv(const std::string& csv);
std::string metric_report_to_json(const MetricReport& r);

std::string cumulative_to_csv(const std::vector<CumulativePoint>& pts);
std::vector<CumulativePoint> cumulative_from_csv(const std::string& csv);

}  // namespace windgp
