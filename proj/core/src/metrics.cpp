#include "windgp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "windgp/csv.hpp"

namespace windgp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kPointsPerHour = 6.0;  // 10-minute cadence

void check_scored(const ScoredSet& s) {
  if (s.predictions.size() != s.timestamps.size() ||
      static_cast<std::size_t>(s.actuals_kw.size()) != s.timestamps.size()) {
    throw DimensionMismatch("scored set: predictions, actuals and timestamps must align");
  }
  for (std::size_t i = 1; i < s.timestamps.size(); ++i) {
    if (s.timestamps[i] < s.timestamps[i - 1]) {
      throw OutOfRange("scored set: timestamps must be sorted ascending");
    }
  }
}

double point_nlpd(double y, const Prediction& p) {
  if (!(p.variance > 0.0)) {
    throw NonPositiveVariance("nlpd: predictive variance must be > 0, got " +
                              csv::format_double(p.variance));
  }
  const double r = y - p.mean;
  return 0.5 * (kLog2Pi + std::log(p.variance)) + 0.5 * r * r / p.variance;
}

struct Accum {
  std::size_t n = 0;
  double sum_sq = 0.0, sum_abs = 0.0, sum_nlpd = 0.0, sum_kw = 0.0;

  void add(double y, const Prediction& p) {
    const double r = y - p.mean;
    sum_sq += r * r;
    sum_abs += std::abs(r);
    sum_nlpd += point_nlpd(y, p);
    sum_kw += y;
    ++n;
  }
  double rmse() const { return std::sqrt(sum_sq / static_cast<double>(n)); }
  double mae() const { return sum_abs / static_cast<double>(n); }
  double nlpd() const { return sum_nlpd / static_cast<double>(n); }
};

}  // namespace

ScoredSet make_scored_set(const Dataset& test, std::vector<Prediction> predictions) {
  if (predictions.size() != test.size()) {
    throw DimensionMismatch("make_scored_set: prediction count must match test size");
  }
  ScoredSet s;
  s.timestamps = test.timestamps();
  s.predictions = std::move(predictions);
  s.actuals_kw = test.raw_targets();
  check_scored(s);
  return s;
}

double nlpd(const ScoredSet& s) {
  check_scored(s);
  if (s.empty()) throw EmptySet("nlpd: empty scored set");
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    total += point_nlpd(s.actuals_kw[static_cast<Eigen::Index>(i)], s.predictions[i]);
  }
  return total / static_cast<double>(s.size());
}

double rmse(const ScoredSet& s) {
  check_scored(s);
  if (s.empty()) throw EmptySet("rmse: empty scored set");
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double r = s.actuals_kw[static_cast<Eigen::Index>(i)] - s.predictions[i].mean;
    total += r * r;
  }
  return std::sqrt(total / static_cast<double>(s.size()));
}

double mae(const ScoredSet& s) {
  check_scored(s);
  if (s.empty()) throw EmptySet("mae: empty scored set");
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    total += std::abs(s.actuals_kw[static_cast<Eigen::Index>(i)] - s.predictions[i].mean);
  }
  return total / static_cast<double>(s.size());
}

double nmape(const ScoredSet& s, double rated_power_kw) {
  if (!(rated_power_kw > 0.0)) throw NonPositiveRatedPower();
  return mae(s) / rated_power_kw * 100.0;
}

std::vector<WindowRow> hourly_table(const ScoredSet& s, std::int64_t train_end,
                                    int horizon_hours, double rated_power_kw) {
  check_scored(s);
  if (!(rated_power_kw > 0.0)) throw NonPositiveRatedPower();
  for (std::int64_t t : s.timestamps) {
    if (t <= train_end) {
      throw OutOfRange("hourly_table: every scored timestamp must lie after train_end");
    }
  }
  std::vector<Accum> acc(static_cast<std::size_t>(std::max(horizon_hours, 0)));
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::int64_t lead = s.timestamps[i] - train_end;
    // window h covers lead times in (3600h, 3600(h+1)]
    const std::int64_t h = (lead - 1) / 3600;
    if (h < 0 || h >= horizon_hours) continue;
    acc[static_cast<std::size_t>(h)].add(s.actuals_kw[static_cast<Eigen::Index>(i)],
                                         s.predictions[i]);
  }
  std::vector<WindowRow> rows;
  rows.reserve(acc.size());
  for (int h = 0; h < horizon_hours; ++h) {
    const Accum& a = acc[static_cast<std::size_t>(h)];
    WindowRow row;
    row.hour_lo = h;
    row.label = "(" + std::to_string(h) + ", " + std::to_string(h + 1) + "]";
    row.count = a.n;
    if (a.n > 0) {
      row.energy_kwh = a.sum_kw / kPointsPerHour;
      row.nlpd = a.nlpd();
      row.rmse_kw = a.rmse();
      row.mae_kw = a.mae();
      row.nmape_pct = a.mae() / rated_power_kw * 100.0;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<CumulativePoint> cumulative_curve(const ScoredSet& s, std::int64_t train_end,
                                              std::int64_t step_seconds) {
  check_scored(s);
  if (s.empty()) throw EmptySet("cumulative_curve: empty scored set");
  if (step_seconds <= 0) throw OutOfRange("cumulative_curve: step must be positive");
  std::int64_t max_lead = 0;
  for (std::int64_t t : s.timestamps) {
    if (t <= train_end) {
      throw OutOfRange("cumulative_curve: every scored timestamp must lie after train_end");
    }
    max_lead = std::max(max_lead, t - train_end);
  }
  const std::int64_t k_max = (max_lead + step_seconds - 1) / step_seconds;
  std::vector<CumulativePoint> out;
  out.reserve(static_cast<std::size_t>(k_max));
  for (std::int64_t k = 1; k <= k_max; ++k) {
    const std::int64_t cutoff = k * step_seconds;
    Accum a;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.timestamps[i] - train_end <= cutoff) {
        a.add(s.actuals_kw[static_cast<Eigen::Index>(i)], s.predictions[i]);
      }
    }
    CumulativePoint p;
    p.horizon_days = static_cast<double>(cutoff) / 86400.0;
    p.count = a.n;
    if (a.n > 0) {
      p.rmse_kw = a.rmse();
      p.nlpd = a.nlpd();
    }
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

std::string metric_report_to_csv(const MetricReport& r) {
  if (r.kernel_names.size() != r.per_kernel.size()) {
    throw DimensionMismatch("metric report: one window list per kernel required");
  }
  const std::size_t n_rows = r.per_kernel.empty() ? 0 : r.per_kernel[0].size();
  for (const auto& rows : r.per_kernel) {
    if (rows.size() != n_rows) {
      throw DimensionMismatch("metric report: window lists must align");
    }
  }
  std::vector<std::string> header{"window", "hour", "count", "energy_kwh"};
  for (const std::string& k : r.kernel_names) {
    header.push_back("nlpd_" + k);
    header.push_back("rmse_kw_" + k);
    header.push_back("mae_kw_" + k);
    header.push_back("nmape_pct_" + k);
  }
  std::string out = csv::join(header) + "\n";
  for (std::size_t i = 0; i < n_rows; ++i) {
    const WindowRow& base = r.per_kernel[0][i];
    std::vector<std::string> fields{base.label, std::to_string(base.hour_lo),
                                    std::to_string(base.count),
                                    csv::format_optional(base.energy_kwh)};
    for (const auto& rows : r.per_kernel) {
      fields.push_back(csv::format_optional(rows[i].nlpd));
      fields.push_back(csv::format_optional(rows[i].rmse_kw));
      fields.push_back(csv::format_optional(rows[i].mae_kw));
      fields.push_back(csv::format_optional(rows[i].nmape_pct));
    }
    out += csv::join(fields) + "\n";
  }
  return out;
}

MetricReport metric_report_from_csv(const std::string& text) {
  const auto rows = csv::parse(text);
  if (rows.empty()) throw SchemaMismatch("metric report csv: missing header");
  const auto& header = rows[0];
  if (header.size() < 4 || header[0] != "window" || header[1] != "hour" ||
      header[2] != "count" || header[3] != "energy_kwh" || (header.size() - 4) % 4 != 0) {
    throw SchemaMismatch("metric report csv: unexpected header");
  }
  MetricReport r;
  for (std::size_t c = 4; c < header.size(); c += 4) {
    const std::string& h = header[c];
    if (h.rfind("nlpd_", 0) != 0) throw SchemaMismatch("metric report csv: bad kernel column");
    r.kernel_names.push_back(h.substr(5));
  }
  r.per_kernel.resize(r.kernel_names.size());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != header.size()) throw SchemaMismatch("metric report csv: ragged row");
    WindowRow base;
    base.label = f[0];
    base.hour_lo = std::stoi(f[1]);
    base.count = static_cast<std::size_t>(std::stoull(f[2]));
    base.energy_kwh = csv::parse_optional(f[3]);
    for (std::size_t k = 0; k < r.kernel_names.size(); ++k) {
      WindowRow row = base;
      row.nlpd = csv::parse_optional(f[4 + 4 * k]);
      row.rmse_kw = csv::parse_optional(f[5 + 4 * k]);
      row.mae_kw = csv::parse_optional(f[6 + 4 * k]);
      row.nmape_pct = csv::parse_optional(f[7 + 4 * k]);
      r.per_kernel[k].push_back(std::move(row));
    }
  }
  return r;
}

std::string metric_report_to_json(const MetricReport& r) {
  nlohmann::json j;
  j["kernels"] = r.kernel_names;
  nlohmann::json rows = nlohmann::json::array();
  const std::size_t n_rows = r.per_kernel.empty() ? 0 : r.per_kernel[0].size();
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  for (std::size_t i = 0; i < n_rows; ++i) {
    const WindowRow& base = r.per_kernel[0][i];
    nlohmann::json row;
    row["window"] = base.label;
    row["hour"] = base.hour_lo;
    row["count"] = base.count;
    row["energy_kwh"] = opt(base.energy_kwh);
    for (std::size_t k = 0; k < r.kernel_names.size(); ++k) {
      const WindowRow& w = r.per_kernel[k][i];
      nlohmann::json m;
      m["nlpd"] = opt(w.nlpd);
      m["rmse_kw"] = opt(w.rmse_kw);
      m["mae_kw"] = opt(w.mae_kw);
      m["nmape_pct"] = opt(w.nmape_pct);
      row[r.kernel_names[k]] = std::move(m);
    }
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  return j.dump(2) + "\n";
}

std::string cumulative_to_csv(const std::vector<CumulativePoint>& pts) {
  std::string out = "horizon_days,count,rmse_kw,nlpd\n";
  for (const CumulativePoint& p : pts) {
    out += csv::join({csv::format_double(p.horizon_days), std::to_string(p.count),
                      csv::format_optional(p.rmse_kw), csv::format_optional(p.nlpd)}) +
           "\n";
  }
  return out;
}

std::vector<CumulativePoint> cumulative_from_csv(const std::string& text) {
  const auto rows = csv::parse(text);
  if (rows.empty() || csv::join(rows[0]) != "horizon_days,count,rmse_kw,nlpd") {
    throw SchemaMismatch("cumulative csv: unexpected header");
  }
  std::vector<CumulativePoint> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != 4) throw SchemaMismatch("cumulative csv: ragged row");
    CumulativePoint p;
    p.horizon_days = csv::parse_double(f[0]);
    p.count = static_cast<std::size_t>(std::stoull(f[1]));
    p.rmse_kw = csv::parse_optional(f[2]);
    p.nlpd = csv::parse_optional(f[3]);
    out.push_back(p);
  }
  return out;
}

}  // namespace windgp
