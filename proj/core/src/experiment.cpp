#include "windgp/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "windgp/csv.hpp"
#include "windgp/errors.hpp"
#include "windgp/serialize.hpp"
#include "windgp/synthetic.hpp"

namespace windgp {

namespace fs = std::filesystem;

namespace {

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string manifest_line(const ExperimentConfig& cfg) {
  return "# manifest=" + hash_hex(manifest_hash(cfg)) + "\n";
}

void write_file(const std::string& path, const std::string& content) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileNotFound("cannot write " + path);
  out << content;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileNotFound(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string cell_tag(std::size_t scenario, KernelFamily family) {
  return "s" + std::to_string(scenario) + "_" + to_string(family);
}

std::optional<double> opt_from_field(const std::string& f) { return csv::parse_optional(f); }

}  // namespace

// ---------------------------------------------------------------------------
// Data loading
// ---------------------------------------------------------------------------

LoadedData load_experiment_data(const ExperimentConfig& cfg) {
  LoadedData out;
  if (cfg.use_synthetic) {
    out.synthetic = true;
    out.data = generate_chirp(cfg.synthetic, cfg.base_seed);
    return out;
  }
  if (cfg.scada_path.empty()) {
    throw ConfigError("config: data.scada_path required unless synthetic.enabled = true");
  }
  ScadaParse parsed = parse_scada(cfg.scada_path, cfg.scada_schema);
  std::vector<StatusEvent> events;
  if (!cfg.events_path.empty()) {
    events = parse_events(cfg.events_path, cfg.event_schema, cfg.category_map);
  }
  FilterResult filtered = filter_operational(parsed.records, events, cfg.pre_outage_window_s);
  filtered.audit.dropped_malformed = parsed.dropped_malformed;
  out.audit = filtered.audit;
  out.raw_records = std::move(parsed.records);
  out.kept_records = std::move(filtered.kept);
  out.data = to_dataset(out.kept_records, cfg.features, cfg.rated_power_kw);
  return out;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

std::string scenario_table_to_csv(const ScenarioTable& t) {
  std::string out;
  std::vector<std::string> header = {"scenario", "train_size", "test_size", "offset"};
  for (const std::string& k : t.kernel_names) header.push_back("mean_nlpd_" + k);
  out += csv::join(header) + "\n";
  for (const auto& row : t.rows) {
    std::vector<std::string> f = {
        std::to_string(row.scenario), std::to_string(row.train_size),
        std::to_string(row.test_size), std::to_string(row.offset)};
    for (const auto& v : row.mean_nlpd) f.push_back(csv::format_optional(v));
    out += csv::join(f) + "\n";
  }
  return out;
}

ScenarioTable scenario_table_from_csv(const std::string& text) {
  const auto rows = csv::parse(text);
  if (rows.empty()) throw SchemaMismatch("scenario table csv: missing header");
  const auto& header = rows[0];
  if (header.size() < 4 || header[0] != "scenario" || header[1] != "train_size" ||
      header[2] != "test_size" || header[3] != "offset") {
    throw SchemaMismatch("scenario table csv: unexpected header");
  }
  ScenarioTable t;
  for (std::size_t c = 4; c < header.size(); ++c) {
    if (header[c].rfind("mean_nlpd_", 0) != 0) {
      throw SchemaMismatch("scenario table csv: bad kernel column " + header[c]);
    }
    t.kernel_names.push_back(header[c].substr(10));
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != header.size()) throw SchemaMismatch("scenario table csv: ragged row");
    ScenarioTable::Row row;
    row.scenario = std::stoull(f[0]);
    row.train_size = std::stoull(f[1]);
    row.test_size = std::stoull(f[2]);
    row.offset = std::stoull(f[3]);
    for (std::size_t c = 4; c < f.size(); ++c) row.mean_nlpd.push_back(opt_from_field(f[c]));
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string scenario_table_to_text(const ScenarioTable& t) {
  std::ostringstream out;
  out << "Out-of-sample mean NLPD per scenario (lower is better; best per row in bold)\n\n";
  out << "scenario  train/test (offset)";
  for (const std::string& k : t.kernel_names) out << "  " << k;
  out << "\n";
  for (const auto& row : t.rows) {
    // bold = row-wise argmin over present cells
    std::size_t best = row.mean_nlpd.size();
    for (std::size_t i = 0; i < row.mean_nlpd.size(); ++i) {
      if (!row.mean_nlpd[i]) continue;
      if (best == row.mean_nlpd.size() || *row.mean_nlpd[i] < *row.mean_nlpd[best]) best = i;
    }
    out << row.scenario << "  " << row.train_size << "/" << row.test_size << " (" << row.offset
        << ")";
    for (std::size_t i = 0; i < row.mean_nlpd.size(); ++i) {
      if (!row.mean_nlpd[i]) {
        out << "  -";
      } else if (i == best) {
        out << "  **" << csv::format_double(*row.mean_nlpd[i]) << "**";
      } else {
        out << "  " << csv::format_double(*row.mean_nlpd[i]);
      }
    }
    out << "\n";
  }
  return out.str();
}

std::string restart_report_to_csv(const RestartReport& r) {
  std::string out =
      "index,seed,failed,error,final_objective,iterations,converged,gradient_mode,test_nlpd\n";
  for (const RestartOutcome& o : r.restarts) {
    std::vector<std::string> f = {
        std::to_string(o.index),
        std::to_string(o.seed),
        o.failed ? "1" : "0",
        o.error,
        o.failed ? std::string() : csv::format_double(o.final_objective),
        std::to_string(o.iterations),
        o.converged ? "1" : "0",
        to_string(o.gradient_mode),
        csv::format_optional(o.test_nlpd)};
    out += csv::join(f) + "\n";
  }
  return out;
}

RestartReport restart_report_from_csv(const std::string& text) {
  const auto rows = csv::parse(text);
  if (rows.empty() || rows[0].size() != 9 || rows[0][0] != "index" || rows[0][8] != "test_nlpd") {
    throw SchemaMismatch("restart report csv: unexpected header");
  }
  RestartReport r;
  double nlpd_sum = 0.0;
  std::size_t nlpd_count = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != 9) throw SchemaMismatch("restart report csv: ragged row");
    RestartOutcome o;
    o.index = std::stoi(f[0]);
    o.seed = std::stoull(f[1]);
    o.failed = f[2] == "1";
    o.error = f[3];
    o.final_objective =
        o.failed ? std::numeric_limits<double>::quiet_NaN() : csv::parse_double(f[4]);
    o.iterations = std::stol(f[5]);
    o.converged = f[6] == "1";
    o.gradient_mode =
        f[7] == std::string(to_string(GradientMode::Analytic)) ? GradientMode::Analytic
                                                               : GradientMode::FiniteDifference;
    o.test_nlpd = opt_from_field(f[8]);
    if (o.failed) {
      ++r.failed_count;
    } else {
      if (o.test_nlpd) {
        nlpd_sum += *o.test_nlpd;
        ++nlpd_count;
      }
      if (o.final_objective < best) {
        best = o.final_objective;
        r.best_index = o.index;
      }
    }
    r.restarts.push_back(std::move(o));
  }
  if (nlpd_count > 0) r.mean_nlpd = nlpd_sum / static_cast<double>(nlpd_count);
  return r;
}

std::string prediction_dump_to_csv(const ScoredSet& s) {
  std::string out = "timestamp,actual_kw,mean_kw,variance_kw2\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::vector<std::string> f = {
        std::to_string(s.timestamps[i]),
        csv::format_double(s.actuals_kw[static_cast<Eigen::Index>(i)]),
        csv::format_double(s.predictions[i].mean),
        csv::format_double(s.predictions[i].variance)};
    out += csv::join(f) + "\n";
  }
  return out;
}

ScoredSet prediction_dump_from_csv(const std::string& text) {
  const auto rows = csv::parse(text);
  if (rows.empty() || rows[0].size() != 4 || rows[0][0] != "timestamp") {
    throw SchemaMismatch("prediction dump csv: unexpected header");
  }
  ScoredSet s;
  std::vector<double> actuals;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != 4) throw SchemaMismatch("prediction dump csv: ragged row");
    s.timestamps.push_back(std::stoll(f[0]));
    actuals.push_back(csv::parse_double(f[1]));
    Prediction p;
    p.mean = csv::parse_double(f[2]);
    p.variance = csv::parse_double(f[3]);
    p.includes_noise = true;
    s.predictions.push_back(p);
  }
  s.actuals_kw = Eigen::Map<const Eigen::VectorXd>(actuals.data(),
                                                   static_cast<Eigen::Index>(actuals.size()));
  return s;
}

std::string power_scatter_to_csv(const PowerScatter& pts) {
  std::string out = "wind_speed_ms,power_kw\n";
  for (const auto& [w, p] : pts) {
    out += csv::format_double(w) + "," + csv::format_double(p) + "\n";
  }
  return out;
}

PowerScatter power_scatter_from_csv(const std::string& text) {
  const auto rows = csv::parse(text);
  if (rows.empty() || rows[0].size() != 2 || rows[0][0] != "wind_speed_ms") {
    throw SchemaMismatch("power scatter csv: unexpected header");
  }
  PowerScatter pts;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 2) throw SchemaMismatch("power scatter csv: ragged row");
    pts.emplace_back(csv::parse_double(rows[i][0]), csv::parse_double(rows[i][1]));
  }
  return pts;
}

std::string benchmark_profile_to_csv(const BenchmarkProfileResult& p) {
  std::string out = "profile,seed,nlpd_rbf,nlpd_sm,nlpd_gsm\n";
  for (const BenchmarkSeedRow& row : p.rows) {
    std::vector<std::string> f = {p.profile, std::to_string(row.seed),
                                  csv::format_optional(row.rbf), csv::format_optional(row.sm),
                                  csv::format_optional(row.gsm)};
    out += csv::join(f) + "\n";
  }
  return out;
}

BenchmarkProfileResult benchmark_profile_from_csv(const std::string& text) {
  const auto rows = csv::parse(text);
  if (rows.empty() || rows[0].size() != 5 || rows[0][0] != "profile") {
    throw SchemaMismatch("benchmark csv: unexpected header");
  }
  BenchmarkProfileResult p;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != 5) throw SchemaMismatch("benchmark csv: ragged row");
    p.profile = f[0];
    BenchmarkSeedRow row;
    row.seed = std::stoull(f[1]);
    row.rbf = opt_from_field(f[2]);
    row.sm = opt_from_field(f[3]);
    row.gsm = opt_from_field(f[4]);
    p.rows.push_back(row);
  }
  // win counts are derived, recompute so the round trip is faithful
  for (const BenchmarkSeedRow& row : p.rows) {
    if (row.gsm && row.rbf && row.sm && *row.gsm <= std::min(*row.rbf, *row.sm) - p.margin) {
      ++p.gsm_beats_both;
    }
    if (row.gsm && row.sm && std::abs(*row.gsm - *row.sm) <= p.margin) ++p.gsm_sm_close;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Scenario sweep
// ---------------------------------------------------------------------------

namespace {

struct CellPaths {
  std::string restarts_csv;
  std::string model(int r) const { return models_dir + "/" + tag + "_r" + std::to_string(r) + ".json"; }
  std::string best_model() const { return models_dir + "/" + tag + "_best.json"; }
  std::string checkpoint(int r) const {
    return checkpoints_dir + "/" + tag + "_r" + std::to_string(r) + ".json";
  }
  std::string models_dir;
  std::string checkpoints_dir;
  std::string tag;
};

CellPaths cell_paths(const std::string& out_dir, std::size_t scenario, KernelFamily family) {
  CellPaths p;
  p.tag = cell_tag(scenario, family);
  p.models_dir = out_dir + "/models";
  p.checkpoints_dir = out_dir + "/checkpoints";
  p.restarts_csv = out_dir + "/restarts_" + p.tag + ".csv";
  return p;
}

/// One restart with checkpointing: resumes from an existing checkpoint file,
/// persists a snapshot every checkpoint_every accepted iterations, removes
/// the file once the restart finishes.
RestartOutcome run_restart_with_checkpoints(KernelFamily family, const Dataset& train,
                                            const Dataset& test, int r,
                                            const ExperimentConfig& cfg, const CellPaths& paths,
                                            std::ostream& log, std::mutex& log_mutex) {
  RestartOutcome out;
  out.index = r;
  out.seed = cfg.base_seed + static_cast<std::uint64_t>(r);
  const std::string ckpt_path = paths.checkpoint(r);
  try {
    FlatParams init_p = initialize(family, train, out.seed, cfg.init);
    std::unique_ptr<NllObjective> obj;
    if (family == KernelFamily::Gsm) {
      obj = std::make_unique<MapObjective>(init_p, train);
    } else {
      obj = std::make_unique<NllObjective>(init_p, train);
    }

    std::optional<OptimCheckpoint> resume;
    if (fs::exists(ckpt_path)) {
      LoadedCheckpoint loaded = checkpoint_from_json(read_file(ckpt_path));
      if (loaded.prototype.size() != init_p.size()) {
        throw SchemaMismatch("checkpoint " + ckpt_path + ": layout does not match this config");
      }
      resume = std::move(loaded.checkpoint);
      std::lock_guard<std::mutex> lock(log_mutex);
      log << paths.tag << " r" << r << ": resuming at iteration " << resume->next_iter << "\n";
    }

    OptimCheckpoint snapshot;
    const long every = cfg.checkpoint_every;
    auto callback = [&](long iter, double objective, const Eigen::VectorXd&, const AdamState&) {
      {
        std::lock_guard<std::mutex> lock(log_mutex);
        log << paths.tag << " r" << r << " iter " << iter << " objective "
            << csv::format_double(objective) << "\n";
      }
      if (iter % every == 0) {
        write_file(ckpt_path, checkpoint_to_json(snapshot, init_p));
      }
    };
    OptimResult res = optimize(*obj, init_p.values, cfg.optim, callback,
                               resume ? &*resume : nullptr, &snapshot);

    out.final_objective = res.best_objective;
    out.iterations = res.iterations;
    out.converged = res.converged;
    out.gradient_mode = res.gradient_mode;
    out.params = obj->with_values(res.best_params);
    const KernelModel model = decode(out.params);
    const TrainedGP gp = TrainedGP::fit(train, model);
    if (!test.empty()) {
      const std::vector<Prediction> preds = gp.predict(test.features(), true);
      out.test_nlpd = nlpd(make_scored_set(test, preds));
    }
    write_file(paths.model(r), kernel_model_to_json(model));
  } catch (const DivergedToInfinity& e) {
    out.failed = true;
    out.error = e.what();
  } catch (const SingularGram& e) {
    out.failed = true;
    out.error = e.what();
  }
  std::error_code ec;
  fs::remove(ckpt_path, ec);  // completed runs leave no checkpoint behind
  return out;
}

RestartReport summarize(std::vector<RestartOutcome> outcomes) {
  RestartReport report;
  report.restarts = std::move(outcomes);
  double nlpd_sum = 0.0;
  std::size_t nlpd_count = 0;
  double best_obj = std::numeric_limits<double>::infinity();
  for (const RestartOutcome& out : report.restarts) {
    if (out.failed) {
      ++report.failed_count;
      continue;
    }
    if (out.test_nlpd) {
      nlpd_sum += *out.test_nlpd;
      ++nlpd_count;
    }
    if (out.final_objective < best_obj) {
      best_obj = out.final_objective;
      report.best_index = out.index;
    }
  }
  if (nlpd_count > 0) report.mean_nlpd = nlpd_sum / static_cast<double>(nlpd_count);
  return report;
}

}  // namespace

ScenarioRunResult run_scenarios(const ExperimentConfig& cfg, std::ostream& log) {
  const LoadedData loaded = load_experiment_data(cfg);
  const std::string mline = manifest_line(cfg);

  ScenarioRunResult result;
  ScenarioTable table;
  for (const KernelFamily f : cfg.kernels) table.kernel_names.push_back(to_string(f));
  for (std::size_t si = 0; si < cfg.scenarios.size(); ++si) {
    ScenarioTable::Row row;
    row.scenario = si + 1;
    row.train_size = cfg.scenarios[si].train_size;
    row.test_size = cfg.scenarios[si].test_size;
    row.offset = cfg.scenarios[si].offset;
    row.mean_nlpd.assign(cfg.kernels.size(), std::nullopt);
    table.rows.push_back(std::move(row));
  }

  const std::string table_csv_path = cfg.out_dir + "/scenario_table.csv";
  const std::string table_txt_path = cfg.out_dir + "/scenario_table.txt";
  auto flush_table = [&]() {
    write_file(table_csv_path, mline + scenario_table_to_csv(table));
    write_file(table_txt_path, mline + scenario_table_to_text(table));
  };

  for (std::size_t si = 0; si < cfg.scenarios.size(); ++si) {
    const auto [train, test] = split(loaded.data, cfg.scenarios[si]);
    for (std::size_t ki = 0; ki < cfg.kernels.size(); ++ki) {
      const KernelFamily family = cfg.kernels[ki];
      const CellPaths paths = cell_paths(cfg.out_dir, si + 1, family);
      log << "=== scenario " << (si + 1) << " kernel " << to_string(family) << " (train "
          << train.size() << ", test " << test.size() << ") ===\n";

      std::vector<RestartOutcome> outcomes(static_cast<std::size_t>(cfg.n_restarts));
      std::mutex log_mutex;
      int workers = cfg.max_workers > 0
                        ? cfg.max_workers
                        : static_cast<int>(std::thread::hardware_concurrency());
      workers = std::max(1, std::min(workers, cfg.n_restarts));
      if (workers == 1) {
        for (int r = 0; r < cfg.n_restarts; ++r) {
          outcomes[static_cast<std::size_t>(r)] = run_restart_with_checkpoints(
              family, train, test, r, cfg, paths, log, log_mutex);
        }
      } else {
        std::atomic<int> next{0};
        std::exception_ptr first_error;
        std::mutex error_mutex;
        auto worker = [&]() {
          for (int r = next.fetch_add(1); r < cfg.n_restarts; r = next.fetch_add(1)) {
            try {
              outcomes[static_cast<std::size_t>(r)] = run_restart_with_checkpoints(
                  family, train, test, r, cfg, paths, log, log_mutex);
            } catch (...) {
              std::lock_guard<std::mutex> lock(error_mutex);
              if (!first_error) first_error = std::current_exception();
            }
          }
        };
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
        if (first_error) std::rethrow_exception(first_error);
      }

      RestartReport report = summarize(std::move(outcomes));
      if (report.failed_count == cfg.n_restarts) {
        // flush what we have before giving up, per the partial-results contract
        write_file(paths.restarts_csv, mline + restart_report_to_csv(report));
        flush_table();
        throw AllRestartsFailed(paths.tag + ": all " + std::to_string(cfg.n_restarts) +
                                " restarts failed (" + report.restarts.front().error + ")");
      }

      write_file(paths.restarts_csv, mline + restart_report_to_csv(report));
      result.files_written.push_back(paths.restarts_csv);
      const RestartOutcome& best = report.best();
      write_file(paths.best_model(), kernel_model_to_json(decode(best.params)));
      result.files_written.push_back(paths.best_model());
      table.rows[si].mean_nlpd[ki] = report.mean_nlpd;
      flush_table();
      log << paths.tag << ": mean NLPD "
          << (report.mean_nlpd ? csv::format_double(*report.mean_nlpd) : "n/a") << ", best restart "
          << report.best_index << ", failed " << report.failed_count << "\n";

      CellResult cell;
      cell.scenario = si + 1;
      cell.family = family;
      cell.report = std::move(report);
      result.cells.push_back(std::move(cell));
    }
  }
  result.files_written.push_back(table_csv_path);
  result.files_written.push_back(table_txt_path);
  return result;
}

// ---------------------------------------------------------------------------
// Forecast report
// ---------------------------------------------------------------------------

namespace {

std::optional<double> mean_of(const std::vector<std::optional<double>>& vals) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : vals) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace

ForecastResult run_forecast_report(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.scenarios.empty()) throw ConfigError("forecast: no scenarios configured");
  const std::size_t si = static_cast<std::size_t>(cfg.forecast_scenario);
  const LoadedData loaded = load_experiment_data(cfg);
  const auto [train, test] = split(loaded.data, cfg.scenarios[si - 1]);
  const std::int64_t train_end = train.timestamps().back();
  const std::string mline = manifest_line(cfg);

  ForecastResult result;
  MetricReport hourly;
  for (std::size_t ki = 0; ki < cfg.kernels.size(); ++ki) {
    const KernelFamily family = cfg.kernels[ki];
    const CellPaths paths = cell_paths(cfg.out_dir, si, family);

    // which restarts succeeded comes from the scenario run's own report
    if (!fs::exists(paths.restarts_csv)) {
      throw MissingModel("forecast: no completed training run for scenario " +
                         std::to_string(si) + " kernel " + to_string(family) + " under " +
                         cfg.out_dir + " (run scenarios first)");
    }
    const RestartReport report = restart_report_from_csv(read_file(paths.restarts_csv));

    std::vector<int> wanted;
    if (cfg.model_selection == "best") {
      wanted.push_back(report.best_index);
    } else {
      for (const RestartOutcome& o : report.restarts) {
        if (!o.failed) wanted.push_back(o.index);
      }
    }
    if (wanted.empty() || report.best_index < 0) {
      throw MissingModel("forecast: no successful restart recorded in " + paths.restarts_csv);
    }

    std::vector<std::vector<WindowRow>> tables;
    std::vector<std::vector<CumulativePoint>> curves;
    ScoredSet dump;  // best restart's predictions (plotting artifact)
    for (const int r : wanted) {
      const std::string model_path =
          cfg.model_selection == "best" ? paths.best_model() : paths.model(r);
      if (!fs::exists(model_path)) {
        throw MissingModel("forecast: missing model file " + model_path);
      }
      const KernelModel model = kernel_model_from_json(read_file(model_path));
      const TrainedGP gp = TrainedGP::fit(train, model);
      const ScoredSet scored = make_scored_set(test, gp.predict(test.features(), true));
      tables.push_back(hourly_table(scored, train_end, 24, cfg.rated_power_kw));
      curves.push_back(cumulative_curve(scored, train_end));
      if (r == report.best_index || dump.empty()) dump = scored;
    }

    // elementwise mean across restart tables (single table when "best")
    std::vector<WindowRow> merged = tables.front();
    std::vector<CumulativePoint> merged_curve = curves.front();
    if (tables.size() > 1) {
      for (std::size_t w = 0; w < merged.size(); ++w) {
        std::vector<std::optional<double>> nl, rm, ma, nm;
        for (const auto& t : tables) {
          nl.push_back(t[w].nlpd);
          rm.push_back(t[w].rmse_kw);
          ma.push_back(t[w].mae_kw);
          nm.push_back(t[w].nmape_pct);
        }
        merged[w].nlpd = mean_of(nl);
        merged[w].rmse_kw = mean_of(rm);
        merged[w].mae_kw = mean_of(ma);
        merged[w].nmape_pct = mean_of(nm);
      }
      for (std::size_t c = 0; c < merged_curve.size(); ++c) {
        std::vector<std::optional<double>> rm, nl;
        for (const auto& cv : curves) {
          rm.push_back(cv[c].rmse_kw);
          nl.push_back(cv[c].nlpd);
        }
        merged_curve[c].rmse_kw = mean_of(rm);
        merged_curve[c].nlpd = mean_of(nl);
      }
    }

    hourly.kernel_names.push_back(to_string(family));
    hourly.per_kernel.push_back(std::move(merged));

    const std::string curve_path =
        cfg.out_dir + "/cumulative_" + paths.tag + ".csv";
    write_file(curve_path, mline + cumulative_to_csv(merged_curve));
    result.files_written.push_back(curve_path);
    if (ki == 0) result.cumulative1 = merged_curve;

    const std::string dump_path = cfg.out_dir + "/predictions_" + paths.tag + ".csv";
    write_file(dump_path, mline + prediction_dump_to_csv(dump));
    result.files_written.push_back(dump_path);
    log << "forecast " << paths.tag << ": " << dump.size() << " test points scored\n";
  }

  const std::string hourly_csv = cfg.out_dir + "/forecast_hourly_s" + std::to_string(si) + ".csv";
  const std::string hourly_json =
      cfg.out_dir + "/forecast_hourly_s" + std::to_string(si) + ".json";
  write_file(hourly_csv, mline + metric_report_to_csv(hourly));
  write_file(hourly_json, metric_report_to_json(hourly));
  result.files_written.push_back(hourly_csv);
  result.files_written.push_back(hourly_json);
  result.hourly = std::move(hourly);
  return result;
}

// ---------------------------------------------------------------------------
// Power curve export
// ---------------------------------------------------------------------------

std::vector<std::string> export_power_curve(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.use_synthetic) {
    throw ConfigError("power-curve export needs SCADA data, not the synthetic generator");
  }
  const LoadedData loaded = load_experiment_data(cfg);
  const std::string mline = manifest_line(cfg);

  auto scatter = [](const std::vector<ScadaRecord>& records) {
    PowerScatter pts;
    pts.reserve(records.size());
    for (const ScadaRecord& r : records) pts.emplace_back(r.wind_speed, r.active_power);
    return pts;
  };

  const std::string pre_path = cfg.out_dir + "/power_curve_prefilter.csv";
  const std::string post_path = cfg.out_dir + "/power_curve_postfilter.csv";
  const std::string audit_path = cfg.out_dir + "/filter_audit.json";
  write_file(pre_path, mline + power_scatter_to_csv(scatter(loaded.raw_records)));
  write_file(post_path, mline + power_scatter_to_csv(scatter(loaded.kept_records)));
  write_file(audit_path, loaded.audit.to_json());
  log << "power curve: " << loaded.raw_records.size() << " -> " << loaded.kept_records.size()
      << " records after filtering\n";
  return {pre_path, post_path, audit_path};
}

// ---------------------------------------------------------------------------
// Synthetic benchmark
// ---------------------------------------------------------------------------

namespace {

BenchmarkProfileResult run_benchmark_profile(const ExperimentConfig& cfg,
                                             const std::string& profile,
                                             const SyntheticSpec& spec, std::ostream& log) {
  BenchmarkProfileResult result;
  result.profile = profile;
  for (int i = 0; i < cfg.benchmark.n_seeds; ++i) {
    BenchmarkSeedRow row;
    row.seed = cfg.base_seed + static_cast<std::uint64_t>(i);
    const Dataset series = generate_chirp(spec, row.seed);
    SplitSpec split_spec;
    split_spec.train_size = static_cast<std::size_t>(spec.n_train);
    split_spec.test_size = static_cast<std::size_t>(spec.n_test);
    const auto [train, test] = split(series, split_spec);
    // a restart seed stream disjoint from the generator seeds
    const std::uint64_t restart_base = cfg.base_seed + 1000ull * static_cast<std::uint64_t>(i + 1);
    for (const KernelFamily family : {KernelFamily::Rbf, KernelFamily::Sm, KernelFamily::Gsm}) {
      std::optional<double> mean;
      try {
        const RestartReport report =
            multi_restart(family, train, &test, cfg.benchmark.n_restarts, restart_base,
                          cfg.benchmark.optim, cfg.init, cfg.max_workers);
        mean = report.mean_nlpd;
      } catch (const AllRestartsFailed& e) {
        log << profile << " seed " << row.seed << " " << to_string(family) << ": " << e.what()
            << "\n";
      }
      switch (family) {
        case KernelFamily::Rbf: row.rbf = mean; break;
        case KernelFamily::Sm: row.sm = mean; break;
        case KernelFamily::Gsm: row.gsm = mean; break;
      }
    }
    log << profile << " seed " << row.seed << ": rbf " << csv::format_optional(row.rbf) << " sm "
        << csv::format_optional(row.sm) << " gsm " << csv::format_optional(row.gsm) << "\n";
    if (row.gsm && row.rbf && row.sm &&
        *row.gsm <= std::min(*row.rbf, *row.sm) - result.margin) {
      ++result.gsm_beats_both;
    }
    if (row.gsm && row.sm && std::abs(*row.gsm - *row.sm) <= result.margin) {
      ++result.gsm_sm_close;
    }
    result.rows.push_back(row);
  }
  return result;
}

}  // namespace

BenchmarkResult run_synthetic_benchmark(const ExperimentConfig& cfg, std::ostream& log) {
  const std::string mline = manifest_line(cfg);
  std::vector<std::pair<std::string, SyntheticSpec>> profiles;
  if (cfg.benchmark.profile == "chirp" || cfg.benchmark.profile == "both") {
    profiles.emplace_back("chirp", chirp_benchmark_spec());
  }
  if (cfg.benchmark.profile == "null" || cfg.benchmark.profile == "both") {
    profiles.emplace_back("null", null_benchmark_spec());
  }
  if (cfg.benchmark.profile == "custom") {
    profiles.emplace_back("custom", cfg.benchmark.custom);
  }

  BenchmarkResult result;
  for (const auto& [name, spec] : profiles) {
    spec.validate();
    log << "--- benchmark profile " << name << " (" << cfg.benchmark.n_seeds << " seeds x "
        << cfg.benchmark.n_restarts << " restarts) ---\n";
    BenchmarkProfileResult p = run_benchmark_profile(cfg, name, spec, log);
    const std::string csv_path = cfg.out_dir + "/benchmark_" + name + ".csv";
    write_file(csv_path, mline + benchmark_profile_to_csv(p));
    result.files_written.push_back(csv_path);

    std::ostringstream summary;
    summary << "profile " << name << ": " << p.rows.size() << " seeds\n";
    summary << "  gsm beats both rbf and sm by >= " << p.margin << " nats: " << p.gsm_beats_both
            << "\n";
    summary << "  |gsm - sm| <= " << p.margin << " nats: " << p.gsm_sm_close << "\n";
    const std::string txt_path = cfg.out_dir + "/benchmark_" + name + ".txt";
    write_file(txt_path, mline + summary.str());
    result.files_written.push_back(txt_path);
    log << summary.str();
    result.profiles.push_back(std::move(p));
  }
  return result;
}

}  // namespace windgp
