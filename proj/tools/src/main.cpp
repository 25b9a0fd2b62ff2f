#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "windgp/config.hpp"
#include "windgp/csv.hpp"
#include "windgp/errors.hpp"
#include "windgp/experiment.hpp"

namespace {

windgp::ExperimentConfig build_config(const std::string& config_path,
                                      std::vector<std::string> sets,
                                      const std::optional<std::uint64_t>& seed,
                                      const std::optional<std::string>& out_dir) {
  windgp::KeyValues kv;
  if (!config_path.empty()) kv = windgp::parse_config_file(config_path);
  windgp::apply_overrides(kv, sets);
  if (seed) kv["seed"] = std::to_string(*seed);
  if (out_dir) kv["out"] = *out_dir;
  return windgp::config_from_kv(kv);
}

int fail(const char* type, const std::exception& e) {
  nlohmann::ordered_json j;
  j["error"]["type"] = type;
  j["error"]["message"] = e.what();
  std::cerr << j.dump(2) << std::endl;
  return 1;
}

void write_file(const std::string& path, const std::string& content) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw windgp::FileNotFound("cannot write " + path);
  out << content;
}

int run_ingest(const windgp::ExperimentConfig& cfg) {
  if (cfg.use_synthetic) {
    throw windgp::ConfigError("ingest needs SCADA data, not the synthetic generator");
  }
  const windgp::LoadedData loaded = windgp::load_experiment_data(cfg);
  write_file(cfg.out_dir + "/filtered_records.csv",
             windgp::scada_records_to_csv(loaded.kept_records));
  write_file(cfg.out_dir + "/filter_audit.json", loaded.audit.to_json());
  std::cout << "ingest: " << loaded.audit.input_rows << " rows in, " << loaded.audit.kept_rows
            << " kept (" << loaded.audit.removed_by_event << " removed by event, "
            << loaded.audit.removed_pre_outage << " removed pre-outage, "
            << loaded.audit.dropped_malformed << " malformed)\n";
  std::cout << "wrote " << cfg.out_dir << "/filtered_records.csv and filter_audit.json\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian process wind power forecasting experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  app.add_option("--config", config_path, "configuration file (key = value lines)");
  app.add_option("--set", sets, "override a config key, e.g. --set optim.max_iters=500")
      ->take_all();
  app.add_option("--seed", seed, "override the base seed");
  app.add_option("--out", out_dir, "override the output directory");

  CLI::App* ingest =
      app.add_subcommand("ingest", "parse and filter SCADA data; write records + audit");
  CLI::App* scenarios =
      app.add_subcommand("scenarios", "run the scenario x kernel restart sweep");
  CLI::App* forecast = app.add_subcommand(
      "forecast", "hourly and cumulative forecast reports from trained models");
  int fc_scenario = 0;
  std::string fc_selection;
  forecast->add_option("--scenario", fc_scenario, "1-based scenario index");
  forecast->add_option("--model-selection", fc_selection, "best | per-restart-mean");
  CLI::App* power_curve =
      app.add_subcommand("power-curve", "export pre/post-filter power curve scatters");
  CLI::App* benchmark =
      app.add_subcommand("benchmark", "synthetic chirp/null kernel comparison");
  std::string bench_profile;
  benchmark->add_option("--profile", bench_profile, "chirp | null | both | custom");

  CLI11_PARSE(app, argc, argv);

  try {
    // subcommand flags become overrides so they land in the manifest too
    if (forecast->parsed()) {
      if (fc_scenario > 0) sets.push_back("forecast.scenario=" + std::to_string(fc_scenario));
      if (!fc_selection.empty()) sets.push_back("forecast.model_selection=" + fc_selection);
    }
    if (benchmark->parsed()) {
      if (!bench_profile.empty()) sets.push_back("benchmark.profile=" + bench_profile);
      if (config_path.empty()) sets.insert(sets.begin(), "synthetic.enabled=true");
    }
    const windgp::ExperimentConfig cfg = build_config(config_path, sets, seed, out_dir);

    if (ingest->parsed()) return run_ingest(cfg);
    if (scenarios->parsed()) {
      windgp::run_scenarios(cfg, std::cout);
      std::cout << "scenario reports written under " << cfg.out_dir << "\n";
      return 0;
    }
    if (forecast->parsed()) {
      windgp::run_forecast_report(cfg, std::cout);
      std::cout << "forecast reports written under " << cfg.out_dir << "\n";
      return 0;
    }
    if (power_curve->parsed()) {
      for (const std::string& f : windgp::export_power_curve(cfg, std::cout)) {
        std::cout << "wrote " << f << "\n";
      }
      return 0;
    }
    if (benchmark->parsed()) {
      const windgp::BenchmarkResult res = windgp::run_synthetic_benchmark(cfg, std::cout);
      for (const std::string& f : res.files_written) std::cout << "wrote " << f << "\n";
      return 0;
    }
    std::cerr << "no subcommand\n";
    return 1;
  } catch (const windgp::FileNotFound& e) {
    return fail("FileNotFound", e);
  } catch (const windgp::ConfigError& e) {
    return fail("ConfigError", e);
  } catch (const windgp::SchemaMismatch& e) {
    return fail("SchemaMismatch", e);
  } catch (const windgp::MissingModel& e) {
    return fail("MissingModel", e);
  } catch (const windgp::AllRestartsFailed& e) {
    return fail("AllRestartsFailed", e);
  } catch (const windgp::Error& e) {
    return fail("Error", e);
  } catch (const std::exception& e) {
    return fail("Internal", e);
  }
}
