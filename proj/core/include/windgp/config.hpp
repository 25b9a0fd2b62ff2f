#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "windgp/dataset.hpp"
#include "windgp/inference.hpp"
#include "windgp/scada.hpp"
#include "windgp/synthetic.hpp"

namespace windgp {

/// Flat dotted-key configuration, e.g. "optim.learning_rate = 0.01".
/// Later assignments (and command-line overrides) win.
using KeyValues = std::map<std::string, std::string>;

/// '#' starts a comment; blank lines are skipped; keys and values are
/// trimmed. Throws ConfigError on a line without '='.
KeyValues parse_config_text(const std::string& text);
KeyValues parse_config_file(const std::string& path);  // FileNotFound

/// Apply "key=value" strings (from --set flags) on top of `kv`.
void apply_overrides(KeyValues& kv, const std::vector<std::string>& assignments);

/// Synthetic benchmark protocol knobs. The optimizer budget here is separate
/// from optim.* because the benchmark wants a short fixed budget.
struct BenchmarkConfig {
  std::string profile = "both";  // chirp | null | both | custom
  int n_seeds = 10;
  int n_restarts = 10;
  OptimConfig optim;     // benchmark-tuned defaults, see config.cpp
  SyntheticSpec custom;  // used when profile == custom
};

struct ExperimentConfig {
  // data source: SCADA files, or the synthetic generator when enabled
  std::string scada_path;
  std::string events_path;
  FeatureSet features = FeatureSet::Time;
  double rated_power_kw = 2050.0;
  std::int64_t pre_outage_window_s = 7 * 86400;
  ScadaSchema scada_schema;
  EventSchema event_schema;
  CategoryMap category_map = default_category_map();

  bool use_synthetic = false;
  std::string synthetic_profile = "chirp";  // chirp | null | custom
  SyntheticSpec synthetic;

  std::vector<SplitSpec> scenarios;
  std::vector<KernelFamily> kernels;
  InitConfig init;
  OptimConfig optim;
  int n_restarts = 10;
  std::uint64_t base_seed = 1;
  std::string out_dir = "out";
  int max_workers = 0;  // 0 = hardware concurrency
  long checkpoint_every = 100;

  int forecast_scenario = 1;             // 1-based index into scenarios
  std::string model_selection = "best";  // best | per-restart-mean

  BenchmarkConfig benchmark;

  KeyValues raw;  // the resolved key-value view this config was built from

  void validate() const;  // ConfigError with the offending key
};

/// Build a config from key-values; unknown keys are rejected so typos fail
/// loudly. The returned config has already been validated.
ExperimentConfig config_from_kv(const KeyValues& kv);

/// Resolved view of the config (defaults filled in) for report headers.
KeyValues config_to_kv(const ExperimentConfig& cfg);

/// FNV-1a over the resolved config plus any referenced input files.
std::uint64_t manifest_hash(const ExperimentConfig& cfg);

}  // namespace windgp
