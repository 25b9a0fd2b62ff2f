#include "windgp/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "windgp/csv.hpp"
#include "windgp/errors.hpp"

namespace windgp {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void bad_key(const std::string& key, const std::string& why) {
  throw ConfigError("config key \"" + key + "\": " + why);
}

double as_double(const KeyValues& kv, const std::string& key, double fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) bad_key(key, "trailing characters after number");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    bad_key(key, "expected a number, got \"" + it->second + "\"");
  }
}

long as_long(const KeyValues& kv, const std::string& key, long fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t used = 0;
    const long v = std::stol(it->second, &used);
    if (used != it->second.size()) bad_key(key, "trailing characters after integer");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    bad_key(key, "expected an integer, got \"" + it->second + "\"");
  }
}

std::uint64_t as_u64(const KeyValues& kv, const std::string& key, std::uint64_t fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(it->second, &used);
    if (used != it->second.size()) bad_key(key, "trailing characters after integer");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    bad_key(key, "expected a non-negative integer, got \"" + it->second + "\"");
  }
}

bool as_bool(const KeyValues& kv, const std::string& key, bool fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_key(key, "expected a boolean, got \"" + it->second + "\"");
}

std::string as_string(const KeyValues& kv, const std::string& key, const std::string& fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

GradientMode gradient_mode_from(const KeyValues& kv, const std::string& key, GradientMode fb) {
  auto it = kv.find(key);
  if (it == kv.end()) return fb;
  if (it->second == "analytic") return GradientMode::Analytic;
  if (it->second == "fd" || it->second == "finite_difference") {
    return GradientMode::FiniteDifference;
  }
  bad_key(key, "expected analytic or fd");
}

// "train,test[,offset]"
SplitSpec parse_scenario(const std::string& key, const std::string& value) {
  const std::vector<std::string> parts = csv::split_line(value, ',');
  if (parts.size() != 2 && parts.size() != 3) {
    bad_key(key, "expected \"train_size,test_size[,offset]\"");
  }
  SplitSpec s;
  try {
    s.train_size = static_cast<std::size_t>(std::stoull(trim(parts[0])));
    s.test_size = static_cast<std::size_t>(std::stoull(trim(parts[1])));
    s.offset = parts.size() == 3 ? static_cast<std::size_t>(std::stoull(trim(parts[2]))) : 0;
  } catch (const std::exception&) {
    bad_key(key, "sizes must be non-negative integers");
  }
  if (s.train_size == 0 || s.test_size == 0) bad_key(key, "sizes must be positive");
  return s;
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "data.scada_path", "data.events_path", "data.features", "data.rated_power_kw",
      "data.pre_outage_window_days", "data.column.timestamp", "data.column.wind_speed",
      "data.column.power", "data.column.event_start", "data.column.event_end",
      "data.column.event_label",
      "synthetic.enabled", "synthetic.profile", "synthetic.n_train", "synthetic.n_test",
      "synthetic.f0", "synthetic.f1", "synthetic.a0", "synthetic.a1", "synthetic.noise_sd0",
      "synthetic.noise_sd1",
      "kernels", "sm.q", "gsm.q", "gsm.latent_lengthscale_scale", "gsm.latent_nugget",
      "gsm.f_max",
      "optim.learning_rate", "optim.beta1", "optim.beta2", "optim.epsilon", "optim.max_iters",
      "optim.convergence_rel_tol", "optim.convergence_window", "optim.gradient",
      "restarts", "seed", "out", "workers", "checkpoint_every",
      "forecast.scenario", "forecast.model_selection",
      "benchmark.profile", "benchmark.seeds", "benchmark.restarts",
      "benchmark.learning_rate", "benchmark.max_iters",
  };
  return keys;
}

void fill_synthetic(SyntheticSpec& s, const KeyValues& kv, const char* prefix) {
  const std::string p(prefix);
  s.n_train = static_cast<int>(as_long(kv, p + ".n_train", s.n_train));
  s.n_test = static_cast<int>(as_long(kv, p + ".n_test", s.n_test));
  s.f0 = as_double(kv, p + ".f0", s.f0);
  s.f1 = as_double(kv, p + ".f1", s.f1);
  s.a0 = as_double(kv, p + ".a0", s.a0);
  s.a1 = as_double(kv, p + ".a1", s.a1);
  s.noise_sd0 = as_double(kv, p + ".noise_sd0", s.noise_sd0);
  s.noise_sd1 = as_double(kv, p + ".noise_sd1", s.noise_sd1);
}

}  // namespace

KeyValues parse_config_text(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    }
    kv[key] = trim(t.substr(eq + 1));
  }
  return kv;
}

KeyValues parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFound(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void apply_overrides(KeyValues& kv, const std::vector<std::string>& assignments) {
  for (const std::string& a : assignments) {
    const std::size_t eq = a.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override \"" + a + "\": expected key=value");
    }
    kv[trim(a.substr(0, eq))] = trim(a.substr(eq + 1));
  }
}

void ExperimentConfig::validate() const {
  if (kernels.empty()) throw ConfigError("config: at least one kernel family required");
  if (scenarios.empty() && !use_synthetic) {
    throw ConfigError("config: at least one scenario required (scenario.1 = train,test[,offset])");
  }
  if (n_restarts <= 0) throw ConfigError("config key \"restarts\": must be positive");
  if (!(rated_power_kw > 0.0)) {
    throw ConfigError("config key \"data.rated_power_kw\": must be positive");
  }
  if (pre_outage_window_s < 0) {
    throw ConfigError("config key \"data.pre_outage_window_days\": must be non-negative");
  }
  if (init.q_sm <= 0 || init.q_gsm <= 0) {
    throw ConfigError("config: mixture counts must be positive");
  }
  if (checkpoint_every <= 0) {
    throw ConfigError("config key \"checkpoint_every\": must be positive");
  }
  if (forecast_scenario < 1 ||
      (!scenarios.empty() && forecast_scenario > static_cast<int>(scenarios.size()))) {
    throw ConfigError("config key \"forecast.scenario\": out of range");
  }
  if (model_selection != "best" && model_selection != "per-restart-mean") {
    throw ConfigError("config key \"forecast.model_selection\": expected best or per-restart-mean");
  }
  if (benchmark.profile != "chirp" && benchmark.profile != "null" &&
      benchmark.profile != "both" && benchmark.profile != "custom") {
    throw ConfigError("config key \"benchmark.profile\": expected chirp, null, both or custom");
  }
  if (benchmark.n_seeds <= 0 || benchmark.n_restarts <= 0) {
    throw ConfigError("config: benchmark seeds and restarts must be positive");
  }
  optim.validate();
  benchmark.optim.validate();
  if (use_synthetic) synthetic.validate();
}

ExperimentConfig config_from_kv(const KeyValues& kv) {
  for (const auto& [key, value] : kv) {
    (void)value;
    if (known_keys().count(key) == 0 && key.rfind("scenario.", 0) != 0) {
      throw ConfigError("unknown config key \"" + key + "\"");
    }
  }

  ExperimentConfig cfg;
  cfg.raw = kv;

  cfg.scada_path = as_string(kv, "data.scada_path", "");
  cfg.events_path = as_string(kv, "data.events_path", "");
  if (kv.count("data.features")) {
    cfg.features = feature_set_from_string(kv.at("data.features"));
  }
  cfg.rated_power_kw = as_double(kv, "data.rated_power_kw", cfg.rated_power_kw);
  cfg.pre_outage_window_s = static_cast<std::int64_t>(
      as_double(kv, "data.pre_outage_window_days", 7.0) * 86400.0);
  cfg.scada_schema.timestamp = as_string(kv, "data.column.timestamp", cfg.scada_schema.timestamp);
  cfg.scada_schema.wind_speed =
      as_string(kv, "data.column.wind_speed", cfg.scada_schema.wind_speed);
  cfg.scada_schema.active_power = as_string(kv, "data.column.power", cfg.scada_schema.active_power);
  cfg.event_schema.start = as_string(kv, "data.column.event_start", cfg.event_schema.start);
  cfg.event_schema.end = as_string(kv, "data.column.event_end", cfg.event_schema.end);
  cfg.event_schema.label = as_string(kv, "data.column.event_label", cfg.event_schema.label);

  cfg.use_synthetic = as_bool(kv, "synthetic.enabled", false);
  cfg.synthetic_profile = as_string(kv, "synthetic.profile", cfg.synthetic_profile);
  if (cfg.synthetic_profile == "chirp") {
    cfg.synthetic = chirp_benchmark_spec();
  } else if (cfg.synthetic_profile == "null") {
    cfg.synthetic = null_benchmark_spec();
  } else if (cfg.synthetic_profile != "custom") {
    throw ConfigError("config key \"synthetic.profile\": expected chirp, null or custom");
  }
  fill_synthetic(cfg.synthetic, kv, "synthetic");

  for (const auto& [key, value] : kv) {
    if (key.rfind("scenario.", 0) == 0) {
      const std::string idx = key.substr(9);
      if (idx.empty() || !std::all_of(idx.begin(), idx.end(), [](unsigned char c) {
            return std::isdigit(c);
          })) {
        bad_key(key, "scenario keys are scenario.<number>");
      }
      cfg.scenarios.push_back(parse_scenario(key, value));
    }
  }
  // map order sorts "scenario.10" before "scenario.2"; reorder numerically
  {
    std::vector<std::pair<long, SplitSpec>> numbered;
    std::size_t i = 0;
    for (const auto& [key, value] : kv) {
      (void)value;
      if (key.rfind("scenario.", 0) == 0) {
        numbered.emplace_back(std::stol(key.substr(9)), cfg.scenarios[i++]);
      }
    }
    std::sort(numbered.begin(), numbered.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    cfg.scenarios.clear();
    for (auto& [n, s] : numbered) {
      (void)n;
      cfg.scenarios.push_back(s);
    }
  }

  const std::string kernel_list = as_string(kv, "kernels", "rbf,sm,gsm");
  for (const std::string& name : csv::split_line(kernel_list, ',')) {
    const std::string t = trim(name);
    if (t.empty()) continue;
    cfg.kernels.push_back(kernel_family_from_string(t));
  }

  cfg.init.q_sm = static_cast<int>(as_long(kv, "sm.q", cfg.init.q_sm));
  cfg.init.q_gsm = static_cast<int>(as_long(kv, "gsm.q", cfg.init.q_gsm));
  if (kv.count("gsm.latent_lengthscale_scale")) {
    const double s = as_double(kv, "gsm.latent_lengthscale_scale", 0.2);
    if (!(s > 0.0)) bad_key("gsm.latent_lengthscale_scale", "must be positive");
    cfg.init.latent_prior.lengthscale_scale_w = s;
    cfg.init.latent_prior.lengthscale_scale_l = s;
    cfg.init.latent_prior.lengthscale_scale_mu = s;
  }
  if (kv.count("gsm.f_max")) {
    const double f = as_double(kv, "gsm.f_max", 0.0);
    if (!(f > 0.0)) bad_key("gsm.f_max", "must be positive");
    cfg.init.f_max = f;
  }
  {
    // softens the MAP penalty; at N in the hundreds the nugget-free prior Gram
    // is numerically singular and pins the latents to constants
    const double ng = as_double(kv, "gsm.latent_nugget", 0.01);
    if (!(ng >= 0.0)) bad_key("gsm.latent_nugget", "must be >= 0");
    cfg.init.latent_prior.nugget = ng;
  }

  cfg.optim.learning_rate = as_double(kv, "optim.learning_rate", cfg.optim.learning_rate);
  cfg.optim.beta1 = as_double(kv, "optim.beta1", cfg.optim.beta1);
  cfg.optim.beta2 = as_double(kv, "optim.beta2", cfg.optim.beta2);
  cfg.optim.epsilon = as_double(kv, "optim.epsilon", cfg.optim.epsilon);
  cfg.optim.max_iters = as_long(kv, "optim.max_iters", cfg.optim.max_iters);
  cfg.optim.convergence_rel_tol =
      as_double(kv, "optim.convergence_rel_tol", cfg.optim.convergence_rel_tol);
  cfg.optim.convergence_window =
      as_long(kv, "optim.convergence_window", cfg.optim.convergence_window);
  cfg.optim.gradient_mode = gradient_mode_from(kv, "optim.gradient", cfg.optim.gradient_mode);

  cfg.n_restarts = static_cast<int>(as_long(kv, "restarts", cfg.n_restarts));
  cfg.base_seed = as_u64(kv, "seed", cfg.base_seed);
  cfg.out_dir = as_string(kv, "out", cfg.out_dir);
  cfg.max_workers = static_cast<int>(as_long(kv, "workers", cfg.max_workers));
  cfg.checkpoint_every = as_long(kv, "checkpoint_every", cfg.checkpoint_every);

  cfg.forecast_scenario = static_cast<int>(as_long(kv, "forecast.scenario", 1));
  cfg.model_selection = as_string(kv, "forecast.model_selection", cfg.model_selection);

  cfg.benchmark.profile = as_string(kv, "benchmark.profile", cfg.benchmark.profile);
  cfg.benchmark.n_seeds = static_cast<int>(as_long(kv, "benchmark.seeds", cfg.benchmark.n_seeds));
  cfg.benchmark.n_restarts =
      static_cast<int>(as_long(kv, "benchmark.restarts", cfg.benchmark.n_restarts));
  // short fixed budget: the benchmark fits 3 families x seeds x restarts
  cfg.benchmark.optim.learning_rate = as_double(kv, "benchmark.learning_rate", 0.05);
  cfg.benchmark.optim.max_iters = as_long(kv, "benchmark.max_iters", 200);
  cfg.benchmark.optim.gradient_mode = GradientMode::Analytic;
  cfg.benchmark.custom = cfg.synthetic;

  cfg.validate();
  return cfg;
}

KeyValues config_to_kv(const ExperimentConfig& cfg) {
  KeyValues kv;
  kv["data.scada_path"] = cfg.scada_path;
  kv["data.events_path"] = cfg.events_path;
  kv["data.features"] = to_string(cfg.features);
  kv["data.rated_power_kw"] = csv::format_double(cfg.rated_power_kw);
  kv["data.pre_outage_window_days"] =
      csv::format_double(static_cast<double>(cfg.pre_outage_window_s) / 86400.0);
  kv["synthetic.enabled"] = cfg.use_synthetic ? "true" : "false";
  kv["synthetic.profile"] = cfg.synthetic_profile;
  kv["synthetic.n_train"] = std::to_string(cfg.synthetic.n_train);
  kv["synthetic.n_test"] = std::to_string(cfg.synthetic.n_test);
  kv["synthetic.f0"] = csv::format_double(cfg.synthetic.f0);
  kv["synthetic.f1"] = csv::format_double(cfg.synthetic.f1);
  kv["synthetic.a0"] = csv::format_double(cfg.synthetic.a0);
  kv["synthetic.a1"] = csv::format_double(cfg.synthetic.a1);
  kv["synthetic.noise_sd0"] = csv::format_double(cfg.synthetic.noise_sd0);
  kv["synthetic.noise_sd1"] = csv::format_double(cfg.synthetic.noise_sd1);
  for (std::size_t i = 0; i < cfg.scenarios.size(); ++i) {
    const SplitSpec& s = cfg.scenarios[i];
    kv["scenario." + std::to_string(i + 1)] = std::to_string(s.train_size) + "," +
                                              std::to_string(s.test_size) + "," +
                                              std::to_string(s.offset);
  }
  std::string kernels;
  for (const KernelFamily f : cfg.kernels) {
    if (!kernels.empty()) kernels += ",";
    kernels += to_string(f);
  }
  kv["kernels"] = kernels;
  kv["sm.q"] = std::to_string(cfg.init.q_sm);
  kv["gsm.q"] = std::to_string(cfg.init.q_gsm);
  kv["gsm.latent_lengthscale_scale"] =
      csv::format_double(cfg.init.latent_prior.lengthscale_scale_w);
  kv["gsm.latent_nugget"] = csv::format_double(cfg.init.latent_prior.nugget);
  if (cfg.init.f_max) kv["gsm.f_max"] = csv::format_double(*cfg.init.f_max);
  kv["optim.learning_rate"] = csv::format_double(cfg.optim.learning_rate);
  kv["optim.beta1"] = csv::format_double(cfg.optim.beta1);
  kv["optim.beta2"] = csv::format_double(cfg.optim.beta2);
  kv["optim.epsilon"] = csv::format_double(cfg.optim.epsilon);
  kv["optim.max_iters"] = std::to_string(cfg.optim.max_iters);
  kv["optim.convergence_rel_tol"] = csv::format_double(cfg.optim.convergence_rel_tol);
  kv["optim.convergence_window"] = std::to_string(cfg.optim.convergence_window);
  kv["optim.gradient"] =
      cfg.optim.gradient_mode == GradientMode::Analytic ? "analytic" : "fd";
  kv["restarts"] = std::to_string(cfg.n_restarts);
  kv["seed"] = std::to_string(cfg.base_seed);
  kv["out"] = cfg.out_dir;
  kv["workers"] = std::to_string(cfg.max_workers);
  kv["checkpoint_every"] = std::to_string(cfg.checkpoint_every);
  kv["forecast.scenario"] = std::to_string(cfg.forecast_scenario);
  kv["forecast.model_selection"] = cfg.model_selection;
  kv["benchmark.profile"] = cfg.benchmark.profile;
  kv["benchmark.seeds"] = std::to_string(cfg.benchmark.n_seeds);
  kv["benchmark.restarts"] = std::to_string(cfg.benchmark.n_restarts);
  kv["benchmark.learning_rate"] = csv::format_double(cfg.benchmark.optim.learning_rate);
  kv["benchmark.max_iters"] = std::to_string(cfg.benchmark.optim.max_iters);
  return kv;
}

namespace {

void fnv1a(std::uint64_t& h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
}

void fnv1a_str(std::uint64_t& h, const std::string& s) { fnv1a(h, s.data(), s.size()); }

}  // namespace

std::uint64_t manifest_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 14695981039346656037ull;
  for (const auto& [k, v] : config_to_kv(cfg)) {
    // execution knobs do not change what gets computed
    if (k == "out" || k == "workers" || k == "checkpoint_every") continue;
    fnv1a_str(h, k);
    fnv1a_str(h, "=");
    fnv1a_str(h, v);
    fnv1a_str(h, "\n");
  }
  for (const std::string& path : {cfg.scada_path, cfg.events_path}) {
    if (path.empty() || cfg.use_synthetic) continue;
    std::ifstream in(path, std::ios::binary);
    if (!in) continue;  // missing inputs surface later as FileNotFound
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
      fnv1a(h, buf, static_cast<std::size_t>(in.gcount()));
    }
  }
  return h;
}

}  // namespace windgp
