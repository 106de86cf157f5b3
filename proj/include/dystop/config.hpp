#pragma once

// Experiment configuration: a flat `key = value` document. Lines starting
// with '#' and blank lines are ignored; every key is optional and unknown
// keys are rejected. See README for the full key table.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dystop/errors.hpp"

namespace dystop {

enum class Policy { dystop, sync_gossip, push_all };
enum class LearnerKind { quadratic, logistic };

inline std::string to_string(Policy p) {
  switch (p) {
  case Policy::dystop: return "dystop";
  case Policy::sync_gossip: return "sync_gossip";
  case Policy::push_all: return "push_all";
  }
  return "?";
}

inline std::string to_string(LearnerKind k) { return k == LearnerKind::quadratic ? "quadratic" : "logistic"; }

struct ExperimentConfig {
  std::uint64_t seed = 1;
  int n_workers = 100;
  double region_size = 100.0;
  double comm_radius = 0.0; // 0: smallest radius that connects the disk graph

  // channel
  double g0_db = -43.0;
  double noise_w = 1e-13;
  double channel_bandwidth_hz = 1e6;
  double min_distance_m = 1.0;
  double tx_power_min_dbm = 10.0;
  double tx_power_max_dbm = 20.0;
  double tx_power_sigma = 0.1;

  // bandwidth accounting
  double model_cost_bits = 1e6;
  double budget_bits = 0.0; // 0: s * model_cost_bits
  double budget_fluctuation = 0.2;

  // compute
  double batch_time_s = 1.0;
  double batch_time_spread = 1.0;
  double batch_time_sigma = 0.1;
  int local_steps = 1;

  // learner
  LearnerKind learner = LearnerKind::quadratic;
  int dim = 10;
  double mu = 0.1;
  double L = 1.0;
  double grad_noise = 0.01;
  double optimum_offset = 1.0;
  double class_spread = 1.0;
  int feature_dim = 20;
  double feature_noise = 0.5;
  double class_mean_scale = 2.0;
  double l2 = 1e-3;
  int batch_size = 32;
  int test_per_class = 20;
  double eta = 0.04;
  bool eta_strict = false; // true: reject eta >= mu/(2L^2) instead of clamping

  // data
  int num_classes = 10;
  int samples_per_class = 500;
  double phi = 1.0;
  bool iid_exact = false;

  // scheduling and topology
  int tau_bound = 2;
  double V = 10.0;
  bool waa_carry_staleness = false; // true: activated candidates keep current tau in the objective
  int s = 0; // 0: ceil(log2 N)
  double t_thre_fraction = 0.3;
  int t_max = 1000;
  double epsilon = 0.0; // 0: 0.01 relative gap (quadratic) or 0.25 loss (logistic)
  Policy policy = Policy::dystop;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

  int neighbor_cap() const {
    if (s > 0) return s;
    return n_workers <= 1 ? 1 : static_cast<int>(std::ceil(std::log2(static_cast<double>(n_workers))));
  }
  double budget() const { return budget_bits > 0.0 ? budget_bits : neighbor_cap() * model_cost_bits; }
  double stop_threshold() const {
    if (epsilon > 0.0) return epsilon;
    return learner == LearnerKind::quadratic ? 0.01 : 0.25;
  }
  int phase_threshold() const { return static_cast<int>(std::ceil(t_thre_fraction * t_max)); }
};

/// Round-trip text for a double (%.17g).
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

using dystop::format_double;

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw ConfigError(key, "cannot parse '" + text + "' as a number");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + text + "'");
}

struct Field {
  const char* name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
Field numeric(const char* name, T ExperimentConfig::*member) {
  return {name, [name, member](ExperimentConfig& c, const std::string& v) { c.*member = parse_number<T>(name, v); },
          [member](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>)
              return format_double(c.*member);
            else
              return std::to_string(c.*member);
          }};
}

inline Field boolean(const char* name, bool ExperimentConfig::*member) {
  return {name, [name, member](ExperimentConfig& c, const std::string& v) { c.*member = parse_bool(name, v); },
          [member](const ExperimentConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

inline const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> table = {
      numeric("seed", &C::seed),
      numeric("n_workers", &C::n_workers),
      numeric("region_size", &C::region_size),
      numeric("comm_radius", &C::comm_radius),
      numeric("g0_db", &C::g0_db),
      numeric("noise_w", &C::noise_w),
      numeric("channel_bandwidth_hz", &C::channel_bandwidth_hz),
      numeric("min_distance_m", &C::min_distance_m),
      numeric("tx_power_min_dbm", &C::tx_power_min_dbm),
      numeric("tx_power_max_dbm", &C::tx_power_max_dbm),
      numeric("tx_power_sigma", &C::tx_power_sigma),
      numeric("model_cost_bits", &C::model_cost_bits),
      numeric("budget_bits", &C::budget_bits),
      numeric("budget_fluctuation", &C::budget_fluctuation),
      numeric("batch_time_s", &C::batch_time_s),
      numeric("batch_time_spread", &C::batch_time_spread),
      numeric("batch_time_sigma", &C::batch_time_sigma),
      numeric("local_steps", &C::local_steps),
      {"learner",
       [](C& c, const std::string& v) {
         if (v == "quadratic")
           c.learner = LearnerKind::quadratic;
         else if (v == "logistic")
           c.learner = LearnerKind::logistic;
         else
           throw ConfigError("learner", "expected quadratic or logistic, got '" + v + "'");
       },
       [](const C& c) { return to_string(c.learner); }},
      numeric("dim", &C::dim),
      numeric("mu", &C::mu),
      numeric("L", &C::L),
      numeric("grad_noise", &C::grad_noise),
      numeric("optimum_offset", &C::optimum_offset),
      numeric("class_spread", &C::class_spread),
      numeric("feature_dim", &C::feature_dim),
      numeric("feature_noise", &C::feature_noise),
      numeric("class_mean_scale", &C::class_mean_scale),
      numeric("l2", &C::l2),
      numeric("batch_size", &C::batch_size),
      numeric("test_per_class", &C::test_per_class),
      numeric("eta", &C::eta),
      boolean("eta_strict", &C::eta_strict),
      numeric("num_classes", &C::num_classes),
      numeric("samples_per_class", &C::samples_per_class),
      numeric("phi", &C::phi),
      boolean("iid_exact", &C::iid_exact),
      numeric("tau_bound", &C::tau_bound),
      numeric("V", &C::V),
      boolean("waa_carry_staleness", &C::waa_carry_staleness),
      numeric("s", &C::s),
      numeric("t_thre_fraction", &C::t_thre_fraction),
      numeric("t_max", &C::t_max),
      numeric("epsilon", &C::epsilon),
      {"policy",
       [](C& c, const std::string& v) {
         if (v == "dystop")
           c.policy = Policy::dystop;
         else if (v == "sync_gossip")
           c.policy = Policy::sync_gossip;
         else if (v == "push_all")
           c.policy = Policy::push_all;
         else
           throw ConfigError("policy", "expected dystop, sync_gossip or push_all, got '" + v + "'");
       },
       [](const C& c) { return to_string(c.policy); }},
  };
  return table;
}

inline void require(bool ok, const char* key, const char* what) {
  if (!ok) throw ConfigError(key, std::string("out of range: ") + what);
}

} // namespace detail

/// Throws ConfigError naming the first offending key.
inline void validate(const ExperimentConfig& c) {
  using detail::require;
  require(c.n_workers >= 1, "n_workers", "must be >= 1");
  require(c.region_size > 0, "region_size", "must be > 0");
  require(c.comm_radius >= 0, "comm_radius", "must be >= 0 (0 = auto)");
  require(std::isfinite(c.g0_db), "g0_db", "must be finite");
  require(c.noise_w > 0, "noise_w", "must be > 0");
  require(c.channel_bandwidth_hz > 0, "channel_bandwidth_hz", "must be > 0");
  require(c.min_distance_m > 0, "min_distance_m", "must be > 0");
  require(c.tx_power_min_dbm <= c.tx_power_max_dbm, "tx_power_min_dbm", "must be <= tx_power_max_dbm");
  require(c.tx_power_sigma >= 0, "tx_power_sigma", "must be >= 0");
  require(c.model_cost_bits > 0, "model_cost_bits", "must be > 0");
  require(c.budget_bits == 0 || c.budget_bits >= c.model_cost_bits, "budget_bits",
          "must be 0 (auto) or >= model_cost_bits");
  require(c.budget_fluctuation >= 0 && c.budget_fluctuation < 1, "budget_fluctuation", "must be in [0, 1)");
  require(c.batch_time_s > 0, "batch_time_s", "must be > 0");
  require(c.batch_time_spread >= 1, "batch_time_spread", "must be >= 1");
  require(c.batch_time_sigma >= 0, "batch_time_sigma", "must be >= 0");
  require(c.local_steps >= 1, "local_steps", "must be >= 1");
  require(c.dim >= 1, "dim", "must be >= 1");
  require(c.mu > 0, "mu", "must be > 0");
  require(c.L >= c.mu, "L", "must be >= mu");
  require(c.grad_noise >= 0, "grad_noise", "must be >= 0");
  require(std::isfinite(c.optimum_offset), "optimum_offset", "must be finite");
  require(c.class_spread >= 0, "class_spread", "must be >= 0");
  require(c.feature_dim >= 1, "feature_dim", "must be >= 1");
  require(c.feature_noise >= 0, "feature_noise", "must be >= 0");
  require(c.class_mean_scale > 0, "class_mean_scale", "must be > 0");
  require(c.l2 >= 0, "l2", "must be >= 0");
  require(c.batch_size >= 1, "batch_size", "must be >= 1");
  require(c.test_per_class >= 0, "test_per_class", "must be >= 0");
  require(c.eta > 0, "eta", "must be > 0");
  require(c.num_classes >= 1, "num_classes", "must be >= 1");
  require(c.samples_per_class >= 1, "samples_per_class", "must be >= 1");
  require(static_cast<long long>(c.samples_per_class) * c.num_classes >= c.n_workers, "samples_per_class",
          "too few samples for every worker to hold one");
  require(c.phi > 0, "phi", "must be > 0");
  require(c.tau_bound >= 0, "tau_bound", "must be >= 0");
  require(c.V > 0, "V", "must be > 0");
  require(c.s >= 0, "s", "must be >= 0 (0 = ceil(log2 N))");
  require(c.t_thre_fraction >= 0 && c.t_thre_fraction <= 1, "t_thre_fraction", "must be in [0, 1]");
  require(c.t_max >= 0, "t_max", "must be >= 0");
  require(c.epsilon >= 0, "epsilon", "must be >= 0 (0 = learner default)");
}

/// Set one key from its textual value (used by the loader and CLI overrides).
inline void set_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
  for (const auto& f : detail::fields()) {
    if (key == f.name) {
      f.set(c, value);
      return;
    }
  }
  throw ConfigError(key, "unknown key");
}

inline ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto t = detail::trim(line);
    if (t.empty()) continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("", "line " + std::to_string(lineno) + ": expected 'key = value'");
    auto key = detail::trim(std::string_view(t).substr(0, eq));
    auto value = detail::trim(std::string_view(t).substr(eq + 1));
    if (value.empty()) throw ConfigError(key, "missing value");
    set_value(c, key, value);
  }
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
  return parse_config(in);
}

inline void write_config(std::ostream& os, const ExperimentConfig& c) {
  for (const auto& f : detail::fields()) os << f.name << " = " << f.get(c) << '\n';
}

inline void save_config(const std::string& path, const ExperimentConfig& c) {
  std::ofstream out(path);
  if (!out) throw ConfigError("", "cannot write config file '" + path + "'");
  write_config(out, c);
}

} // namespace dystop
