#pragma once

// Per-round CSV export, run summaries (CSV row + JSON) and parameter sweeps.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dystop/config.hpp"
#include "dystop/engine.hpp"

namespace dystop {

inline constexpr const char* kMetricsSchema = "# dystop-metrics v1";
inline constexpr const char* kMetricsHeader =
    "round,active_count,active_set,edge_count,round_time,cumulative_time,round_bandwidth_bits,"
    "cumulative_bandwidth_bits,global_loss,relative_gap,mean_accuracy,mean_staleness,max_staleness,"
    "queue_backlog,converged";

namespace detail {
inline std::string num(double v) { return format_double(v); }
} // namespace detail

inline void write_metrics_csv(std::ostream& os, const EventLog& log) {
  os << kMetricsSchema << '\n' << kMetricsHeader << '\n';
  for (const auto& r : log.rounds) {
    os << r.round << ',' << r.active.size() << ',';
    for (std::size_t k = 0; k < r.active.size(); ++k) os << (k ? ";" : "") << r.active[k];
    os << ',' << r.edges.size() << ',' << detail::num(r.duration) << ',' << detail::num(r.cumulative_time) << ','
       << detail::num(r.bandwidth_bits) << ',' << detail::num(r.cumulative_bandwidth_bits) << ','
       << detail::num(r.global_loss) << ',' << detail::num(r.relative_gap) << ',' << detail::num(r.mean_accuracy)
       << ',' << detail::num(r.mean_staleness) << ',' << r.max_staleness << ',' << detail::num(r.queue_backlog)
       << ',' << (r.converged ? 1 : 0) << '\n';
  }
}

/// round,puller,source for every realized edge
inline void write_topology_log_csv(std::ostream& os, const EventLog& log) {
  os << "round,puller,source\n";
  for (const auto& r : log.rounds)
    for (const auto& e : r.edges) os << r.round << ',' << e.puller << ',' << e.source << '\n';
}

struct RunSummary {
  std::string label;
  std::string policy;
  std::uint64_t seed = 0;
  int rounds = 0;
  bool converged = false;
  bool aborted = false;
  double completion_time = 0.0; // cumulative simulated time at the stopping round
  double total_bandwidth_bits = 0.0;
  double final_loss = 0.0;
  double final_relative_gap = 0.0;
  double final_accuracy = 0.0;
  double mean_staleness = 0.0; // averaged over rounds
  int max_staleness = 0;
  double mean_queue_backlog = 0.0; // time-averaged sum_i q_t^i
};

inline RunSummary summarize(const EventLog& log, const ExperimentConfig& cfg, std::string label = {}) {
  RunSummary s;
  s.label = std::move(label);
  s.policy = to_string(cfg.policy);
  s.seed = cfg.seed;
  s.rounds = static_cast<int>(log.rounds.size());
  s.converged = log.converged();
  s.aborted = log.aborted;
  if (log.rounds.empty()) return s;
  const auto& last = log.rounds.back();
  s.completion_time = last.cumulative_time;
  s.total_bandwidth_bits = last.cumulative_bandwidth_bits;
  s.final_loss = last.global_loss;
  s.final_relative_gap = last.relative_gap;
  s.final_accuracy = last.mean_accuracy;
  double st = 0.0, q = 0.0;
  for (const auto& r : log.rounds) {
    st += r.mean_staleness;
    q += r.queue_backlog;
    s.max_staleness = std::max(s.max_staleness, r.max_staleness);
  }
  s.mean_staleness = st / static_cast<double>(log.rounds.size());
  s.mean_queue_backlog = q / static_cast<double>(log.rounds.size());
  return s;
}

inline constexpr const char* kSummaryHeader =
    "label,policy,seed,rounds,converged,aborted,completion_time,total_bandwidth_bits,final_loss,"
    "final_relative_gap,final_accuracy,mean_staleness,max_staleness,mean_queue_backlog";

inline void write_summary_row(std::ostream& os, const RunSummary& s) {
  os << s.label << ',' << s.policy << ',' << s.seed << ',' << s.rounds << ',' << (s.converged ? 1 : 0) << ','
     << (s.aborted ? 1 : 0) << ',' << detail::num(s.completion_time) << ',' << detail::num(s.total_bandwidth_bits)
     << ',' << detail::num(s.final_loss) << ',' << detail::num(s.final_relative_gap) << ','
     << detail::num(s.final_accuracy) << ',' << detail::num(s.mean_staleness) << ',' << s.max_staleness << ','
     << detail::num(s.mean_queue_backlog) << '\n';
}

inline nlohmann::ordered_json summary_json(const RunSummary& s) {
  nlohmann::ordered_json j;
  j["schema"] = "dystop-summary v1";
  j["label"] = s.label;
  j["policy"] = s.policy;
  j["seed"] = s.seed;
  j["rounds"] = s.rounds;
  j["converged"] = s.converged;
  j["aborted"] = s.aborted;
  j["completion_time"] = s.completion_time;
  j["total_bandwidth_bits"] = s.total_bandwidth_bits;
  j["final_loss"] = s.final_loss;
  j["final_relative_gap"] = s.final_relative_gap;
  j["final_accuracy"] = s.final_accuracy;
  j["mean_staleness"] = s.mean_staleness;
  j["max_staleness"] = s.max_staleness;
  j["mean_queue_backlog"] = s.mean_queue_backlog;
  return j;
}

namespace detail {
inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
}
} // namespace detail

struct RunOutcome {
  EventLog log;
  RunSummary summary;
};

/// Runs one experiment and writes metrics.csv, topology.csv, histograms.csv
/// and summary.json into `out_dir`.
inline RunOutcome run_to_directory(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto state = make_state(cfg);
  RunOutcome o;
  o.log = run_experiment(state);
  o.summary = summarize(o.log, cfg, "run");

  std::ostringstream m, t, h;
  write_metrics_csv(m, o.log);
  write_topology_log_csv(t, o.log);
  write_histograms_csv(h, state.histograms);
  detail::write_file(out_dir / "metrics.csv", m.str());
  detail::write_file(out_dir / "topology.csv", t.str());
  detail::write_file(out_dir / "histograms.csv", h.str());
  detail::write_file(out_dir / "summary.json", summary_json(o.summary).dump(2) + "\n");
  return o;
}

inline const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes = {"tau_bound", "V", "s", "phi"};
  return axes;
}

/// One metrics_<axis>_<value>.csv per point plus summary.csv and summary.json
/// written once at the end.
inline std::vector<RunOutcome> sweep_to_directory(const ExperimentConfig& base, const std::string& axis,
                                                  const std::vector<std::string>& values,
                                                  const std::filesystem::path& out_dir) {
  if (std::find(sweep_axes().begin(), sweep_axes().end(), axis) == sweep_axes().end())
    throw ConfigError(axis, "not a sweep axis (tau_bound, V, s, phi)");
  if (values.empty()) throw ConfigError(axis, "sweep needs at least one value");
  std::vector<ExperimentConfig> points;
  for (const auto& v : values) {
    ExperimentConfig c = base;
    set_value(c, axis, v);
    validate(c);
    points.push_back(c);
  }

  std::filesystem::create_directories(out_dir);
  std::vector<RunOutcome> outcomes;
  std::ostringstream summary_csv;
  summary_csv << kSummaryHeader << '\n';
  nlohmann::ordered_json summary_arr = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < points.size(); ++k) {
    const std::string label = axis + "=" + values[k];
    RunOutcome o;
    o.log = run_experiment(points[k]);
    o.summary = summarize(o.log, points[k], label);
    std::ostringstream m;
    write_metrics_csv(m, o.log);
    detail::write_file(out_dir / ("metrics_" + axis + "_" + values[k] + ".csv"), m.str());
    write_summary_row(summary_csv, o.summary);
    summary_arr.push_back(summary_json(o.summary));
    outcomes.push_back(std::move(o));
  }
  detail::write_file(out_dir / "summary.csv", summary_csv.str());
  detail::write_file(out_dir / "summary.json", summary_arr.dump(2) + "\n");
  return outcomes;
}

} // namespace dystop
