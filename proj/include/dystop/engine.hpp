#pragma once

// Round-driven simulation of the protocol: activation, topology construction,
// pull aggregation of served (possibly stale) models, local steps, timing and
// staleness/queue bookkeeping, plus the two comparison baselines.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dystop/config.hpp"
#include "dystop/data.hpp"
#include "dystop/errors.hpp"
#include "dystop/learner.hpp"
#include "dystop/rng.hpp"
#include "dystop/scheduler.hpp"
#include "dystop/topology.hpp"
#include "dystop/world.hpp"

namespace dystop {

inline constexpr double kNoLink = std::numeric_limits<double>::infinity();

struct WorkerState {
  ModelVec model; // served model: result of the most recent completed update
  Position position;
  ComputeProfile compute;
  double elapsed = 0.0; // sum of round durations since the last activation
  std::size_t data_size = 1;
};

struct RoundRecord {
  int round = 0;
  std::vector<std::size_t> active;
  std::vector<Edge> edges;
  std::vector<double> estimated_costs; // H_t^i as seen by the activation step
  std::vector<double> worker_costs;    // realized H_t^i, 0 for idle workers
  double duration = 0.0;               // H_t
  double cumulative_time = 0.0;
  double bandwidth_bits = 0.0;
  double cumulative_bandwidth_bits = 0.0;
  double global_loss = 0.0;
  double relative_gap = 0.0; // quadratic: (F - F*) / (F(w0) - F*); logistic: loss / initial loss
  double mean_accuracy = 0.0;
  double mean_staleness = 0.0; // over all workers, staleness carried into the round
  int max_staleness = 0;
  double queue_backlog = 0.0; // sum_i q_t^i used by the activation step
  bool converged = false;
};

struct EventLog {
  std::vector<RoundRecord> rounds;
  bool aborted = false;
  std::string abort_reason;
  double initial_loss = 0.0;
  double optimum_loss = 0.0; // F*, quadratic only
  double effective_eta = 0.0;
  std::vector<std::string> warnings;

  bool converged() const { return !rounds.empty() && rounds.back().converged; }
};

struct SimulationState {
  ExperimentConfig config;
  ChannelModel channel;
  std::vector<WorkerState> workers;
  std::vector<double> tx_power;
  std::vector<std::vector<double>> dist;
  double comm_radius = 0.0;
  std::vector<std::vector<std::size_t>> ranges; // C^i without i

  std::vector<ClassHistogram> histograms;
  std::vector<std::vector<double>> emd;
  double emd_max = 0.0;
  double dist_max = 0.0;

  std::vector<LearnerObjective> objectives;
  std::vector<double> alpha;
  std::shared_ptr<const LocalDataset> test_set;
  double eta = 0.0;

  StalenessLedger ledger;
  VirtualQueue queue;
  PullHistory pulls;
  double clock = 0.0;
  double cumulative_bandwidth = 0.0;

  double optimum_loss = 0.0;
  double initial_loss = 0.0;
  double initial_gap = 0.0;
  std::vector<std::string> warnings;

  /// When set, used as transfer times [puller][source] instead of sampled
  /// fading; kNoLink marks an unusable pair.
  std::optional<std::vector<std::vector<double>>> fixed_transfer_times;

  std::size_t size() const { return workers.size(); }
};

namespace detail {

inline double matrix_max(const std::vector<std::vector<double>>& m) {
  double mx = 0.0;
  for (const auto& row : m)
    for (double v : row) mx = std::max(mx, v);
  return mx;
}

} // namespace detail

/// Recompute the derived quantities that depend on positions and histograms.
inline void refresh_geometry(SimulationState& s) {
  std::vector<Position> pos;
  for (const auto& w : s.workers) pos.push_back(w.position);
  s.dist = distance_matrix(pos);
  s.comm_radius = s.config.comm_radius > 0.0 ? s.config.comm_radius : min_connecting_radius(s.dist);
  s.ranges = communication_ranges(s.dist, s.comm_radius);
  s.dist_max = detail::matrix_max(s.dist);
  s.emd = emd_matrix(s.histograms);
  s.emd_max = detail::matrix_max(s.emd);
}

/// Reference losses for the relative gap; call after changing objectives or models.
inline void refresh_reference_losses(SimulationState& s) {
  std::vector<ModelVec> models;
  for (const auto& w : s.workers) models.push_back(w.model);
  std::vector<std::size_t> sizes;
  for (const auto& w : s.workers) sizes.push_back(w.data_size);
  const ModelVec w0 = global_weighted_model(models, sizes);
  s.initial_loss = global_loss(s.objectives, s.alpha, w0);
  if (!s.objectives.empty() && s.objectives.front().is_quadratic()) {
    s.optimum_loss = global_loss(s.objectives, s.alpha, quadratic_optimum(s.objectives, s.alpha));
    s.initial_gap = s.initial_loss - s.optimum_loss;
  }
}

inline SimulationState make_state(const ExperimentConfig& cfg) {
  validate(cfg);
  SimulationState s;
  s.config = cfg;
  const auto n = static_cast<std::size_t>(cfg.n_workers);

  s.channel.path_loss_constant_db = cfg.g0_db;
  s.channel.noise_power_w = cfg.noise_w;
  s.channel.channel_bandwidth_hz = cfg.channel_bandwidth_hz;
  s.channel.min_distance_m = cfg.min_distance_m;

  auto pos_rng = make_stream(cfg.seed, StreamTag::positions);
  auto positions = place_workers(n, cfg.region_size, pos_rng);
  auto tx_rng = make_stream(cfg.seed, StreamTag::tx_power);
  s.tx_power = draw_transmit_powers(n, cfg.tx_power_min_dbm, cfg.tx_power_max_dbm, cfg.tx_power_sigma, tx_rng);
  auto cmp_rng = make_stream(cfg.seed, StreamTag::compute);
  auto batch = draw_batch_times(n, cfg.batch_time_s, cfg.batch_time_spread, cfg.batch_time_sigma, cmp_rng);

  std::vector<std::size_t> global_counts(static_cast<std::size_t>(cfg.num_classes),
                                         static_cast<std::size_t>(cfg.samples_per_class));
  if (cfg.iid_exact) {
    s.histograms = iid_exact_partition(global_counts, n);
  } else {
    auto part_rng = make_stream(cfg.seed, StreamTag::partition);
    s.histograms = dirichlet_partition(global_counts, n, cfg.phi, part_rng);
  }

  s.workers.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& w = s.workers[i];
    w.position = positions[i];
    w.compute.per_batch_time_s = batch[i];
    w.compute.local_steps_per_round = cfg.local_steps;
    w.compute.transmit_power_w = s.tx_power[i];
    w.data_size = s.histograms[i].total();
  }
  refresh_geometry(s);

  if (cfg.learner == LearnerKind::quadratic) {
    QuadraticEnsembleParams p;
    p.dim = static_cast<std::size_t>(cfg.dim);
    p.mu = cfg.mu;
    p.L = cfg.L;
    p.optimum_offset = cfg.optimum_offset;
    p.class_spread = cfg.class_spread;
    p.grad_noise_sigma = cfg.grad_noise;
    auto obj_rng = make_stream(cfg.seed, StreamTag::objectives);
    s.objectives = make_quadratic_ensemble(s.histograms, p, obj_rng);
  } else {
    const auto means = default_class_means(static_cast<std::size_t>(cfg.num_classes),
                                           static_cast<std::size_t>(cfg.feature_dim), cfg.class_mean_scale);
    for (std::size_t i = 0; i < n; ++i) {
      auto ds_rng = make_stream(cfg.seed, StreamTag::dataset, {i});
      auto ds = std::make_shared<const LocalDataset>(
          synth_dataset(s.histograms[i], static_cast<std::size_t>(cfg.feature_dim), means, cfg.feature_noise, ds_rng));
      s.objectives.push_back(LearnerObjective{LogisticObjective{
          ds, static_cast<std::size_t>(cfg.num_classes), static_cast<std::size_t>(cfg.feature_dim), cfg.l2}});
    }
    ClassHistogram balanced{std::vector<std::size_t>(static_cast<std::size_t>(cfg.num_classes),
                                                     static_cast<std::size_t>(cfg.test_per_class))};
    auto test_rng = make_stream(cfg.seed, StreamTag::test_set);
    s.test_set = std::make_shared<const LocalDataset>(
        synth_dataset(balanced, static_cast<std::size_t>(cfg.feature_dim), means, cfg.feature_noise, test_rng));
  }

  std::vector<std::size_t> sizes;
  for (const auto& w : s.workers) sizes.push_back(w.data_size);
  s.alpha = data_weights(sizes);

  s.eta = cfg.eta;
  const auto policy = cfg.eta_strict ? EtaPolicy::error : EtaPolicy::clamp;
  for (const auto& o : s.objectives) s.eta = std::min(s.eta, admissible_eta(o, cfg.eta, policy));
  if (s.eta != cfg.eta)
    s.warnings.push_back("eta " + detail::format_double(cfg.eta) + " violates eta < mu/(2L^2); clamped to " +
                         detail::format_double(s.eta));

  const auto dim = static_cast<Eigen::Index>(s.objectives.front().dimension());
  for (auto& w : s.workers) w.model = ModelVec::Zero(dim);

  s.ledger = StalenessLedger(n);
  s.queue = VirtualQueue(n, cfg.tau_bound);
  s.pulls = PullHistory(n);
  refresh_reference_losses(s);
  return s;
}

/// Transfer times [puller][source] for round t over in-range pairs, from
/// fresh fading draws on per-pair substreams. Pairs out of range or with a
/// zero rate are kNoLink.
inline std::vector<std::vector<double>> sample_transfer_times(const SimulationState& s, int t) {
  if (s.fixed_transfer_times) return *s.fixed_transfer_times;
  const std::size_t n = s.size();
  std::vector<std::vector<double>> out(n, std::vector<double>(n, kNoLink));
  for (std::size_t i = 0; i < n; ++i) {
    for (auto j : s.ranges[i]) {
      SplitMix64 rng(derive_seed(s.config.seed, StreamTag::gains,
                                 {static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(j),
                                  static_cast<std::uint64_t>(i)}));
      const double g = channel_gain(s.dist[i][j], s.channel, rng);
      const double rate = transmission_rate(g, s.tx_power[j], s.channel);
      if (rate > 0.0) out[i][j] = transfer_time(s.config.model_cost_bits, rate);
    }
  }
  return out;
}

/// Sources j of worker i whose link is usable this round.
inline std::vector<std::vector<std::size_t>> live_candidates(const SimulationState& s,
                                                             const std::vector<std::vector<double>>& links) {
  std::vector<std::vector<std::size_t>> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    for (auto j : s.ranges[i])
      if (std::isfinite(links[i][j])) out[i].push_back(j);
  return out;
}

/// Pre-topology cost estimates: residual compute plus the slowest live link in range.
inline std::vector<double> estimate_costs(const SimulationState& s, const std::vector<std::vector<double>>& links) {
  std::vector<double> est(s.size());
  std::vector<double> times;
  for (std::size_t i = 0; i < s.size(); ++i) {
    times.clear();
    for (auto j : s.ranges[i])
      if (std::isfinite(links[i][j])) times.push_back(links[i][j]);
    est[i] = estimate_round_cost(s.workers[i].compute.training_time(), s.workers[i].elapsed, times);
  }
  return est;
}

inline std::vector<double> draw_budgets(const SimulationState& s, int t) {
  BandwidthBudget b{s.config.budget(), s.config.budget_fluctuation, s.config.model_cost_bits};
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    SplitMix64 rng(derive_seed(s.config.seed, StreamTag::budget,
                               {static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(i)}));
    out[i] = draw_budget(b, rng);
  }
  return out;
}

inline StalenessView staleness_view(const ExperimentConfig& c) {
  return c.waa_carry_staleness ? StalenessView::carry : StalenessView::reset;
}

namespace detail {

inline void fill_metrics(const SimulationState& s, RoundRecord& rec) {
  std::vector<ModelVec> models;
  std::vector<std::size_t> sizes;
  for (const auto& w : s.workers) {
    models.push_back(w.model);
    sizes.push_back(w.data_size);
  }
  const ModelVec w = global_weighted_model(models, sizes);
  rec.global_loss = global_loss(s.objectives, s.alpha, w);
  if (!std::isfinite(rec.global_loss)) throw NonFiniteError("global loss is not finite");
  if (s.objectives.front().is_quadratic()) {
    rec.relative_gap = s.initial_gap > 0.0 ? (rec.global_loss - s.optimum_loss) / s.initial_gap : 0.0;
    rec.converged = rec.relative_gap <= s.config.stop_threshold();
  } else {
    rec.relative_gap = s.initial_loss > 0.0 ? rec.global_loss / s.initial_loss : 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
      acc += accuracy(std::get<LogisticObjective>(s.objectives[i].impl), s.workers[i].model, *s.test_set);
    rec.mean_accuracy = acc / static_cast<double>(s.size());
    rec.converged = rec.global_loss <= s.config.stop_threshold();
  }
}

/// Shared second half of every round: pull-aggregate and step the activated
/// workers against a snapshot of served models, realize timing on the chosen
/// links, then advance clocks, staleness, queues and pull counts.
inline RoundRecord execute_round(SimulationState& s, int t, std::span<const std::size_t> active,
                                 const TopologySnapshot& snap, const std::vector<std::vector<double>>& links,
                                 std::vector<double> estimates) {
  const std::size_t n = s.size();
  RoundRecord rec;
  rec.round = t;
  rec.active.assign(active.begin(), active.end());
  rec.edges = snap.edges;
  rec.estimated_costs = std::move(estimates);
  rec.worker_costs.assign(n, 0.0);

  std::vector<char> activation(n, 0);
  for (auto i : active) activation[i] = 1;

  const auto step_policy = s.config.eta_strict ? EtaPolicy::error : EtaPolicy::clamp;
  std::vector<ModelVec> updated(active.size());
  for (std::size_t k = 0; k < active.size(); ++k) {
    const auto i = active[k];
    std::vector<WeightedModel> pulled;
    double slowest = 0.0;
    for (auto j : snap.in_neighbors[i]) {
      pulled.push_back({std::cref(s.workers[j].model), static_cast<double>(s.workers[j].data_size)});
      if (j != i) slowest = std::max(slowest, links[i][j]);
    }
    ModelVec w = aggregate(pulled);
    auto rng = make_stream(s.config.seed, StreamTag::gradient, {static_cast<std::uint64_t>(t), i});
    for (int step = 0; step < s.workers[i].compute.local_steps_per_round; ++step)
      w = sgd_step(s.objectives[i], w, s.eta, static_cast<std::size_t>(s.config.batch_size), rng, step_policy);
    updated[k] = std::move(w);
    rec.worker_costs[i] = residual_compute(s.workers[i].compute.training_time(), s.workers[i].elapsed) + slowest;
    rec.duration = std::max(rec.duration, rec.worker_costs[i]);
  }
  for (std::size_t k = 0; k < active.size(); ++k) s.workers[active[k]].model = std::move(updated[k]);

  for (std::size_t i = 0; i < n; ++i) s.workers[i].elapsed = activation[i] ? 0.0 : s.workers[i].elapsed + rec.duration;

  double tau_sum = 0.0;
  for (int tau : s.ledger.tau) {
    tau_sum += tau;
    rec.max_staleness = std::max(rec.max_staleness, tau);
  }
  rec.mean_staleness = tau_sum / static_cast<double>(n);
  rec.queue_backlog = s.queue.backlog();
  s.queue = update_queue(s.queue, s.ledger);
  s.ledger = update_staleness(s.ledger, activation);
  record_pulls(snap, s.pulls);

  s.clock += rec.duration;
  rec.cumulative_time = s.clock;
  rec.bandwidth_bits = snap.total_bandwidth();
  s.cumulative_bandwidth += rec.bandwidth_bits;
  rec.cumulative_bandwidth_bits = s.cumulative_bandwidth;
  fill_metrics(s, rec);
  return rec;
}

} // namespace detail

/// Activation by drift-plus-penalty prefix search, then budgeted phase-aware
/// topology, then pull aggregation and one local step per activated worker.
inline RoundRecord run_round_dystop(SimulationState& s, int t) {
  if (t < 1) throw InvalidInput("run_round_dystop: round must be >= 1");
  const auto links = sample_transfer_times(s, t);
  auto est = estimate_costs(s, links);
  const RoundPlan plan = waa(s.queue, s.ledger, est, s.config.V, staleness_view(s.config));

  PriorityInputs prio;
  prio.emd = &s.emd;
  prio.dist = &s.dist;
  prio.emd_max = s.emd_max;
  prio.dist_max = s.dist_max;
  prio.pulls = &s.pulls;
  prio.tau = s.ledger.tau;
  prio.round = t;
  prio.phase_threshold = s.config.phase_threshold();

  const auto budgets = draw_budgets(s, t);
  const auto snap = ptca(plan.active_set, live_candidates(s, links), budgets, s.config.model_cost_bits,
                         static_cast<std::size_t>(s.config.neighbor_cap()), std::cref(prio));
  return detail::execute_round(s, t, plan.active_set, snap, links, std::move(est));
}

/// sync_gossip: everyone is activated and pulls from every live in-range
/// neighbor; the round lasts as long as the slowest worker.
/// push_all: activation as in DySTop, but each activated worker exchanges
/// with its whole live neighborhood, no budgets and no cap.
inline RoundRecord run_round_baseline(SimulationState& s, int t, Policy policy) {
  if (t < 1) throw InvalidInput("run_round_baseline: round must be >= 1");
  if (policy == Policy::dystop) throw InvalidInput("run_round_baseline: not a baseline policy");
  const auto links = sample_transfer_times(s, t);
  auto est = estimate_costs(s, links);
  std::vector<std::size_t> active;
  if (policy == Policy::sync_gossip) {
    for (std::size_t i = 0; i < s.size(); ++i) active.push_back(i);
  } else {
    active = waa(s.queue, s.ledger, est, s.config.V, staleness_view(s.config)).active_set;
  }
  const auto snap = full_neighborhood(active, live_candidates(s, links), s.config.model_cost_bits);
  return detail::execute_round(s, t, active, snap, links, std::move(est));
}

inline RoundRecord run_round(SimulationState& s, int t) {
  return s.config.policy == Policy::dystop ? run_round_dystop(s, t) : run_round_baseline(s, t, s.config.policy);
}

/// Runs until the stopping threshold is met or t_max rounds have elapsed.
/// A non-finite model or loss stops the run and marks the log aborted.
inline EventLog run_experiment(SimulationState& s) {
  EventLog log;
  log.initial_loss = s.initial_loss;
  log.optimum_loss = s.optimum_loss;
  log.effective_eta = s.eta;
  log.warnings = s.warnings;
  for (int t = 1; t <= s.config.t_max; ++t) {
    try {
      log.rounds.push_back(run_round(s, t));
    } catch (const NonFiniteError& e) {
      log.aborted = true;
      log.abort_reason = "round " + std::to_string(t) + ": " + e.what();
      break;
    }
    if (log.rounds.back().converged) break;
  }
  return log;
}

inline EventLog run_experiment(const ExperimentConfig& cfg) {
  auto s = make_state(cfg);
  return run_experiment(s);
}

} // namespace dystop
