#pragma once

// Staleness bookkeeping, Lyapunov staleness queues and the worker activation
// algorithm (prefix search over workers sorted by estimated round cost).

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "dystop/errors.hpp"

namespace dystop {

struct StalenessLedger {
  std::vector<int> tau; // rounds since the worker last started an update

  explicit StalenessLedger(std::size_t n = 0) : tau(n, 0) {}
  std::size_t size() const { return tau.size(); }
};

struct VirtualQueue {
  std::vector<double> q;
  int tau_bound = 0;

  VirtualQueue() = default;
  VirtualQueue(std::size_t n, int bound) : q(n, 0.0), tau_bound(bound) {}
  double backlog() const { return std::accumulate(q.begin(), q.end(), 0.0); }
};

struct RoundPlan {
  std::vector<std::size_t> active_set; // ascending worker id
  std::vector<char> activation;        // a_t^i
  std::vector<double> costs;           // H_t^i estimates fed to the search
  double objective = 0.0;              // drift-plus-penalty value of the chosen set
  double estimated_duration = 0.0;     // max cost over the active set
};

/// tau_{t+1} = (tau_t + 1)(1 - a_t)
inline StalenessLedger update_staleness(const StalenessLedger& ledger, std::span<const char> activation) {
  if (activation.size() != ledger.size()) throw InvalidInput("update_staleness: size mismatch");
  StalenessLedger next(ledger.size());
  for (std::size_t i = 0; i < ledger.size(); ++i) next.tau[i] = activation[i] ? 0 : ledger.tau[i] + 1;
  return next;
}

/// q_{t+1} = max(q_t + tau_t - tau_bound, 0), fed with the staleness carried into round t.
inline VirtualQueue update_queue(const VirtualQueue& queue, const StalenessLedger& ledger) {
  if (queue.q.size() != ledger.size()) throw InvalidInput("update_queue: size mismatch");
  VirtualQueue next = queue;
  for (std::size_t i = 0; i < ledger.size(); ++i)
    next.q[i] = std::max(queue.q[i] + ledger.tau[i] - queue.tau_bound, 0.0);
  return next;
}

/// sum_i q_i (tau_i - tau_bound) + V * H
inline double drift_plus_penalty(std::span<const double> q, std::span<const int> tau, int tau_bound, double V,
                                 double duration) {
  if (!(V > 0.0)) throw InvalidInput("drift_plus_penalty: V must be > 0");
  if (q.size() != tau.size()) throw InvalidInput("drift_plus_penalty: size mismatch");
  double drift = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) drift += q[i] * (tau[i] - tau_bound);
  return drift + V * duration;
}

inline double drift_plus_penalty(const VirtualQueue& queue, const StalenessLedger& ledger, double V,
                                 double duration) {
  return drift_plus_penalty(queue.q, ledger.tau, queue.tau_bound, V, duration);
}

/// Training time still owed by a worker that started its update `elapsed`
/// seconds ago: max(h_i - sum of the idle rounds' durations, 0).
inline double residual_compute(double training_time, double elapsed) {
  return std::max(training_time - elapsed, 0.0);
}

/// H_t^i = residual compute + slowest incoming transfer. No links means the
/// worker aggregates with itself only.
inline double estimate_round_cost(double training_time, double elapsed, std::span<const double> link_times) {
  double slowest = 0.0;
  for (double t : link_times) slowest = std::max(slowest, t);
  return residual_compute(training_time, elapsed) + slowest;
}

/// How an activated candidate's staleness enters the activation objective.
/// `reset`: staleness is pre-updated exactly as the round would update it, so
/// activated workers count 0. `carry`: activated workers count the staleness
/// they carry into this round. Idle workers count tau + 1 either way.
enum class StalenessView { reset, carry };

inline std::vector<int> preupdated_staleness(const StalenessLedger& ledger, std::span<const char> activation,
                                             StalenessView view = StalenessView::reset) {
  std::vector<int> out(ledger.size());
  for (std::size_t i = 0; i < ledger.size(); ++i) {
    if (!activation[i])
      out[i] = ledger.tau[i] + 1;
    else
      out[i] = view == StalenessView::reset ? 0 : ledger.tau[i];
  }
  return out;
}

/// Cost-ascending worker order, ties by id.
inline std::vector<std::size_t> cost_order(std::span<const double> costs) {
  std::vector<std::size_t> order(costs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return costs[a] < costs[b]; });
  return order;
}

/// Worker activation: sort by cost, evaluate the drift-plus-penalty value of
/// every prefix, keep the first prefix attaining the minimum.
///
/// The value of prefix K is evaluated incrementally: starting from everyone
/// idle (tau + 1), activating worker i lowers its drift term by q_i (tau_i + 1)
/// under `reset` or by q_i under `carry`, and the round duration is the
/// largest cost in the prefix.
inline RoundPlan waa(const VirtualQueue& queue, const StalenessLedger& ledger, std::span<const double> costs,
                     double V, StalenessView view = StalenessView::reset) {
  const std::size_t n = ledger.size();
  if (n == 0) throw InvalidInput("waa: no workers");
  if (costs.size() != n || queue.q.size() != n) throw InvalidInput("waa: size mismatch");
  if (!(V > 0.0)) throw InvalidInput("waa: V must be > 0");

  const auto order = cost_order(costs);
  double drift = 0.0;
  for (std::size_t i = 0; i < n; ++i) drift += queue.q[i] * (ledger.tau[i] + 1 - queue.tau_bound);

  double best = std::numeric_limits<double>::infinity();
  std::size_t best_k = 1;
  double duration = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    const std::size_t w = order[k - 1];
    drift -= queue.q[w] * (view == StalenessView::reset ? ledger.tau[w] + 1 : 1);
    duration = std::max(duration, costs[w]);
    const double s = drift + V * duration;
    if (s < best) {
      best = s;
      best_k = k;
    }
  }

  RoundPlan plan;
  plan.activation.assign(n, 0);
  plan.costs.assign(costs.begin(), costs.end());
  for (std::size_t k = 0; k < best_k; ++k) {
    plan.activation[order[k]] = 1;
    plan.estimated_duration = std::max(plan.estimated_duration, costs[order[k]]);
  }
  for (std::size_t i = 0; i < n; ++i)
    if (plan.activation[i]) plan.active_set.push_back(i);
  plan.objective = best;
  return plan;
}

} // namespace dystop
