#pragma once

// Phase-aware topology construction: activated workers claim in-neighbors in
// round-robin sweeps, ranked by data-dissimilarity/proximity early on and by
// pull diversity/staleness similarity later, under per-worker bandwidth budgets.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "dystop/errors.hpp"

namespace dystop {

/// c_t^{puller,source} = 1: the puller fetches the source's model.
struct Edge {
  std::size_t puller;
  std::size_t source;
  friend bool operator==(const Edge&, const Edge&) = default;
};

struct TopologySnapshot {
  std::vector<std::vector<std::size_t>> in_neighbors;  // N_t^i, always contains i
  std::vector<std::vector<std::size_t>> out_neighbors; // N^_t^i, always contains i
  std::vector<Edge> edges;                             // in claim order
  std::vector<double> bandwidth_bits;                  // B_t^i

  explicit TopologySnapshot(std::size_t n = 0) : in_neighbors(n), out_neighbors(n), bandwidth_bits(n, 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      in_neighbors[i].push_back(i);
      out_neighbors[i].push_back(i);
    }
  }

  std::size_t size() const { return in_neighbors.size(); }

  void add_edge(std::size_t puller, std::size_t source, double model_cost_bits) {
    edges.push_back({puller, source});
    in_neighbors[puller].push_back(source);
    out_neighbors[source].push_back(puller);
    bandwidth_bits[puller] += model_cost_bits;
    bandwidth_bits[source] += model_cost_bits;
  }

  std::size_t in_degree(std::size_t i) const { return in_neighbors[i].size() - 1; }
  std::size_t out_degree(std::size_t i) const { return out_neighbors[i].size() - 1; }

  double total_bandwidth() const {
    double s = 0.0;
    for (double b : bandwidth_bits) s += b;
    return s;
  }
};

/// Pull(i, j): how many times worker i has pulled from worker j.
class PullHistory {
public:
  explicit PullHistory(std::size_t n = 0) : n_(n), counts_(n * n, 0) {}

  std::uint64_t count(std::size_t puller, std::size_t source) const { return counts_[puller * n_ + source]; }
  void increment(std::size_t puller, std::size_t source) { ++counts_[puller * n_ + source]; }
  std::size_t size() const { return n_; }

private:
  std::size_t n_;
  std::vector<std::uint64_t> counts_;
};

/// EMD/EMD_max + (1 - Dist/Dist_max). A zero EMD_max makes the first term 0,
/// a zero Dist_max makes the second term 1.
inline double priority_phase1(double emd_ij, double emd_max, double dist_ij, double dist_max) {
  const double e = emd_max > 0.0 ? emd_ij / emd_max : 0.0;
  const double d = dist_max > 0.0 ? 1.0 - dist_ij / dist_max : 1.0;
  return e + d;
}

/// (1 - Pull/t) / (1 + |tau_i - tau_j|)
inline double priority_phase2(std::uint64_t pulls, int t, int tau_i, int tau_j) {
  if (t < 1) throw InvalidInput("priority_phase2: round must be >= 1");
  return (1.0 - static_cast<double>(pulls) / static_cast<double>(t)) / (1.0 + std::abs(tau_i - tau_j));
}

/// Everything the two priority functions read, with the phase switch.
struct PriorityInputs {
  const std::vector<std::vector<double>>* emd = nullptr;
  const std::vector<std::vector<double>>* dist = nullptr;
  double emd_max = 0.0;
  double dist_max = 0.0;
  const PullHistory* pulls = nullptr;
  std::span<const int> tau;
  int round = 1;
  int phase_threshold = 0; // phase 1 while round <= threshold

  bool phase1() const { return round <= phase_threshold; }

  double operator()(std::size_t i, std::size_t j) const {
    if (phase1()) return priority_phase1((*emd)[i][j], emd_max, (*dist)[i][j], dist_max);
    return priority_phase2(pulls->count(i, j), round, tau[i], tau[j]);
  }
};

using PriorityFn = std::function<double(std::size_t, std::size_t)>;

/// Candidates of i in descending priority, ties by ascending id.
inline std::vector<std::size_t> rank_candidates(std::size_t i, std::span<const std::size_t> candidates,
                                                const PriorityFn& priority) {
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(candidates.size());
  for (auto j : candidates)
    if (j != i) scored.emplace_back(priority(i, j), j);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::size_t> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back(s.second);
  return out;
}

/// Round-robin neighbor claiming. In each sweep every activated worker with
/// room in its own budget (and under the in-degree cap, when set) takes its
/// best remaining candidate whose budget still fits one more transfer;
/// exhausted candidates are dropped. Both endpoints are charged. Stops when a
/// sweep leaves total consumption unchanged.
inline TopologySnapshot ptca(std::span<const std::size_t> active,
                             const std::vector<std::vector<std::size_t>>& candidates, std::span<const double> budgets,
                             double model_cost_bits, std::size_t in_degree_cap, const PriorityFn& priority) {
  const std::size_t n = candidates.size();
  if (budgets.size() != n) throw InvalidInput("ptca: budget vector size mismatch");
  TopologySnapshot snap(n);

  std::vector<std::deque<std::size_t>> ranked(n);
  for (auto i : active) {
    auto r = rank_candidates(i, candidates[i], priority);
    ranked[i].assign(r.begin(), r.end());
  }

  double last_total = 0.0;
  for (;;) {
    for (auto i : active) {
      if (snap.bandwidth_bits[i] + model_cost_bits > budgets[i]) continue;
      if (in_degree_cap > 0 && snap.in_degree(i) >= in_degree_cap) continue;
      auto& list = ranked[i];
      while (!list.empty()) {
        const std::size_t j = list.front();
        list.pop_front();
        if (snap.bandwidth_bits[j] + model_cost_bits > budgets[j]) continue;
        snap.add_edge(i, j, model_cost_bits);
        break;
      }
    }
    const double total = snap.total_bandwidth();
    if (total == last_total) break;
    last_total = total;
  }
  return snap;
}

/// Every activated worker takes every candidate, no budgets: the dense
/// neighborhood used by the baselines.
inline TopologySnapshot full_neighborhood(std::span<const std::size_t> active,
                                          const std::vector<std::vector<std::size_t>>& candidates,
                                          double model_cost_bits) {
  TopologySnapshot snap(candidates.size());
  for (auto i : active)
    for (auto j : candidates[i])
      if (j != i) snap.add_edge(i, j, model_cost_bits);
  return snap;
}

inline void record_pulls(const TopologySnapshot& snap, PullHistory& pulls) {
  for (const auto& e : snap.edges)
    if (e.puller != e.source) pulls.increment(e.puller, e.source);
}

/// round,puller,source rows
inline void write_topology_csv(std::ostream& os, int round, const TopologySnapshot& snap) {
  for (const auto& e : snap.edges) os << round << ',' << e.puller << ',' << e.source << '\n';
}

} // namespace dystop
