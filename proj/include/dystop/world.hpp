#pragma once

// Physical edge environment: placement, path-loss fading, Shannon rates,
// compute heterogeneity and per-round bandwidth budgets.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "dystop/errors.hpp"
#include "dystop/rng.hpp"

namespace dystop {

struct Position {
  double x = 0.0; // meters
  double y = 0.0;
};

struct ChannelModel {
  double path_loss_constant_db = -43.0; // G0 at the 1 m reference distance
  double noise_power_w = 1e-13;
  double channel_bandwidth_hz = 1e6;
  double path_loss_exponent = 4.0;
  double min_distance_m = 1.0;

  double path_loss_constant_linear() const { return std::pow(10.0, path_loss_constant_db / 10.0); }
  double mean_gain(double dist) const {
    return path_loss_constant_linear() * std::pow(std::max(dist, min_distance_m), -path_loss_exponent);
  }
};

struct ComputeProfile {
  double per_batch_time_s = 1.0;
  int local_steps_per_round = 1;
  double transmit_power_w = 0.01;

  /// Local training time h_i of one activation.
  double training_time() const { return per_batch_time_s * local_steps_per_round; }
};

struct BandwidthBudget {
  double base_bits = 0.0;
  double fluctuation = 0.0; // relative half-width of the uniform per-round jitter
  double floor_bits = 0.0;  // never go below this (one model transfer by default)
};

inline double distance(const Position& a, const Position& b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// One exponential fading draw with mean G0 * dist^-4. Distances below the
/// reference distance are clamped to it.
template <typename Engine>
double channel_gain(double dist, const ChannelModel& ch, Engine& rng) {
  std::exponential_distribution<double> exp_dist(1.0 / ch.mean_gain(dist));
  return exp_dist(rng);
}

/// Shannon rate b * log2(1 + p g / noise) in bits per second.
inline double transmission_rate(double gain, double tx_power_w, const ChannelModel& ch) {
  return ch.channel_bandwidth_hz * std::log2(1.0 + tx_power_w * gain / ch.noise_power_w);
}

inline double transfer_time(double model_bits, double rate_bps) {
  if (!(rate_bps > 0.0)) throw LinkUnavailable("transfer_time: link rate is zero");
  return model_bits / rate_bps;
}

inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

inline std::vector<Position> place_workers(std::size_t n, double region_size, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, region_size);
  std::vector<Position> out(n);
  for (auto& p : out) {
    p.x = u(rng);
    p.y = u(rng);
  }
  return out;
}

/// Transmit powers uniform in [min_dbm, max_dbm], scaled by a N(1, sigma)
/// fluctuation clamped to stay positive.
inline std::vector<double> draw_transmit_powers(std::size_t n, double min_dbm, double max_dbm, double sigma,
                                                Rng& rng) {
  std::uniform_real_distribution<double> u(min_dbm, max_dbm);
  std::normal_distribution<double> fluct(1.0, sigma);
  std::vector<double> out(n);
  for (auto& p : out) {
    double dbm = u(rng);
    double f = sigma > 0.0 ? fluct(rng) : 1.0;
    p = dbm_to_watts(dbm) * std::max(f, 0.05);
  }
  return out;
}

/// Per-batch times: base * spread^u (u uniform in [0,1]) times a N(1, sigma)
/// coefficient, clamped to stay positive. spread = 1 and sigma = 0 gives a
/// homogeneous fleet.
inline std::vector<double> draw_batch_times(std::size_t n, double base_s, double spread, double sigma, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> coeff(1.0, sigma);
  std::vector<double> out(n);
  for (auto& z : out) {
    double a = u(rng);
    double c = sigma > 0.0 ? coeff(rng) : 1.0;
    z = base_s * std::pow(spread, a) * std::max(c, 0.1);
  }
  return out;
}

inline std::vector<std::vector<double>> distance_matrix(const std::vector<Position>& pos) {
  const std::size_t n = pos.size();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d[i][j] = d[j][i] = distance(pos[i], pos[j]);
  return d;
}

inline bool disk_graph_connected(const std::vector<std::vector<double>>& dist, double radius) {
  const std::size_t n = dist.size();
  if (n <= 1) return true;
  std::vector<char> seen(n, 0);
  std::vector<std::size_t> stack{0};
  seen[0] = 1;
  std::size_t count = 1;
  while (!stack.empty()) {
    auto i = stack.back();
    stack.pop_back();
    for (std::size_t j = 0; j < n; ++j) {
      if (!seen[j] && dist[i][j] <= radius) {
        seen[j] = 1;
        ++count;
        stack.push_back(j);
      }
    }
  }
  return count == n;
}

/// Smallest pairwise distance at which the disk graph is connected, found by
/// binary search over the sorted candidate distances.
inline double min_connecting_radius(const std::vector<std::vector<double>>& dist) {
  const std::size_t n = dist.size();
  if (n <= 1) return 0.0;
  std::vector<double> cand;
  cand.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) cand.push_back(dist[i][j]);
  std::sort(cand.begin(), cand.end());
  std::size_t lo = 0, hi = cand.size() - 1;
  while (lo < hi) {
    std::size_t mid = lo + (hi - lo) / 2;
    if (disk_graph_connected(dist, cand[mid]))
      hi = mid;
    else
      lo = mid + 1;
  }
  return cand[lo];
}

/// C_t^i without the worker itself (self-membership is implicit everywhere).
inline std::vector<std::vector<std::size_t>> communication_ranges(const std::vector<std::vector<double>>& dist,
                                                                  double radius) {
  const std::size_t n = dist.size();
  std::vector<std::vector<std::size_t>> out(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && dist[i][j] <= radius) out[i].push_back(j);
  return out;
}

template <typename Engine>
double draw_budget(const BandwidthBudget& b, Engine& rng) {
  double v = b.base_bits;
  if (b.fluctuation > 0.0) {
    std::uniform_real_distribution<double> u(-b.fluctuation, b.fluctuation);
    v *= 1.0 + u(rng);
  }
  return std::max(v, b.floor_bits);
}

} // namespace dystop
