#pragma once

// Synthetic non-IID data: Dirichlet class partitioning, per-worker datasets
// drawn around class means, and the class-histogram EMD between workers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <ostream>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "dystop/errors.hpp"
#include "dystop/rng.hpp"

namespace dystop {

struct ClassHistogram {
  std::vector<std::size_t> counts; // D_i^k

  std::size_t total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }
  std::size_t num_classes() const { return counts.size(); }
};

struct LocalDataset {
  std::vector<Eigen::VectorXd> features;
  std::vector<int> labels;
  ClassHistogram histogram;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
};

namespace detail {

/// Split `total` units proportionally to `weights` (need not be normalized),
/// handing leftovers to the largest fractional parts, ties to the lower index.
inline std::vector<std::size_t> largest_remainder(std::size_t total, const std::vector<double>& weights) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> out(weights.size(), 0);
  std::vector<double> frac(weights.size(), 0.0);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    double exact = static_cast<double>(total) * weights[i] / wsum;
    double fl = std::floor(exact);
    out[i] = static_cast<std::size_t>(fl);
    frac[i] = exact - fl;
    assigned += out[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  // floating error can leave assigned slightly off in either direction
  for (std::size_t k = 0; assigned < total; k = (k + 1) % order.size(), ++assigned) ++out[order[k]];
  for (std::size_t k = order.size(); assigned > total;) {
    k = (k == 0 ? order.size() : k) - 1;
    if (out[order[k]] > 0) {
      --out[order[k]];
      --assigned;
    }
  }
  return out;
}

inline std::vector<double> dirichlet_draw(std::size_t n, double phi, Rng& rng) {
  std::gamma_distribution<double> gamma(phi, 1.0);
  std::vector<double> w(n);
  for (;;) {
    double s = 0.0;
    for (auto& x : w) s += (x = gamma(rng));
    if (s > 0.0 && std::isfinite(s)) return w;
  }
}

} // namespace detail

/// Per class, draw worker proportions from Dirichlet(phi) and allocate the
/// class's samples by largest remainder. Column sums equal `global_counts`;
/// no worker is left empty (up to 100 redraws, then one sample moves from
/// the largest holder to each empty worker).
inline std::vector<ClassHistogram> dirichlet_partition(const std::vector<std::size_t>& global_counts,
                                                       std::size_t n_workers, double phi, Rng& rng) {
  if (!(phi > 0.0)) throw ConfigError("phi", "Dirichlet concentration must be > 0");
  if (n_workers == 0) throw ConfigError("n_workers", "must be >= 1");
  const std::size_t total = std::accumulate(global_counts.begin(), global_counts.end(), std::size_t{0});
  if (total < n_workers) throw ConfigError("samples_per_class", "fewer samples than workers");

  const std::size_t n_classes = global_counts.size();
  std::vector<ClassHistogram> out;
  auto empty_workers = [&] {
    std::size_t e = 0;
    for (const auto& h : out) e += h.total() == 0;
    return e;
  };
  for (int attempt = 0; attempt < 100; ++attempt) {
    out.assign(n_workers, ClassHistogram{std::vector<std::size_t>(n_classes, 0)});
    for (std::size_t k = 0; k < n_classes; ++k) {
      auto alloc = detail::largest_remainder(global_counts[k], detail::dirichlet_draw(n_workers, phi, rng));
      for (std::size_t i = 0; i < n_workers; ++i) out[i].counts[k] = alloc[i];
    }
    if (empty_workers() == 0) return out;
  }
  for (std::size_t i = 0; i < n_workers; ++i) {
    if (out[i].total() != 0) continue;
    auto donor = std::max_element(out.begin(), out.end(),
                                  [](const auto& a, const auto& b) { return a.total() < b.total(); });
    auto cls = std::max_element(donor->counts.begin(), donor->counts.end()) - donor->counts.begin();
    --donor->counts[cls];
    ++out[i].counts[cls];
  }
  return out;
}

/// Exact IID reference: every class split as evenly as integers allow. The
/// leftover of class k goes to workers starting at an offset that rotates
/// with k so totals stay balanced.
inline std::vector<ClassHistogram> iid_exact_partition(const std::vector<std::size_t>& global_counts,
                                                       std::size_t n_workers) {
  if (n_workers == 0) throw ConfigError("n_workers", "must be >= 1");
  std::vector<ClassHistogram> out(n_workers, ClassHistogram{std::vector<std::size_t>(global_counts.size(), 0)});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < global_counts.size(); ++k) {
    std::size_t base = global_counts[k] / n_workers, rem = global_counts[k] % n_workers;
    for (std::size_t i = 0; i < n_workers; ++i) out[i].counts[k] = base;
    for (std::size_t r = 0; r < rem; ++r) ++out[(offset + r) % n_workers].counts[k];
    offset = (offset + rem) % n_workers;
  }
  return out;
}

/// L1 distance between the normalized class histograms.
inline double emd(const ClassHistogram& a, const ClassHistogram& b) {
  const double ta = static_cast<double>(a.total()), tb = static_cast<double>(b.total());
  if (ta == 0.0 || tb == 0.0) throw InvalidInput("emd: histogram with zero total");
  if (a.num_classes() != b.num_classes()) throw InvalidInput("emd: class count mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.num_classes(); ++k)
    s += std::abs(static_cast<double>(a.counts[k]) / ta - static_cast<double>(b.counts[k]) / tb);
  return s;
}

inline std::vector<std::vector<double>> emd_matrix(const std::vector<ClassHistogram>& hs) {
  const std::size_t n = hs.size();
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m[i][j] = m[j][i] = emd(hs[i], hs[j]);
  return m;
}

/// Class means at scaled one-hot-like vertices: class k sits at scale * e_(k mod dim).
/// When there are more classes than dimensions, later classes get a sign flip.
inline std::vector<Eigen::VectorXd> default_class_means(std::size_t n_classes, std::size_t feature_dim,
                                                        double scale) {
  std::vector<Eigen::VectorXd> means(n_classes, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(feature_dim)));
  for (std::size_t k = 0; k < n_classes; ++k) {
    double sign = ((k / feature_dim) % 2 == 0) ? 1.0 : -1.0;
    means[k][static_cast<Eigen::Index>(k % feature_dim)] = sign * scale;
  }
  return means;
}

inline LocalDataset synth_dataset(const ClassHistogram& h, std::size_t feature_dim,
                                  const std::vector<Eigen::VectorXd>& class_means, double noise_sigma, Rng& rng) {
  if (feature_dim == 0) throw InvalidInput("synth_dataset: feature_dim must be >= 1");
  if (class_means.size() < h.num_classes()) throw InvalidInput("synth_dataset: missing class means");
  LocalDataset ds;
  ds.histogram = h;
  ds.features.reserve(h.total());
  ds.labels.reserve(h.total());
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t k = 0; k < h.num_classes(); ++k) {
    if (static_cast<std::size_t>(class_means[k].size()) != feature_dim)
      throw InvalidInput("synth_dataset: class mean dimension mismatch");
    for (std::size_t s = 0; s < h.counts[k]; ++s) {
      Eigen::VectorXd x = class_means[k];
      if (noise_sigma > 0.0)
        for (Eigen::Index d = 0; d < x.size(); ++d) x[d] += noise_sigma * noise(rng);
      ds.features.push_back(std::move(x));
      ds.labels.push_back(static_cast<int>(k));
    }
  }
  return ds;
}

/// worker,class_0,...,class_{C-1},total
inline void write_histograms_csv(std::ostream& os, const std::vector<ClassHistogram>& hs) {
  os << "worker";
  const std::size_t c = hs.empty() ? 0 : hs.front().num_classes();
  for (std::size_t k = 0; k < c; ++k) os << ",class_" << k;
  os << ",total\n";
  for (std::size_t i = 0; i < hs.size(); ++i) {
    os << i;
    for (auto v : hs[i].counts) os << ',' << v;
    os << ',' << hs[i].total() << '\n';
  }
}

} // namespace dystop
