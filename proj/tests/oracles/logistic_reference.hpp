#pragma once

// Plain-loop softmax cross-entropy with L2, parameters indexed as
// w[d * C + c] (class c, feature d; d == f is the bias).

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

inline double logistic_loss(const std::vector<std::vector<double>>& x, const std::vector<int>& y, std::size_t C,
                            std::size_t f, double l2, const std::vector<double>& w) {
  double total = 0.0;
  for (std::size_t s = 0; s < x.size(); ++s) {
    std::vector<double> z(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      z[c] = w[f * C + c];
      for (std::size_t d = 0; d < f; ++d) z[c] += w[d * C + c] * x[s][d];
    }
    double denom = 0.0;
    for (std::size_t c = 0; c < C; ++c) denom += std::exp(z[c]);
    total += std::log(denom) - z[static_cast<std::size_t>(y[s])];
  }
  double reg = 0.0;
  for (double v : w) reg += v * v;
  return total / static_cast<double>(x.size()) + 0.5 * l2 * reg;
}

} // namespace oracle
