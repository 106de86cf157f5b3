#pragma once

// Convex local learners (strongly convex quadratics and L2-regularized softmax
// regression), pull aggregation, the local SGD step and the global weighted
// model used for stopping and metrics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dystop/data.hpp"
#include "dystop/errors.hpp"
#include "dystop/rng.hpp"

namespace dystop {

using ModelVec = Eigen::VectorXd;

/// F(w) = 1/2 w'Aw - b'w with A symmetric positive definite.
struct QuadraticObjective {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  double mu = 0.0; // min eigenvalue of A
  double L = 0.0;  // max eigenvalue of A
  double grad_noise_sigma = 0.0;
  std::size_t data_size = 1;
};

/// Multinomial logistic regression with L2 penalty. Parameters are the
/// column-major flattening of a C x (f+1) weight matrix, last column the bias.
struct LogisticObjective {
  std::shared_ptr<const LocalDataset> data;
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  double l2 = 0.0;
};

struct LearnerObjective {
  std::variant<QuadraticObjective, LogisticObjective> impl;

  bool is_quadratic() const { return std::holds_alternative<QuadraticObjective>(impl); }

  std::size_t dimension() const {
    if (auto q = std::get_if<QuadraticObjective>(&impl)) return static_cast<std::size_t>(q->b.size());
    const auto& l = std::get<LogisticObjective>(impl);
    return l.num_classes * (l.feature_dim + 1);
  }
  std::size_t data_size() const {
    if (auto q = std::get_if<QuadraticObjective>(&impl)) return q->data_size;
    return std::get<LogisticObjective>(impl).data->size();
  }
  std::optional<double> known_mu() const {
    if (auto q = std::get_if<QuadraticObjective>(&impl)) return q->mu;
    const auto& l = std::get<LogisticObjective>(impl);
    if (l.l2 > 0.0) return l.l2;
    return std::nullopt;
  }
  // The softmax smoothness constant is only a loose bound, so it is not reported.
  std::optional<double> known_L() const {
    if (auto q = std::get_if<QuadraticObjective>(&impl)) return q->L;
    return std::nullopt;
  }
};

enum class EtaPolicy { clamp, error };

namespace detail {

inline void check_dim(const LearnerObjective& obj, const ModelVec& w) {
  if (static_cast<std::size_t>(w.size()) != obj.dimension()) throw InvalidInput("model dimension mismatch");
}

inline void check_finite(const ModelVec& w, const char* where) {
  if (!w.allFinite()) throw NonFiniteError(std::string(where) + ": non-finite model entries");
}

// Cross-entropy on sample s and accumulate its gradient into `grad` (if given).
inline double softmax_sample(const LogisticObjective& l, const Eigen::Map<const Eigen::MatrixXd>& W, std::size_t s,
                             Eigen::Map<Eigen::MatrixXd>* grad, double scale) {
  const auto& x = l.data->features[s];
  const auto f = static_cast<Eigen::Index>(l.feature_dim);
  Eigen::VectorXd logits = W.leftCols(f) * x + W.col(f);
  const double mx = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - mx).exp();
  const double z = p.sum();
  p /= z;
  const int y = l.data->labels[s];
  double loss = -(logits[y] - mx - std::log(z));
  if (grad) {
    p[y] -= 1.0;
    grad->leftCols(f).noalias() += scale * p * x.transpose();
    grad->col(f) += scale * p;
  }
  return loss;
}

inline Eigen::Map<const Eigen::MatrixXd> weights_view(const LogisticObjective& l, const ModelVec& w) {
  return {w.data(), static_cast<Eigen::Index>(l.num_classes), static_cast<Eigen::Index>(l.feature_dim + 1)};
}

} // namespace detail

inline double local_loss(const LearnerObjective& obj, const ModelVec& w) {
  detail::check_dim(obj, w);
  if (auto q = std::get_if<QuadraticObjective>(&obj.impl)) return 0.5 * w.dot(q->A * w) - q->b.dot(w);
  const auto& l = std::get<LogisticObjective>(obj.impl);
  if (l.data->empty()) throw InvalidInput("local_loss: empty dataset");
  auto W = detail::weights_view(l, w);
  double s = 0.0;
  for (std::size_t i = 0; i < l.data->size(); ++i) s += detail::softmax_sample(l, W, i, nullptr, 0.0);
  return s / static_cast<double>(l.data->size()) + 0.5 * l.l2 * w.squaredNorm();
}

inline ModelVec full_gradient(const LearnerObjective& obj, const ModelVec& w) {
  detail::check_dim(obj, w);
  if (auto q = std::get_if<QuadraticObjective>(&obj.impl)) return q->A * w - q->b;
  const auto& l = std::get<LogisticObjective>(obj.impl);
  if (l.data->empty()) throw InvalidInput("full_gradient: empty dataset");
  ModelVec g = ModelVec::Zero(w.size());
  Eigen::Map<Eigen::MatrixXd> G(g.data(), static_cast<Eigen::Index>(l.num_classes),
                                static_cast<Eigen::Index>(l.feature_dim + 1));
  auto W = detail::weights_view(l, w);
  const double scale = 1.0 / static_cast<double>(l.data->size());
  for (std::size_t i = 0; i < l.data->size(); ++i) detail::softmax_sample(l, W, i, &G, scale);
  g += l.l2 * w;
  return g;
}

/// Unbiased gradient estimate. Quadratic: exact gradient plus N(0, sigma^2 I)
/// noise. Logistic: mean over `batch_size` samples drawn without replacement;
/// a batch of the whole dataset gives the full gradient.
inline ModelVec stochastic_gradient(const LearnerObjective& obj, const ModelVec& w, std::size_t batch_size,
                                    Rng& rng) {
  detail::check_dim(obj, w);
  if (batch_size == 0) throw InvalidInput("stochastic_gradient: batch_size must be >= 1");
  if (auto q = std::get_if<QuadraticObjective>(&obj.impl)) {
    ModelVec g = q->A * w - q->b;
    if (q->grad_noise_sigma > 0.0) {
      std::normal_distribution<double> n(0.0, q->grad_noise_sigma);
      for (Eigen::Index d = 0; d < g.size(); ++d) g[d] += n(rng);
    }
    return g;
  }
  const auto& l = std::get<LogisticObjective>(obj.impl);
  const std::size_t n = l.data->size();
  if (n == 0) throw InvalidInput("stochastic_gradient: empty dataset");
  if (batch_size >= n) return full_gradient(obj, w);

  // partial Fisher-Yates for a sample without replacement
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < batch_size; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  ModelVec g = ModelVec::Zero(w.size());
  Eigen::Map<Eigen::MatrixXd> G(g.data(), static_cast<Eigen::Index>(l.num_classes),
                                static_cast<Eigen::Index>(l.feature_dim + 1));
  auto W = detail::weights_view(l, w);
  const double scale = 1.0 / static_cast<double>(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) detail::softmax_sample(l, W, idx[i], &G, scale);
  g += l.l2 * w;
  return g;
}

struct WeightedModel {
  std::reference_wrapper<const ModelVec> model;
  double data_size;
};

/// Data-size weighted average of the pulled models (weights D_j / sum D).
inline ModelVec aggregate(std::span<const WeightedModel> models) {
  if (models.empty()) throw InvalidInput("aggregate: no models");
  const auto dim = models.front().model.get().size();
  double total = 0.0;
  for (const auto& m : models) {
    if (m.model.get().size() != dim) throw InvalidInput("aggregate: dimension mismatch");
    if (!(m.data_size > 0.0)) throw InvalidInput("aggregate: non-positive data size");
    total += m.data_size;
  }
  ModelVec out = ModelVec::Zero(dim);
  for (const auto& m : models) out += (m.data_size / total) * m.model.get();
  return out;
}

/// Largest step size for which the single-step contraction argument holds.
inline std::optional<double> step_size_bound(const LearnerObjective& obj) {
  auto mu = obj.known_mu();
  auto L = obj.known_L();
  if (!mu || !L) return std::nullopt;
  return *mu / (2.0 * *L * *L);
}

/// Returns the step size to use. Under `clamp`, a step at or above the bound
/// is pulled to 0.99 of it; under `error` it throws.
inline double admissible_eta(const LearnerObjective& obj, double eta, EtaPolicy policy) {
  if (!(eta > 0.0)) throw InvalidInput("sgd_step: eta must be > 0");
  auto bound = step_size_bound(obj);
  if (!bound || eta < *bound) return eta;
  if (policy == EtaPolicy::error) throw InvalidInput("sgd_step: eta violates eta < mu / (2 L^2)");
  return 0.99 * *bound;
}

inline ModelVec sgd_step(const LearnerObjective& obj, const ModelVec& w_hat, double eta, std::size_t batch_size,
                         Rng& rng, EtaPolicy policy = EtaPolicy::clamp) {
  const double step = admissible_eta(obj, eta, policy);
  ModelVec out = w_hat - step * stochastic_gradient(obj, w_hat, batch_size, rng);
  detail::check_finite(out, "sgd_step");
  return out;
}

/// alpha_i = D_i / D
inline std::vector<double> data_weights(std::span<const std::size_t> sizes) {
  double total = 0.0;
  for (auto s : sizes) total += static_cast<double>(s);
  std::vector<double> a(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) a[i] = static_cast<double>(sizes[i]) / total;
  return a;
}

inline ModelVec global_weighted_model(std::span<const ModelVec> models, std::span<const std::size_t> sizes) {
  if (models.empty()) throw InvalidInput("global_weighted_model: no workers");
  if (models.size() != sizes.size()) throw InvalidInput("global_weighted_model: size mismatch");
  auto alpha = data_weights(sizes);
  ModelVec w = ModelVec::Zero(models.front().size());
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].size() != w.size()) throw InvalidInput("global_weighted_model: dimension mismatch");
    w += alpha[i] * models[i];
  }
  return w;
}

/// sum_i alpha_i F_i(w)
inline double global_loss(std::span<const LearnerObjective> objectives, std::span<const double> alpha,
                          const ModelVec& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < objectives.size(); ++i) s += alpha[i] * local_loss(objectives[i], w);
  return s;
}

inline ModelVec global_gradient(std::span<const LearnerObjective> objectives, std::span<const double> alpha,
                                const ModelVec& w) {
  ModelVec g = ModelVec::Zero(w.size());
  for (std::size_t i = 0; i < objectives.size(); ++i) g += alpha[i] * full_gradient(objectives[i], w);
  return g;
}

/// Fraction of `test` predicted correctly by a softmax model.
inline double accuracy(const LogisticObjective& l, const ModelVec& w, const LocalDataset& test) {
  if (test.empty()) return 0.0;
  auto W = detail::weights_view(l, w);
  const auto f = static_cast<Eigen::Index>(l.feature_dim);
  std::size_t hit = 0;
  for (std::size_t s = 0; s < test.size(); ++s) {
    Eigen::VectorXd logits = W.leftCols(f) * test.features[s] + W.col(f);
    Eigen::Index arg = 0;
    logits.maxCoeff(&arg);
    hit += static_cast<int>(arg) == test.labels[s];
  }
  return static_cast<double>(hit) / static_cast<double>(test.size());
}

/// Diagnostic: max_i ||grad F_i(w) - grad F(w)||, the observed gradient divergence.
inline double gradient_divergence(std::span<const LearnerObjective> objectives, std::span<const double> alpha,
                                  const ModelVec& w) {
  ModelVec g = global_gradient(objectives, alpha, w);
  double mx = 0.0;
  for (const auto& o : objectives) mx = std::max(mx, (full_gradient(o, w) - g).norm());
  return mx;
}

/// Diagnostic: Monte Carlo estimate of E||grad F_i(w; batch)||^2. Evaluated at
/// the worker's local optimum this is the local gradient noise level g_i*.
inline double mean_sq_stochastic_gradient(const LearnerObjective& obj, const ModelVec& w, std::size_t batch_size,
                                          std::size_t samples, Rng& rng) {
  if (samples == 0) return 0.0;
  double s = 0.0;
  for (std::size_t k = 0; k < samples; ++k) s += stochastic_gradient(obj, w, batch_size, rng).squaredNorm();
  return s / static_cast<double>(samples);
}

// ---------------------------------------------------------------------------
// Quadratic ensembles

struct QuadraticEnsembleParams {
  std::size_t dim = 10;
  double mu = 0.1;
  double L = 1.0;
  double optimum_offset = 1.0; // shared component of every class optimum
  double class_spread = 1.0;   // scale of the per-class deviation; drives gradient divergence
  double grad_noise_sigma = 0.0;
};

/// A_i = Q_i diag(lambda) Q_i' with lambda spanning [mu, L] (both endpoints
/// present when dim >= 2). The local optimum of worker i is the mixture of
/// per-class optima weighted by its class histogram, so skewed histograms
/// pull local optima apart.
inline std::vector<LearnerObjective> make_quadratic_ensemble(const std::vector<ClassHistogram>& histograms,
                                                             const QuadraticEnsembleParams& p, Rng& rng) {
  if (p.dim == 0) throw ConfigError("dim", "must be >= 1");
  if (!(p.mu > 0.0) || !(p.L >= p.mu)) throw ConfigError("mu", "need 0 < mu <= L");
  const auto d = static_cast<Eigen::Index>(p.dim);
  const std::size_t n_classes = histograms.empty() ? 0 : histograms.front().num_classes();
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(p.mu, p.L);

  std::vector<Eigen::VectorXd> class_opt(n_classes);
  for (auto& m : class_opt) {
    m = Eigen::VectorXd::Constant(d, p.optimum_offset);
    for (Eigen::Index k = 0; k < d; ++k) m[k] += p.class_spread * gauss(rng);
  }

  std::vector<LearnerObjective> out;
  out.reserve(histograms.size());
  for (const auto& h : histograms) {
    Eigen::MatrixXd G(d, d);
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index c = 0; c < d; ++c) G(r, c) = gauss(rng);
    Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(G).householderQ();
    Eigen::VectorXd lambda(d);
    for (Eigen::Index k = 0; k < d; ++k) lambda[k] = unif(rng);
    lambda[0] = p.mu;
    if (d >= 2) lambda[1] = p.L;

    QuadraticObjective q;
    q.A = Q * lambda.asDiagonal() * Q.transpose();
    q.A = 0.5 * (q.A + q.A.transpose());
    q.mu = p.mu;
    q.L = d >= 2 ? p.L : p.mu;
    q.grad_noise_sigma = p.grad_noise_sigma;
    q.data_size = std::max<std::size_t>(h.total(), 1);

    Eigen::VectorXd local_opt = Eigen::VectorXd::Zero(d);
    const double tot = static_cast<double>(h.total());
    for (std::size_t k = 0; k < n_classes && tot > 0; ++k)
      local_opt += (static_cast<double>(h.counts[k]) / tot) * class_opt[k];
    q.b = q.A * local_opt;
    out.push_back(LearnerObjective{std::move(q)});
  }
  return out;
}

inline ModelVec quadratic_local_optimum(const QuadraticObjective& q) { return q.A.ldlt().solve(q.b); }

/// Minimizer of sum_i alpha_i F_i for quadratic objectives.
inline ModelVec quadratic_optimum(std::span<const LearnerObjective> objectives, std::span<const double> alpha) {
  if (objectives.empty()) throw InvalidInput("quadratic_optimum: no objectives");
  const auto d = static_cast<Eigen::Index>(objectives.front().dimension());
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(d);
  for (std::size_t i = 0; i < objectives.size(); ++i) {
    const auto& q = std::get<QuadraticObjective>(objectives[i].impl);
    H += alpha[i] * q.A;
    c += alpha[i] * q.b;
  }
  return H.ldlt().solve(c);
}

} // namespace dystop
