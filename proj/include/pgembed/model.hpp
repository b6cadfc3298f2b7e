#pragma once

#include <cmath>
#include <numbers>

#include "pgembed/types.hpp"

namespace pgembed {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log sigma(x), stable for |x| large (never forms sigma then logs).
inline double log_sigmoid(double x) {
  return x < 0.0 ? x - std::log1p(std::exp(x)) : -std::log1p(std::exp(-x));
}

inline double sigmoid_deriv(double x) {
  const double s = sigmoid(x);
  return s * (1.0 - s);
}

/// Aggregated SGNS log likelihood:
///   sum over stored pairs of n+ log sigma(rho_w . alpha_v)
///                          + n- log(1 - sigma(rho_w . alpha_v)).
inline double log_likelihood(const PairStats& stats,
                             const EmbeddingState& theta) {
  if (!theta.all_finite())
    throw invalid_input("log_likelihood: non-finite parameter entries");
  if (!stats.entries.empty()) {
    if (stats.V > theta.V()) throw invalid_input("stats V exceeds theta V");
  }
  double total = 0.0;
  for (const auto& e : stats.entries) {
    const double dot = theta.rho.row(e.w).dot(theta.alpha.row(e.v));
    total += static_cast<double>(e.n_pos) * log_sigmoid(dot) +
             static_cast<double>(e.n_neg) * log_sigmoid(-dot);
  }
  return total;
}

/// Spherical Gaussian log prior over all entries of rho and alpha.
/// Constrained alpha rows are fixed constants and excluded from the sum.
inline double log_prior(const EmbeddingState& theta, const PriorSpec& prior,
                        const IdentificationConstraint* constraint = nullptr) {
  if (!theta.all_finite())
    throw invalid_input("log_prior: non-finite parameter entries");
  const double lambda = prior.lambda;
  const int K = theta.K();
  double ssq = theta.rho.squaredNorm() + theta.alpha.squaredNorm();
  std::int64_t n_entries = 2ll * theta.V() * K;
  if (constraint) {
    for (int id : constraint->indices) {
      ssq -= theta.alpha.row(id).squaredNorm();
      n_entries -= K;
    }
  }
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  return -0.5 * lambda * ssq +
         0.5 * static_cast<double>(n_entries) * (std::log(lambda) - log_2pi);
}

inline double log_posterior(const PairStats& stats, const EmbeddingState& theta,
                            const PriorSpec& prior,
                            const IdentificationConstraint* constraint = nullptr) {
  return log_likelihood(stats, theta) + log_prior(theta, prior, constraint);
}

struct Gradient {
  MatrixXd d_rho;
  MatrixXd d_alpha;
};

/// Analytic gradient of log_posterior. Rows of d_alpha at constrained ids
/// are zero when a constraint is active.
inline Gradient grad_log_posterior(
    const PairStats& stats, const EmbeddingState& theta, const PriorSpec& prior,
    const IdentificationConstraint* constraint = nullptr) {
  if (!theta.all_finite())
    throw invalid_input("grad_log_posterior: non-finite parameter entries");
  Gradient g{-prior.lambda * theta.rho, -prior.lambda * theta.alpha};
  for (const auto& e : stats.entries) {
    const double dot = theta.rho.row(e.w).dot(theta.alpha.row(e.v));
    const double b = static_cast<double>(e.n_pos + e.n_neg);
    const double resid = static_cast<double>(e.n_pos) - b * sigmoid(dot);
    g.d_rho.row(e.w) += resid * theta.alpha.row(e.v);
    g.d_alpha.row(e.v) += resid * theta.rho.row(e.w);
  }
  if (constraint) {
    for (int id : constraint->indices) g.d_alpha.row(id).setZero();
  }
  return g;
}

/// Co-occurrence probability sigma(rho_w . alpha_v).
inline double co_prob(const EmbeddingState& theta, int w, int v) {
  if (w < 0 || w >= theta.V() || v < 0 || v >= theta.V())
    throw invalid_input("co_prob: word id out of range");
  return sigmoid(theta.rho.row(w).dot(theta.alpha.row(v)));
}

/// All V x V co-occurrence probabilities; (w, v) entry = co_prob(theta, w, v).
inline MatrixXd co_prob_matrix(const EmbeddingState& theta) {
  MatrixXd p = theta.rho * theta.alpha.transpose();
  for (int j = 0; j < p.cols(); ++j)
    for (int i = 0; i < p.rows(); ++i) p(i, j) = sigmoid(p(i, j));
  return p;
}

/// Root mean squared difference of co-occurrence probabilities over all
/// V^2 ordered pairs. Invariant under invertible linear reparameterization.
inline double rmse_co(const EmbeddingState& a, const EmbeddingState& b) {
  if (a.V() != b.V())
    throw invalid_input("rmse_co: vocabulary sizes differ");
  const double V = static_cast<double>(a.V());
  return std::sqrt((co_prob_matrix(a) - co_prob_matrix(b)).squaredNorm() /
                   (V * V));
}

/// Map theta onto the representative with alpha rows at `constraint.indices`
/// equal to M, preserving the likelihood:
///   rho'   = rho (alpha_I^-1 M)^-T
///   alpha' = alpha alpha_I^-1 M
inline EmbeddingState canonicalize(const EmbeddingState& theta,
                                   const IdentificationConstraint& constraint) {
  const int K = theta.K();
  if (constraint.K() != K) throw invalid_input("canonicalize: K mismatch");
  MatrixXd alpha_I(K, K);
  for (int i = 0; i < K; ++i)
    alpha_I.row(i) = theta.alpha.row(constraint.indices[i]);
  Eigen::JacobiSVD<MatrixXd> svd(alpha_I, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smin = svd.singularValues()(K - 1);
  if (smin <= 0.0 || svd.singularValues()(0) / smin > kMaxConditionNumber)
    throw numerical_error("canonicalize: alpha_I numerically singular");
  const MatrixXd T = alpha_I.partialPivLu().solve(constraint.M);  // alpha_I^-1 M
  EmbeddingState out;
  // rho' = rho T^-T, computed as (T^-1 rho^T)^T
  out.rho = T.partialPivLu().solve(theta.rho.transpose()).transpose();
  out.alpha = theta.alpha * T;
  for (int i = 0; i < K; ++i)
    out.alpha.row(constraint.indices[i]) = constraint.M.row(i);
  return out;
}

inline double cosine_similarity(const EmbeddingState& theta, int w, int v) {
  if (w < 0 || w >= theta.V() || v < 0 || v >= theta.V())
    throw invalid_input("cosine_similarity: word id out of range");
  const double nw = theta.rho.row(w).norm();
  const double nv = theta.rho.row(v).norm();
  if (nw == 0.0 || nv == 0.0)
    throw numerical_error("cosine_similarity: zero-norm target vector");
  return theta.rho.row(w).dot(theta.rho.row(v)) / (nw * nv);
}

}  // namespace pgembed
