#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "pgembed/model.hpp"
#include "pgembed/types.hpp"

namespace pgembed {

struct ScalarTrace {
  std::vector<double> values;
  std::string label;
};

struct CoverageReport {
  double level = 0.0;
  double fraction_covered = 0.0;
  std::int64_t pairs_evaluated = 0;
};

namespace diag_detail {

inline double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

/// Biased (1/M) autocovariance at lag t.
inline double autocov(const std::vector<double>& x, double mean, std::size_t t) {
  double s = 0.0;
  for (std::size_t i = 0; i + t < x.size(); ++i)
    s += (x[i] - mean) * (x[i + t] - mean);
  return s / static_cast<double>(x.size());
}

/// Empirical quantile with linear interpolation between order statistics.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = p * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace diag_detail

/// Effective sample size M / (1 + 2 sum rho_t), autocorrelations truncated
/// by Geyer's initial-positive-sequence rule; clamped to (0, M].
inline double ess(const ScalarTrace& trace) {
  const auto& x = trace.values;
  const std::size_t M = x.size();
  if (M < 10) throw invalid_input("ess: trace shorter than 10");
  const double mean = diag_detail::mean_of(x);
  const double c0 = diag_detail::autocov(x, mean, 0);
  if (c0 <= 0.0) throw numerical_error("ess: constant trace, ESS undefined");
  // tau = -1 + 2 * sum of positive (rho_{2m} + rho_{2m+1}) pairs
  double tau = 0.0;
  for (std::size_t m = 0; 2 * m + 1 < M; ++m) {
    const double pair = diag_detail::autocov(x, mean, 2 * m) / c0 +
                        diag_detail::autocov(x, mean, 2 * m + 1) / c0;
    if (pair <= 0.0) break;
    tau += 2.0 * pair;
  }
  tau -= 1.0;
  if (tau < 1e-12) tau = 1e-12;
  double result = static_cast<double>(M) / tau;
  return std::min(result, static_cast<double>(M));
}

/// Split-R-hat: each trace is halved, then the standard between/within
/// variance ratio statistic over the resulting half-chains.
inline double split_rhat(const std::vector<ScalarTrace>& traces) {
  if (traces.empty()) throw invalid_input("split_rhat: no traces");
  const std::size_t len = traces.front().values.size();
  if (len < 4) throw invalid_input("split_rhat: traces shorter than 4");
  for (const auto& t : traces)
    if (t.values.size() != len)
      throw invalid_input("split_rhat: traces have unequal lengths");

  const std::size_t m = len / 2;
  std::vector<std::pair<double, double>> chains;  // (mean, sample variance)
  for (const auto& t : traces) {
    for (int half = 0; half < 2; ++half) {
      const auto begin = t.values.begin() + (half == 0 ? 0 : len - m);
      double mu = 0.0;
      for (std::size_t i = 0; i < m; ++i) mu += begin[i];
      mu /= static_cast<double>(m);
      double var = 0.0;
      for (std::size_t i = 0; i < m; ++i) var += (begin[i] - mu) * (begin[i] - mu);
      var /= static_cast<double>(m - 1);
      chains.emplace_back(mu, var);
    }
  }
  const std::size_t n_chains = chains.size();
  double w = 0.0, grand = 0.0;
  for (const auto& [mu, var] : chains) {
    w += var;
    grand += mu;
  }
  w /= static_cast<double>(n_chains);
  grand /= static_cast<double>(n_chains);
  if (w <= 0.0) throw numerical_error("split_rhat: degenerate within variance");
  double b = 0.0;
  for (const auto& [mu, var] : chains) b += (mu - grand) * (mu - grand);
  b *= static_cast<double>(m) / static_cast<double>(n_chains - 1);
  const double var_plus =
      (static_cast<double>(m - 1) / static_cast<double>(m)) * w +
      b / static_cast<double>(m);
  return std::sqrt(var_plus / w);
}

/// Equal-tailed credible-interval coverage of the true co-occurrence
/// probability over all V^2 ordered pairs (diagonal included). Optionally
/// streams "pair_w,pair_v,lo,hi,truth,covered" rows to `csv`.
inline CoverageReport coverage(const PosteriorDraws& draws,
                               const EmbeddingState& theta_true, double level,
                               std::ostream* csv = nullptr) {
  if (!(level > 0.0 && level < 1.0))
    throw invalid_input("coverage: level must be in (0,1)");
  if (draws.draws.size() < 20)
    throw invalid_input("coverage: fewer than 20 draws");
  const int V = theta_true.V();
  if (draws.V() != V) throw invalid_input("coverage: V mismatch");
  const std::size_t n = draws.draws.size();
  const double p_lo = 0.5 * (1.0 - level);
  const double p_hi = 1.0 - p_lo;

  if (csv) *csv << "pair_w,pair_v,lo,hi,truth,covered\n";
  std::int64_t covered = 0;
  std::vector<double> trace(n);
  const MatrixXd truth_p = co_prob_matrix(theta_true);
  for (int w = 0; w < V; ++w) {
    for (int v = 0; v < V; ++v) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto& th = draws.draws[i];
        trace[i] = sigmoid(th.rho.row(w).dot(th.alpha.row(v)));
      }
      std::sort(trace.begin(), trace.end());
      const double lo = diag_detail::quantile_sorted(trace, p_lo);
      const double hi = diag_detail::quantile_sorted(trace, p_hi);
      const double truth = truth_p(w, v);
      const bool in = truth >= lo && truth <= hi;
      covered += in ? 1 : 0;
      if (csv)
        *csv << w << ',' << v << ',' << lo << ',' << hi << ',' << truth << ','
             << (in ? 1 : 0) << '\n';
    }
  }
  CoverageReport r;
  r.level = level;
  r.pairs_evaluated = static_cast<std::int64_t>(V) * V;
  r.fraction_covered =
      static_cast<double>(covered) / static_cast<double>(r.pairs_evaluated);
  return r;
}

/// Entrywise mean over draws. Refused without an identification constraint:
/// the unconstrained posterior is symmetric and its mean is meaningless.
inline EmbeddingState posterior_mean(const PosteriorDraws& draws) {
  if (draws.draws.empty()) throw invalid_input("posterior_mean: no draws");
  if (!draws.constraint)
    throw invalid_input(
        "posterior_mean: draws are not identified (no constraint); the "
        "symmetric posterior mean is zero and meaningless");
  EmbeddingState mean = EmbeddingState::zeros(draws.V(), draws.K());
  for (const auto& th : draws.draws) {
    mean.rho += th.rho;
    mean.alpha += th.alpha;
  }
  const double n = static_cast<double>(draws.draws.size());
  mean.rho /= n;
  mean.alpha /= n;
  return mean;
}

/// Per-observation hold-out log likelihood.
inline double holdout_ll(const EmbeddingState& theta,
                         const PairStats& test_stats) {
  const std::int64_t total = test_stats.total_counts();
  if (total == 0) throw invalid_input("holdout_ll: empty test stats");
  return log_likelihood(test_stats, theta) / static_cast<double>(total);
}

struct CosineTrace {
  ScalarTrace trace;
  int skipped = 0;  // draws dropped for zero-norm rows
};

inline CosineTrace cosine_posterior(const PosteriorDraws& draws, int w, int v) {
  CosineTrace out;
  out.trace.label = "cosine_" + std::to_string(w) + "_" + std::to_string(v);
  out.trace.values.reserve(draws.draws.size());
  for (const auto& th : draws.draws) {
    if (th.rho.row(w).norm() == 0.0 || th.rho.row(v).norm() == 0.0) {
      ++out.skipped;
      continue;
    }
    out.trace.values.push_back(cosine_similarity(th, w, v));
  }
  return out;
}

/// OLS slope of log(rmse) against log(N).
inline double convergence_slope(
    const std::vector<std::pair<std::int64_t, double>>& points) {
  if (points.size() < 3) throw invalid_input("convergence_slope: need >= 3 points");
  std::vector<std::int64_t> ns;
  for (const auto& [n, rmse] : points) {
    if (n < 1 || !(rmse > 0.0))
      throw invalid_input("convergence_slope: N must be positive, rmse > 0");
    ns.push_back(n);
  }
  std::sort(ns.begin(), ns.end());
  if (std::adjacent_find(ns.begin(), ns.end()) != ns.end())
    throw invalid_input("convergence_slope: N values must be distinct");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(points.size());
  for (const auto& [N, rmse] : points) {
    const double x = std::log(static_cast<double>(N));
    const double y = std::log(rmse);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline void write_trace_csv(std::ostream& os, const ScalarTrace& trace) {
  os << trace.label << '\n';
  for (double v : trace.values) os << v << '\n';
}

inline void write_slope_csv(
    std::ostream& os, const std::vector<std::pair<std::int64_t, double>>& pts) {
  os << "N,rmse\n";
  for (const auto& [n, rmse] : pts) os << n << ',' << rmse << '\n';
}

}  // namespace pgembed
