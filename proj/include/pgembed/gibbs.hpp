#pragma once

#include <Eigen/Cholesky>
#include <cstdint>
#include <thread>
#include <vector>

#include "pgembed/polya_gamma.hpp"
#include "pgembed/types.hpp"

namespace pgembed {

struct GibbsConfig {
  int outer_iterations = 2000;
  int burn_in = 1000;
  int inner_pg_steps = 10;  // S
  std::uint64_t seed = 0;
  bool warm_start_inner = false;
  int parallel_width = 1;

  void validate() const {
    if (outer_iterations < 1) throw invalid_input("outer_iterations must be >= 1");
    if (burn_in < 0 || burn_in >= outer_iterations)
      throw invalid_input("burn_in must be in [0, outer_iterations)");
    if (inner_pg_steps < 1) throw invalid_input("inner_pg_steps must be >= 1");
    if (parallel_width < 1) throw invalid_input("parallel_width must be >= 1");
  }
};

enum class Side { target, context };

/// Adjacency view of PairStats: for each word, its co-occurring partners
/// with total counts b = n+ + n- and response kappa = n+ - b/2.
struct PairAdjacency {
  struct Neighbor {
    int id;
    std::int64_t b;
    double kappa;
  };
  std::vector<std::vector<Neighbor>> by_target;   // neighbors are context ids
  std::vector<std::vector<Neighbor>> by_context;  // neighbors are target ids

  static PairAdjacency build(const PairStats& stats, int V) {
    PairAdjacency adj;
    adj.by_target.resize(V);
    adj.by_context.resize(V);
    for (const auto& e : stats.entries) {
      const std::int64_t b = e.n_pos + e.n_neg;
      const double kappa = static_cast<double>(e.n_pos) - 0.5 * static_cast<double>(b);
      adj.by_target[e.w].push_back({e.v, b, kappa});
      adj.by_context[e.v].push_back({e.w, b, kappa});
    }
    return adj;
  }
};

/// Per-word conditional logistic-regression design: row i of `design` is the
/// (fixed-side) embedding of the i-th co-occurring word, conceptually
/// weighted by counts[i] observations.
struct ConditionalDesign {
  MatrixXd design;            // n_u x K
  VectorXd kappa;             // n+ - b/2 per co-occurring word
  std::vector<std::int64_t> counts;  // b per co-occurring word
};

inline ConditionalDesign gather_design(int w, Side side,
                                       const EmbeddingState& theta,
                                       const PairAdjacency& adj) {
  const auto& nbrs =
      side == Side::target ? adj.by_target[w] : adj.by_context[w];
  const MatrixXd& fixed = side == Side::target ? theta.alpha : theta.rho;
  ConditionalDesign d;
  const int n = static_cast<int>(nbrs.size());
  d.design.resize(n, theta.K());
  d.kappa.resize(n);
  d.counts.resize(n);
  for (int i = 0; i < n; ++i) {
    d.design.row(i) = fixed.row(nbrs[i].id);
    d.kappa(i) = nbrs[i].kappa;
    d.counts[i] = nbrs[i].b;
  }
  return d;
}

namespace gibbs_detail {

/// One Polya-Gamma inner chain: S alternating (omega, beta) draws for the
/// conditional posterior N-mixture of one embedding row.
inline VectorXd pg_inner_chain(const ConditionalDesign& d, double lambda,
                               int steps, VectorXd beta, Rng& rng) {
  const int K = static_cast<int>(beta.size());
  const int n = static_cast<int>(d.design.rows());
  const VectorXd design_t_kappa = d.design.transpose() * d.kappa;
  VectorXd psi(n), z(K), mu(K);
  MatrixXd prec(K, K);
  for (int s = 0; s < steps; ++s) {
    psi.noalias() = d.design * beta;
    prec.setZero();
    prec.diagonal().setConstant(lambda);
    for (int i = 0; i < n; ++i) {
      const double omega = sample_pg(d.counts[i], psi(i), rng);
      prec.selfadjointView<Eigen::Lower>().rankUpdate(
          d.design.row(i).transpose(), omega);
    }
    Eigen::LLT<MatrixXd> llt(prec.selfadjointView<Eigen::Lower>());
    if (llt.info() != Eigen::Success) {
      prec.diagonal().array() += 1e-10;
      llt.compute(prec.selfadjointView<Eigen::Lower>());
      if (llt.info() != Eigen::Success)
        throw numerical_error("pg_inner_chain: precision not positive definite");
    }
    mu = llt.solve(design_t_kappa);
    for (int k = 0; k < K; ++k) z(k) = rng.normal();
    // beta = mu + L^-T z draws N(mu, prec^-1)
    beta = mu + llt.matrixU().solve(z);
  }
  return beta;
}

}  // namespace gibbs_detail

/// Resample one embedding row from its conditional posterior given the
/// other side of the embedding. Fresh N(0, I/K) working vector unless
/// warm_start_inner is set, then `steps` Polya-Gamma sweeps.
inline VectorXd conditional_update(int w, Side side, const EmbeddingState& theta,
                                   const PairAdjacency& adj,
                                   const PriorSpec& prior,
                                   const GibbsConfig& cfg, Rng& rng) {
  const int K = theta.K();
  VectorXd beta(K);
  if (cfg.warm_start_inner) {
    beta = (side == Side::target ? theta.rho : theta.alpha).row(w).transpose();
  } else {
    const double sd = 1.0 / std::sqrt(static_cast<double>(K));
    for (int k = 0; k < K; ++k) beta(k) = sd * rng.normal();
  }
  const ConditionalDesign d = gather_design(w, side, theta, adj);
  return gibbs_detail::pg_inner_chain(d, prior.lambda, cfg.inner_pg_steps,
                                      std::move(beta), rng);
}

inline VectorXd conditional_update(int w, Side side, const EmbeddingState& theta,
                                   const PairStats& stats,
                                   const PriorSpec& prior,
                                   const GibbsConfig& cfg, Rng& rng) {
  return conditional_update(w, side, theta, PairAdjacency::build(stats, theta.V()),
                            prior, cfg, rng);
}

namespace gibbs_detail {

template <typename Fn>
void parallel_rows(int n, int width, Fn&& fn) {
  if (width <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = std::min(width, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      for (int i = t; i < n; i += workers) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace gibbs_detail

/// Blocked Gibbs sweep: all rho rows given alpha, then all unconstrained
/// alpha rows given rho. Per-row RNG streams keyed by (seed, iteration,
/// side, word id) make the chain bit-identical for any parallel_width.
inline PosteriorDraws run_chain(const PairStats& stats, const PriorSpec& prior,
                                const GibbsConfig& cfg,
                                const EmbeddingState& init,
                                const IdentificationConstraint* constraint = nullptr) {
  cfg.validate();
  const int V = init.V();
  if (stats.V > V) throw invalid_input("run_chain: stats V exceeds init V");
  if (constraint && !constraint->satisfied_by(init))
    throw invalid_input("run_chain: init violates the identification constraint");

  const PairAdjacency adj = PairAdjacency::build(stats, V);
  std::vector<bool> frozen(V, false);
  if (constraint)
    for (int id : constraint->indices) frozen[id] = true;

  EmbeddingState theta = init;
  PosteriorDraws out;
  out.burn_in = cfg.burn_in;
  out.seed = cfg.seed;
  if (constraint) out.constraint = *constraint;
  out.draws.reserve(cfg.outer_iterations - cfg.burn_in);

  for (int iter = 0; iter < cfg.outer_iterations; ++iter) {
    gibbs_detail::parallel_rows(V, cfg.parallel_width, [&](int w) {
      Rng rng(cfg.seed, static_cast<std::uint64_t>(iter) + 1, 0,
              static_cast<std::uint64_t>(w));
      theta.rho.row(w) =
          conditional_update(w, Side::target, theta, adj, prior, cfg, rng)
              .transpose();
    });
    gibbs_detail::parallel_rows(V, cfg.parallel_width, [&](int w) {
      if (frozen[w]) return;
      Rng rng(cfg.seed, static_cast<std::uint64_t>(iter) + 1, 1,
              static_cast<std::uint64_t>(w));
      theta.alpha.row(w) =
          conditional_update(w, Side::context, theta, adj, prior, cfg, rng)
              .transpose();
    });
    if (iter >= cfg.burn_in) out.draws.push_back(theta);
  }
  return out;
}

}  // namespace pgembed
