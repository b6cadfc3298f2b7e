#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "pgembed/model.hpp"
#include "pgembed/rng.hpp"

namespace pgembed {

struct MapConfig {
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;  // sup-norm
  int history_size = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (max_iterations < 1) throw invalid_input("max_iterations must be >= 1");
    if (!(gradient_tolerance > 0.0))
      throw invalid_input("gradient_tolerance must be > 0");
    if (history_size < 1) throw invalid_input("history_size must be >= 1");
  }
};

struct MapResult {
  EmbeddingState theta;
  bool converged = false;
  int iterations = 0;
  double grad_sup_norm = 0.0;
  double log_posterior_value = 0.0;
};

namespace map_detail {

/// Flattened view of the unconstrained coordinates: all of rho row-major,
/// then the alpha rows not pinned by the constraint.
struct Packing {
  int V, K;
  std::vector<int> free_alpha_rows;

  Packing(int V_, int K_, const IdentificationConstraint* constraint)
      : V(V_), K(K_) {
    for (int w = 0; w < V; ++w)
      if (!constraint || !constraint->contains(w)) free_alpha_rows.push_back(w);
  }

  Eigen::Index dim() const {
    return static_cast<Eigen::Index>(V) * K +
           static_cast<Eigen::Index>(free_alpha_rows.size()) * K;
  }

  VectorXd pack(const MatrixXd& rho, const MatrixXd& alpha) const {
    VectorXd x(dim());
    Eigen::Index at = 0;
    for (int w = 0; w < V; ++w, at += K) x.segment(at, K) = rho.row(w).transpose();
    for (int w : free_alpha_rows) {
      x.segment(at, K) = alpha.row(w).transpose();
      at += K;
    }
    return x;
  }

  void unpack(const VectorXd& x, EmbeddingState& theta) const {
    Eigen::Index at = 0;
    for (int w = 0; w < V; ++w, at += K)
      theta.rho.row(w) = x.segment(at, K).transpose();
    for (int w : free_alpha_rows) {
      theta.alpha.row(w) = x.segment(at, K).transpose();
      at += K;
    }
  }
};

}  // namespace map_detail

/// MAP estimation by limited-memory quasi-Newton ascent (two-loop L-BFGS
/// with Armijo backtracking) over the unconstrained coordinates.
inline MapResult fit_map(const PairStats& stats, const PriorSpec& prior,
                         const MapConfig& cfg, const EmbeddingState& init,
                         const IdentificationConstraint* constraint = nullptr) {
  cfg.validate();
  if (!init.all_finite()) throw invalid_input("fit_map: non-finite init");
  if (constraint && !constraint->satisfied_by(init))
    throw invalid_input("fit_map: init violates the identification constraint");

  const map_detail::Packing packing(init.V(), init.K(), constraint);
  EmbeddingState theta = init;

  auto eval = [&](const VectorXd& x, VectorXd* grad) -> double {
    packing.unpack(x, theta);
    if (grad) {
      Gradient g = grad_log_posterior(stats, theta, prior, constraint);
      *grad = -packing.pack(g.d_rho, g.d_alpha);
    }
    return -log_posterior(stats, theta, prior, constraint);
  };

  VectorXd x = packing.pack(init.rho, init.alpha);
  VectorXd grad(packing.dim());
  double f = eval(x, &grad);
  if (!std::isfinite(f)) throw numerical_error("fit_map: objective not finite at init");

  std::deque<VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;

  MapResult result;
  int iter = 0;
  for (; iter < cfg.max_iterations; ++iter) {
    if (grad.cwiseAbs().maxCoeff() < cfg.gradient_tolerance) {
      result.converged = true;
      break;
    }

    // Two-loop recursion for the search direction.
    VectorXd q = grad;
    const int m = static_cast<int>(s_hist.size());
    std::vector<double> alpha_coef(m);
    for (int i = m - 1; i >= 0; --i) {
      alpha_coef[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha_coef[i] * y_hist[i];
    }
    if (m > 0) {
      const double gamma =
          s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      q *= gamma;
    }
    for (int i = 0; i < m; ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha_coef[i] - beta) * s_hist[i];
    }
    VectorXd direction = -q;
    double dir_deriv = grad.dot(direction);
    if (dir_deriv >= 0.0) {  // not a descent direction, fall back to steepest
      direction = -grad;
      dir_deriv = -grad.squaredNorm();
    }

    // Armijo backtracking with step-halving, hard failure after 50 halvings.
    const double c1 = 1e-4;
    double step = 1.0;
    double f_new = 0.0;
    VectorXd x_new;
    bool accepted = false;
    for (int halving = 0; halving <= 50; ++halving) {
      x_new = x + step * direction;
      f_new = eval(x_new, nullptr);
      if (std::isfinite(f_new) && f_new <= f + c1 * step * dir_deriv) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted)
      throw numerical_error("fit_map: line search failed after 50 halvings");

    VectorXd grad_new(packing.dim());
    eval(x_new, &grad_new);
    VectorXd s = x_new - x;
    VectorXd y = grad_new - grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > cfg.history_size) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x = std::move(x_new);
    f = f_new;
    grad = std::move(grad_new);
  }

  packing.unpack(x, theta);
  if (constraint) {  // pinned rows are bitwise M by construction, reassert
    for (int i = 0; i < constraint->K(); ++i)
      theta.alpha.row(constraint->indices[i]) = constraint->M.row(i);
  }
  result.theta = std::move(theta);
  result.iterations = iter;
  result.grad_sup_norm = grad.cwiseAbs().maxCoeff();
  result.log_posterior_value = -f;
  return result;
}

/// Random N(0, I/K) start matching the sampler's initialization law.
inline EmbeddingState random_init(int V, int K, std::uint64_t seed) {
  Rng rng(seed, 0x696e6974ull);
  const double sd = 1.0 / std::sqrt(static_cast<double>(K));
  EmbeddingState theta = EmbeddingState::zeros(V, K);
  for (int w = 0; w < V; ++w)
    for (int k = 0; k < K; ++k) theta.rho(w, k) = sd * rng.normal();
  for (int w = 0; w < V; ++w)
    for (int k = 0; k < K; ++k) theta.alpha(w, k) = sd * rng.normal();
  return theta;
}

}  // namespace pgembed
