#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "pgembed/laplace.hpp"
#include "pgembed/map.hpp"
#include "test_util.hpp"

using namespace pgembed;
using test_util::random_invertible;
using test_util::random_state;
using test_util::random_stats;

namespace {

// Central finite difference of grad_log_posterior, column by column, in the
// dense coordinate order [rho rows, alpha rows].
MatrixXd fd_hessian(const PairStats& stats, const EmbeddingState& theta,
                    const PriorSpec& prior, double h = 1e-5) {
  const int V = theta.V(), K = theta.K();
  const Eigen::Index d = 2ll * V * K;
  auto pack = [&](const Gradient& g) {
    VectorXd x(d);
    for (int w = 0; w < V; ++w)
      x.segment(w * K, K) = g.d_rho.row(w).transpose();
    for (int v = 0; v < V; ++v)
      x.segment((V + v) * K, K) = g.d_alpha.row(v).transpose();
    return x;
  };
  auto perturb = [&](Eigen::Index c, double delta) {
    EmbeddingState t = theta;
    const int row = static_cast<int>(c / K);
    const int col = static_cast<int>(c % K);
    if (row < V)
      t.rho(row, col) += delta;
    else
      t.alpha(row - V, col) += delta;
    return t;
  };
  MatrixXd H(d, d);
  for (Eigen::Index c = 0; c < d; ++c) {
    const VectorXd gp = pack(grad_log_posterior(stats, perturb(c, h), prior));
    const VectorXd gm = pack(grad_log_posterior(stats, perturb(c, -h), prior));
    H.col(c) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

std::filesystem::path temp_dir() {
  auto p = std::filesystem::temp_directory_path() / "pgembed_laplace_test";
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("Hessian with no data is the prior curvature -lambda I") {
  PairStats stats;
  stats.V = 3;
  PriorSpec prior(1.7);
  Rng rng(91);
  EmbeddingState theta = random_state(3, 2, rng);
  MatrixXd H = dense_hessian(assemble_hessian(stats, theta, prior));
  CHECK((H + 1.7 * MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("analytic Hessian matches finite differences of the gradient") {
  Rng rng(92);
  for (int rep = 0; rep < 5; ++rep) {
    const int V = 4, K = 2;
    PairStats stats = random_stats(V, rng, 20);
    PriorSpec prior(0.8);
    EmbeddingState theta = random_state(V, K, rng, 0.5);
    MatrixXd H = dense_hessian(assemble_hessian(stats, theta, prior));
    MatrixXd Hfd = fd_hessian(stats, theta, prior);
    CHECK((H - Hfd).cwiseAbs().maxCoeff() <
          1e-4 * std::max(1.0, Hfd.cwiseAbs().maxCoeff()));
    CHECK((H - H.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("cross blocks exist exactly for observed pairs") {
  PairAccumulator acc;
  acc.add(0, 1, 2, 1);
  acc.add(2, 0, 1, 3);
  PairStats stats = acc.finalize(3, 0);
  Rng rng(93);
  EmbeddingState theta = random_state(3, 2, rng);
  HessianBlocks h = assemble_hessian(stats, theta, PriorSpec(1.0));
  CHECK(h.cross.size() == 2);
  CHECK(h.cross.count(HessianBlocks::key(0, 1)) == 1);
  CHECK(h.cross.count(HessianBlocks::key(2, 0)) == 1);
  CHECK(h.cross.count(HessianBlocks::key(1, 0)) == 0);
}

TEST_CASE("negated free Hessian at a MAP is positive definite") {
  Rng rng(94);
  const int V = 5, K = 2;
  PairStats stats = random_stats(V, rng, 30);
  PriorSpec prior(1.0);
  IdentificationConstraint constraint(IdentificationConstraint::last_k_ids(V, K),
                                      random_invertible(K, rng));
  EmbeddingState init = random_init(V, K, 95);
  for (int i = 0; i < K; ++i)
    init.alpha.row(constraint.indices[i]) = constraint.M.row(i);
  MapConfig mcfg;
  mcfg.gradient_tolerance = 1e-9;
  MapResult fit = fit_map(stats, prior, mcfg, init, &constraint);
  REQUIRE(fit.converged);
  LaplaceModel model = build_laplace(stats, prior, fit.theta, constraint);
  CHECK(model.clipped_count == 0);
  CHECK(model.eigenvalues.minCoeff() > 0.0);
  CHECK(model.dim() == 2 * V * K - K * K);
}

TEST_CASE("no-data Laplace covariance is exactly lambda^-1 I") {
  PairStats stats;
  stats.V = 4;
  const double lambda = 2.0;
  PriorSpec prior(lambda);
  const int K = 2;
  Rng rng(96);
  IdentificationConstraint constraint(
      IdentificationConstraint::last_k_ids(4, K), random_invertible(K, rng));
  EmbeddingState mode = EmbeddingState::zeros(4, K);
  for (int i = 0; i < K; ++i)
    mode.alpha.row(constraint.indices[i]) = constraint.M.row(i);
  LaplaceModel model = build_laplace(stats, prior, mode, constraint);
  CHECK((model.eigenvalues.array() - 1.0 / lambda).abs().maxCoeff() < 1e-12);
}

TEST_CASE("zero eps reproduces the mode; draw covariance matches Sigma") {
  Rng rng(97);
  const int V = 4, K = 2;
  PairStats stats = random_stats(V, rng, 25);
  PriorSpec prior(1.0);
  IdentificationConstraint constraint(IdentificationConstraint::last_k_ids(V, K),
                                      random_invertible(K, rng));
  EmbeddingState init = random_init(V, K, 98);
  for (int i = 0; i < K; ++i)
    init.alpha.row(constraint.indices[i]) = constraint.M.row(i);
  MapConfig mcfg;
  MapResult fit = fit_map(stats, prior, mcfg, init, &constraint);
  REQUIRE(fit.converged);
  LaplaceModel model = build_laplace(stats, prior, fit.theta, constraint);

  EmbeddingState at_mode =
      laplace_draw_with_eps(model, VectorXd::Zero(model.dim()));
  CHECK((at_mode.rho - fit.theta.rho).cwiseAbs().maxCoeff() == 0.0);
  CHECK((at_mode.alpha - fit.theta.alpha).cwiseAbs().maxCoeff() == 0.0);

  const int n = 40000;
  PosteriorDraws draws = laplace_draws(model, n, 99);
  const Eigen::Index d = model.dim();
  MatrixXd X(n, d);
  for (int i = 0; i < n; ++i) {
    Eigen::Index at = 0;
    for (int w = 0; w < V; ++w, at += K)
      X.block(i, at, 1, K) = draws.draws[i].rho.row(w);
    for (int v = 0; v < V; ++v) {
      if (constraint.contains(v)) continue;
      X.block(i, at, 1, K) = draws.draws[i].alpha.row(v);
      at += K;
    }
  }
  const MatrixXd centered = X.rowwise() - X.colwise().mean();
  const MatrixXd emp_cov = centered.transpose() * centered / (n - 1.0);
  const MatrixXd sigma = model.eigenvectors *
                         model.eigenvalues.asDiagonal() *
                         model.eigenvectors.transpose();
  CHECK((emp_cov - sigma).norm() / sigma.norm() < 0.05);
}

TEST_CASE("pairwise marginal agrees with the full covariance") {
  Rng rng(100);
  const int V = 5, K = 2;
  PairStats stats = random_stats(V, rng, 30);
  PriorSpec prior(1.0);
  IdentificationConstraint constraint(IdentificationConstraint::last_k_ids(V, K),
                                      random_invertible(K, rng));
  EmbeddingState init = random_init(V, K, 101);
  for (int i = 0; i < K; ++i)
    init.alpha.row(constraint.indices[i]) = constraint.M.row(i);
  MapConfig mcfg;
  MapResult fit = fit_map(stats, prior, mcfg, init, &constraint);
  REQUIRE(fit.converged);
  LaplaceModel model = build_laplace(stats, prior, fit.theta, constraint);
  const MatrixXd sigma = model.eigenvectors *
                         model.eigenvalues.asDiagonal() *
                         model.eigenvectors.transpose();

  const int w = 1, v = 2;
  // Reduced indices of (rho_w, alpha_v) in the free-coordinate order.
  std::vector<Eigen::Index> sel;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(model.coords.size());
       ++i) {
    const int row = static_cast<int>(model.coords[i] / K);
    if (row == w || row == V + v) sel.push_back(i);
  }
  REQUIRE(sel.size() == 2 * K);

  const int n = 60000;
  PairwiseDraws pd =
      laplace_pairwise_draws(stats, prior, fit.theta, constraint, w, v, n, 102);
  MatrixXd X(n, 2 * K);
  X.leftCols(K) = pd.rho_w;
  X.rightCols(K) = pd.alpha_v;
  const MatrixXd centered = X.rowwise() - X.colwise().mean();
  const MatrixXd emp = centered.transpose() * centered / (n - 1.0);
  for (int i = 0; i < 2 * K; ++i) {
    CHECK(X.col(i).mean() == doctest::Approx(i < K ? fit.theta.rho(w, i)
                                                   : fit.theta.alpha(v, i - K))
                                 .epsilon(0.05));
    for (int j = 0; j < 2 * K; ++j)
      CHECK(std::abs(emp(i, j) - sigma(sel[i], sel[j])) <
            0.05 * std::sqrt(sigma(sel[i], sel[i]) * sigma(sel[j], sel[j])));
  }

  CHECK_THROWS_AS(laplace_pairwise_draws(stats, prior, fit.theta, constraint,
                                         0, constraint.indices[0], 10, 1),
                  invalid_input);
}

TEST_CASE("laplace store round trip") {
  Rng rng(103);
  const int V = 4, K = 2;
  PairStats stats = random_stats(V, rng, 20);
  PriorSpec prior(1.0);
  IdentificationConstraint constraint(IdentificationConstraint::last_k_ids(V, K),
                                      random_invertible(K, rng));
  EmbeddingState mode = EmbeddingState::zeros(V, K);
  for (int i = 0; i < K; ++i)
    mode.alpha.row(constraint.indices[i]) = constraint.M.row(i);
  LaplaceModel model = build_laplace(stats, prior, mode, constraint);
  const auto dir = (temp_dir() / "store").string();
  write_laplace_store(dir, model);
  LaplaceModel back = read_laplace_store(dir);
  CHECK((back.mode.rho - model.mode.rho).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.eigenvalues - model.eigenvalues).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.eigenvectors - model.eigenvectors).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.coords == model.coords);
  CHECK(back.clipped_count == model.clipped_count);
  std::filesystem::remove_all(temp_dir());
}

TEST_CASE("dense limit guard") {
  PairStats stats;
  stats.V = 3;
  PriorSpec prior(1.0);
  IdentificationConstraint constraint(
      IdentificationConstraint::last_k_ids(3, 1), MatrixXd::Identity(1, 1));
  EmbeddingState mode = EmbeddingState::zeros(3, 1);
  mode.alpha(2, 0) = 1.0;
  CHECK_THROWS_AS(build_laplace(stats, prior, mode, constraint, 2),
                  invalid_input);
}
