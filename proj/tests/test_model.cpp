#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "pgembed/model.hpp"
#include "test_util.hpp"

using namespace pgembed;
using test_util::random_invertible;
using test_util::random_state;
using test_util::random_stats;

namespace {

/// Token-level oracle of the SGNS likelihood: an explicit list of
/// (target, context, is_positive) samples evaluated term by term.
struct TokenSample {
  int w, v;
  bool positive;
};

double token_level_ll(const std::vector<TokenSample>& samples,
                      const EmbeddingState& theta) {
  double total = 0.0;
  for (const auto& s : samples) {
    const double dot = theta.rho.row(s.w).dot(theta.alpha.row(s.v));
    total += s.positive ? log_sigmoid(dot) : log_sigmoid(-dot);
  }
  return total;
}

PairStats aggregate(const std::vector<TokenSample>& samples, int V) {
  PairAccumulator acc;
  for (const auto& s : samples)
    acc.add(s.w, s.v, s.positive ? 1 : 0, s.positive ? 0 : 1);
  return acc.finalize(V, 0);
}

PairStats single_pair(int V, int w, int v, std::int64_t np, std::int64_t nn) {
  PairAccumulator acc;
  acc.add(w, v, np, nn);
  return acc.finalize(V, 0);
}

}  // namespace

TEST_CASE("log_likelihood hand values at dot zero") {
  EmbeddingState theta = EmbeddingState::zeros(2, 2);
  CHECK(log_likelihood(single_pair(2, 0, 1, 1, 0), theta) ==
        doctest::Approx(-std::log(2.0)).epsilon(1e-12));
  CHECK(log_likelihood(single_pair(2, 0, 1, 1, 1), theta) ==
        doctest::Approx(2.0 * std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("log_likelihood stable at extreme dot products") {
  EmbeddingState theta = EmbeddingState::zeros(2, 1);
  theta.rho(0, 0) = 50.0;
  theta.alpha(1, 0) = 1.0;
  const double ll = log_likelihood(single_pair(2, 0, 1, 0, 1), theta);
  CHECK(std::isfinite(ll));
  CHECK(ll == doctest::Approx(-50.0).epsilon(1e-12));  // log(1-sigma(50))
}

TEST_CASE("aggregation equivalence with the token-level oracle") {
  Rng rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    const int V = 5, K = 2;
    EmbeddingState theta = random_state(V, K, rng);
    std::vector<TokenSample> samples;
    for (int i = 0; i < 200; ++i)
      samples.push_back({static_cast<int>(rng.next_u64() % V),
                         static_cast<int>(rng.next_u64() % V),
                         rng.uniform() < 0.5});
    const double oracle = token_level_ll(samples, theta);
    const double agg = log_likelihood(aggregate(samples, V), theta);
    CHECK(agg == doctest::Approx(oracle).epsilon(1e-10));
  }
}

TEST_CASE("log_likelihood rejects non-finite parameters") {
  EmbeddingState theta = EmbeddingState::zeros(2, 1);
  theta.rho(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(log_likelihood(single_pair(2, 0, 1, 1, 0), theta),
                  invalid_input);
}

TEST_CASE("log_prior hand values") {
  EmbeddingState theta = EmbeddingState::zeros(1, 1);
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  CHECK(log_prior(theta, PriorSpec(1.0)) ==
        doctest::Approx(-log_2pi).epsilon(1e-12));
  CHECK(log_prior(theta, PriorSpec(4.0)) ==
        doctest::Approx(-log_2pi + std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("log_prior matches a per-entry density oracle") {
  Rng rng(12);
  const int V = 4, K = 3;
  EmbeddingState theta = random_state(V, K, rng);
  const double lambda = 2.5;
  auto entry_logpdf = [&](double x) {
    return -0.5 * lambda * x * x +
           0.5 * (std::log(lambda) - std::log(2.0 * std::numbers::pi));
  };
  double oracle = 0.0;
  for (int w = 0; w < V; ++w)
    for (int k = 0; k < K; ++k)
      oracle += entry_logpdf(theta.rho(w, k)) + entry_logpdf(theta.alpha(w, k));
  CHECK(log_prior(theta, PriorSpec(lambda)) ==
        doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("log_prior excludes constrained alpha rows") {
  Rng rng(13);
  const int V = 5, K = 2;
  EmbeddingState theta = random_state(V, K, rng);
  IdentificationConstraint c(IdentificationConstraint::last_k_ids(V, K),
                             random_invertible(K, rng));
  for (int i = 0; i < K; ++i) theta.alpha.row(c.indices[i]) = c.M.row(i);
  const double with_c = log_prior(theta, PriorSpec(1.0), &c);
  // Oracle: per-entry densities over rho and the first V-K alpha rows only.
  double oracle = 0.0;
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  auto add = [&](double x) { oracle += -0.5 * x * x - 0.5 * log_2pi; };
  for (int w = 0; w < V; ++w)
    for (int k = 0; k < K; ++k) add(theta.rho(w, k));
  for (int w = 0; w < V - K; ++w)
    for (int k = 0; k < K; ++k) add(theta.alpha(w, k));
  CHECK(with_c == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("log_posterior decomposes and reduces to prior on zero stats") {
  Rng rng(14);
  const int V = 5, K = 2;
  EmbeddingState theta = random_state(V, K, rng);
  PriorSpec prior(1.5);
  PairStats empty;
  empty.V = V;
  CHECK(log_posterior(empty, theta, prior) ==
        doctest::Approx(log_prior(theta, prior)).epsilon(1e-12));
  PairStats stats = random_stats(V, rng);
  CHECK(log_posterior(stats, theta, prior) ==
        doctest::Approx(log_likelihood(stats, theta) + log_prior(theta, prior))
            .epsilon(1e-12));
}

TEST_CASE("log_posterior approaches the likelihood as lambda -> 0") {
  Rng rng(15);
  const int V = 3, K = 2;
  EmbeddingState theta = random_state(V, K, rng, 0.4);
  REQUIRE(theta.rho.cwiseAbs().maxCoeff() < 1.0);
  PairStats stats = random_stats(V, rng);
  const double lambda = 1e-6;
  const double lp = log_posterior(stats, theta, PriorSpec(lambda));
  const double ll = log_likelihood(stats, theta);
  // Up to the lambda-only normalizing constant, the prior contribution for
  // |theta| <= 1 is bounded by lambda per entry.
  const double norm_const =
      V * K * (std::log(lambda) - std::log(2.0 * std::numbers::pi));
  CHECK(std::abs(lp - ll - norm_const) <= 1e-6 * (2.0 * V * K * 13.0));
}

TEST_CASE("gradient vanishes at the prior mode with zero stats") {
  EmbeddingState theta = EmbeddingState::zeros(3, 2);
  PairStats empty;
  empty.V = 3;
  Gradient g = grad_log_posterior(empty, theta, PriorSpec(1.0));
  CHECK(g.d_rho.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.d_alpha.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gradient of a single pair at dot zero") {
  // n+=1, n-=0, dot=0, prior off in the limit: d rho_w = alpha_v / 2.
  EmbeddingState theta = EmbeddingState::zeros(2, 2);
  theta.alpha(1, 0) = 0.7;
  theta.alpha(1, 1) = -0.3;
  const double lambda = 1e-300;  // effectively no prior pull at theta.rho = 0
  Gradient g =
      grad_log_posterior(single_pair(2, 0, 1, 1, 0), theta, PriorSpec(lambda));
  CHECK(g.d_rho(0, 0) == doctest::Approx(0.35).epsilon(1e-12));
  CHECK(g.d_rho(0, 1) == doctest::Approx(-0.15).epsilon(1e-12));
}

TEST_CASE("gradient matches central finite differences on 20 instances") {
  Rng rng(16);
  const double h = 1e-5;
  for (int rep = 0; rep < 20; ++rep) {
    const int V = 3 + static_cast<int>(rng.next_u64() % 3);
    const int K = 1 + static_cast<int>(rng.next_u64() % 3);
    EmbeddingState theta = random_state(V, K, rng, 0.8);
    PairStats stats = random_stats(V, rng, 15);
    PriorSpec prior(0.5 + rng.uniform());
    Gradient g = grad_log_posterior(stats, theta, prior);
    double max_err = 0.0, max_grad = 1.0;
    for (int side = 0; side < 2; ++side) {
      MatrixXd& m = side == 0 ? theta.rho : theta.alpha;
      const MatrixXd& gm = side == 0 ? g.d_rho : g.d_alpha;
      for (int w = 0; w < V; ++w)
        for (int k = 0; k < K; ++k) {
          const double saved = m(w, k);
          m(w, k) = saved + h;
          const double up = log_posterior(stats, theta, prior);
          m(w, k) = saved - h;
          const double dn = log_posterior(stats, theta, prior);
          m(w, k) = saved;
          const double fd = (up - dn) / (2.0 * h);
          max_err = std::max(max_err, std::abs(fd - gm(w, k)));
          max_grad = std::max(max_grad, std::abs(gm(w, k)));
        }
    }
    CHECK(max_err / max_grad < 1e-5);
  }
}

TEST_CASE("gradient zeroes constrained alpha rows") {
  Rng rng(17);
  const int V = 5, K = 2;
  EmbeddingState theta = random_state(V, K, rng);
  IdentificationConstraint c(IdentificationConstraint::last_k_ids(V, K),
                             random_invertible(K, rng));
  Gradient g = grad_log_posterior(random_stats(V, rng), theta, PriorSpec(1.0), &c);
  for (int id : c.indices) CHECK(g.d_alpha.row(id).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("co_prob hand values and likelihood consistency") {
  EmbeddingState theta = EmbeddingState::zeros(2, 2);
  CHECK(co_prob(theta, 0, 1) == doctest::Approx(0.5));
  theta.rho(0, 0) = std::log(3.0);
  theta.alpha(1, 0) = 1.0;
  CHECK(co_prob(theta, 0, 1) == doctest::Approx(0.75).epsilon(1e-12));
  const double p = co_prob(theta, 0, 1);
  CHECK(log_likelihood(single_pair(2, 0, 1, 3, 2), theta) ==
        doctest::Approx(3.0 * std::log(p) + 2.0 * std::log1p(-p)).epsilon(1e-10));
}

TEST_CASE("rmse_co basics and invariance under invertible reparameterization") {
  Rng rng(18);
  const int V = 6, K = 3;
  EmbeddingState theta = random_state(V, K, rng);
  CHECK(rmse_co(theta, theta) == 0.0);

  const MatrixXd A = random_invertible(K, rng);
  EmbeddingState transformed{theta.rho * A,
                             A.partialPivLu().solve(theta.alpha.transpose()).transpose()};
  CHECK(rmse_co(theta, transformed) < 1e-10);
}

TEST_CASE("rmse_co V=2 K=1 hand enumeration") {
  EmbeddingState a = EmbeddingState::zeros(2, 1);
  EmbeddingState b = EmbeddingState::zeros(2, 1);
  a.rho << 1.0, -0.5;
  a.alpha << 0.3, 2.0;
  b.rho << 0.2, 1.5;
  b.alpha << -1.0, 0.4;
  double ss = 0.0;
  for (int w = 0; w < 2; ++w)
    for (int v = 0; v < 2; ++v) {
      const double pa = sigmoid(a.rho(w, 0) * a.alpha(v, 0));
      const double pb = sigmoid(b.rho(w, 0) * b.alpha(v, 0));
      ss += (pa - pb) * (pa - pb);
    }
  CHECK(rmse_co(a, b) == doctest::Approx(std::sqrt(ss / 4.0)).epsilon(1e-12));
}

TEST_CASE("rmse_co is a pseudometric on random triples") {
  Rng rng(19);
  for (int rep = 0; rep < 20; ++rep) {
    const int V = 4, K = 2;
    EmbeddingState a = random_state(V, K, rng);
    EmbeddingState b = random_state(V, K, rng);
    EmbeddingState c = random_state(V, K, rng);
    const double ab = rmse_co(a, b), ba = rmse_co(b, a);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-14));
    CHECK(ab >= 0.0);
    CHECK(rmse_co(a, c) <= ab + rmse_co(b, c) + 1e-12);
  }
}

TEST_CASE("rmse_co rejects V mismatch") {
  CHECK_THROWS_AS(rmse_co(EmbeddingState::zeros(2, 1), EmbeddingState::zeros(3, 1)),
                  invalid_input);
}

TEST_CASE("canonicalize is identity when alpha_I already equals M") {
  Rng rng(20);
  const int V = 5, K = 2;
  EmbeddingState theta = random_state(V, K, rng);
  MatrixXd M(K, K);
  const auto ids = IdentificationConstraint::last_k_ids(V, K);
  for (int i = 0; i < K; ++i) M.row(i) = theta.alpha.row(ids[i]);
  IdentificationConstraint c(ids, M);
  EmbeddingState out = canonicalize(theta, c);
  CHECK((out.rho - theta.rho).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((out.alpha - theta.alpha).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("canonicalize preserves the likelihood and the alpha rho^T product") {
  Rng rng(21);
  for (int rep = 0; rep < 10; ++rep) {
    const int V = 6, K = 2;
    EmbeddingState theta = random_state(V, K, rng);
    IdentificationConstraint c(IdentificationConstraint::last_k_ids(V, K),
                               random_invertible(K, rng));
    EmbeddingState out = canonicalize(theta, c);
    CHECK(c.satisfied_by(out));

    PairStats stats = random_stats(V, rng);
    const double before = log_likelihood(stats, theta);
    const double after = log_likelihood(stats, out);
    CHECK(after == doctest::Approx(before).epsilon(1e-8));

    const MatrixXd prod_before = theta.alpha * theta.rho.transpose();
    const MatrixXd prod_after = out.alpha * out.rho.transpose();
    CHECK((prod_before - prod_after).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("canonicalize is idempotent") {
  Rng rng(22);
  const int V = 6, K = 3;
  EmbeddingState theta = random_state(V, K, rng);
  IdentificationConstraint c(IdentificationConstraint::last_k_ids(V, K),
                             random_invertible(K, rng));
  EmbeddingState once = canonicalize(theta, c);
  EmbeddingState twice = canonicalize(once, c);
  CHECK((once.rho - twice.rho).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((once.alpha - twice.alpha).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("canonicalize rejects singular alpha_I") {
  Rng rng(23);
  const int V = 5, K = 2;
  EmbeddingState theta = random_state(V, K, rng);
  const auto ids = IdentificationConstraint::last_k_ids(V, K);
  theta.alpha.row(ids[1]) = theta.alpha.row(ids[0]);  // rank deficient
  IdentificationConstraint c(ids, random_invertible(K, rng));
  CHECK_THROWS_AS(canonicalize(theta, c), numerical_error);
}

TEST_CASE("identification injectivity desk check") {
  // Two canonicalized states with alpha_I = M and equal alpha rho^T products
  // must be entrywise equal: reconstruct the state from its product.
  Rng rng(24);
  for (int K = 1; K <= 3; ++K) {
    const int V = 6;
    IdentificationConstraint c(IdentificationConstraint::last_k_ids(V, K),
                               random_invertible(K, rng));
    EmbeddingState theta = canonicalize(random_state(V, K, rng), c);
    const MatrixXd prod = theta.alpha * theta.rho.transpose();  // V x V
    // rho recovery: rows I of alpha are M, so prod(I, :) = M rho^T.
    MatrixXd prod_I(K, V);
    for (int i = 0; i < K; ++i) prod_I.row(i) = prod.row(c.indices[i]);
    const MatrixXd rho_rec = c.M.partialPivLu().solve(prod_I).transpose();
    CHECK((rho_rec - theta.rho).cwiseAbs().maxCoeff() < 1e-9);
    // alpha recovery: alpha = prod rho (rho^T rho)^-1 once rho is known.
    const MatrixXd alpha_rec =
        prod * theta.rho * (theta.rho.transpose() * theta.rho).inverse();
    CHECK((alpha_rec - theta.alpha).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("negation symmetry of the unconstrained posterior") {
  Rng rng(25);
  const int V = 5, K = 2;
  EmbeddingState theta = random_state(V, K, rng);
  EmbeddingState neg{-theta.rho, -theta.alpha};
  PairStats stats = random_stats(V, rng);
  PriorSpec prior(1.0);
  CHECK(log_posterior(stats, theta, prior) ==
        doctest::Approx(log_posterior(stats, neg, prior)).epsilon(1e-12));
}

TEST_CASE("cosine_similarity hand geometry") {
  EmbeddingState theta = EmbeddingState::zeros(3, 2);
  theta.rho.row(0) << 1.0, 0.0;
  theta.rho.row(1) << 1.0, 1.0;
  theta.rho.row(2) << -1.0, 0.0;
  CHECK(cosine_similarity(theta, 0, 0) == doctest::Approx(1.0));
  CHECK(cosine_similarity(theta, 0, 2) == doctest::Approx(-1.0));
  CHECK(cosine_similarity(theta, 0, 1) ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("cosine_similarity rejects zero rows") {
  EmbeddingState theta = EmbeddingState::zeros(2, 2);
  theta.rho(0, 0) = 1.0;
  CHECK_THROWS_AS(cosine_similarity(theta, 0, 1), numerical_error);
}
