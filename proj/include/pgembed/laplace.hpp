#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "pgembed/io.hpp"
#include "pgembed/model.hpp"
#include "pgembed/rng.hpp"

namespace pgembed {

/// Sparse block structure of the log-posterior Hessian. Diagonal blocks
/// carry the -lambda I prior curvature; cross blocks exist only for pairs
/// with n+ + n- > 0. The rho-rho and alpha-alpha off-diagonal blocks are
/// identically zero and not stored.
struct HessianBlocks {
  int V = 0, K = 0;
  std::vector<MatrixXd> diag_rho;    // V blocks, d2/d rho_w^2
  std::vector<MatrixXd> diag_alpha;  // V blocks, d2/d alpha_v^2
  // (w,v) -> K x K block C with C(i,j) = d2 logp / d rho_{w,i} d alpha_{v,j}
  std::unordered_map<std::uint64_t, MatrixXd> cross;

  static std::uint64_t key(int w, int v) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(w)) << 32) |
           static_cast<std::uint32_t>(v);
  }
};

/// Analytic Hessian of log_posterior at theta. For each stored pair with
/// psi = rho_w . alpha_v and b = n+ + n-:
///   d2/d rho_w^2   += -b sigma'(psi) alpha_v alpha_v^T
///   d2/d alpha_v^2 += -b sigma'(psi) rho_w rho_w^T
///   cross(w,v)      = (n+ - b sigma(psi)) I - b sigma'(psi) alpha_v rho_w^T
inline HessianBlocks assemble_hessian(const PairStats& stats,
                                      const EmbeddingState& theta,
                                      const PriorSpec& prior) {
  if (!theta.all_finite())
    throw invalid_input("assemble_hessian: non-finite parameters");
  const int V = theta.V();
  const int K = theta.K();
  HessianBlocks h;
  h.V = V;
  h.K = K;
  const MatrixXd neg_prior = -prior.lambda * MatrixXd::Identity(K, K);
  h.diag_rho.assign(V, neg_prior);
  h.diag_alpha.assign(V, neg_prior);
  h.cross.reserve(stats.entries.size());
  for (const auto& e : stats.entries) {
    const VectorXd rho_w = theta.rho.row(e.w).transpose();
    const VectorXd alpha_v = theta.alpha.row(e.v).transpose();
    const double psi = rho_w.dot(alpha_v);
    const double b = static_cast<double>(e.n_pos + e.n_neg);
    const double sp = sigmoid_deriv(psi);
    const double resid = static_cast<double>(e.n_pos) - b * sigmoid(psi);
    h.diag_rho[e.w].noalias() -= (b * sp) * (alpha_v * alpha_v.transpose());
    h.diag_alpha[e.v].noalias() -= (b * sp) * (rho_w * rho_w.transpose());
    MatrixXd c = resid * MatrixXd::Identity(K, K);
    c.noalias() -= (b * sp) * (alpha_v * rho_w.transpose());
    h.cross.emplace(HessianBlocks::key(e.w, e.v), std::move(c));
  }
  return h;
}

/// Dense Hessian in the coordinate order [rho rows, alpha rows], each row
/// contributing K consecutive coordinates. Symmetric by construction.
inline MatrixXd dense_hessian(const HessianBlocks& h) {
  const int V = h.V, K = h.K;
  const Eigen::Index d = 2ll * V * K;
  MatrixXd H = MatrixXd::Zero(d, d);
  for (int w = 0; w < V; ++w)
    H.block(w * K, w * K, K, K) = h.diag_rho[w];
  for (int v = 0; v < V; ++v)
    H.block((V + v) * K, (V + v) * K, K, K) = h.diag_alpha[v];
  for (const auto& [key, c] : h.cross) {
    const int w = static_cast<int>(key >> 32);
    const int v = static_cast<int>(key & 0xffffffffull);
    H.block(w * K, (V + v) * K, K, K) = c;
    H.block((V + v) * K, w * K, K, K) = c.transpose();
  }
  return H;
}

/// Laplace posterior approximation: the MAP mode plus an eigendecomposed
/// conditional covariance over the coordinates not pinned by the constraint.
struct LaplaceModel {
  EmbeddingState mode;
  IdentificationConstraint constraint;
  MatrixXd eigenvectors;    // d x d, columns are eigenvectors of Sigma'
  VectorXd eigenvalues;     // clipped at zero
  std::vector<Eigen::Index> coords;  // reduced index -> dense coordinate
  int clipped_count = 0;
  double clipped_mass = 0.0;  // total magnitude of clipped negative values

  Eigen::Index dim() const { return eigenvalues.size(); }
};

inline constexpr Eigen::Index kDenseLaplaceLimit = 6000;

namespace laplace_detail {

/// Dense coordinates surviving the constraint (alpha rows in I deleted).
inline std::vector<Eigen::Index> free_coords(
    int V, int K, const IdentificationConstraint& constraint) {
  std::vector<bool> frozen(V, false);
  for (int id : constraint.indices) frozen[id] = true;
  std::vector<Eigen::Index> coords;
  coords.reserve(2ll * V * K - static_cast<Eigen::Index>(K) * K);
  for (int w = 0; w < V; ++w)
    for (int k = 0; k < K; ++k) coords.push_back(static_cast<Eigen::Index>(w) * K + k);
  for (int v = 0; v < V; ++v) {
    if (frozen[v]) continue;
    for (int k = 0; k < K; ++k)
      coords.push_back(static_cast<Eigen::Index>(V + v) * K + k);
  }
  return coords;
}

inline MatrixXd submatrix(const MatrixXd& m,
                          const std::vector<Eigen::Index>& coords) {
  const Eigen::Index d = static_cast<Eigen::Index>(coords.size());
  MatrixXd out(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) out(i, j) = m(coords[i], coords[j]);
  return out;
}

}  // namespace laplace_detail

/// Build the Laplace model at theta_map: invert the negated Hessian with the
/// constrained rows/columns deleted (the exact Gaussian conditional at the
/// constraint), eigendecompose, clip negative eigenvalues to zero.
inline LaplaceModel build_laplace(const PairStats& stats, const PriorSpec& prior,
                                  const EmbeddingState& theta_map,
                                  const IdentificationConstraint& constraint,
                                  Eigen::Index dense_limit = kDenseLaplaceLimit) {
  if (!constraint.satisfied_by(theta_map, 0.0))
    throw invalid_input("build_laplace: theta_map does not satisfy constraint");
  const int V = theta_map.V();
  const int K = theta_map.K();
  const Eigen::Index d = 2ll * V * K - static_cast<Eigen::Index>(K) * K;
  if (d > dense_limit)
    throw invalid_input(
        "build_laplace: " + std::to_string(d) +
        " coordinates exceed the dense eigendecomposition limit of " +
        std::to_string(dense_limit) + "; use the pairwise sampling path");

  const MatrixXd H = dense_hessian(assemble_hessian(stats, theta_map, prior));
  LaplaceModel model{theta_map, constraint, {}, {}, {}, 0, 0.0};
  model.coords = laplace_detail::free_coords(V, K, constraint);
  const MatrixXd neg_h = -laplace_detail::submatrix(H, model.coords);
  MatrixXd sigma;
  Eigen::LLT<MatrixXd> llt(neg_h);
  if (llt.info() == Eigen::Success) {
    sigma = llt.solve(MatrixXd::Identity(neg_h.rows(), neg_h.cols()));
  } else {
    sigma = neg_h.partialPivLu().solve(
        MatrixXd::Identity(neg_h.rows(), neg_h.cols()));
  }
  sigma = 0.5 * (sigma + sigma.transpose());  // symmetrize inversion noise
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma);
  if (es.info() != Eigen::Success)
    throw numerical_error("build_laplace: eigendecomposition failed");
  model.eigenvectors = es.eigenvectors();
  model.eigenvalues = es.eigenvalues();
  for (Eigen::Index i = 0; i < model.eigenvalues.size(); ++i) {
    if (model.eigenvalues(i) < 0.0) {
      model.clipped_mass += -model.eigenvalues(i);
      model.eigenvalues(i) = 0.0;
      ++model.clipped_count;
    }
  }
  return model;
}

/// mode + U sqrt(D) eps scattered back into embedding layout. The test hook
/// for eps = 0 is the explicit-eps overload.
inline EmbeddingState laplace_draw_with_eps(const LaplaceModel& model,
                                            const VectorXd& eps) {
  if (eps.size() != model.dim())
    throw invalid_input("laplace_draw_with_eps: eps dimension mismatch");
  const VectorXd x =
      model.eigenvectors * (model.eigenvalues.cwiseSqrt().cwiseProduct(eps));
  EmbeddingState theta = model.mode;
  const int V = theta.V();
  const int K = theta.K();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Eigen::Index c = model.coords[i];
    const int row = static_cast<int>(c / K);
    const int col = static_cast<int>(c % K);
    if (row < V)
      theta.rho(row, col) += x(i);
    else
      theta.alpha(row - V, col) += x(i);
  }
  return theta;
}

inline PosteriorDraws laplace_draws(const LaplaceModel& model, int n,
                                    std::uint64_t seed) {
  if (n < 1) throw invalid_input("laplace_draws: n must be >= 1");
  PosteriorDraws out;
  out.seed = seed;
  out.burn_in = 0;
  out.constraint = model.constraint;
  out.draws.reserve(n);
  Rng rng(seed, 0x6c61706cull);
  VectorXd eps(model.dim());
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < eps.size(); ++j) eps(j) = rng.normal();
    out.draws.push_back(laplace_draw_with_eps(model, eps));
  }
  return out;
}

/// Draws of the (rho_w, alpha_v) pair from its 2K x 2K conditional marginal,
/// sampled via Cholesky. Avoids the full eigendecomposition: only 2K columns
/// of the inverse are solved for.
struct PairwiseDraws {
  MatrixXd rho_w;    // n x K
  MatrixXd alpha_v;  // n x K
};

inline PairwiseDraws laplace_pairwise_draws(
    const PairStats& stats, const PriorSpec& prior,
    const EmbeddingState& theta_map, const IdentificationConstraint& constraint,
    int w, int v, int n, std::uint64_t seed) {
  if (n < 1) throw invalid_input("laplace_pairwise_draws: n must be >= 1");
  const int V = theta_map.V();
  const int K = theta_map.K();
  if (w < 0 || w >= V || v < 0 || v >= V)
    throw invalid_input("laplace_pairwise_draws: word id out of range");
  if (constraint.contains(v))
    throw invalid_input("laplace_pairwise_draws: alpha_v is constrained");

  const MatrixXd H = dense_hessian(assemble_hessian(stats, theta_map, prior));
  const auto coords = laplace_detail::free_coords(V, K, constraint);
  const MatrixXd neg_h = -laplace_detail::submatrix(H, coords);

  // Reduced indices of the 2K coordinates of interest.
  std::vector<Eigen::Index> sel;
  sel.reserve(2 * K);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(coords.size()); ++i) {
    const Eigen::Index c = coords[i];
    const int row = static_cast<int>(c / K);
    if (row == w || row == V + v) sel.push_back(i);
  }
  if (static_cast<int>(sel.size()) != 2 * K)
    throw numerical_error("laplace_pairwise_draws: coordinate selection failed");

  MatrixXd rhs = MatrixXd::Zero(neg_h.rows(), 2 * K);
  for (int j = 0; j < 2 * K; ++j) rhs(sel[j], j) = 1.0;
  MatrixXd cols;
  Eigen::LLT<MatrixXd> llt(neg_h);
  if (llt.info() == Eigen::Success)
    cols = llt.solve(rhs);
  else
    cols = neg_h.partialPivLu().solve(rhs);
  MatrixXd marg(2 * K, 2 * K);
  for (int i = 0; i < 2 * K; ++i) marg.row(i) = cols.row(sel[i]);
  marg = 0.5 * (marg + marg.transpose());

  Eigen::LLT<MatrixXd> mllt(marg);
  if (mllt.info() != Eigen::Success) {
    marg.diagonal().array() += 1e-10;
    mllt.compute(marg);
    if (mllt.info() != Eigen::Success)
      throw numerical_error(
          "laplace_pairwise_draws: marginal covariance not positive definite");
  }
  const MatrixXd L = mllt.matrixL();

  PairwiseDraws out;
  out.rho_w.resize(n, K);
  out.alpha_v.resize(n, K);
  Rng rng(seed, 0x7077647277ull, static_cast<std::uint64_t>(w),
          static_cast<std::uint64_t>(v));
  VectorXd z(2 * K);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 2 * K; ++j) z(j) = rng.normal();
    const VectorXd x = L * z;
    out.rho_w.row(i) =
        theta_map.rho.row(w) + x.head(K).transpose();
    out.alpha_v.row(i) =
        theta_map.alpha.row(v) + x.tail(K).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: mode as EmbeddingState binary, laplace.bin little-endian
// (u32 d, d float64 eigenvalues, d*d float64 eigenvectors column-major),
// meta.json with the constraint and clipping report.
// ---------------------------------------------------------------------------

inline void write_laplace_store(const std::string& dir,
                                const LaplaceModel& model) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_embedding(dir + "/mode.bin", model.mode);
  std::ofstream f(dir + "/laplace.bin", std::ios::binary);
  if (!f) throw io_error("cannot write " + dir + "/laplace.bin");
  const std::uint32_t d = static_cast<std::uint32_t>(model.dim());
  f.write(reinterpret_cast<const char*>(&d), 4);
  f.write(reinterpret_cast<const char*>(model.eigenvalues.data()),
          static_cast<std::streamsize>(d * sizeof(double)));
  f.write(reinterpret_cast<const char*>(model.eigenvectors.data()),
          static_cast<std::streamsize>(static_cast<std::uint64_t>(d) * d *
                                       sizeof(double)));
  if (!f) throw io_error("write failed: " + dir + "/laplace.bin");
  json meta{{"V", model.mode.V()},
            {"K", model.mode.K()},
            {"d", d},
            {"clipped_count", model.clipped_count},
            {"clipped_mass", model.clipped_mass},
            {"constraint", constraint_to_json(model.constraint)}};
  write_json(dir + "/meta.json", meta);
}

inline LaplaceModel read_laplace_store(const std::string& dir) {
  const json meta = read_json(dir + "/meta.json");
  EmbeddingState mode = read_embedding(dir + "/mode.bin");
  IdentificationConstraint constraint =
      constraint_from_json(meta.at("constraint"));
  std::ifstream f(dir + "/laplace.bin", std::ios::binary);
  if (!f) throw io_error("cannot open " + dir + "/laplace.bin");
  std::uint32_t d = 0;
  f.read(reinterpret_cast<char*>(&d), 4);
  LaplaceModel model{std::move(mode), std::move(constraint),
                     MatrixXd(d, d), VectorXd(d), {},
                     meta.at("clipped_count").get<int>(),
                     meta.at("clipped_mass").get<double>()};
  f.read(reinterpret_cast<char*>(model.eigenvalues.data()),
         static_cast<std::streamsize>(d * sizeof(double)));
  f.read(reinterpret_cast<char*>(model.eigenvectors.data()),
         static_cast<std::streamsize>(static_cast<std::uint64_t>(d) * d *
                                      sizeof(double)));
  if (!f) throw io_error("truncated laplace store: " + dir);
  model.coords = laplace_detail::free_coords(model.mode.V(), model.mode.K(),
                                             model.constraint);
  return model;
}

}  // namespace pgembed
