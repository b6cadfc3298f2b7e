#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pgembed/errors.hpp"

namespace pgembed {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Condition-number bound above which a K x K constraint matrix is treated
/// as singular for identification purposes.
inline constexpr double kMaxConditionNumber = 1e8;

struct Vocabulary {
  std::vector<std::string> tokens;  // index = word id
  std::unordered_map<std::string, int> index;

  int size() const { return static_cast<int>(tokens.size()); }

  static Vocabulary from_tokens(std::vector<std::string> toks) {
    Vocabulary v;
    v.tokens = std::move(toks);
    for (int i = 0; i < static_cast<int>(v.tokens.size()); ++i) {
      if (!v.index.emplace(v.tokens[i], i).second)
        throw invalid_input("duplicate token in vocabulary: " + v.tokens[i]);
    }
    return v;
  }
};

/// Target matrix rho (V x K) and context matrix alpha (V x K).
struct EmbeddingState {
  MatrixXd rho;
  MatrixXd alpha;

  EmbeddingState() = default;
  EmbeddingState(MatrixXd r, MatrixXd a) : rho(std::move(r)), alpha(std::move(a)) {
    if (rho.rows() != alpha.rows() || rho.cols() != alpha.cols())
      throw invalid_input("rho and alpha must have identical shape");
  }

  static EmbeddingState zeros(int V, int K) {
    return {MatrixXd::Zero(V, K), MatrixXd::Zero(V, K)};
  }

  int V() const { return static_cast<int>(rho.rows()); }
  int K() const { return static_cast<int>(rho.cols()); }

  bool all_finite() const {
    return rho.allFinite() && alpha.allFinite();
  }
};

/// One unique word pair with its positive/negative sample counts.
struct PairEntry {
  int w;  // target word id
  int v;  // context word id
  std::int64_t n_pos;
  std::int64_t n_neg;
};

/// Sparse sufficient statistics of the SGNS likelihood. Entries are kept
/// sorted by (w, v) so every consumer iterates in a fixed order.
struct PairStats {
  int V = 0;
  std::int64_t total_tokens = 0;
  std::vector<PairEntry> entries;

  std::size_t unique_pairs() const { return entries.size(); }

  std::int64_t total_counts() const {
    std::int64_t s = 0;
    for (const auto& e : entries) s += e.n_pos + e.n_neg;
    return s;
  }

  void validate() const {
    int prev_w = -1, prev_v = -1;
    for (const auto& e : entries) {
      if (e.w < 0 || e.w >= V || e.v < 0 || e.v >= V)
        throw invalid_input("pair id out of range");
      if (e.n_pos < 0 || e.n_neg < 0)
        throw invalid_input("negative pair count");
      if (e.n_pos == 0 && e.n_neg == 0)
        throw invalid_input("stored pair with zero counts");
      if (e.w < prev_w || (e.w == prev_w && e.v <= prev_v))
        throw invalid_input("pair entries not strictly sorted by (w,v)");
      prev_w = e.w;
      prev_v = e.v;
    }
  }
};

/// Incremental counter used while scanning data; finalize() produces the
/// sorted PairStats.
class PairAccumulator {
 public:
  void add(int w, int v, std::int64_t n_pos, std::int64_t n_neg) {
    auto& c = counts_[key(w, v)];
    c.first += n_pos;
    c.second += n_neg;
  }

  PairStats finalize(int V, std::int64_t total_tokens) const {
    PairStats s;
    s.V = V;
    s.total_tokens = total_tokens;
    s.entries.reserve(counts_.size());
    for (const auto& [k, c] : counts_) {
      if (c.first == 0 && c.second == 0) continue;
      s.entries.push_back({static_cast<int>(k >> 32),
                           static_cast<int>(k & 0xffffffffull), c.first,
                           c.second});
    }
    std::sort(s.entries.begin(), s.entries.end(),
              [](const PairEntry& a, const PairEntry& b) {
                return a.w != b.w ? a.w < b.w : a.v < b.v;
              });
    s.validate();
    return s;
  }

 private:
  static std::uint64_t key(int w, int v) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(w)) << 32) |
           static_cast<std::uint32_t>(v);
  }
  std::unordered_map<std::uint64_t, std::pair<std::int64_t, std::int64_t>>
      counts_;
};

/// Spherical Gaussian prior N(0, lambda^-1 I) on every embedding entry.
struct PriorSpec {
  double lambda;

  explicit PriorSpec(double l) : lambda(l) {
    if (!(lambda > 0.0)) throw invalid_input("prior lambda must be > 0");
  }
};

/// K context rows (ids in `indices`) pinned to the invertible matrix M.
struct IdentificationConstraint {
  std::vector<int> indices;
  MatrixXd M;

  IdentificationConstraint(std::vector<int> ids, MatrixXd m)
      : indices(std::move(ids)), M(std::move(m)) {
    const int K = static_cast<int>(M.rows());
    if (M.cols() != K) throw invalid_input("constraint matrix must be square");
    if (static_cast<int>(indices.size()) != K)
      throw invalid_input("constraint needs exactly K word ids");
    std::vector<int> sorted = indices;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw invalid_input("constraint word ids must be distinct");
    Eigen::JacobiSVD<MatrixXd> svd(M);
    const double smin = svd.singularValues()(K - 1);
    if (smin <= 0.0 || svd.singularValues()(0) / smin > kMaxConditionNumber)
      throw numerical_error("constraint matrix is numerically singular");
  }

  int K() const { return static_cast<int>(M.rows()); }

  bool contains(int word) const {
    return std::find(indices.begin(), indices.end(), word) != indices.end();
  }

  /// Default choice: the last K word ids.
  static std::vector<int> last_k_ids(int V, int K) {
    std::vector<int> ids(K);
    for (int i = 0; i < K; ++i) ids[i] = V - K + i;
    return ids;
  }

  bool satisfied_by(const EmbeddingState& theta, double tol = 0.0) const {
    for (int i = 0; i < K(); ++i) {
      if (((theta.alpha.row(indices[i]).transpose() - M.row(i).transpose())
               .cwiseAbs()
               .maxCoeff()) > tol)
        return false;
    }
    return true;
  }
};

/// Ordered draws from one chain.
struct PosteriorDraws {
  std::vector<EmbeddingState> draws;
  int burn_in = 0;
  std::uint64_t seed = 0;
  std::optional<IdentificationConstraint> constraint;

  int V() const { return draws.empty() ? 0 : draws.front().V(); }
  int K() const { return draws.empty() ? 0 : draws.front().K(); }
};

}  // namespace pgembed
