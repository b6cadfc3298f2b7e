#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pgembed/model.hpp"
#include "pgembed/rng.hpp"
#include "pgembed/types.hpp"

namespace pgembed {

struct CorpusConfig {
  int window = 2;                  // M
  int negatives_per_positive = 1;  // n_s
  int vocab_size_limit = 5000;
  double noise_exponent = 1.0;  // unigram^exponent for negative sampling
  std::uint64_t seed = 0;

  void validate() const {
    if (window < 1) throw invalid_input("window must be >= 1");
    if (negatives_per_positive < 1)
      throw invalid_input("negatives_per_positive must be >= 1");
    if (vocab_size_limit < 1) throw invalid_input("vocab_size_limit must be >= 1");
    if (noise_exponent < 0.0) throw invalid_input("noise_exponent must be >= 0");
  }
};

enum class PairLaw { uniform, zipf };

struct SimConfig {
  int V = 100;
  int K = 5;
  double epsilon = 1.0;  // signal-to-noise scale
  PairLaw pair_law = PairLaw::uniform;
  double zipf_a = 1.0;
  double zipf_b = 2.7;
  std::int64_t N = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (V < 1 || K < 1) throw invalid_input("V and K must be positive");
    if (!(epsilon > 0.0)) throw invalid_input("epsilon must be > 0");
    if (N < 1) throw invalid_input("N must be >= 1");
    if (pair_law == PairLaw::zipf && (!(zipf_a > 0.0) || !(zipf_b > 0.0)))
      throw invalid_input("zipf parameters must be positive");
  }
};

struct SimulationTruth {
  EmbeddingState theta_true;
  SimConfig config;
};

/// Keep the `limit` most frequent types (ties broken by first occurrence)
/// and drop all other tokens from the id sequence.
inline std::pair<Vocabulary, std::vector<int>> build_vocab(
    const std::vector<std::string>& token_stream, int limit) {
  if (token_stream.empty()) throw invalid_input("build_vocab: empty stream");
  if (limit < 1) throw invalid_input("build_vocab: limit must be >= 1");

  std::unordered_map<std::string, std::pair<std::int64_t, std::size_t>> freq;
  for (std::size_t i = 0; i < token_stream.size(); ++i) {
    auto [it, inserted] = freq.emplace(token_stream[i], std::make_pair(0, i));
    it->second.first += 1;
  }
  std::vector<const std::string*> types;
  types.reserve(freq.size());
  for (const auto& [tok, _] : freq) types.push_back(&tok);
  std::sort(types.begin(), types.end(), [&](const auto* a, const auto* b) {
    const auto& fa = freq.at(*a);
    const auto& fb = freq.at(*b);
    if (fa.first != fb.first) return fa.first > fb.first;
    return fa.second < fb.second;  // earlier first occurrence wins ties
  });
  const std::size_t keep = std::min<std::size_t>(limit, types.size());
  std::vector<std::string> kept(keep);
  for (std::size_t i = 0; i < keep; ++i) kept[i] = *types[i];
  Vocabulary vocab = Vocabulary::from_tokens(std::move(kept));

  std::vector<int> ids;
  ids.reserve(token_stream.size());
  for (const auto& tok : token_stream) {
    auto it = vocab.index.find(tok);
    if (it != vocab.index.end()) ids.push_back(it->second);
  }
  return {std::move(vocab), std::move(ids)};
}

namespace detail {
/// Sample an index from a cumulative distribution via inverse transform.
inline int sample_cdf(const std::vector<double>& cdf, Rng& rng) {
  const double u = rng.uniform() * cdf.back();
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  if (it == cdf.end()) --it;
  return static_cast<int>(it - cdf.begin());
}
}  // namespace detail

/// Window extraction + negative sampling. Negatives are drawn once here,
/// from the empirical unigram distribution raised to cfg.noise_exponent.
inline PairStats extract_pairs(const std::vector<int>& ids,
                               const Vocabulary& vocab,
                               const CorpusConfig& cfg) {
  cfg.validate();
  const int V = vocab.size();
  for (int id : ids)
    if (id < 0 || id >= V) throw invalid_input("extract_pairs: id out of range");

  std::vector<double> weight(V, 0.0);
  for (int id : ids) weight[id] += 1.0;
  std::vector<double> cdf(V);
  double acc = 0.0;
  for (int v = 0; v < V; ++v) {
    if (weight[v] > 0.0) acc += std::pow(weight[v], cfg.noise_exponent);
    cdf[v] = acc;
  }
  if (acc <= 0.0) throw invalid_input("extract_pairs: empty id sequence");

  Rng rng(cfg.seed, 0x706169727378ull);
  PairAccumulator accum;
  const auto n = static_cast<std::int64_t>(ids.size());
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t lo = std::max<std::int64_t>(0, i - cfg.window);
    const std::int64_t hi = std::min<std::int64_t>(n - 1, i + cfg.window);
    for (std::int64_t j = lo; j <= hi; ++j) {
      if (j == i) continue;
      accum.add(ids[i], ids[j], 1, 0);
      for (int s = 0; s < cfg.negatives_per_positive; ++s)
        accum.add(ids[i], detail::sample_cdf(cdf, rng), 0, 1);
    }
  }
  return accum.finalize(V, n);
}

/// Contiguous-tail split: the final ceil(fraction * len) tokens become test.
inline std::pair<std::vector<int>, std::vector<int>> split_holdout(
    const std::vector<int>& ids, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw invalid_input("split_holdout: fraction must be in (0,1)");
  const auto n = static_cast<std::int64_t>(ids.size());
  const auto n_test = static_cast<std::int64_t>(
      std::ceil(fraction * static_cast<double>(n)));
  if (n_test < 1 || n_test >= n)
    throw invalid_input("split_holdout: degenerate split");
  return {std::vector<int>(ids.begin(), ids.end() - n_test),
          std::vector<int>(ids.end() - n_test, ids.end())};
}

/// Ground-truth embedding with every entry i.i.d. N(0, epsilon^2 / K).
inline SimulationTruth sim_embedding(const SimConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed, 0x7472757468ull);
  const double sd = cfg.epsilon / std::sqrt(static_cast<double>(cfg.K));
  EmbeddingState theta = EmbeddingState::zeros(cfg.V, cfg.K);
  for (int w = 0; w < cfg.V; ++w)
    for (int k = 0; k < cfg.K; ++k) theta.rho(w, k) = sd * rng.normal();
  for (int w = 0; w < cfg.V; ++w)
    for (int k = 0; k < cfg.K; ++k) theta.alpha(w, k) = sd * rng.normal();
  return {std::move(theta), cfg};
}

/// Draw N word pairs under the configured law, then label each positive or
/// negative with probability co_prob(theta_true, w, v).
inline PairStats sim_pairs(const SimulationTruth& truth) {
  const SimConfig& cfg = truth.config;
  cfg.validate();
  const int V = cfg.V;
  std::vector<double> cdf(V);
  double acc = 0.0;
  for (int v = 0; v < V; ++v) {
    const double p =
        cfg.pair_law == PairLaw::uniform
            ? 1.0
            : 1.0 / (std::pow(static_cast<double>(v + 1), cfg.zipf_a) + cfg.zipf_b);
    acc += p;
    cdf[v] = acc;
  }
  Rng rng(cfg.seed, 0x7061697273ull);
  PairAccumulator accum;
  for (std::int64_t i = 0; i < cfg.N; ++i) {
    const int w = detail::sample_cdf(cdf, rng);
    const int v = detail::sample_cdf(cdf, rng);
    const double p = co_prob(truth.theta_true, w, v);
    if (rng.uniform() < p)
      accum.add(w, v, 1, 0);
    else
      accum.add(w, v, 0, 1);
  }
  return accum.finalize(V, 0);
}

/// Whitespace tokenization of plain UTF-8 text.
inline std::vector<std::string> tokenize(std::istream& is) {
  std::vector<std::string> tokens;
  std::string tok;
  while (is >> tok) tokens.push_back(tok);
  return tokens;
}

}  // namespace pgembed
