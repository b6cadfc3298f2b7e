#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "pgembed/types.hpp"

namespace pgembed {

using nlohmann::json;

// ---------------------------------------------------------------------------
// PairStats text format: header "#pairstats v1 V=<V>", then one record per
// line "w<TAB>v<TAB>n_pos<TAB>n_neg", 0-based ids.
// ---------------------------------------------------------------------------

inline void write_pairstats(std::ostream& os, const PairStats& stats) {
  os << "#pairstats v1 V=" << stats.V << "\n";
  for (const auto& e : stats.entries)
    os << e.w << '\t' << e.v << '\t' << e.n_pos << '\t' << e.n_neg << '\n';
}

inline void write_pairstats(const std::string& path, const PairStats& stats) {
  std::ofstream f(path, std::ios::binary);  // binary: force LF line endings
  if (!f) throw io_error("cannot open for writing: " + path);
  write_pairstats(f, stats);
  if (!f) throw io_error("write failed: " + path);
}

inline PairStats read_pairstats(std::istream& is, const std::string& name) {
  std::string header;
  if (!std::getline(is, header)) throw io_error("empty pairstats file: " + name);
  int V = 0;
  if (std::sscanf(header.c_str(), "#pairstats v1 V=%d", &V) != 1 || V <= 0)
    throw io_error("bad pairstats header in " + name + ": " + header);
  PairStats stats;
  stats.V = V;
  std::string line;
  std::set<std::pair<int, int>> seen;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    PairEntry e;
    std::istringstream ls(line);
    if (!(ls >> e.w >> e.v >> e.n_pos >> e.n_neg))
      throw io_error("bad pairstats record in " + name + ": " + line);
    if (!seen.insert({e.w, e.v}).second)
      throw io_error("duplicate (w,v) record in " + name + ": " + line);
    stats.entries.push_back(e);
  }
  std::sort(stats.entries.begin(), stats.entries.end(),
            [](const PairEntry& a, const PairEntry& b) {
              return a.w != b.w ? a.w < b.w : a.v < b.v;
            });
  stats.validate();
  return stats;
}

inline PairStats read_pairstats(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open: " + path);
  return read_pairstats(f, path);
}

// ---------------------------------------------------------------------------
// EmbeddingState binary format: little-endian, magic "PGE1", u32 V, u32 K,
// V*K float64 rho row-major, V*K float64 alpha row-major.
// ---------------------------------------------------------------------------

namespace detail {
inline void write_matrix_rowmajor(std::ostream& os, const MatrixXd& m) {
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) {
      const double x = m(i, j);
      os.write(reinterpret_cast<const char*>(&x), sizeof(double));
    }
}

inline void read_matrix_rowmajor(std::istream& is, MatrixXd& m) {
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) {
      double x;
      is.read(reinterpret_cast<char*>(&x), sizeof(double));
      m(i, j) = x;
    }
}
}  // namespace detail

inline void write_embedding(std::ostream& os, const EmbeddingState& theta) {
  os.write("PGE1", 4);
  const std::uint32_t V = static_cast<std::uint32_t>(theta.V());
  const std::uint32_t K = static_cast<std::uint32_t>(theta.K());
  os.write(reinterpret_cast<const char*>(&V), 4);
  os.write(reinterpret_cast<const char*>(&K), 4);
  detail::write_matrix_rowmajor(os, theta.rho);
  detail::write_matrix_rowmajor(os, theta.alpha);
}

inline void write_embedding(const std::string& path,
                            const EmbeddingState& theta) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for writing: " + path);
  write_embedding(f, theta);
  if (!f) throw io_error("write failed: " + path);
}

inline EmbeddingState read_embedding(std::istream& is,
                                     const std::string& name) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "PGE1", 4) != 0)
    throw io_error("bad embedding magic in " + name);
  std::uint32_t V = 0, K = 0;
  is.read(reinterpret_cast<char*>(&V), 4);
  is.read(reinterpret_cast<char*>(&K), 4);
  if (!is || V == 0 || K == 0)
    throw io_error("bad embedding dimensions in " + name);
  EmbeddingState theta = EmbeddingState::zeros(static_cast<int>(V),
                                               static_cast<int>(K));
  detail::read_matrix_rowmajor(is, theta.rho);
  detail::read_matrix_rowmajor(is, theta.alpha);
  if (!is) throw io_error("truncated embedding file: " + name);
  return theta;
}

inline EmbeddingState read_embedding(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open: " + path);
  return read_embedding(f, path);
}

// ---------------------------------------------------------------------------
// Draw store: directory with meta.json and draws.bin (concatenated
// EmbeddingState records in iteration order).
// ---------------------------------------------------------------------------

inline json constraint_to_json(const IdentificationConstraint& c) {
  json m = json::array();
  for (int i = 0; i < c.M.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < c.M.cols(); ++j) row.push_back(c.M(i, j));
    m.push_back(row);
  }
  return json{{"ids", c.indices}, {"M", m}};
}

inline IdentificationConstraint constraint_from_json(const json& j) {
  std::vector<int> ids = j.at("ids").get<std::vector<int>>();
  const auto& m = j.at("M");
  const int K = static_cast<int>(m.size());
  MatrixXd M(K, K);
  for (int i = 0; i < K; ++i)
    for (int jj = 0; jj < K; ++jj) M(i, jj) = m[i][jj].get<double>();
  return {std::move(ids), std::move(M)};
}

inline void write_draw_store(const std::string& dir, const PosteriorDraws& d,
                             int pg_steps) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json meta{{"V", d.V()},
            {"K", d.K()},
            {"seed", d.seed},
            {"burn_in", d.burn_in},
            {"S", pg_steps},
            {"n_draws", d.draws.size()}};
  if (d.constraint) meta["constraint"] = constraint_to_json(*d.constraint);
  std::ofstream mf(dir + "/meta.json", std::ios::binary);
  if (!mf) throw io_error("cannot write " + dir + "/meta.json");
  mf << meta.dump(2) << "\n";
  std::ofstream bf(dir + "/draws.bin", std::ios::binary);
  if (!bf) throw io_error("cannot write " + dir + "/draws.bin");
  for (const auto& theta : d.draws) write_embedding(bf, theta);
  if (!bf) throw io_error("write failed: " + dir + "/draws.bin");
}

inline PosteriorDraws read_draw_store(const std::string& dir) {
  std::ifstream mf(dir + "/meta.json", std::ios::binary);
  if (!mf) throw io_error("cannot open " + dir + "/meta.json");
  json meta = json::parse(mf);
  PosteriorDraws d;
  d.burn_in = meta.at("burn_in").get<int>();
  d.seed = meta.at("seed").get<std::uint64_t>();
  if (meta.contains("constraint"))
    d.constraint = constraint_from_json(meta["constraint"]);
  const std::size_t n = meta.at("n_draws").get<std::size_t>();
  std::ifstream bf(dir + "/draws.bin", std::ios::binary);
  if (!bf) throw io_error("cannot open " + dir + "/draws.bin");
  d.draws.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    d.draws.push_back(read_embedding(bf, dir + "/draws.bin"));
  return d;
}

inline void write_json(const std::string& path, const json& j) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for writing: " + path);
  f << j.dump(2) << "\n";
  if (!f) throw io_error("write failed: " + path);
}

inline json read_json(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open: " + path);
  return json::parse(f);
}

}  // namespace pgembed
