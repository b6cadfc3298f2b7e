#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "pgembed/diagnostics.hpp"
#include "pgembed/gibbs.hpp"
#include "pgembed/io.hpp"
#include "pgembed/laplace.hpp"
#include "pgembed/map.hpp"
#include "pgembed/pipeline.hpp"

namespace {

using namespace pgembed;

constexpr const char* kVersion = "pgembed 0.1.0";

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumerical = 4;

struct Manifest {
  std::string command;
  json config = json::object();
  json inputs = json::object();
  json outputs = json::object();
  std::uint64_t seed = 0;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void write(const std::string& dir) const {
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    json j{{"command", command}, {"config", config},   {"inputs", inputs},
           {"outputs", outputs}, {"seed", seed},       {"version", kVersion},
           {"wall_time_seconds", wall}};
    write_json(dir + "/manifest.json", j);
  }
};

std::vector<int> parse_constraint_ids(const std::string& spec, int V, int K) {
  if (spec == "last-k") return IdentificationConstraint::last_k_ids(V, K);
  if (spec.rfind("ids:", 0) != 0)
    throw invalid_input("constraint must be 'last-k' or 'ids:<id,id,...>'");
  std::vector<int> ids;
  std::stringstream ss(spec.substr(4));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    ids.push_back(std::stoi(tok));
  }
  if (static_cast<int>(ids.size()) != K)
    throw invalid_input("constraint needs exactly K=" + std::to_string(K) +
                        " word ids");
  for (int id : ids)
    if (id < 0 || id >= V) throw invalid_input("constraint id out of range");
  return ids;
}

std::vector<std::pair<int, int>> parse_pairs(
    const std::vector<std::string>& specs) {
  std::vector<std::pair<int, int>> pairs;
  for (const auto& s : specs) {
    const auto colon = s.find(':');
    if (colon == std::string::npos)
      throw invalid_input("pair must be formatted w:v, got '" + s + "'");
    pairs.emplace_back(std::stoi(s.substr(0, colon)),
                       std::stoi(s.substr(colon + 1)));
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  SimConfig cfg;
  std::string law = "uniform";
  std::string out;
};

int cmd_simulate(const SimulateArgs& a) {
  Manifest manifest;
  manifest.command = "simulate";
  SimConfig cfg = a.cfg;
  cfg.pair_law = a.law == "zipf" ? PairLaw::zipf : PairLaw::uniform;
  cfg.validate();
  manifest.seed = cfg.seed;
  manifest.config = {{"V", cfg.V},           {"K", cfg.K},
                     {"N", cfg.N},           {"law", a.law},
                     {"epsilon", cfg.epsilon}, {"zipf_a", cfg.zipf_a},
                     {"zipf_b", cfg.zipf_b}};

  std::filesystem::create_directories(a.out);
  SimulationTruth truth = sim_embedding(cfg);
  PairStats stats = sim_pairs(truth);
  write_embedding(a.out + "/truth.bin", truth.theta_true);
  write_pairstats(a.out + "/pairs.tsv", stats);
  manifest.outputs = {{"truth", a.out + "/truth.bin"},
                      {"pairs", a.out + "/pairs.tsv"}};
  manifest.write(a.out);
  std::printf("simulate: V=%d K=%d N=%lld unique_pairs=%zu\n", cfg.V, cfg.K,
              static_cast<long long>(cfg.N), stats.unique_pairs());
  return 0;
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string input;
  CorpusConfig cfg;
  double holdout_frac = 0.1;
  std::string out;
};

int cmd_ingest(const IngestArgs& a) {
  Manifest manifest;
  manifest.command = "ingest";
  a.cfg.validate();
  if (!(a.holdout_frac > 0.0 && a.holdout_frac < 1.0))
    throw invalid_input("holdout-frac must be in (0,1)");
  manifest.seed = a.cfg.seed;
  manifest.config = {{"vocab_size", a.cfg.vocab_size_limit},
                     {"window", a.cfg.window},
                     {"negatives", a.cfg.negatives_per_positive},
                     {"holdout_frac", a.holdout_frac}};
  manifest.inputs = {{"corpus", a.input}};

  std::ifstream f(a.input, std::ios::binary);
  if (!f) throw io_error("cannot open corpus: " + a.input);
  const std::vector<std::string> tokens = tokenize(f);
  auto [vocab, ids] = build_vocab(tokens, a.cfg.vocab_size_limit);
  auto [train_ids, test_ids] = split_holdout(ids, a.holdout_frac);

  std::filesystem::create_directories(a.out);
  {
    std::ofstream vf(a.out + "/vocab.txt", std::ios::binary);
    if (!vf) throw io_error("cannot write " + a.out + "/vocab.txt");
    for (const auto& t : vocab.tokens) vf << t << '\n';
  }
  CorpusConfig test_cfg = a.cfg;
  test_cfg.seed = a.cfg.seed ^ 0x686f6c64ull;  // independent negative draws
  PairStats train = extract_pairs(train_ids, vocab, a.cfg);
  PairStats test = extract_pairs(test_ids, vocab, test_cfg);
  write_pairstats(a.out + "/train.tsv", train);
  write_pairstats(a.out + "/test.tsv", test);
  manifest.outputs = {{"vocab", a.out + "/vocab.txt"},
                      {"train", a.out + "/train.tsv"},
                      {"test", a.out + "/test.tsv"}};
  manifest.write(a.out);
  std::printf("ingest: tokens=%zu kept=%zu vocab=%d train=%zu test=%zu\n",
              tokens.size(), ids.size(), vocab.size(), train_ids.size(),
              test_ids.size());
  return 0;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitArgs {
  std::string method;
  std::string stats_path;
  int K = 5;
  double lambda = 1.0;
  int iters = 2000;
  int burn_in = 1000;
  int S = 10;
  std::uint64_t seed = 0;
  std::string constraint = "last-k";
  std::string map_path;  // optional warm start for laplace
  int n_draws = 1000;    // laplace draw count
  int threads = 1;
  std::string out;
};

/// MAP fit, then the constraint built from its own context rows at `ids`
/// (so the MAP already satisfies it) polished under the constraint.
MapResult constrained_map(const PairStats& stats, const PriorSpec& prior,
                          const FitArgs& a, const std::vector<int>& ids,
                          std::optional<IdentificationConstraint>& out_constraint,
                          const EmbeddingState* warm) {
  MapConfig mcfg;
  mcfg.seed = a.seed;
  const EmbeddingState start = warm ? *warm : random_init(stats.V, a.K, a.seed);
  MapResult free_fit = fit_map(stats, prior, mcfg, start);
  if (!free_fit.converged)
    std::fprintf(stderr, "warning: MAP pre-fit hit max iterations (grad %.3g)\n",
                 free_fit.grad_sup_norm);
  MatrixXd M(a.K, a.K);
  for (int i = 0; i < a.K; ++i) M.row(i) = free_fit.theta.alpha.row(ids[i]);
  out_constraint.emplace(ids, M);
  return fit_map(stats, prior, mcfg, free_fit.theta, &*out_constraint);
}

int cmd_fit(const FitArgs& a) {
  Manifest manifest;
  manifest.command = "fit";
  manifest.seed = a.seed;
  manifest.config = {{"method", a.method},   {"K", a.K},
                     {"lambda", a.lambda},   {"iters", a.iters},
                     {"burn_in", a.burn_in}, {"S", a.S},
                     {"constraint", a.constraint}, {"n_draws", a.n_draws},
                     {"threads", a.threads}};
  manifest.inputs = {{"stats", a.stats_path}};

  PairStats stats = read_pairstats(a.stats_path);
  if (a.K < 1) throw invalid_input("K must be >= 1");
  PriorSpec prior(a.lambda);
  std::filesystem::create_directories(a.out);

  if (a.method == "map") {
    MapConfig mcfg;
    mcfg.seed = a.seed;
    MapResult fit = fit_map(stats, prior, mcfg, random_init(stats.V, a.K, a.seed));
    write_embedding(a.out + "/map.bin", fit.theta);
    manifest.outputs = {{"map", a.out + "/map.bin"}};
    manifest.config["converged"] = fit.converged;
    manifest.config["grad_sup_norm"] = fit.grad_sup_norm;
    manifest.write(a.out);
    std::printf("fit map: converged=%d iterations=%d log_posterior=%.6f\n",
                fit.converged ? 1 : 0, fit.iterations, fit.log_posterior_value);
    return 0;
  }

  const std::vector<int> ids = parse_constraint_ids(a.constraint, stats.V, a.K);
  std::optional<EmbeddingState> warm;
  if (!a.map_path.empty()) warm = read_embedding(a.map_path);
  std::optional<IdentificationConstraint> constraint;
  MapResult pinned =
      constrained_map(stats, prior, a, ids, constraint, warm ? &*warm : nullptr);
  write_embedding(a.out + "/map.bin", pinned.theta);

  if (a.method == "gibbs") {
    GibbsConfig gcfg;
    gcfg.outer_iterations = a.iters;
    gcfg.burn_in = a.burn_in;
    gcfg.inner_pg_steps = a.S;
    gcfg.seed = a.seed;
    gcfg.parallel_width = a.threads;
    PosteriorDraws draws =
        run_chain(stats, prior, gcfg, pinned.theta, &*constraint);
    write_draw_store(a.out + "/draws", draws, a.S);
    manifest.outputs = {{"map", a.out + "/map.bin"}, {"draws", a.out + "/draws"}};
    manifest.write(a.out);
    std::printf("fit gibbs: draws=%zu burn_in=%d S=%d\n", draws.draws.size(),
                a.burn_in, a.S);
    return 0;
  }

  if (a.method == "laplace") {
    LaplaceModel model = build_laplace(stats, prior, pinned.theta, *constraint);
    if (model.clipped_count > 0)
      std::fprintf(stderr,
                   "warning: clipped %d negative eigenvalues (mass %.3g)\n",
                   model.clipped_count, model.clipped_mass);
    write_laplace_store(a.out + "/laplace", model);
    PosteriorDraws draws = laplace_draws(model, a.n_draws, a.seed);
    write_draw_store(a.out + "/draws", draws, 0);
    manifest.outputs = {{"map", a.out + "/map.bin"},
                        {"laplace", a.out + "/laplace"},
                        {"draws", a.out + "/draws"}};
    manifest.write(a.out);
    std::printf("fit laplace: dim=%lld clipped=%d draws=%d\n",
                static_cast<long long>(model.dim()), model.clipped_count,
                a.n_draws);
    return 0;
  }

  throw invalid_input("unknown fit method: " + a.method);
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

struct DiagnoseArgs {
  std::string draws_path;
  std::string truth_path;
  std::string points_path;
  double level = 0.9;
  std::string report;
  std::vector<std::string> pair_specs;
  std::string out = ".";
};

int cmd_diagnose(const DiagnoseArgs& a) {
  Manifest manifest;
  manifest.command = "diagnose";
  manifest.config = {{"report", a.report}, {"level", a.level}};
  std::filesystem::create_directories(a.out);

  if (a.report == "slope") {
    if (a.points_path.empty())
      throw invalid_input("slope report requires --points (CSV N,rmse)");
    std::ifstream f(a.points_path, std::ios::binary);
    if (!f) throw io_error("cannot open: " + a.points_path);
    std::string line;
    std::getline(f, line);  // header
    std::vector<std::pair<std::int64_t, double>> pts;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos)
        throw io_error("bad N,rmse line: " + line);
      pts.emplace_back(std::stoll(line.substr(0, comma)),
                       std::stod(line.substr(comma + 1)));
    }
    const double slope = convergence_slope(pts);
    std::ofstream of(a.out + "/slope.csv", std::ios::binary);
    write_slope_csv(of, pts);
    manifest.inputs = {{"points", a.points_path}};
    manifest.outputs = {{"slope", a.out + "/slope.csv"}};
    manifest.write(a.out);
    std::printf("slope,%.6f\n", slope);
    return 0;
  }

  if (a.draws_path.empty()) throw invalid_input("--draws is required");
  PosteriorDraws draws = read_draw_store(a.draws_path);
  manifest.inputs = {{"draws", a.draws_path}};

  if (a.report == "coverage") {
    if (a.truth_path.empty())
      throw invalid_input("coverage report requires --truth");
    EmbeddingState truth = read_embedding(a.truth_path);
    std::ofstream csv(a.out + "/coverage.csv", std::ios::binary);
    CoverageReport r = coverage(draws, truth, a.level, &csv);
    manifest.inputs["truth"] = a.truth_path;
    manifest.outputs = {{"coverage", a.out + "/coverage.csv"}};
    manifest.write(a.out);
    std::printf("coverage,%.2f,%.6f\n", r.level, r.fraction_covered);
    return 0;
  }

  const auto pairs = parse_pairs(a.pair_specs);
  if (pairs.empty())
    throw invalid_input(a.report + " report requires --pairs w:v,...");
  auto co_trace = [&](int w, int v) {
    ScalarTrace t;
    t.label = std::to_string(w) + ":" + std::to_string(v);
    t.values.reserve(draws.draws.size());
    for (const auto& th : draws.draws)
      t.values.push_back(sigmoid(th.rho.row(w).dot(th.alpha.row(v))));
    return t;
  };

  if (a.report == "ess") {
    std::ofstream of(a.out + "/ess.csv", std::ios::binary);
    of << "pair,ess\n";
    for (const auto& [w, v] : pairs) {
      const double e = ess(co_trace(w, v));
      of << w << ':' << v << ',' << e << '\n';
      std::printf("ess,%d:%d,%.2f\n", w, v, e);
    }
    manifest.outputs = {{"ess", a.out + "/ess.csv"}};
    manifest.write(a.out);
    return 0;
  }

  if (a.report == "rhat") {
    std::ofstream of(a.out + "/rhat.csv", std::ios::binary);
    of << "pair,rhat\n";
    for (const auto& [w, v] : pairs) {
      const double r = split_rhat({co_trace(w, v)});
      of << w << ':' << v << ',' << r << '\n';
      std::printf("rhat,%d:%d,%.4f\n", w, v, r);
    }
    manifest.outputs = {{"rhat", a.out + "/rhat.csv"}};
    manifest.write(a.out);
    return 0;
  }

  if (a.report == "cosine") {
    std::ofstream of(a.out + "/cosine.csv", std::ios::binary);
    of << "pair,mean,sd,skipped\n";
    for (const auto& [w, v] : pairs) {
      CosineTrace ct = cosine_posterior(draws, w, v);
      if (ct.trace.values.empty())
        throw numerical_error("cosine trace empty for pair " +
                              std::to_string(w) + ":" + std::to_string(v));
      double mu = 0.0;
      for (double x : ct.trace.values) mu += x;
      mu /= static_cast<double>(ct.trace.values.size());
      double var = 0.0;
      for (double x : ct.trace.values) var += (x - mu) * (x - mu);
      var /= std::max<std::size_t>(1, ct.trace.values.size() - 1);
      of << w << ':' << v << ',' << mu << ',' << std::sqrt(var) << ','
         << ct.skipped << '\n';
      std::printf("cosine,%d:%d,%.6f\n", w, v, mu);
    }
    manifest.outputs = {{"cosine", a.out + "/cosine.csv"}};
    manifest.write(a.out);
    return 0;
  }

  throw invalid_input("unknown report: " + a.report);
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string estimate;
  std::string test_stats;
};

int cmd_eval(const EvalArgs& a) {
  PairStats stats = read_pairstats(a.test_stats);
  EmbeddingState theta;
  const std::string mean_suffix = ":mean";
  if (a.estimate.size() > mean_suffix.size() &&
      a.estimate.compare(a.estimate.size() - mean_suffix.size(),
                         mean_suffix.size(), mean_suffix) == 0) {
    const std::string dir =
        a.estimate.substr(0, a.estimate.size() - mean_suffix.size());
    theta = posterior_mean(read_draw_store(dir));
  } else {
    theta = read_embedding(a.estimate);
  }
  if (theta.V() < stats.V)
    throw invalid_input("estimate vocabulary smaller than test stats");
  std::printf("holdout_ll,%.6f\n", holdout_ll(theta, stats));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian SGNS embeddings: simulate, ingest, fit, diagnose, eval"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Generate synthetic truth and pairs");
  c_sim->add_option("--V", sim.cfg.V, "Vocabulary size")->required();
  c_sim->add_option("--K", sim.cfg.K, "Embedding dimension")->required();
  c_sim->add_option("--N", sim.cfg.N, "Number of sampled pairs")->required();
  c_sim->add_option("--law", sim.law, "Pair law")
      ->check(CLI::IsMember({"uniform", "zipf"}));
  c_sim->add_option("--epsilon", sim.cfg.epsilon, "Signal-to-noise scale");
  c_sim->add_option("--zipf-a", sim.cfg.zipf_a, "Zipf exponent");
  c_sim->add_option("--zipf-b", sim.cfg.zipf_b, "Zipf offset");
  c_sim->add_option("--seed", sim.cfg.seed, "RNG seed");
  c_sim->add_option("--out", sim.out, "Output directory")->required();

  IngestArgs ing;
  auto* c_ing = app.add_subcommand("ingest", "Extract pair stats from a corpus");
  c_ing->add_option("--input", ing.input, "Corpus text file")->required();
  c_ing->add_option("--vocab-size", ing.cfg.vocab_size_limit, "Vocabulary limit");
  c_ing->add_option("--window", ing.cfg.window, "Context window");
  c_ing->add_option("--negatives", ing.cfg.negatives_per_positive,
                    "Negatives per positive");
  c_ing->add_option("--noise-exponent", ing.cfg.noise_exponent,
                    "Unigram noise exponent");
  c_ing->add_option("--holdout-frac", ing.holdout_frac, "Hold-out fraction");
  c_ing->add_option("--seed", ing.cfg.seed, "RNG seed");
  c_ing->add_option("--out", ing.out, "Output directory")->required();

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit", "Fit MAP / Gibbs / Laplace posterior");
  c_fit->add_option("--method", fit.method, "Inference method")
      ->required()
      ->check(CLI::IsMember({"map", "gibbs", "laplace"}));
  c_fit->add_option("--stats", fit.stats_path, "PairStats file")->required();
  c_fit->add_option("--K", fit.K, "Embedding dimension")->required();
  c_fit->add_option("--lambda", fit.lambda, "Prior precision");
  c_fit->add_option("--iters", fit.iters, "Gibbs outer iterations");
  c_fit->add_option("--burn-in", fit.burn_in, "Gibbs burn-in iterations");
  c_fit->add_option("--S", fit.S, "Inner Polya-Gamma steps");
  c_fit->add_option("--seed", fit.seed, "RNG seed");
  c_fit->add_option("--constraint", fit.constraint,
                    "Identification rows: last-k or ids:<id,...>");
  c_fit->add_option("--map", fit.map_path, "Warm-start MAP artifact");
  c_fit->add_option("--draws", fit.n_draws, "Laplace draw count");
  c_fit->add_option("--threads", fit.threads, "Worker cap (bit-identical output)");
  c_fit->add_option("--out", fit.out, "Output directory")->required();

  DiagnoseArgs diag;
  auto* c_diag = app.add_subcommand("diagnose", "Write CSV diagnostics reports");
  c_diag->add_option("--draws", diag.draws_path, "Draw store directory");
  c_diag->add_option("--truth", diag.truth_path, "Ground-truth embedding file");
  c_diag->add_option("--points", diag.points_path, "CSV of N,rmse points");
  c_diag->add_option("--level", diag.level, "Credible-interval level");
  c_diag->add_option("--report", diag.report, "Report kind")
      ->required()
      ->check(CLI::IsMember({"coverage", "ess", "rhat", "slope", "cosine"}));
  c_diag->add_option("--pairs", diag.pair_specs, "Word pairs as w:v")
      ->delimiter(',');
  c_diag->add_option("--out", diag.out, "Output directory");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Hold-out log likelihood");
  c_eval->add_option("--estimate", ev.estimate,
                     "Embedding file, or <draw-store>:mean")
      ->required();
  c_eval->add_option("--test-stats", ev.test_stats, "Hold-out PairStats file")
      ->required();

  try {
    app.parse(argc, argv);
    if (c_sim->parsed()) return cmd_simulate(sim);
    if (c_ing->parsed()) return cmd_ingest(ing);
    if (c_fit->parsed()) return cmd_fit(fit);
    if (c_diag->parsed()) return cmd_diagnose(diag);
    if (c_eval->parsed()) return cmd_eval(ev);
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  } catch (const invalid_input& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const io_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const numerical_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
