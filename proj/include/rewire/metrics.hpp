#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rewire/attack.hpp"
#include "rewire/explain.hpp"
#include "rewire/graph.hpp"
#include "rewire/nn.hpp"

namespace rewire {

/// One evaluated attack cell. `targeting` is "important" for V_E-restricted
/// plans and "random" for the whole-graph baseline; failed cells carry the
/// error text and keep the sweep alive.
struct EvalReport {
  std::string dataset;
  std::string architecture;
  std::string explainer;
  int top_k = 0;
  std::string targeting;  // important | random | none
  double gamma = 0.0;
  std::uint64_t seed = 0;
  double edr_net = 0.0;
  double edr_total = 0.0;
  double mcr_clean = 0.0;
  double mcr_attacked = 0.0;
  double degree_tv_distance = 0.0;
  double wall_time_seconds = 0.0;
  bool failed = false;
  std::string error;
};

/// Fraction of test nodes predicted incorrectly. Empty test mask -> error.
double mcr(const ModelParams& params, const Graph& graph);

/// Total-variation distance between the two graphs' normalized degree
/// histograms; 0 for identical distributions, at most 1.
double degree_distance(const Graph& a, const Graph& b);

/// 2-D PCA of final-layer embeddings plus a class-separation score
/// (mean inter-class centroid distance over mean intra-class spread, with an
/// epsilon guard). The score shrinks as class embeddings overlap.
struct EmbeddingProjection {
  Matrixd coords;          // num_nodes x 2
  double separation = 0.0; // the "overlap score": larger = better separated
};

EmbeddingProjection embedding_projection(const ModelParams& params, const Graph& graph);

/// (node, class, x, y) rows as CSV.
void save_projection_csv(const EmbeddingProjection& proj, const Graph& graph,
                         const std::string& path);

/// Degree histogram as "degree,count" CSV.
void save_degree_histogram_csv(const Graph& graph, const std::string& path);

struct SweepConfig {
  std::string dataset_name = "sbm";
  Arch arch = Arch::kGcn;
  TrainConfig train;           // per-seed seed is derived from the run seed
  ExplainerConfig explainer;
  std::vector<double> gammas = {1, 2, 3, 4, 5, 6, 7};
  double total_rate = 0.1;     // total ops as a fraction of |E| (matched budgets)
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  int jobs = 1;
};

/// For each (seed, gamma): train (cached per seed), explain (cached per
/// seed), plan under the matched total budget, apply, evaluate - once with
/// V_E-restricted pools and once with the whole-graph random baseline.
/// Failures are recorded per cell and do not stop the sweep.
std::vector<EvalReport> run_sweep(const Graph& graph, const SweepConfig& config);

/// CSV with a stable documented column order; doubles use 17 significant
/// digits so files round-trip losslessly.
void save_reports_csv(const std::vector<EvalReport>& reports, const std::string& path);
std::vector<EvalReport> load_reports_csv(const std::string& path);
void save_reports_jsonl(const std::vector<EvalReport>& reports, const std::string& path);

/// Least-squares slope of y over x.
double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace rewire
