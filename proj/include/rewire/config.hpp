#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rewire/attack.hpp"
#include "rewire/dataset.hpp"
#include "rewire/explain.hpp"
#include "rewire/nn.hpp"

namespace rewire {

/// Everything a run needs, with documented defaults. One global seed fans
/// out per component through derive_seed(seed, role); roles are "sbm",
/// "train", "explain", "attack" and "sweep:<n>".
struct RunConfig {
  std::string dataset = "sbm";  // cora | citeseer | pubmed | sbm
  std::string data_dir = "data";
  std::string graph_file;  // saved container; overrides `dataset` when set

  SbmParams sbm{.block_sizes = {50, 50}, .p_in = 0.1, .p_out = 0.01};

  std::string arch = "gcn";
  TrainConfig train;

  ExplainerConfig explain;

  double attack_gamma = 2.0;
  double attack_edr = -1.0;
  long attack_total_ops = -1;

  std::vector<double> sweep_gammas = {1, 2, 3, 4, 5, 6, 7};
  bool sweep_inverse = false;  // attack with 1/gamma at each listed value
  int sweep_seeds = 5;
  double sweep_total_rate = 0.1;

  int jobs = 1;
  std::uint64_t seed = 0;
  std::string out_dir = "runs";
};

/// Applies one "key=value" setting; unknown keys or malformed values throw
/// std::invalid_argument. The key set is the single source of truth shared
/// by config files and CLI flags.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// Plain-text key=value file ('#' comments). Settings override `base`.
RunConfig load_config_file(const std::string& path, RunConfig base = {});

/// Writes every setting, producing an effective-config file that reproduces
/// the run exactly.
void save_config_file(const RunConfig& config, const std::string& path);

/// Materializes the configured graph: a saved container, a generated SBM, or
/// a named citation dataset under data_dir.
Graph resolve_graph(const RunConfig& config);

}  // namespace rewire
