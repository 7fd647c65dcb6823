#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rewire/graph.hpp"

namespace rewire {

/// Stochastic-block-model parameters for synthetic fixtures. Features are a
/// one-hot block centroid plus Gaussian noise, which makes the blocks
/// learnable by a small GNN in a couple hundred epochs.
struct SbmParams {
  std::vector<int> block_sizes;
  double p_in = 0.1;
  double p_out = 0.01;
  int feature_dim = 0;          // 0 -> num_blocks + 8
  double centroid_scale = 1.0;
  double noise_scale = 0.1;
  double train_fraction = 0.2;  // per-block split, deterministic by index
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
};

/// Which dataset to load: a named citation network read from `path`, or a
/// synthetic SBM graph.
struct DatasetSpec {
  std::string name;  // cora | citeseer | pubmed | sbm
  std::string path;  // directory holding the plain-text family
  SbmParams sbm;
};

/// Loads a citation dataset from the plain-text family in spec.path:
///   <name>.edges        "u v" per line
///   <name>.features.csv "node,feature,value" triplets, `# nodes=N features=D` header
///   <name>.labels.csv   "node,label", `# classes=M` header
///   <name>.masks.csv    "node,split" with split in {train,val,test}
/// tools/convert_planetoid.py produces these files from the standard
/// pickled distribution. Features are row-normalized to sum 1. For the
/// three known datasets the loaded statistics are checked against the
/// published counts and a mismatch is an error.
Graph load_planetoid(const DatasetSpec& spec);

/// Pure function of its parameters: same spec and seed give an identical
/// graph. Labels are block ids; masks split each block by index order.
Graph generate_sbm(const SbmParams& params);

/// Versioned plain-text container (`rewire-graph v1`) holding every Graph
/// field; values are written as hexfloats so round-trips are exact.
void save_graph(const Graph& graph, const std::string& path);
Graph load_graph(const std::string& path);

/// Expected statistics for the known citation datasets.
struct DatasetStats {
  int num_nodes = 0;
  int num_directed_edges = 0;
  int num_classes = 0;
  int feature_dim = 0;
  int train_nodes = 0;
  int val_nodes = 0;
  int test_nodes = 0;
  int intra_directed = 0;
  int inter_directed = 0;
};

/// Published statistics for cora/citeseer/pubmed, or nullopt for other names.
std::optional<DatasetStats> known_dataset_stats(const std::string& name);

}  // namespace rewire
