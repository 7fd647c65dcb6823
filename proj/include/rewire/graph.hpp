#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rewire/dense.hpp"

namespace rewire {

/// Undirected node pair in canonical (min, max) order.
using Edge = std::pair<int, int>;

inline Edge canonical_edge(int u, int v) {
  return u < v ? Edge{u, v} : Edge{v, u};
}

using Mask = std::vector<std::uint8_t>;

/// Returns the indices selected by a boolean mask.
std::vector<int> mask_indices(const Mask& mask);

/// In-memory graph for transductive node classification: dense features,
/// undirected edges stored once in canonical order, ground-truth labels and
/// disjoint train/val/test masks.
///
/// Immutable after construction; perturbation produces a new Graph value, so
/// instances are safe to share across threads.
class Graph {
 public:
  /// Validates and canonicalizes. Edges may arrive in either orientation and
  /// with duplicates; they are stored once as (min, max) pairs. Self-loops,
  /// out-of-range endpoints or labels, and overlapping masks are rejected
  /// with std::invalid_argument.
  Graph(Matrixd features, std::vector<int> labels, int num_classes,
        std::vector<Edge> edges, Mask train_mask, Mask val_mask, Mask test_mask);

  int num_nodes() const { return static_cast<int>(features_.rows()); }
  int feature_dim() const { return static_cast<int>(features_.cols()); }
  int num_classes() const { return num_classes_; }

  const Matrixd& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }

  /// Canonical undirected edges, sorted lexicographically.
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t num_edges() const { return edges_.size(); }
  /// 2 * |edges|: the symmetric count datasets report.
  std::size_t num_directed_edges() const { return 2 * edges_.size(); }

  const Mask& train_mask() const { return train_mask_; }
  const Mask& val_mask() const { return val_mask_; }
  const Mask& test_mask() const { return test_mask_; }

  bool has_edge(int u, int v) const;
  std::span<const int> neighbors(int u) const;
  int degree(int u) const { return static_cast<int>(neighbors(u).size()); }

  /// Directed (source, target) arrays used for message passing: both
  /// orientations of every stored edge, grouped by target and sorted by
  /// source within each group. Edge weights and explanation masks index
  /// into this ordering.
  const std::vector<int>& edge_src() const { return edge_src_; }
  const std::vector<int>& edge_dst() const { return edge_dst_; }

  /// Position of directed edge (src -> dst) in edge_src()/edge_dst();
  /// -1 if absent.
  int directed_edge_index(int src, int dst) const;

  /// Same nodes, features, labels and masks over a different edge set.
  Graph replace_edges(std::vector<Edge> edges) const;

 private:
  void build_adjacency();

  Matrixd features_;
  std::vector<int> labels_;
  int num_classes_ = 0;
  std::vector<Edge> edges_;
  Mask train_mask_, val_mask_, test_mask_;

  std::vector<int> adj_offsets_;  // CSR over sorted neighbor lists
  std::vector<int> adj_index_;
  std::vector<int> edge_src_, edge_dst_;
  std::unordered_set<std::int64_t> edge_keys_;
};

/// Edges split by whether their endpoints share a label.
struct ClassPartition {
  std::vector<std::vector<Edge>> intra_edges;  // one bucket per class
  std::vector<Edge> inter_edges;

  std::size_t intra_count() const;
  std::size_t inter_count() const { return inter_edges.size(); }
};

ClassPartition partition_edges_by_class(const Graph& graph);

/// Histogram over symmetric node degrees; counts sum to num_nodes().
std::map<int, int> degree_histogram(const Graph& graph);

}  // namespace rewire
