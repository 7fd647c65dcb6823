#include "rewire/graph.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace rewire {

namespace {

std::int64_t edge_key(int u, int v, int n) {
  const Edge e = canonical_edge(u, v);
  return static_cast<std::int64_t>(e.first) * n + e.second;
}

void check_mask(const Mask& mask, int n, const char* name) {
  if (static_cast<int>(mask.size()) != n) {
    throw std::invalid_argument(std::string("Graph: ") + name + " has wrong length");
  }
}

}  // namespace

std::vector<int> mask_indices(const Mask& mask) {
  std::vector<int> out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out.push_back(static_cast<int>(i));
  }
  return out;
}

Graph::Graph(Matrixd features, std::vector<int> labels, int num_classes,
             std::vector<Edge> edges, Mask train_mask, Mask val_mask, Mask test_mask)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      num_classes_(num_classes),
      train_mask_(std::move(train_mask)),
      val_mask_(std::move(val_mask)),
      test_mask_(std::move(test_mask)) {
  const int n = num_nodes();
  if (num_classes_ < 1) throw std::invalid_argument("Graph: num_classes must be >= 1");
  if (static_cast<int>(labels_.size()) != n) {
    throw std::invalid_argument("Graph: labels length != num_nodes");
  }
  for (int y : labels_) {
    if (y < 0 || y >= num_classes_) {
      throw std::invalid_argument("Graph: label out of range [0, num_classes)");
    }
  }
  check_mask(train_mask_, n, "train_mask");
  check_mask(val_mask_, n, "val_mask");
  check_mask(test_mask_, n, "test_mask");
  for (int i = 0; i < n; ++i) {
    if (train_mask_[i] + val_mask_[i] + test_mask_[i] > 1) {
      throw std::invalid_argument("Graph: masks overlap at node " + std::to_string(i));
    }
  }

  edges_.reserve(edges.size());
  for (const auto& [u, v] : edges) {
    if (u == v) {
      throw std::invalid_argument("Graph: self-loop at node " + std::to_string(u));
    }
    if (u < 0 || v < 0 || u >= n || v >= n) {
      throw std::invalid_argument("Graph: edge endpoint out of range");
    }
    edges_.push_back(canonical_edge(u, v));
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());

  build_adjacency();
}

void Graph::build_adjacency() {
  const int n = num_nodes();
  std::vector<int> deg(n, 0);
  for (const auto& [u, v] : edges_) {
    ++deg[u];
    ++deg[v];
  }
  adj_offsets_.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) adj_offsets_[i + 1] = adj_offsets_[i] + deg[i];
  adj_index_.assign(adj_offsets_[n], 0);
  std::vector<int> cursor(adj_offsets_.begin(), adj_offsets_.end() - 1);
  for (const auto& [u, v] : edges_) {
    adj_index_[cursor[u]++] = v;
    adj_index_[cursor[v]++] = u;
  }
  for (int i = 0; i < n; ++i) {
    std::sort(adj_index_.begin() + adj_offsets_[i], adj_index_.begin() + adj_offsets_[i + 1]);
  }

  // Directed edges grouped by target; sources ascend within each group.
  edge_src_.clear();
  edge_dst_.clear();
  edge_src_.reserve(2 * edges_.size());
  edge_dst_.reserve(2 * edges_.size());
  for (int dst = 0; dst < n; ++dst) {
    for (int src : neighbors(dst)) {
      edge_src_.push_back(src);
      edge_dst_.push_back(dst);
    }
  }

  edge_keys_.clear();
  edge_keys_.reserve(edges_.size() * 2);
  for (const auto& [u, v] : edges_) edge_keys_.insert(edge_key(u, v, n));
}

bool Graph::has_edge(int u, int v) const {
  if (u == v) return false;
  return edge_keys_.count(edge_key(u, v, num_nodes())) > 0;
}

std::span<const int> Graph::neighbors(int u) const {
  return {adj_index_.data() + adj_offsets_[u],
          static_cast<std::size_t>(adj_offsets_[u + 1] - adj_offsets_[u])};
}

int Graph::directed_edge_index(int src, int dst) const {
  const auto nb = neighbors(dst);
  const auto it = std::lower_bound(nb.begin(), nb.end(), src);
  if (it == nb.end() || *it != src) return -1;
  return adj_offsets_[dst] + static_cast<int>(it - nb.begin());
}

Graph Graph::replace_edges(std::vector<Edge> edges) const {
  return Graph(features_, labels_, num_classes_, std::move(edges), train_mask_,
               val_mask_, test_mask_);
}

std::size_t ClassPartition::intra_count() const {
  std::size_t total = 0;
  for (const auto& bucket : intra_edges) total += bucket.size();
  return total;
}

ClassPartition partition_edges_by_class(const Graph& graph) {
  ClassPartition out;
  out.intra_edges.resize(static_cast<std::size_t>(graph.num_classes()));
  const auto& labels = graph.labels();
  for (const auto& e : graph.edges()) {
    const int yu = labels[static_cast<std::size_t>(e.first)];
    const int yv = labels[static_cast<std::size_t>(e.second)];
    if (yu == yv) {
      out.intra_edges[static_cast<std::size_t>(yu)].push_back(e);
    } else {
      out.inter_edges.push_back(e);
    }
  }
  return out;
}

std::map<int, int> degree_histogram(const Graph& graph) {
  std::map<int, int> hist;
  for (int i = 0; i < graph.num_nodes(); ++i) ++hist[graph.degree(i)];
  return hist;
}

}  // namespace rewire
