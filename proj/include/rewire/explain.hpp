#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rewire/graph.hpp"
#include "rewire/nn.hpp"

namespace rewire {

enum class ExplainerMethod { kGnnExplainer, kPgExplainer };

ExplainerMethod explainer_from_string(const std::string& name);
std::string to_string(ExplainerMethod method);

struct ExplainerConfig {
  ExplainerMethod method = ExplainerMethod::kGnnExplainer;
  int epochs = -1;              // < 0 -> method default (200 / 30)
  double learning_rate = -1.0;  // < 0 -> method default (0.01 / 0.003)
  int top_k = 2;
  double lambda_size = 0.005;
  double lambda_entropy = 1.0;
  double mask_logit_init = 0.1;  // sigmoid ~= 0.52
  int pg_hidden = 64;
  std::uint64_t seed = 0;
};

int resolve_explainer_epochs(const ExplainerConfig& cfg);
double resolve_explainer_lr(const ExplainerConfig& cfg);

/// The part of the graph that can influence a node's logits in a two-layer
/// model: the 2-hop ball around v, with the directed edges that feed the
/// aggregations at v and its neighbors. Node and edge ids are local;
/// `nodes`/`edge_global` map back to the graph. GCN degree offsets account
/// for boundary edges that stay at unit weight, so a forward pass over this
/// structure reproduces the full-graph logits at the target row exactly.
struct ComputationalSubgraph {
  MessageGraph structure;
  std::vector<int> nodes;        // local node id -> global node id
  std::vector<int> edge_global;  // local directed edge -> global directed edge
  int target_local = -1;
};

ComputationalSubgraph computational_subgraph(const Graph& graph, int v);

/// Binary explanation for one node: the directed edges (global indices into
/// Graph::edge_src()) judged important for the model's prediction there.
/// Exactly min(top_k, subgraph edge count) entries.
struct ExplanationMask {
  int node = -1;
  std::vector<int> edges;
  bool empty_subgraph = false;  // isolated node: nothing to explain
};

/// Shared read-only state for explaining many nodes of one trained model.
struct ExplainContext {
  const ModelParams* model = nullptr;
  const Graph* graph = nullptr;
  LayerOneCache cache;
  Matrixd embeddings;            // final-layer eval logits
  std::vector<int> predictions;  // clean argmax labels (explanation targets)
};

ExplainContext make_explain_context(const ModelParams& model, const Graph& graph);

/// Learns a sigmoid edge mask over v's computational subgraph that keeps the
/// model's clean prediction while penalizing mask size and entropy, then
/// thresholds to the top-k edges (ties to the lower global edge index).
ExplanationMask explain_node_gnnexplainer(const ExplainContext& ctx, int v,
                                          const ExplainerConfig& cfg);

/// Shared two-layer perceptron scoring every directed edge from the
/// endpoint and target embeddings. Trained once per model over the training
/// nodes with the same masked-prediction objective as GNNExplainer.
struct PgExplainerNet {
  Matrixd w1, b1, w2, b2;  // (3m x H), (1 x H), (H x 1), (1 x 1)
};

PgExplainerNet train_pg_explainer(const ExplainContext& ctx, const ExplainerConfig& cfg);

ExplanationMask explain_node_pgexplainer(const ExplainContext& ctx,
                                         const PgExplainerNet& net, int v,
                                         const ExplainerConfig& cfg);

/// Convenience single-node entry points matching the per-operation contract;
/// the PG variant trains the shared network internally.
ExplanationMask explain_node(const ModelParams& model, const Graph& graph, int v,
                             const ExplainerConfig& cfg);

/// Explains every node (parallel across nodes when jobs > 1; results do not
/// depend on the schedule).
std::vector<ExplanationMask> explain_all_nodes(const ModelParams& model,
                                               const Graph& graph,
                                               const ExplainerConfig& cfg,
                                               int jobs = 1);

/// Union of per-node masks, canonicalized to undirected edges, with the
/// derived important-node set and its per-class views.
struct CombinedMask {
  std::vector<Edge> edges;                     // sorted canonical edges
  std::vector<std::vector<int>> provenance;    // contributing explained nodes
  std::vector<int> important_nodes;            // sorted endpoint set
  std::vector<std::vector<int>> class_buckets; // important nodes by label

  bool contains_node(int v) const;
};

CombinedMask combine_masks(const std::vector<ExplanationMask>& masks,
                           const Graph& graph);

/// Edge-list file with per-edge provenance; load re-derives the node sets
/// from the graph's labels.
void save_mask(const CombinedMask& mask, const std::string& path);
CombinedMask load_mask(const std::string& path, const Graph& graph);

}  // namespace rewire
