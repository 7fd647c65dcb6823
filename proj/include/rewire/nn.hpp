#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rewire/autodiff.hpp"
#include "rewire/dense.hpp"
#include "rewire/graph.hpp"
#include "rewire/rng.hpp"

namespace rewire {

enum class Arch { kGcn, kGat, kSage };

Arch arch_from_string(const std::string& name);
std::string to_string(Arch arch);

enum class Mode { kTrain, kEval };

/// Two-layer model weights. Tensor layout by architecture:
///   GCN:  [W1 (d_in x h), W2 (h x m)]
///   GAT:  [W1, a1_self (h x 1), a1_neigh (h x 1), W2, a2_self (m x 1),
///          a2_neigh (m x 1)]  -- single attention head
///   SAGE: [W1_self, W1_neigh, W2_self, W2_neigh]
/// No bias terms; layers chain d_in -> d_hidden -> num_classes.
struct ModelParams {
  Arch arch = Arch::kGcn;
  int d_in = 0;
  int d_hidden = 0;
  int d_out = 0;
  std::vector<Matrixd> tensors;
};

/// Glorot-uniform initialization, deterministic in the seed.
ModelParams init_params(Arch arch, int d_in, int d_hidden, int num_classes,
                        std::uint64_t seed);

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 0.01;
  double weight_decay = 5e-4;
  double dropout = -1.0;  // < 0 -> architecture default (GAT 0.6, others 0.5)
  int hidden_dim = 16;
  std::uint64_t seed = 0;
};

double default_dropout(Arch arch);
double resolve_dropout(Arch arch, const TrainConfig& cfg);

/// One weight per directed edge, aligned with Graph::edge_src()/edge_dst().
/// Unit weights reproduce the plain architectures exactly; zeroing an edge's
/// two directed weights is equivalent to deleting the edge. GCN's transient
/// self-loops always carry weight 1 and are not represented here.
struct EdgeWeights {
  Vectord values;
};

EdgeWeights unit_weights(const Graph& graph);

/// Message-passing structure decoupled from Graph so that explainers can run
/// the same forward on extracted computational subgraphs.
/// gcn_degree_offset(u) adds constant degree mass for unit-weight edges that
/// exist in the original graph but are not part of this structure.
struct MessageGraph {
  int num_nodes = 0;
  std::vector<int> src;
  std::vector<int> dst;
  Vectord gcn_degree_offset;  // empty means all zeros

  static MessageGraph from_graph(const Graph& graph);
};

/// Test/introspection hook: per-layer GAT attention coefficients (after the
/// softmax, before dropout), aligned with the structure's directed edges.
struct ForwardTrace {
  std::vector<Vectord> gat_attention;
};

/// Edge-weight-independent first-layer products. Computing these once per
/// model makes repeated masked forwards on small subgraphs cheap.
struct LayerOneCache {
  Matrixd proj;                 // GCN/GAT: X W1; SAGE: X W1_neigh
  Matrixd self_proj;            // SAGE: X W1_self
  Vectord att_self, att_neigh;  // GAT: (X W1) a1_*
};

LayerOneCache layer_one_cache(const ModelParams& params, const Matrixd& features);

/// Builds the full two-layer forward on the tape and returns the logits Var
/// (num_nodes x num_classes). Dropout is applied only in train mode with an
/// RNG supplied.
ad::Var forward_tape(ad::Taped& tape, const ModelParams& params,
                     const MessageGraph& mg, const Matrixd& features,
                     ad::Var edge_weights, Mode mode, double dropout,
                     Rng* dropout_rng, ForwardTrace* trace = nullptr);

/// Same forward, but layer one starts from cached projections; always
/// eval-mode. Used by the explainers.
ad::Var forward_tape_cached(ad::Taped& tape, const ModelParams& params,
                            const MessageGraph& mg, const LayerOneCache& cache,
                            ad::Var edge_weights, ForwardTrace* trace = nullptr);

/// Eval (or train) forward over a whole graph; returns logits.
Matrixd forward(const ModelParams& params, const Graph& graph,
                const EdgeWeights& weights, Mode mode, double dropout = 0.0,
                Rng* dropout_rng = nullptr, ForwardTrace* trace = nullptr);

struct LossGrad {
  double loss = 0.0;
  std::vector<Matrixd> param_grads;
  Vectord edge_weight_grads;
};

/// Mean cross-entropy over the masked nodes plus (weight_decay/2) * sum of
/// squared parameter entries. Gradients cover every parameter tensor and
/// every directed edge weight. Throws on an empty mask.
LossGrad loss_and_grad(const ModelParams& params, const Graph& graph,
                       const EdgeWeights& weights, const Mask& mask,
                       double weight_decay, Mode mode = Mode::kTrain,
                       double dropout = 0.0, Rng* dropout_rng = nullptr);

/// Argmax of eval-mode logits under unit edge weights; ties break to the
/// lowest class index.
std::vector<int> predict(const ModelParams& params, const Graph& graph);

/// Mean cross-entropy of fixed logits over the given rows (no gradients).
double cross_entropy(const Matrixd& logits, const std::vector<int>& labels,
                     const std::vector<int>& rows);

struct TrainLogEntry {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  ModelParams params;  // snapshot with the lowest validation loss
  std::vector<TrainLogEntry> log;
  int best_epoch = 0;
  double best_val_loss = 0.0;
};

/// Full-batch Adam training under the transductive protocol: loss on the
/// train mask, per-epoch validation, returns the minimum-validation-loss
/// snapshot. Deterministic given cfg.seed. A non-finite loss raises an error
/// naming the epoch.
TrainResult train(const Graph& graph, Arch arch, const TrainConfig& cfg);

/// Versioned text checkpoint; weights are stored as hexfloats, so save/load
/// round-trips bit-exactly.
void save_checkpoint(const ModelParams& params, const TrainConfig& cfg,
                     const std::string& path);
std::pair<ModelParams, TrainConfig> load_checkpoint(const std::string& path);

/// Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8).
class Adam {
 public:
  explicit Adam(double learning_rate) : lr_(learning_rate) {}

  void step(std::vector<Matrixd>& params, const std::vector<Matrixd>& grads);

 private:
  double lr_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  int t_ = 0;
  std::vector<Matrixd> m_, v_;
};

}  // namespace rewire
