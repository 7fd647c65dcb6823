#include "rewire/explain.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "rewire/autodiff.hpp"
#include "rewire/rng.hpp"

namespace rewire {

namespace {

using ad::Taped;
using ad::Var;

// Selects the k highest-scoring edges; ties resolve to the lower global
// directed edge index. Returned ids are sorted ascending.
std::vector<int> top_k_edges(const Vectord& scores, const std::vector<int>& global_ids,
                             int k) {
  std::vector<int> order(global_ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores(a) != scores(b)) return scores(a) > scores(b);
    return global_ids[static_cast<std::size_t>(a)] < global_ids[static_cast<std::size_t>(b)];
  });
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
  std::vector<int> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    out.push_back(global_ids[static_cast<std::size_t>(order[i])]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

LayerOneCache gather_cache(const LayerOneCache& full, const std::vector<int>& nodes,
                           Arch arch) {
  LayerOneCache c;
  const auto n = static_cast<Eigen::Index>(nodes.size());
  c.proj.resize(n, full.proj.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    c.proj.row(i) = full.proj.row(nodes[static_cast<std::size_t>(i)]);
  }
  if (arch == Arch::kSage) {
    c.self_proj.resize(n, full.self_proj.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      c.self_proj.row(i) = full.self_proj.row(nodes[static_cast<std::size_t>(i)]);
    }
  }
  if (arch == Arch::kGat) {
    c.att_self.resize(n);
    c.att_neigh.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      c.att_self(i) = full.att_self(nodes[static_cast<std::size_t>(i)]);
      c.att_neigh(i) = full.att_neigh(nodes[static_cast<std::size_t>(i)]);
    }
  }
  return c;
}

// [z_src || z_dst || z_v] rows for every directed edge of the subgraph.
Matrixd pg_edge_features(const Matrixd& z, const ComputationalSubgraph& sub, int v) {
  const auto e = static_cast<Eigen::Index>(sub.structure.src.size());
  const auto m = z.cols();
  Matrixd f(e, 3 * m);
  for (Eigen::Index k = 0; k < e; ++k) {
    const int gs = sub.nodes[static_cast<std::size_t>(sub.structure.src[static_cast<std::size_t>(k)])];
    const int gd = sub.nodes[static_cast<std::size_t>(sub.structure.dst[static_cast<std::size_t>(k)])];
    f.block(k, 0, 1, m) = z.row(gs);
    f.block(k, m, 1, m) = z.row(gd);
    f.block(k, 2 * m, 1, m) = z.row(v);
  }
  return f;
}

// Masked-prediction loss shared by both explainers: cross-entropy of the
// model's clean prediction at the target under the soft mask, plus mask-size
// and mask-entropy penalties.
Var masked_prediction_loss(Taped& t, const ExplainContext& ctx,
                           const ComputationalSubgraph& sub,
                           const LayerOneCache& sub_cache, Var soft_mask,
                           const ExplainerConfig& cfg) {
  Var logits = forward_tape_cached(t, *ctx.model, sub.structure, sub_cache, soft_mask);
  std::vector<int> labels(sub.nodes.size(), 0);
  labels[static_cast<std::size_t>(sub.target_local)] =
      ctx.predictions[static_cast<std::size_t>(sub.nodes[static_cast<std::size_t>(sub.target_local)])];
  Var ce = t.masked_cross_entropy(logits, std::move(labels), {sub.target_local});
  Var reg = t.add(t.scale(t.sum(soft_mask), cfg.lambda_size),
                  t.scale(t.bernoulli_entropy_sum(soft_mask), cfg.lambda_entropy));
  return t.add(ce, reg);
}

Matrixd glorot_mat(int rows, int cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  Matrixd w(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) w(i, j) = limit * (2.0 * rng.next_double() - 1.0);
  }
  return w;
}

CombinedMask from_edge_provenance(std::map<Edge, std::vector<int>> acc,
                                  const Graph& graph) {
  CombinedMask out;
  out.class_buckets.resize(static_cast<std::size_t>(graph.num_classes()));
  std::vector<int> nodes;
  for (auto& [edge, prov] : acc) {
    std::sort(prov.begin(), prov.end());
    prov.erase(std::unique(prov.begin(), prov.end()), prov.end());
    out.edges.push_back(edge);
    out.provenance.push_back(std::move(prov));
    nodes.push_back(edge.first);
    nodes.push_back(edge.second);
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  for (int v : nodes) {
    out.class_buckets[static_cast<std::size_t>(graph.labels()[static_cast<std::size_t>(v)])]
        .push_back(v);
  }
  out.important_nodes = std::move(nodes);
  return out;
}

}  // namespace

ExplainerMethod explainer_from_string(const std::string& name) {
  if (name == "gnnexplainer") return ExplainerMethod::kGnnExplainer;
  if (name == "pgexplainer") return ExplainerMethod::kPgExplainer;
  throw std::invalid_argument("unknown explainer '" + name + "'");
}

std::string to_string(ExplainerMethod method) {
  return method == ExplainerMethod::kGnnExplainer ? "gnnexplainer" : "pgexplainer";
}

int resolve_explainer_epochs(const ExplainerConfig& cfg) {
  if (cfg.epochs > 0) return cfg.epochs;
  return cfg.method == ExplainerMethod::kGnnExplainer ? 200 : 30;
}

double resolve_explainer_lr(const ExplainerConfig& cfg) {
  if (cfg.learning_rate > 0) return cfg.learning_rate;
  return cfg.method == ExplainerMethod::kGnnExplainer ? 0.01 : 0.003;
}

ComputationalSubgraph computational_subgraph(const Graph& graph, int v) {
  // Aggregating nodes: v and its neighbors. Their layer-1 states, and the
  // layer-2 state at v, are the only ones the target row depends on.
  std::vector<char> is_agg(static_cast<std::size_t>(graph.num_nodes()), 0);
  std::vector<char> in_ball(is_agg);
  is_agg[static_cast<std::size_t>(v)] = 1;
  in_ball[static_cast<std::size_t>(v)] = 1;
  for (int u : graph.neighbors(v)) {
    is_agg[static_cast<std::size_t>(u)] = 1;
    in_ball[static_cast<std::size_t>(u)] = 1;
  }
  std::vector<int> agg_nodes = {v};
  agg_nodes.insert(agg_nodes.end(), graph.neighbors(v).begin(), graph.neighbors(v).end());
  for (int u : agg_nodes) {
    for (int w : graph.neighbors(u)) in_ball[static_cast<std::size_t>(w)] = 1;
  }

  ComputationalSubgraph sub;
  std::unordered_map<int, int> local;
  for (int i = 0; i < graph.num_nodes(); ++i) {
    if (in_ball[static_cast<std::size_t>(i)]) {
      local.emplace(i, static_cast<int>(sub.nodes.size()));
      sub.nodes.push_back(i);
    }
  }
  sub.structure.num_nodes = static_cast<int>(sub.nodes.size());
  sub.target_local = local.at(v);

  std::vector<int> in_count(sub.nodes.size(), 0);
  for (std::size_t li = 0; li < sub.nodes.size(); ++li) {
    const int dst = sub.nodes[li];
    if (!is_agg[static_cast<std::size_t>(dst)]) continue;
    for (int src : graph.neighbors(dst)) {
      sub.structure.src.push_back(local.at(src));
      sub.structure.dst.push_back(static_cast<int>(li));
      sub.edge_global.push_back(graph.directed_edge_index(src, dst));
      ++in_count[li];
    }
  }
  // Boundary edges keep unit weight; GCN sees them as constant degree mass.
  sub.structure.gcn_degree_offset = Vectord::Zero(sub.structure.num_nodes);
  for (std::size_t li = 0; li < sub.nodes.size(); ++li) {
    sub.structure.gcn_degree_offset(static_cast<Eigen::Index>(li)) =
        graph.degree(sub.nodes[li]) - in_count[li];
  }
  return sub;
}

ExplainContext make_explain_context(const ModelParams& model, const Graph& graph) {
  ExplainContext ctx;
  ctx.model = &model;
  ctx.graph = &graph;
  ctx.cache = layer_one_cache(model, graph.features());
  ctx.embeddings = forward(model, graph, unit_weights(graph), Mode::kEval);
  ctx.predictions.resize(static_cast<std::size_t>(graph.num_nodes()));
  for (Eigen::Index i = 0; i < ctx.embeddings.rows(); ++i) {
    ctx.predictions[static_cast<std::size_t>(i)] = argmax_lowest(ctx.embeddings.row(i));
  }
  return ctx;
}

ExplanationMask explain_node_gnnexplainer(const ExplainContext& ctx, int v,
                                          const ExplainerConfig& cfg) {
  ExplanationMask out;
  out.node = v;
  const ComputationalSubgraph sub = computational_subgraph(*ctx.graph, v);
  const auto num_edges = static_cast<Eigen::Index>(sub.edge_global.size());
  if (num_edges == 0) {
    out.empty_subgraph = true;
    return out;
  }
  const LayerOneCache sub_cache = gather_cache(ctx.cache, sub.nodes, ctx.model->arch);

  // Plain gradient descent on the mask logits. An adaptive optimizer
  // normalizes per-coordinate step sizes and erases the gradient-magnitude
  // differences the top-k ranking depends on; with it, confidently-predicted
  // nodes get inverted rankings.
  Matrixd mask = Matrixd::Constant(num_edges, 1, cfg.mask_logit_init);
  const double lr = resolve_explainer_lr(cfg);
  const int epochs = resolve_explainer_epochs(cfg);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Taped t;
    Var logits_var = t.leaf(mask, true);
    Var soft = t.sigmoid(logits_var);
    Var loss = masked_prediction_loss(t, ctx, sub, sub_cache, soft, cfg);
    t.backward(loss);
    mask -= lr * t.grad(logits_var);
  }

  const Vectord final_scores = mask.col(0).unaryExpr([](double x) { return sigmoid(x); });
  out.edges = top_k_edges(final_scores, sub.edge_global, cfg.top_k);
  return out;
}

PgExplainerNet train_pg_explainer(const ExplainContext& ctx, const ExplainerConfig& cfg) {
  const Matrixd& z = ctx.embeddings;
  const int m = static_cast<int>(z.cols());
  Rng rng(derive_seed(cfg.seed, "pgexplainer-init"));
  std::vector<Matrixd> params = {glorot_mat(3 * m, cfg.pg_hidden, rng),
                                 Matrixd::Zero(1, cfg.pg_hidden),
                                 glorot_mat(cfg.pg_hidden, 1, rng),
                                 Matrixd::Zero(1, 1)};

  struct NodeJob {
    ComputationalSubgraph sub;
    LayerOneCache cache;
    Matrixd features;
  };
  std::vector<NodeJob> jobs;
  for (int v : mask_indices(ctx.graph->train_mask())) {
    ComputationalSubgraph sub = computational_subgraph(*ctx.graph, v);
    if (sub.edge_global.empty()) continue;
    NodeJob job;
    job.cache = gather_cache(ctx.cache, sub.nodes, ctx.model->arch);
    job.features = pg_edge_features(z, sub, v);
    job.sub = std::move(sub);
    jobs.push_back(std::move(job));
  }

  Adam opt(resolve_explainer_lr(cfg));
  const int epochs = resolve_explainer_epochs(cfg);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<Matrixd> grads;
    for (const auto& p : params) grads.push_back(Matrixd::Zero(p.rows(), p.cols()));
    for (const NodeJob& job : jobs) {
      Taped t;
      std::vector<Var> pv;
      pv.reserve(params.size());
      for (const auto& p : params) pv.push_back(t.leaf(p, true));
      Var f = t.leaf_ref(&job.features);
      Var hidden = t.relu(t.add_row_broadcast(t.matmul(f, pv[0]), pv[1]));
      Var edge_logits = t.add_row_broadcast(t.matmul(hidden, pv[2]), pv[3]);
      Var soft = t.sigmoid(edge_logits);
      Var loss = masked_prediction_loss(t, ctx, job.sub, job.cache, soft, cfg);
      t.backward(loss);
      for (std::size_t i = 0; i < params.size(); ++i) grads[i] += t.grad(pv[i]);
    }
    opt.step(params, grads);
  }
  return PgExplainerNet{params[0], params[1], params[2], params[3]};
}

ExplanationMask explain_node_pgexplainer(const ExplainContext& ctx,
                                         const PgExplainerNet& net, int v,
                                         const ExplainerConfig& cfg) {
  ExplanationMask out;
  out.node = v;
  const ComputationalSubgraph sub = computational_subgraph(*ctx.graph, v);
  if (sub.edge_global.empty()) {
    out.empty_subgraph = true;
    return out;
  }
  const Matrixd f = pg_edge_features(ctx.embeddings, sub, v);
  const Matrixd hidden =
      ((f * net.w1).rowwise() + net.b1.row(0)).cwiseMax(0.0);
  const Vectord scores = ((hidden * net.w2).rowwise() + net.b2.row(0)).col(0);
  out.edges = top_k_edges(scores, sub.edge_global, cfg.top_k);
  return out;
}

ExplanationMask explain_node(const ModelParams& model, const Graph& graph, int v,
                             const ExplainerConfig& cfg) {
  const ExplainContext ctx = make_explain_context(model, graph);
  if (cfg.method == ExplainerMethod::kGnnExplainer) {
    return explain_node_gnnexplainer(ctx, v, cfg);
  }
  const PgExplainerNet net = train_pg_explainer(ctx, cfg);
  return explain_node_pgexplainer(ctx, net, v, cfg);
}

std::vector<ExplanationMask> explain_all_nodes(const ModelParams& model,
                                               const Graph& graph,
                                               const ExplainerConfig& cfg, int jobs) {
  const ExplainContext ctx = make_explain_context(model, graph);
  PgExplainerNet net;
  if (cfg.method == ExplainerMethod::kPgExplainer) net = train_pg_explainer(ctx, cfg);

  const int n = graph.num_nodes();
  std::vector<ExplanationMask> results(static_cast<std::size_t>(n));
  const int workers = std::max(1, std::min(jobs, n));
  std::atomic<int> next{0};
  auto run = [&]() {
    for (;;) {
      const int v = next.fetch_add(1);
      if (v >= n) return;
      results[static_cast<std::size_t>(v)] =
          cfg.method == ExplainerMethod::kGnnExplainer
              ? explain_node_gnnexplainer(ctx, v, cfg)
              : explain_node_pgexplainer(ctx, net, v, cfg);
    }
  };
  if (workers == 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int i = 0; i < workers; ++i) pool.emplace_back(run);
    for (auto& th : pool) th.join();
  }
  return results;
}

bool CombinedMask::contains_node(int v) const {
  return std::binary_search(important_nodes.begin(), important_nodes.end(), v);
}

CombinedMask combine_masks(const std::vector<ExplanationMask>& masks,
                           const Graph& graph) {
  std::map<Edge, std::vector<int>> acc;
  for (const auto& mask : masks) {
    for (int ge : mask.edges) {
      const Edge e = canonical_edge(graph.edge_src()[static_cast<std::size_t>(ge)],
                                    graph.edge_dst()[static_cast<std::size_t>(ge)]);
      acc[e].push_back(mask.node);
    }
  }
  return from_edge_provenance(std::move(acc), graph);
}

void save_mask(const CombinedMask& mask, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("mask: cannot open " + path + " for writing");
  out << "rewire-mask v1\n";
  out << "edges " << mask.edges.size() << "\n";
  for (std::size_t i = 0; i < mask.edges.size(); ++i) {
    out << mask.edges[i].first << ' ' << mask.edges[i].second;
    for (int v : mask.provenance[i]) out << ' ' << v;
    out << '\n';
  }
  out << "end\n";
  if (!out) throw std::runtime_error("mask: write failed for " + path);
}

CombinedMask load_mask(const std::string& path, const Graph& graph) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("mask: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "rewire-mask v1") {
    throw std::runtime_error("mask: " + path + ": unsupported version");
  }
  std::string kw;
  std::size_t count = 0;
  if (!(in >> kw >> count) || kw != "edges") {
    throw std::runtime_error("mask: " + path + ": missing edge count");
  }
  std::getline(in, line);
  std::map<Edge, std::vector<int>> acc;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("mask: " + path + ": truncated");
    std::istringstream ss(line);
    int u, v;
    if (!(ss >> u >> v)) throw std::runtime_error("mask: " + path + ": bad edge line");
    auto& prov = acc[canonical_edge(u, v)];
    int node;
    while (ss >> node) prov.push_back(node);
  }
  if (!std::getline(in, line) || line != "end") {
    throw std::runtime_error("mask: " + path + ": missing end marker");
  }
  return from_edge_provenance(std::move(acc), graph);
}

}  // namespace rewire
