#include "rewire/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace rewire {

namespace {

using ad::Taped;
using ad::Var;

Matrixd glorot(int rows, int cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  Matrixd w(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      w(i, j) = limit * (2.0 * rng.next_double() - 1.0);
    }
  }
  return w;
}

Var apply_dropout(Taped& t, Var x, double p, Rng* rng) {
  if (p <= 0.0 || rng == nullptr) return x;
  const Matrixd& v = t.value(x);
  Matrixd mask(v.rows(), v.cols());
  const double scale = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      mask(i, j) = rng->next_bernoulli(1.0 - p) ? scale : 0.0;
    }
  }
  return t.cmul(x, t.constant(std::move(mask)));
}

// Symmetric-normalized sum with a transient unit-weight self-loop:
// out[u] = proj[u]/deg[u] + sum_{e:(v->u)} w_e/sqrt(deg[u] deg[v]) proj[v],
// where deg[u] = 1 + offset[u] + sum of incoming edge weights.
Var gcn_aggregate(Taped& t, const MessageGraph& mg, Var proj, Var w) {
  const int n = mg.num_nodes;
  Var wsum = t.scatter_add_rows(w, mg.dst, n);
  Vectord base = Vectord::Ones(n);
  if (mg.gcn_degree_offset.size() > 0) base += mg.gcn_degree_offset;
  Var deg = t.add(wsum, t.constant(Matrixd(base)));
  Var inv_sqrt = t.rsqrt(deg);
  Var coef = t.cmul(w, t.cmul(t.gather_rows(inv_sqrt, mg.src),
                              t.gather_rows(inv_sqrt, mg.dst)));
  Var msg = t.scale_rows(t.gather_rows(proj, mg.src), coef);
  Var agg = t.scatter_add_rows(msg, mg.dst, n);
  Var self = t.scale_rows(proj, t.cmul(inv_sqrt, inv_sqrt));
  return t.add(agg, self);
}

// Attention-weighted sum. Edge weights scale the exponentiated scores before
// normalization, so a zero weight removes the edge from both the numerator
// and the softmax denominator. Targets with no positive incident weight
// aggregate to zero.
Var gat_aggregate(Taped& t, const MessageGraph& mg, Var proj, Var s_self,
                  Var s_neigh, Var w, Mode mode, double dropout, Rng* rng,
                  Vectord* trace_out) {
  const int n = mg.num_nodes;
  const auto num_edges = static_cast<Eigen::Index>(mg.src.size());
  Var e = t.leaky_relu(
      t.add(t.gather_rows(s_self, mg.dst), t.gather_rows(s_neigh, mg.src)), 0.2);

  // Detached per-target shift keeps the exponentials bounded.
  const Matrixd& ev = t.value(e);
  Vectord peak = Vectord::Zero(n);
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (Eigen::Index k = 0; k < num_edges; ++k) {
    const int d = mg.dst[static_cast<std::size_t>(k)];
    if (!seen[static_cast<std::size_t>(d)] || ev(k, 0) > peak(d)) {
      peak(d) = ev(k, 0);
      seen[static_cast<std::size_t>(d)] = 1;
    }
  }
  Matrixd shift(num_edges, 1);
  for (Eigen::Index k = 0; k < num_edges; ++k) {
    shift(k, 0) = peak(mg.dst[static_cast<std::size_t>(k)]);
  }

  Var z = t.exp(t.sub(e, t.constant(std::move(shift))));
  Var zw = t.cmul(z, w);
  Var denom = t.scatter_add_rows(zw, mg.dst, n);
  Var alpha = t.cmul(zw, t.gather_rows(t.reciprocal_or_zero(denom), mg.dst));
  if (trace_out != nullptr) *trace_out = t.value(alpha).col(0);
  if (mode == Mode::kTrain) alpha = apply_dropout(t, alpha, dropout, rng);
  Var msg = t.scale_rows(t.gather_rows(proj, mg.src), alpha);
  return t.scatter_add_rows(msg, mg.dst, n);
}

// Self term plus weighted neighborhood mean; the mean normalizes by the sum
// of incident weights so unit weights reduce to 1/|N(u)|.
Var sage_aggregate(Taped& t, const MessageGraph& mg, Var self_proj,
                   Var neigh_proj, Var w) {
  const int n = mg.num_nodes;
  Var wsum = t.scatter_add_rows(w, mg.dst, n);
  Var inv = t.reciprocal_or_zero(wsum);
  Var msg = t.scale_rows(t.gather_rows(neigh_proj, mg.src), w);
  Var neigh_sum = t.scatter_add_rows(msg, mg.dst, n);
  return t.add(self_proj, t.scale_rows(neigh_sum, inv));
}

struct ParamVars {
  std::vector<Var> v;
};

ParamVars make_param_vars(Taped& t, const ModelParams& p, bool requires_grad) {
  ParamVars out;
  out.v.reserve(p.tensors.size());
  for (const auto& w : p.tensors) out.v.push_back(t.leaf(w, requires_grad));
  return out;
}

// Layer-one tape inputs, either projected from raw features (training path)
// or taken from a precomputed cache (explainer path).
struct LayerOne {
  Var proj;
  Var self_proj;
  Var att_self, att_neigh;
};

Var build_from_layer_one(Taped& t, const ModelParams& p, const ParamVars& pv,
                         const MessageGraph& mg, const LayerOne& l1, Var w,
                         Mode mode, double dropout, Rng* rng, ForwardTrace* trace) {
  if (trace != nullptr) trace->gat_attention.clear();
  switch (p.arch) {
    case Arch::kGcn: {
      Var h1 = t.relu(gcn_aggregate(t, mg, l1.proj, w));
      Var h1d = mode == Mode::kTrain ? apply_dropout(t, h1, dropout, rng) : h1;
      return gcn_aggregate(t, mg, t.matmul(h1d, pv.v[1]), w);
    }
    case Arch::kGat: {
      Vectord att1, att2;
      Var agg1 = gat_aggregate(t, mg, l1.proj, l1.att_self, l1.att_neigh, w, mode,
                               dropout, rng, trace ? &att1 : nullptr);
      Var h1 = t.elu(agg1);
      Var h1d = mode == Mode::kTrain ? apply_dropout(t, h1, dropout, rng) : h1;
      Var proj2 = t.matmul(h1d, pv.v[3]);
      Var s2_self = t.matmul(proj2, pv.v[4]);
      Var s2_neigh = t.matmul(proj2, pv.v[5]);
      Var out = gat_aggregate(t, mg, proj2, s2_self, s2_neigh, w, mode, dropout,
                              rng, trace ? &att2 : nullptr);
      if (trace != nullptr) {
        trace->gat_attention.push_back(std::move(att1));
        trace->gat_attention.push_back(std::move(att2));
      }
      return out;
    }
    case Arch::kSage: {
      Var h1 = t.relu(sage_aggregate(t, mg, l1.self_proj, l1.proj, w));
      Var h1d = mode == Mode::kTrain ? apply_dropout(t, h1, dropout, rng) : h1;
      return sage_aggregate(t, mg, t.matmul(h1d, pv.v[2]), t.matmul(h1d, pv.v[3]), w);
    }
  }
  throw std::logic_error("nn: unknown architecture");
}

void check_forward_shapes(const ModelParams& p, const MessageGraph& mg,
                          Eigen::Index feature_rows, Eigen::Index feature_cols,
                          Eigen::Index weight_count) {
  if (feature_rows != mg.num_nodes) {
    throw std::invalid_argument("nn: feature rows != num_nodes");
  }
  if (feature_cols != p.d_in) {
    throw std::invalid_argument("nn: feature dim != model d_in");
  }
  if (weight_count != static_cast<Eigen::Index>(mg.src.size())) {
    throw std::invalid_argument("nn: edge weight count != directed edge count");
  }
}

double finite_or_throw(double x, const char* what, int epoch) {
  if (!std::isfinite(x)) {
    throw std::runtime_error(std::string("train: non-finite ") + what +
                             " at epoch " + std::to_string(epoch));
  }
  return x;
}

std::string hex_double(double x) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", x);
  return buf;
}

}  // namespace

Arch arch_from_string(const std::string& name) {
  if (name == "gcn") return Arch::kGcn;
  if (name == "gat") return Arch::kGat;
  if (name == "graphsage" || name == "sage") return Arch::kSage;
  throw std::invalid_argument("unknown architecture '" + name + "'");
}

std::string to_string(Arch arch) {
  switch (arch) {
    case Arch::kGcn: return "gcn";
    case Arch::kGat: return "gat";
    case Arch::kSage: return "graphsage";
  }
  return "?";
}

double default_dropout(Arch arch) { return arch == Arch::kGat ? 0.6 : 0.5; }

double resolve_dropout(Arch arch, const TrainConfig& cfg) {
  return cfg.dropout >= 0.0 ? cfg.dropout : default_dropout(arch);
}

ModelParams init_params(Arch arch, int d_in, int d_hidden, int num_classes,
                        std::uint64_t seed) {
  if (d_in < 1 || d_hidden < 1 || num_classes < 1) {
    throw std::invalid_argument("init_params: dimensions must be positive");
  }
  Rng rng(seed);
  ModelParams p;
  p.arch = arch;
  p.d_in = d_in;
  p.d_hidden = d_hidden;
  p.d_out = num_classes;
  switch (arch) {
    case Arch::kGcn:
      p.tensors = {glorot(d_in, d_hidden, rng), glorot(d_hidden, num_classes, rng)};
      break;
    case Arch::kGat:
      p.tensors = {glorot(d_in, d_hidden, rng),
                   glorot(d_hidden, 1, rng),
                   glorot(d_hidden, 1, rng),
                   glorot(d_hidden, num_classes, rng),
                   glorot(num_classes, 1, rng),
                   glorot(num_classes, 1, rng)};
      break;
    case Arch::kSage:
      p.tensors = {glorot(d_in, d_hidden, rng), glorot(d_in, d_hidden, rng),
                   glorot(d_hidden, num_classes, rng),
                   glorot(d_hidden, num_classes, rng)};
      break;
  }
  return p;
}

EdgeWeights unit_weights(const Graph& graph) {
  return EdgeWeights{Vectord::Ones(static_cast<Eigen::Index>(graph.num_directed_edges()))};
}

MessageGraph MessageGraph::from_graph(const Graph& graph) {
  MessageGraph mg;
  mg.num_nodes = graph.num_nodes();
  mg.src = graph.edge_src();
  mg.dst = graph.edge_dst();
  return mg;
}

LayerOneCache layer_one_cache(const ModelParams& p, const Matrixd& features) {
  LayerOneCache c;
  switch (p.arch) {
    case Arch::kGcn:
      c.proj = features * p.tensors[0];
      break;
    case Arch::kGat:
      c.proj = features * p.tensors[0];
      c.att_self = c.proj * p.tensors[1];
      c.att_neigh = c.proj * p.tensors[2];
      break;
    case Arch::kSage:
      c.self_proj = features * p.tensors[0];
      c.proj = features * p.tensors[1];
      break;
  }
  return c;
}

ad::Var forward_tape(Taped& t, const ModelParams& p, const MessageGraph& mg,
                     const Matrixd& features, Var edge_weights, Mode mode,
                     double dropout, Rng* dropout_rng, ForwardTrace* trace) {
  check_forward_shapes(p, mg, features.rows(), features.cols(),
                       t.value(edge_weights).rows());
  ParamVars pv = make_param_vars(t, p, false);
  Var x = t.leaf_ref(&features);
  Var xd = mode == Mode::kTrain ? apply_dropout(t, x, dropout, dropout_rng) : x;
  LayerOne l1;
  switch (p.arch) {
    case Arch::kGcn:
      l1.proj = t.matmul(xd, pv.v[0]);
      break;
    case Arch::kGat:
      l1.proj = t.matmul(xd, pv.v[0]);
      l1.att_self = t.matmul(l1.proj, pv.v[1]);
      l1.att_neigh = t.matmul(l1.proj, pv.v[2]);
      break;
    case Arch::kSage:
      l1.self_proj = t.matmul(xd, pv.v[0]);
      l1.proj = t.matmul(xd, pv.v[1]);
      break;
  }
  return build_from_layer_one(t, p, pv, mg, l1, edge_weights, mode, dropout,
                              dropout_rng, trace);
}

ad::Var forward_tape_cached(Taped& t, const ModelParams& p, const MessageGraph& mg,
                            const LayerOneCache& cache, Var edge_weights,
                            ForwardTrace* trace) {
  if (cache.proj.rows() != mg.num_nodes) {
    throw std::invalid_argument("nn: cached projection rows != num_nodes");
  }
  if (t.value(edge_weights).rows() != static_cast<Eigen::Index>(mg.src.size())) {
    throw std::invalid_argument("nn: edge weight count != directed edge count");
  }
  ParamVars pv = make_param_vars(t, p, false);
  LayerOne l1;
  l1.proj = t.constant(cache.proj);
  if (p.arch == Arch::kSage) l1.self_proj = t.constant(cache.self_proj);
  if (p.arch == Arch::kGat) {
    l1.att_self = t.constant(Matrixd(cache.att_self));
    l1.att_neigh = t.constant(Matrixd(cache.att_neigh));
  }
  return build_from_layer_one(t, p, pv, mg, l1, edge_weights, Mode::kEval, 0.0,
                              nullptr, trace);
}

Matrixd forward(const ModelParams& p, const Graph& graph, const EdgeWeights& w,
                Mode mode, double dropout, Rng* dropout_rng, ForwardTrace* trace) {
  Taped t;
  const MessageGraph mg = MessageGraph::from_graph(graph);
  Var wv = t.leaf(Matrixd(w.values), false);
  Var logits = forward_tape(t, p, mg, graph.features(), wv, mode, dropout,
                            dropout_rng, trace);
  return t.value(logits);
}

double cross_entropy(const Matrixd& logits, const std::vector<int>& labels,
                     const std::vector<int>& rows) {
  if (rows.empty()) throw std::invalid_argument("cross_entropy: empty selection");
  double total = 0.0;
  for (int r : rows) {
    const double m = logits.row(r).maxCoeff();
    const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
    total += lse - logits(r, labels[static_cast<std::size_t>(r)]);
  }
  return total / static_cast<double>(rows.size());
}

LossGrad loss_and_grad(const ModelParams& p, const Graph& graph,
                       const EdgeWeights& w, const Mask& mask,
                       double weight_decay, Mode mode, double dropout,
                       Rng* dropout_rng) {
  const std::vector<int> rows = mask_indices(mask);
  if (rows.empty()) throw std::invalid_argument("loss_and_grad: mask selects no nodes");

  Taped t;
  const MessageGraph mg = MessageGraph::from_graph(graph);
  ParamVars pv = make_param_vars(t, p, true);
  Var wv = t.leaf(Matrixd(w.values), true);

  Var x = t.leaf_ref(&graph.features());
  Var xd = mode == Mode::kTrain ? apply_dropout(t, x, dropout, dropout_rng) : x;
  LayerOne l1;
  switch (p.arch) {
    case Arch::kGcn:
      l1.proj = t.matmul(xd, pv.v[0]);
      break;
    case Arch::kGat:
      l1.proj = t.matmul(xd, pv.v[0]);
      l1.att_self = t.matmul(l1.proj, pv.v[1]);
      l1.att_neigh = t.matmul(l1.proj, pv.v[2]);
      break;
    case Arch::kSage:
      l1.self_proj = t.matmul(xd, pv.v[0]);
      l1.proj = t.matmul(xd, pv.v[1]);
      break;
  }
  Var logits = build_from_layer_one(t, p, pv, mg, l1, wv, mode, dropout,
                                    dropout_rng, nullptr);
  Var ce = t.masked_cross_entropy(logits, graph.labels(), rows);
  t.backward(ce);

  LossGrad out;
  out.loss = t.value(ce)(0, 0);
  out.param_grads.reserve(p.tensors.size());
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    Matrixd g = t.grad(pv.v[i]);
    if (weight_decay != 0.0) {
      out.loss += 0.5 * weight_decay * p.tensors[i].squaredNorm();
      g += weight_decay * p.tensors[i];
    }
    out.param_grads.push_back(std::move(g));
  }
  out.edge_weight_grads = t.grad(wv).col(0);
  return out;
}

std::vector<int> predict(const ModelParams& p, const Graph& graph) {
  const Matrixd logits = forward(p, graph, unit_weights(graph), Mode::kEval);
  std::vector<int> labels(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    labels[static_cast<std::size_t>(i)] = argmax_lowest(logits.row(i));
  }
  return labels;
}

void Adam::step(std::vector<Matrixd>& params, const std::vector<Matrixd>& grads) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("Adam::step: params/grads size mismatch");
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Matrixd::Zero(p.rows(), p.cols()));
      v_.push_back(Matrixd::Zero(p.rows(), p.cols()));
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
    params[i].array() -=
        lr_ * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps_);
  }
}

TrainResult train(const Graph& graph, Arch arch, const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  const std::vector<int> val_rows = mask_indices(graph.val_mask());
  if (mask_indices(graph.train_mask()).empty() || val_rows.empty()) {
    throw std::invalid_argument("train: graph needs nonempty train and val masks");
  }
  const double dropout = resolve_dropout(arch, cfg);

  ModelParams params = init_params(arch, graph.feature_dim(), cfg.hidden_dim,
                                   graph.num_classes(), derive_seed(cfg.seed, "init"));
  Rng dropout_rng(derive_seed(cfg.seed, "dropout"));
  const EdgeWeights w = unit_weights(graph);
  Adam opt(cfg.learning_rate);

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  result.log.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    LossGrad lg = loss_and_grad(params, graph, w, graph.train_mask(),
                                cfg.weight_decay, Mode::kTrain, dropout,
                                &dropout_rng);
    finite_or_throw(lg.loss, "training loss", epoch);
    opt.step(params.tensors, lg.param_grads);

    const Matrixd logits = forward(params, graph, w, Mode::kEval);
    const double val_loss =
        finite_or_throw(cross_entropy(logits, graph.labels(), val_rows),
                        "validation loss", epoch);
    int correct = 0;
    for (int r : val_rows) {
      if (argmax_lowest(logits.row(r)) == graph.labels()[static_cast<std::size_t>(r)]) {
        ++correct;
      }
    }
    const double val_acc = static_cast<double>(correct) / val_rows.size();
    result.log.push_back({epoch, lg.loss, val_loss, val_acc});

    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      result.params = params;
    }
  }
  return result;
}

void save_checkpoint(const ModelParams& p, const TrainConfig& cfg,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out << "rewire-checkpoint v1\n";
  out << "arch " << to_string(p.arch) << "\n";
  out << "dims " << p.d_in << ' ' << p.d_hidden << ' ' << p.d_out << "\n";
  out << "config " << cfg.epochs << ' ' << hex_double(cfg.learning_rate) << ' '
      << hex_double(cfg.weight_decay) << ' ' << hex_double(cfg.dropout) << ' '
      << cfg.hidden_dim << ' ' << cfg.seed << "\n";
  out << "tensors " << p.tensors.size() << "\n";
  for (const auto& w : p.tensors) {
    out << "tensor " << w.rows() << ' ' << w.cols() << "\n";
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        out << hex_double(w(i, j)) << (j + 1 == w.cols() ? '\n' : ' ');
      }
    }
  }
  out << "end\n";
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::pair<ModelParams, TrainConfig> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  auto fail = [&](const std::string& what) -> std::runtime_error {
    return std::runtime_error("checkpoint: " + path + ": " + what);
  };
  std::string line;
  if (!std::getline(in, line) || line != "rewire-checkpoint v1") {
    throw fail("unsupported version");
  }
  std::string kw, arch_name;
  if (!(in >> kw >> arch_name) || kw != "arch") throw fail("missing arch");
  ModelParams p;
  p.arch = arch_from_string(arch_name);
  if (!(in >> kw >> p.d_in >> p.d_hidden >> p.d_out) || kw != "dims") {
    throw fail("missing dims");
  }
  TrainConfig cfg;
  std::string lr, wd, dr;
  if (!(in >> kw >> cfg.epochs >> lr >> wd >> dr >> cfg.hidden_dim >> cfg.seed) ||
      kw != "config") {
    throw fail("missing config");
  }
  cfg.learning_rate = std::strtod(lr.c_str(), nullptr);
  cfg.weight_decay = std::strtod(wd.c_str(), nullptr);
  cfg.dropout = std::strtod(dr.c_str(), nullptr);
  std::size_t count = 0;
  if (!(in >> kw >> count) || kw != "tensors") throw fail("missing tensor count");
  p.tensors.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Eigen::Index rows, cols;
    if (!(in >> kw >> rows >> cols) || kw != "tensor") throw fail("missing tensor header");
    Matrixd w(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        std::string tok;
        if (!(in >> tok)) throw fail("truncated tensor data");
        w(i, j) = std::strtod(tok.c_str(), nullptr);
      }
    }
    p.tensors.push_back(std::move(w));
  }
  if (!(in >> kw) || kw != "end") throw fail("missing end marker");
  return {std::move(p), cfg};
}

}  // namespace rewire
