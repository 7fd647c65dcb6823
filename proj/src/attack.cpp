#include "rewire/attack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "rewire/rng.hpp"

namespace rewire {

namespace {

long lround_positive(double x) { return static_cast<long>(std::llround(x)); }

// Uniform sample of `count` elements without replacement via partial
// Fisher-Yates; order of the result follows the draw order.
template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> pool, long count, Rng& rng) {
  const long n = static_cast<long>(pool.size());
  for (long i = 0; i < count; ++i) {
    const long j = i + static_cast<long>(rng.next_index(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(count));
  return pool;
}

struct NodePools {
  std::vector<int> nodes;                       // sorted
  const std::vector<std::vector<int>>* buckets; // per class
};

bool in_set(const std::vector<int>& sorted, int v) {
  return std::binary_search(sorted.begin(), sorted.end(), v);
}

std::vector<Edge> deletion_pool(const Graph& g, const std::vector<int>& nodes) {
  std::vector<Edge> pool;
  const auto& labels = g.labels();
  for (const auto& e : g.edges()) {
    if (labels[static_cast<std::size_t>(e.first)] != labels[static_cast<std::size_t>(e.second)]) {
      continue;
    }
    if (in_set(nodes, e.first) && in_set(nodes, e.second)) pool.push_back(e);
  }
  return pool;
}

// Number of non-adjacent different-label pairs within the node set.
long insertion_pool_size(const Graph& g, const NodePools& pools) {
  const long total = static_cast<long>(pools.nodes.size());
  long same_class_pairs = 0;
  for (const auto& bucket : *pools.buckets) {
    const long b = static_cast<long>(bucket.size());
    same_class_pairs += b * (b - 1) / 2;
  }
  long cross_pairs = total * (total - 1) / 2 - same_class_pairs;
  const auto& labels = g.labels();
  for (const auto& e : g.edges()) {
    if (labels[static_cast<std::size_t>(e.first)] == labels[static_cast<std::size_t>(e.second)]) {
      continue;
    }
    if (in_set(pools.nodes, e.first) && in_set(pools.nodes, e.second)) --cross_pairs;
  }
  return cross_pairs;
}

std::vector<Edge> enumerate_insertion_pool(const Graph& g, const NodePools& pools) {
  std::vector<Edge> pool;
  const auto& labels = g.labels();
  const auto& nodes = pools.nodes;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = i + 1; j < nodes.size(); ++j) {
      const int u = nodes[i], v = nodes[j];
      if (labels[static_cast<std::size_t>(u)] == labels[static_cast<std::size_t>(v)]) continue;
      if (g.has_edge(u, v)) continue;
      pool.emplace_back(u, v);
    }
  }
  return pool;
}

std::vector<Edge> sample_insertions(const Graph& g, const NodePools& pools,
                                    long count, long pool_size, Rng& rng) {
  // Enumerate when the pool is small or the request covers much of it;
  // otherwise rejection-sample node pairs (uniform over unordered pairs).
  constexpr long kEnumerationLimit = 4'000'000;
  if (pool_size <= kEnumerationLimit || count * 2 >= pool_size) {
    return sample_without_replacement(enumerate_insertion_pool(g, pools), count, rng);
  }
  std::set<Edge> chosen;
  std::vector<Edge> out;
  const auto& labels = g.labels();
  const auto n = static_cast<std::uint64_t>(pools.nodes.size());
  while (static_cast<long>(out.size()) < count) {
    const int u = pools.nodes[static_cast<std::size_t>(rng.next_index(n))];
    const int v = pools.nodes[static_cast<std::size_t>(rng.next_index(n))];
    if (u == v) continue;
    if (labels[static_cast<std::size_t>(u)] == labels[static_cast<std::size_t>(v)]) continue;
    if (g.has_edge(u, v)) continue;
    const Edge e = canonical_edge(u, v);
    if (!chosen.insert(e).second) continue;
    out.push_back(e);
  }
  return out;
}

RewirePlan plan_from_pools(const Graph& g, const NodePools& pools,
                           const AttackBudget& budget) {
  const BudgetCounts want = resolve_budget(budget, g.num_edges());
  RewirePlan plan;
  plan.seed = budget.seed;
  Rng rng(budget.seed);

  std::vector<Edge> del_pool = deletion_pool(g, pools.nodes);
  const long ins_pool_size = insertion_pool_size(g, pools);

  if (want.n_del > 0 && del_pool.empty()) {
    throw std::runtime_error("attack: deletion pool is empty");
  }
  if (want.n_ins > 0 && ins_pool_size == 0) {
    throw std::runtime_error("attack: insertion pool is empty");
  }

  long n_del = want.n_del;
  if (n_del > static_cast<long>(del_pool.size())) {
    n_del = static_cast<long>(del_pool.size());
    plan.truncated = true;
  }
  long n_ins = want.n_ins;
  if (n_ins > ins_pool_size) {
    n_ins = ins_pool_size;
    plan.truncated = true;
  }

  plan.deletions = sample_without_replacement(std::move(del_pool), n_del, rng);
  plan.insertions = sample_insertions(g, pools, n_ins, ins_pool_size, rng);
  return plan;
}

std::vector<std::vector<int>> label_buckets(const Graph& g, const std::vector<int>& nodes) {
  std::vector<std::vector<int>> buckets(static_cast<std::size_t>(g.num_classes()));
  for (int v : nodes) {
    buckets[static_cast<std::size_t>(g.labels()[static_cast<std::size_t>(v)])].push_back(v);
  }
  return buckets;
}

}  // namespace

BudgetCounts resolve_budget(const AttackBudget& budget, std::size_t num_edges) {
  if (budget.gamma <= 0) throw std::invalid_argument("budget: gamma must be > 0");
  BudgetCounts counts;
  if (budget.total_ops >= 0) {
    counts.n_del = lround_positive(static_cast<double>(budget.total_ops) /
                                   (1.0 + budget.gamma));
    counts.n_ins = budget.total_ops - counts.n_del;
    return counts;
  }
  if (budget.edr_target < 0) {
    throw std::invalid_argument("budget: set either total_ops or edr_target");
  }
  const long net = lround_positive(budget.edr_target * static_cast<double>(num_edges));
  if (budget.gamma == 1.0) {
    if (net != 0) {
      throw std::invalid_argument(
          "budget: gamma = 1 cannot meet a nonzero net edge-change target; "
          "use total_ops");
    }
    return counts;  // zero-op plan
  }
  if (budget.gamma > 1.0) {
    counts.n_del = lround_positive(static_cast<double>(net) / (budget.gamma - 1.0));
    counts.n_ins = counts.n_del + net;
  } else {
    counts.n_del = lround_positive(static_cast<double>(net) / (1.0 - budget.gamma));
    counts.n_ins = counts.n_del - net;
  }
  return counts;
}

RewirePlan build_plan(const Graph& graph, const CombinedMask& mask,
                      const AttackBudget& budget) {
  if (mask.important_nodes.empty()) {
    throw std::invalid_argument("attack: combined mask selects no nodes");
  }
  NodePools pools{mask.important_nodes, &mask.class_buckets};
  return plan_from_pools(graph, pools, budget);
}

RewirePlan random_baseline_plan(const Graph& graph, const AttackBudget& budget) {
  std::vector<int> all(static_cast<std::size_t>(graph.num_nodes()));
  for (int i = 0; i < graph.num_nodes(); ++i) all[static_cast<std::size_t>(i)] = i;
  const auto buckets = label_buckets(graph, all);
  NodePools pools{std::move(all), &buckets};
  return plan_from_pools(graph, pools, budget);
}

Graph apply_plan(const Graph& graph, const RewirePlan& plan) {
  std::vector<Edge> edges = graph.edges();
  std::set<Edge> to_delete(plan.deletions.begin(), plan.deletions.end());
  for (const auto& e : plan.deletions) {
    if (!graph.has_edge(e.first, e.second)) {
      throw std::invalid_argument("apply_plan: deletion of a missing edge");
    }
  }
  for (const auto& e : plan.insertions) {
    if (graph.has_edge(e.first, e.second)) {
      throw std::invalid_argument("apply_plan: insertion of an existing edge");
    }
    if (to_delete.count(canonical_edge(e.first, e.second)) > 0) {
      throw std::invalid_argument("apply_plan: edge both inserted and deleted");
    }
  }
  std::erase_if(edges, [&](const Edge& e) { return to_delete.count(e) > 0; });
  for (const auto& e : plan.insertions) edges.push_back(canonical_edge(e.first, e.second));
  return graph.replace_edges(std::move(edges));
}

double edr_net(const Graph& original, const Graph& rewired) {
  const double before = static_cast<double>(original.num_edges());
  const double after = static_cast<double>(rewired.num_edges());
  return std::abs(after - before) / before;
}

double edr_total(const RewirePlan& plan, const Graph& original) {
  return static_cast<double>(plan.insertions.size() + plan.deletions.size()) /
         static_cast<double>(original.num_edges());
}

void save_plan(const RewirePlan& plan, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("plan: cannot open " + path + " for writing");
  out << "rewire-plan v1\n";
  out << "seed " << plan.seed << "\n";
  out << "truncated " << (plan.truncated ? 1 : 0) << "\n";
  for (const auto& [u, v] : plan.insertions) out << "+ " << u << ' ' << v << '\n';
  for (const auto& [u, v] : plan.deletions) out << "- " << u << ' ' << v << '\n';
  out << "end\n";
  if (!out) throw std::runtime_error("plan: write failed for " + path);
}

RewirePlan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("plan: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "rewire-plan v1") {
    throw std::runtime_error("plan: " + path + ": unsupported version");
  }
  RewirePlan plan;
  std::string kw;
  int truncated = 0;
  if (!(in >> kw >> plan.seed) || kw != "seed") {
    throw std::runtime_error("plan: " + path + ": missing seed");
  }
  if (!(in >> kw >> truncated) || kw != "truncated") {
    throw std::runtime_error("plan: " + path + ": missing truncated flag");
  }
  plan.truncated = truncated != 0;
  std::string op;
  while (in >> op) {
    if (op == "end") return plan;
    int u, v;
    if (!(in >> u >> v) || (op != "+" && op != "-")) {
      throw std::runtime_error("plan: " + path + ": malformed op line");
    }
    if (op == "+") {
      plan.insertions.emplace_back(u, v);
    } else {
      plan.deletions.emplace_back(u, v);
    }
  }
  throw std::runtime_error("plan: " + path + ": missing end marker");
}

}  // namespace rewire
