#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rewire/explain.hpp"
#include "rewire/graph.hpp"

namespace rewire {

/// Perturbation budget. gamma is the insertion:deletion ratio; the op counts
/// come from either `total_ops` (n_ins + n_del, split by gamma) or, when
/// total_ops is unset, from `edr_target`, the desired net relative change
/// |E_r - E| / |E|. gamma = 1 needs total_ops: its net change is zero for
/// every count, so a net target cannot fix the budget.
struct AttackBudget {
  double gamma = 2.0;
  double edr_target = -1.0;  // fraction of the edge count; < 0 means unset
  long total_ops = -1;       // n_ins + n_del; < 0 means unset
  std::uint64_t seed = 0;
};

struct BudgetCounts {
  long n_ins = 0;
  long n_del = 0;
};

BudgetCounts resolve_budget(const AttackBudget& budget, std::size_t num_edges);

/// Explicit edge rewiring: canonical pairs to insert (non-adjacent, labels
/// differ) and existing edges to delete (labels equal). Plans are pure
/// functions of (graph, node pools, budget, seed).
struct RewirePlan {
  std::vector<Edge> insertions;
  std::vector<Edge> deletions;
  std::uint64_t seed = 0;
  bool truncated = false;  // a candidate pool was smaller than requested
};

/// Samples deletions uniformly from the intra-class edges whose endpoints
/// both lie in the mask's important-node set, and insertions uniformly from
/// the non-adjacent inter-class pairs within that set. Pools smaller than
/// the requested count truncate the plan and set the flag; empty pools with
/// a nonzero request are an error.
RewirePlan build_plan(const Graph& graph, const CombinedMask& mask,
                      const AttackBudget& budget);

/// Same sampling over the whole node set: the "without explainability"
/// baseline.
RewirePlan random_baseline_plan(const Graph& graph, const AttackBudget& budget);

/// New graph with the plan applied; features, labels and masks are shared
/// unchanged. A plan inconsistent with the graph (inserting an existing edge
/// or deleting a missing one) is an error.
Graph apply_plan(const Graph& graph, const RewirePlan& plan);

/// Net relative edge-count change | |E_r| - |E| | / |E| (same value on
/// canonical or symmetric counts).
double edr_net(const Graph& original, const Graph& rewired);

/// Total op rate (n_ins + n_del) / |E| on canonical counts.
double edr_total(const RewirePlan& plan, const Graph& original);

/// Text format with one +/- line per op and the seed in the header.
void save_plan(const RewirePlan& plan, const std::string& path);
RewirePlan load_plan(const std::string& path);

}  // namespace rewire
