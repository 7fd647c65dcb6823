#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "rewire/dataset.hpp"
#include "rewire/metrics.hpp"
#include "testutil.hpp"

using namespace rewire;

namespace {

// Class proportions mirroring the citation networks: intra-class edges
// dominate, so deleting a few is relatively mild while inserting a few
// inter-class edges is a large relative change.
Graph pipeline_fixture() {
  SbmParams sp;
  sp.block_sizes = {100, 100};
  sp.p_in = 0.06;
  sp.p_out = 0.008;
  sp.noise_scale = 0.9;
  sp.seed = 13;
  return generate_sbm(sp);
}

}  // namespace

TEST_CASE("end to end: the targeted attack raises test error, insertions beat deletions") {
  const Graph g = pipeline_fixture();

  SweepConfig cfg;
  cfg.dataset_name = "sbm-pipeline";
  cfg.train.epochs = 150;
  cfg.explainer.top_k = 2;
  cfg.gammas = {6.0, 1.0 / 6.0};
  cfg.seeds = {1, 2, 3, 4, 5};
  cfg.total_rate = 0.15;
  cfg.jobs = 2;
  const auto reports = run_sweep(g, cfg);
  REQUIRE(reports.size() == 2 * 5 * 2);

  std::map<double, std::pair<double, int>> targeted;
  double clean_sum = 0.0;
  int clean_count = 0;
  for (const auto& r : reports) {
    REQUIRE(!r.failed);
    if (r.targeting != "important") continue;
    auto& cell = targeted[r.gamma];
    cell.first += r.mcr_attacked;
    cell.second += 1;
    clean_sum += r.mcr_clean;
    ++clean_count;
  }
  const double clean = clean_sum / clean_count;
  const double insertion_heavy = targeted[6.0].first / targeted[6.0].second;
  const double deletion_heavy = targeted[1.0 / 6.0].first / targeted[1.0 / 6.0].second;

  INFO("clean ", clean, " gamma=6 ", insertion_heavy, " gamma=1/6 ", deletion_heavy);
  CHECK(insertion_heavy > clean + 0.03);   // the attack does real damage
  CHECK(deletion_heavy > clean);           // deletion-heavy attacks hurt too
  CHECK(insertion_heavy > deletion_heavy); // and insertions hurt more
}

TEST_CASE("rewired graphs keep features, labels, masks and pass validation") {
  const Graph g = pipeline_fixture();
  TrainConfig tc;
  tc.epochs = 100;
  tc.seed = 7;
  const ModelParams model = train(g, Arch::kGcn, tc).params;
  ExplainerConfig ec;
  ec.top_k = 2;
  ec.epochs = 30;
  const auto mask = combine_masks(explain_all_nodes(model, g, ec, 2), g);

  AttackBudget budget;
  budget.gamma = 4.0;
  budget.edr_target = 0.04;
  budget.seed = 3;
  const RewirePlan plan = build_plan(g, mask, budget);
  const Graph r = apply_plan(g, plan);

  CHECK(r.features() == g.features());
  CHECK(r.labels() == g.labels());
  CHECK(r.test_mask() == g.test_mask());
  CHECK(edr_net(g, r) <= 0.04 + 1.0 / static_cast<double>(g.num_edges()));
  // a within-budget rewiring barely moves the degree distribution
  CHECK(degree_distance(g, r) < 0.2);
}
