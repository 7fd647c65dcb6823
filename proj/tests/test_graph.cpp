#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "rewire/dataset.hpp"
#include "rewire/graph.hpp"
#include "rewire/rng.hpp"
#include "testutil.hpp"

using namespace rewire;

TEST_CASE("degree histogram: no edges") {
  auto g = testutil::make_graph(3, 1, {}, {0, 0, 0});
  const auto hist = degree_histogram(g);
  CHECK(hist.size() == 1);
  CHECK(hist.at(0) == 3);
}

TEST_CASE("degree histogram: triangle") {
  auto g = testutil::make_graph(3, 1, {{0, 1}, {1, 2}, {0, 2}}, {0, 0, 0});
  const auto hist = degree_histogram(g);
  CHECK(hist.size() == 1);
  CHECK(hist.at(2) == 3);
}

TEST_CASE("degree histogram counts sum to N and survive relabeling") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 5 + static_cast<int>(rng.next_index(8));
    std::vector<Edge> edges;
    for (int u = 0; u < n; ++u) {
      for (int v = u + 1; v < n; ++v) {
        if (rng.next_bernoulli(0.3)) edges.emplace_back(u, v);
      }
    }
    std::vector<int> labels(static_cast<std::size_t>(n), 0);
    auto g = testutil::make_graph(n, 1, edges, labels);
    auto hist = degree_histogram(g);
    int total = 0;
    for (const auto& [d, c] : hist) total += c;
    CHECK(total == n);

    // random permutation of node ids
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) {
      std::swap(perm[static_cast<std::size_t>(i)],
                perm[rng.next_index(static_cast<std::uint64_t>(i + 1))]);
    }
    std::vector<Edge> pedges;
    for (const auto& [u, v] : edges) {
      pedges.push_back(canonical_edge(perm[static_cast<std::size_t>(u)],
                                      perm[static_cast<std::size_t>(v)]));
    }
    auto pg = testutil::make_graph(n, 1, pedges, labels);
    CHECK(degree_histogram(pg) == hist);
  }
}

TEST_CASE("edge canonicalization: inserting (v,u) after (u,v) is a no-op") {
  auto g1 = testutil::make_graph(4, 1, {{0, 1}, {2, 1}}, {0, 0, 0, 0});
  auto g2 = testutil::make_graph(4, 1, {{0, 1}, {1, 0}, {2, 1}, {1, 2}}, {0, 0, 0, 0});
  CHECK(g1.edges() == g2.edges());
  CHECK(g1.num_directed_edges() == 4);
}

TEST_CASE("class partition: two nodes, same label, one edge") {
  auto g = testutil::make_graph(2, 1, {{0, 1}}, {0, 0});
  const auto part = partition_edges_by_class(g);
  CHECK(part.intra_count() == 1);
  CHECK(part.inter_count() == 0);
}

TEST_CASE("class partition: cross-block-only SBM has zero intra edges") {
  SbmParams params;
  params.block_sizes = {20, 20};
  params.p_in = 0.0;
  params.p_out = 0.3;
  params.seed = 5;
  const Graph g = generate_sbm(params);
  const auto part = partition_edges_by_class(g);
  CHECK(part.intra_count() == 0);
  CHECK(part.inter_count() == g.num_edges());
  CHECK(g.num_edges() > 0);
}

TEST_CASE("class partition covers every edge exactly once") {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 8;
    std::vector<Edge> edges;
    for (int u = 0; u < n; ++u) {
      for (int v = u + 1; v < n; ++v) {
        if (rng.next_bernoulli(0.4)) edges.emplace_back(u, v);
      }
    }
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.next_index(3)));
    auto g = testutil::make_graph(n, 3, edges, labels);
    const auto part = partition_edges_by_class(g);
    CHECK(part.intra_count() + part.inter_count() == g.num_edges());
    for (int c = 0; c < 3; ++c) {
      for (const auto& [u, v] : part.intra_edges[static_cast<std::size_t>(c)]) {
        CHECK(g.labels()[static_cast<std::size_t>(u)] == c);
        CHECK(g.labels()[static_cast<std::size_t>(v)] == c);
      }
    }
    for (const auto& [u, v] : part.inter_edges) {
      CHECK(g.labels()[static_cast<std::size_t>(u)] !=
            g.labels()[static_cast<std::size_t>(v)]);
    }
  }
}

TEST_CASE("graph construction rejects invalid inputs") {
  Matrixd x = Matrixd::Zero(3, 2);
  Mask none(3, 0);
  CHECK_THROWS_AS(Graph(x, {0, 0, 0}, 1, {{1, 1}}, none, none, none),
                  std::invalid_argument);  // self-loop
  CHECK_THROWS_AS(Graph(x, {0, 2, 0}, 2, {}, none, none, none),
                  std::invalid_argument);  // label out of range
  CHECK_THROWS_AS(Graph(x, {0, 0, 0}, 1, {{0, 7}}, none, none, none),
                  std::invalid_argument);  // endpoint out of range
  Mask a = {1, 0, 0}, b = {1, 0, 0};
  CHECK_THROWS_AS(Graph(x, {0, 0, 0}, 1, {}, a, b, none), std::invalid_argument);
}

TEST_CASE("directed edge indexing matches the (dst-grouped) layout") {
  auto g = testutil::make_graph(4, 1, {{0, 1}, {1, 2}, {0, 3}}, {0, 0, 0, 0});
  CHECK(g.edge_src().size() == 6);
  for (std::size_t k = 0; k < g.edge_src().size(); ++k) {
    CHECK(g.directed_edge_index(g.edge_src()[k], g.edge_dst()[k]) == static_cast<int>(k));
  }
  CHECK(g.directed_edge_index(2, 0) == -1);
  CHECK(g.has_edge(3, 0));
  CHECK(!g.has_edge(2, 3));
}

TEST_CASE("replace_edges keeps everything but the edge set") {
  auto g = testutil::make_graph(4, 2, {{0, 1}}, {0, 1, 0, 1});
  auto g2 = g.replace_edges({{2, 3}, {0, 2}});
  CHECK(g2.num_edges() == 2);
  CHECK(g2.features() == g.features());
  CHECK(g2.labels() == g.labels());
  CHECK(g2.train_mask() == g.train_mask());
  CHECK(!g2.has_edge(0, 1));
  CHECK(g2.has_edge(0, 2));
}
