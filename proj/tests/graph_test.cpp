// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <queue>
#include <random>
#include <set>

#include "support.hpp"

namespace doubleh {
namespace {

// u0 posts t0, u1 retweets t0.
BipartiteGraph three_nodes(std::size_t users = 2) {
  const Interaction edges[] = {{NodeRef::user(0), NodeRef::tweet(0), EdgeKind::Post},
                               {NodeRef::user(1), NodeRef::tweet(0), EdgeKind::Retweet}};
  return BipartiteGraph::build(users, 1, edges);
}

TEST(BuildGraph, ThreeNodeExample) {
  const BipartiteGraph g = three_nodes();
  EXPECT_EQ(g.num_nodes(), 3u);
  EXPECT_EQ(g.num_edges(), 4u);
  EXPECT_EQ(g.count_edges(EdgeKind::Post), 2u);
  EXPECT_EQ(g.count_edges(EdgeKind::Retweet), 2u);
  const auto u0 = g.neighbors(NodeRef::user(0));
  ASSERT_EQ(u0.size(), 1u);
  EXPECT_EQ(u0[0], (Neighbor{NodeRef::tweet(0), EdgeKind::Post}));
  const auto t0 = g.neighbors(NodeRef::tweet(0));
  ASSERT_EQ(t0.size(), 2u);
  EXPECT_EQ(t0[0], (Neighbor{NodeRef::user(0), EdgeKind::Post}));
  EXPECT_EQ(t0[1], (Neighbor{NodeRef::user(1), EdgeKind::Retweet}));
}

TEST(BuildGraph, EmptyAndIsolated) {
  const BipartiteGraph empty = BipartiteGraph::build(0, 0, {});
  EXPECT_EQ(empty.num_nodes(), 0u);
  EXPECT_EQ(empty.num_edges(), 0u);
  const BipartiteGraph g = three_nodes(3);
  EXPECT_TRUE(g.neighbors(NodeRef::user(2)).empty());
}

TEST(BuildGraph, Errors) {
  const Interaction unknown[] = {{NodeRef::user(0), NodeRef::tweet(5), EdgeKind::Post}};
  EXPECT_THROW(BipartiteGraph::build(1, 1, unknown), DataError);
  const Interaction same_kind[] = {{NodeRef::user(0), NodeRef::user(1), EdgeKind::Post}};
  EXPECT_THROW(BipartiteGraph::build(2, 0, same_kind), DataError);
  const Interaction orphan[] = {{NodeRef::user(0), NodeRef::tweet(0), EdgeKind::Retweet}};
  EXPECT_THROW(BipartiteGraph::build(1, 1, orphan), DataError);
  EXPECT_NO_THROW(BipartiteGraph::build(1, 1, orphan, false));
}

TEST(BuildGraph, BipartiteAndSymmetric) {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto rg = testing::random_bipartite(gen, 1 + gen() % 10, 1 + gen() % 12, gen() % 30);
    const BipartiteGraph g = BipartiteGraph::build(rg.users, rg.tweets, rg.edges);
    std::multiset<std::tuple<NodeRef, NodeRef, EdgeKind>> stored;
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
      const NodeRef a = g.node(v);
      for (const Neighbor& n : g.neighbors(a)) {
        EXPECT_NE(a.kind, n.node.kind);
        stored.insert({a, n.node, n.kind});
      }
    }
    EXPECT_EQ(stored.size(), 2 * rg.edges.size());
    for (const auto& [a, b, k] : stored) EXPECT_EQ(stored.count({a, b, k}), stored.count({b, a, k}));
  }
}

TEST(SampleNeighbors, Examples) {
  const BipartiteGraph g = three_nodes(3);
  Rng rng(1);
  const auto ten = sample_neighbors(g, NodeRef::user(0), 10, SampleMode::Replacement, rng);
  EXPECT_EQ(ten, std::vector<NodeRef>(10, NodeRef::tweet(0)));
  EXPECT_TRUE(sample_neighbors(g, NodeRef::user(2), 10, SampleMode::Replacement, rng).empty());
  EXPECT_THROW(sample_neighbors(g, NodeRef::user(0), 0, SampleMode::Replacement, rng), ConfigError);
}

TEST(SampleNeighbors, ReplaysSeededDraws) {
  const Interaction edges[] = {{NodeRef::user(0), NodeRef::tweet(0), EdgeKind::Post},
                               {NodeRef::user(0), NodeRef::tweet(1), EdgeKind::Post},
                               {NodeRef::user(0), NodeRef::tweet(2), EdgeKind::Post}};
  const BipartiteGraph g = BipartiteGraph::build(1, 3, edges);
  Rng rng(123);
  const auto got = sample_neighbors(g, NodeRef::user(0), 10, SampleMode::Replacement, rng);
  Rng replay(123);
  std::vector<NodeRef> expect;
  for (int i = 0; i < 10; ++i) {
    const auto m = static_cast<unsigned __int128>(replay()) * 3u;
    expect.push_back(NodeRef::tweet(static_cast<std::uint32_t>(m >> 64)));
  }
  EXPECT_EQ(got, expect);
}

TEST(SampleNeighbors, UniformOverEdges) {
  constexpr std::size_t kDraws = 100000;
  constexpr std::size_t d = 5;
  std::vector<Interaction> edges;
  for (std::uint32_t t = 0; t < d; ++t) edges.push_back({NodeRef::user(0), NodeRef::tweet(t), EdgeKind::Post});
  const BipartiteGraph g = BipartiteGraph::build(1, d, edges);
  Rng rng(77);
  std::map<NodeRef, std::size_t> counts;
  for (NodeRef v : sample_neighbors(g, NodeRef::user(0), kDraws, SampleMode::Replacement, rng)) ++counts[v];
  const double p = 1.0 / d;
  const double sigma = std::sqrt(p * (1 - p) / kDraws);
  for (std::uint32_t t = 0; t < d; ++t)
    EXPECT_NEAR(static_cast<double>(counts[NodeRef::tweet(t)]) / kDraws, p, 3 * sigma);
}

TEST(SampleNeighbors, ExhaustiveIsDistinctInOrder) {
  const Interaction edges[] = {{NodeRef::user(1), NodeRef::tweet(0), EdgeKind::Post},
                               {NodeRef::user(0), NodeRef::tweet(0), EdgeKind::Retweet},
                               {NodeRef::user(0), NodeRef::tweet(0), EdgeKind::Retweet}};
  const BipartiteGraph g = BipartiteGraph::build(2, 1, edges);
  Rng rng(0);
  EXPECT_EQ(sample_neighbors(g, NodeRef::tweet(0), 3, SampleMode::Exhaustive, rng),
            (std::vector<NodeRef>{NodeRef::user(0), NodeRef::user(1)}));
  EXPECT_EQ(g.degree(NodeRef::tweet(0)), 3u);
}

TEST(Frontier, OneLayerExamples) {
  const BipartiteGraph g = three_nodes(3);
  Rng rng(0);
  const NodeRef u1[] = {NodeRef::user(1)};
  const Frontier f = build_frontier(g, u1, 1, 10, 10, SampleMode::Exhaustive, rng);
  EXPECT_EQ(f.sets[1], std::vector<NodeRef>{NodeRef::user(1)});
  EXPECT_EQ(f.sets[0], (std::vector<NodeRef>{NodeRef::user(1), NodeRef::tweet(0), NodeRef::user(0)}));
  const NodeRef u2[] = {NodeRef::user(2)};
  const Frontier iso = build_frontier(g, u2, 1, 10, 10, SampleMode::Replacement, rng);
  EXPECT_EQ(iso.sets[0], std::vector<NodeRef>{NodeRef::user(2)});
  EXPECT_EQ(iso.sets[1], std::vector<NodeRef>{NodeRef::user(2)});
}

std::set<NodeRef> bfs_ball(const BipartiteGraph& g, std::span<const NodeRef> batch, std::size_t radius) {
  std::map<NodeRef, std::size_t> dist;
  std::queue<NodeRef> q;
  for (NodeRef v : batch) {
    dist[v] = 0;
    q.push(v);
  }
  while (!q.empty()) {
    const NodeRef v = q.front();
    q.pop();
    if (dist[v] == radius) continue;
    for (const Neighbor& n : g.neighbors(v))
      if (!dist.contains(n.node)) {
        dist[n.node] = dist[v] + 1;
        q.push(n.node);
      }
  }
  std::set<NodeRef> out;
  for (const auto& [v, d] : dist) out.insert(v);
  return out;
}

TEST(Frontier, ExhaustiveMatchesBfsBall) {
  // Path u0 - t0 - u1 - t1 - u2 - t2.
  const Interaction path[] = {{NodeRef::user(0), NodeRef::tweet(0), EdgeKind::Post},
                              {NodeRef::user(1), NodeRef::tweet(0), EdgeKind::Retweet},
                              {NodeRef::user(1), NodeRef::tweet(1), EdgeKind::Post},
                              {NodeRef::user(2), NodeRef::tweet(1), EdgeKind::Retweet},
                              {NodeRef::user(2), NodeRef::tweet(2), EdgeKind::Post}};
  const BipartiteGraph g = BipartiteGraph::build(3, 3, path);
  Rng rng(0);
  const NodeRef batch[] = {NodeRef::user(0)};
  const Frontier f = build_frontier(g, batch, 2, 1, 1, SampleMode::Exhaustive, rng);
  const std::set<NodeRef> b0(f.sets[0].begin(), f.sets[0].end());
  EXPECT_EQ(b0, bfs_ball(g, batch, 4));
  EXPECT_EQ(b0.size(), 5u);

  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 30; ++trial) {
    const auto rg = testing::random_bipartite(gen, 2 + gen() % 6, 1 + gen() % 6, gen() % 8);
    const BipartiteGraph rgraph = BipartiteGraph::build(rg.users, rg.tweets, rg.edges);
    const NodeRef center[] = {NodeRef::user(static_cast<std::uint32_t>(gen() % rg.users))};
    for (std::size_t k : {1u, 2u}) {
      const Frontier rf = build_frontier(rgraph, center, k, 1, 1, SampleMode::Exhaustive, rng);
      const std::set<NodeRef> got(rf.sets[0].begin(), rf.sets[0].end());
      EXPECT_EQ(got, bfs_ball(rgraph, center, 2 * k));
    }
  }
}

TEST(Frontier, NestedAndClosed) {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 30; ++trial) {
    const auto rg = testing::random_bipartite(gen, 3 + gen() % 8, 2 + gen() % 8, gen() % 20);
    const BipartiteGraph g = BipartiteGraph::build(rg.users, rg.tweets, rg.edges);
    const NodeRef batch[] = {NodeRef::user(0), NodeRef::user(static_cast<std::uint32_t>(rg.users - 1))};
    Rng rng(trial);
    const Frontier f = build_frontier(g, batch, 3, 3, 2, SampleMode::Replacement, rng);
    for (std::size_t k = 1; k <= 3; ++k) {
      const std::set<NodeRef> lower(f.sets[k - 1].begin(), f.sets[k - 1].end());
      for (NodeRef v : f.sets[k]) EXPECT_TRUE(lower.contains(v));
      const FrontierLayer& layer = f.layers[k - 1];
      EXPECT_EQ(layer.centers, f.sets[k]);
      for (std::size_t i = 0; i < layer.centers.size(); ++i) {
        for (NodeRef v : layer.one_hop[i]) EXPECT_TRUE(lower.contains(v));
        for (NodeRef v : layer.two_hop[i]) EXPECT_TRUE(lower.contains(v));
        EXPECT_EQ(layer.two_hop[i].size(), layer.one_hop[i].size() * 2);
      }
    }
  }
}

TEST(Frontier, SameSeedSameFrontier) {
  std::mt19937_64 gen(2);
  const auto rg = testing::random_bipartite(gen, 10, 15, 25);
  const BipartiteGraph g = BipartiteGraph::build(rg.users, rg.tweets, rg.edges);
  const NodeRef batch[] = {NodeRef::user(3), NodeRef::user(7), NodeRef::user(3)};
  Rng a(55), b(55);
  const Frontier fa = build_frontier(g, batch, 2, 4, 3, SampleMode::Replacement, a);
  const Frontier fb = build_frontier(g, batch, 2, 4, 3, SampleMode::Replacement, b);
  EXPECT_EQ(fa, fb);
  EXPECT_EQ(fa.sets[2].size(), 2u);
}

}  // namespace
}  // namespace doubleh
