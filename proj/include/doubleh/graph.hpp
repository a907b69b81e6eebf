// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "doubleh/errors.hpp"
#include "doubleh/random.hpp"

namespace doubleh {

enum class NodeKind : std::uint8_t { User = 0, Tweet = 1 };
enum class EdgeKind : std::uint8_t { Post = 0, Retweet = 1 };

inline const char* to_string(NodeKind k) { return k == NodeKind::User ? "user" : "tweet"; }
inline const char* to_string(EdgeKind k) { return k == EdgeKind::Post ? "post" : "retweet"; }

struct NodeRef {
  NodeKind kind = NodeKind::User;
  std::uint32_t index = 0;

  static constexpr NodeRef user(std::uint32_t i) { return {NodeKind::User, i}; }
  static constexpr NodeRef tweet(std::uint32_t i) { return {NodeKind::Tweet, i}; }

  friend constexpr auto operator<=>(const NodeRef&, const NodeRef&) = default;
};

inline std::string to_string(NodeRef n) {
  return (n.kind == NodeKind::User ? "u" : "t") + std::to_string(n.index);
}

struct Neighbor {
  NodeRef node;
  EdgeKind kind = EdgeKind::Post;

  friend constexpr auto operator<=>(const Neighbor&, const Neighbor&) = default;
};

/// One undirected interaction; the graph stores it in both directions.
/// Endpoint order does not matter.
struct Interaction {
  NodeRef a;
  NodeRef b;
  EdgeKind kind = EdgeKind::Post;
};

/// Directed user-tweet bipartite graph in compressed adjacency form.
///
/// Nodes are addressed either by NodeRef or by a dense global id in which
/// users come first: global(user i) = i, global(tweet j) = num_users + j.
/// Every interaction is stored as two directed edges of the same kind.
/// Parallel edges are kept; neighbor lists are sorted by (node, kind).
class BipartiteGraph {
 public:
  BipartiteGraph() = default;

  static BipartiteGraph build(std::size_t num_users, std::size_t num_tweets, std::span<const Interaction> interactions,
                              bool require_single_post = true) {
    BipartiteGraph g;
    g.num_users_ = num_users;
    g.num_tweets_ = num_tweets;
    const std::size_t n = num_users + num_tweets;
    std::vector<std::size_t> post_count(num_tweets, 0);
    std::vector<std::pair<std::size_t, Neighbor>> directed;
    directed.reserve(interactions.size() * 2);
    for (std::size_t i = 0; i < interactions.size(); ++i) {
      const Interaction& e = interactions[i];
      if (e.a.kind == e.b.kind) {
        throw DataError("interaction " + std::to_string(i) + " joins two " + to_string(e.a.kind) +
                        " nodes; the graph is bipartite");
      }
      const NodeRef user = e.a.kind == NodeKind::User ? e.a : e.b;
      const NodeRef tweet = e.a.kind == NodeKind::User ? e.b : e.a;
      if (user.index >= num_users) throw DataError("interaction " + std::to_string(i) + " references unknown user");
      if (tweet.index >= num_tweets) throw DataError("interaction " + std::to_string(i) + " references unknown tweet");
      if (e.kind == EdgeKind::Post) ++post_count[tweet.index];
      directed.push_back({g.global(user), Neighbor{tweet, e.kind}});
      directed.push_back({g.global(tweet), Neighbor{user, e.kind}});
    }
    if (require_single_post) {
      for (std::size_t t = 0; t < num_tweets; ++t) {
        if (post_count[t] != 1) {
          throw DataError("tweet " + std::to_string(t) + " has " + std::to_string(post_count[t]) +
                          " post interactions; exactly one author is required");
        }
      }
    }
    std::sort(directed.begin(), directed.end());
    g.offsets_.assign(n + 1, 0);
    for (const auto& [src, nb] : directed) ++g.offsets_[src + 1];
    for (std::size_t v = 0; v < n; ++v) g.offsets_[v + 1] += g.offsets_[v];
    g.adjacency_.reserve(directed.size());
    for (const auto& [src, nb] : directed) g.adjacency_.push_back(nb);
    return g;
  }

  std::size_t num_users() const noexcept { return num_users_; }
  std::size_t num_tweets() const noexcept { return num_tweets_; }
  std::size_t num_nodes() const noexcept { return num_users_ + num_tweets_; }
  /// Directed edge count (twice the interaction count).
  std::size_t num_edges() const noexcept { return adjacency_.size(); }

  bool contains(NodeRef v) const noexcept {
    return v.kind == NodeKind::User ? v.index < num_users_ : v.index < num_tweets_;
  }

  std::size_t global(NodeRef v) const noexcept {
    return v.kind == NodeKind::User ? v.index : num_users_ + v.index;
  }

  NodeRef node(std::size_t global_id) const noexcept {
    return global_id < num_users_ ? NodeRef::user(static_cast<std::uint32_t>(global_id))
                                  : NodeRef::tweet(static_cast<std::uint32_t>(global_id - num_users_));
  }

  /// Out-neighbors of v with edge kinds, ordered by (node, kind).
  std::span<const Neighbor> neighbors(NodeRef v) const {
    check(v);
    const std::size_t g = global(v);
    return {adjacency_.data() + offsets_[g], offsets_[g + 1] - offsets_[g]};
  }

  std::size_t degree(NodeRef v) const { return neighbors(v).size(); }

  /// Distinct neighbor nodes in index order (parallel edges collapsed).
  std::vector<NodeRef> distinct_neighbors(NodeRef v) const {
    std::vector<NodeRef> out;
    for (const Neighbor& nb : neighbors(v)) {
      if (out.empty() || out.back() != nb.node) out.push_back(nb.node);
    }
    return out;
  }

  std::size_t count_edges(EdgeKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(adjacency_.begin(), adjacency_.end(), [kind](const Neighbor& nb) { return nb.kind == kind; }));
  }

  void check(NodeRef v) const {
    if (!contains(v)) throw DataError("node " + to_string(v) + " is not in the graph");
  }

 private:
  std::size_t num_users_ = 0;
  std::size_t num_tweets_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<Neighbor> adjacency_;
};

enum class SampleMode { Replacement, Exhaustive };

/// Replacement: exactly `size` uniform draws over the node's edges (empty for
/// degree 0). Exhaustive: each distinct neighbor once, in index order; `size`
/// and `rng` are unused.
inline std::vector<NodeRef> sample_neighbors(const BipartiteGraph& g, NodeRef v, std::size_t size, SampleMode mode,
                                             Rng& rng) {
  if (size == 0) throw ConfigError("sample size must be at least 1");
  if (mode == SampleMode::Exhaustive) return g.distinct_neighbors(v);
  const auto nbrs = g.neighbors(v);
  std::vector<NodeRef> out;
  if (nbrs.empty()) return out;
  out.reserve(size);
  for (std::size_t i = 0; i < size; ++i) out.push_back(nbrs[uniform_index(rng, nbrs.size())].node);
  return out;
}

/// Sampled neighborhoods for the centers of one depth.
struct FrontierLayer {
  std::vector<NodeRef> centers;
  std::vector<std::vector<NodeRef>> one_hop;  ///< per center
  std::vector<std::vector<NodeRef>> two_hop;  ///< per center, concatenated over its one-hop draws

  friend bool operator==(const FrontierLayer&, const FrontierLayer&) = default;
};

/// Nested node sets B^0 ⊇ B^1 ⊇ ... ⊇ B^K = batch, plus the neighbor samples a
/// K-layer forward pass consumes. Sets keep insertion order.
struct Frontier {
  std::size_t depth = 0;
  SampleMode mode = SampleMode::Replacement;
  std::size_t one_hop_size = 0;
  std::size_t two_hop_size = 0;
  std::vector<std::vector<NodeRef>> sets;  ///< sets[k] = B^k, k = 0..depth
  std::vector<FrontierLayer> layers;       ///< layers[k-1] samples for B^k

  friend bool operator==(const Frontier&, const Frontier&) = default;
};

inline Frontier build_frontier(const BipartiteGraph& g, std::span<const NodeRef> batch, std::size_t depth,
                               std::size_t one_hop_size, std::size_t two_hop_size, SampleMode mode, Rng& rng) {
  if (batch.empty()) throw ConfigError("frontier batch is empty");
  if (depth < 1) throw ConfigError("frontier depth must be at least 1");
  Frontier f;
  f.depth = depth;
  f.mode = mode;
  f.one_hop_size = one_hop_size;
  f.two_hop_size = two_hop_size;
  f.sets.resize(depth + 1);
  f.layers.resize(depth);

  std::vector<char> seen(g.num_nodes(), 0);
  for (NodeRef v : batch) {
    g.check(v);
    if (!seen[g.global(v)]) {
      seen[g.global(v)] = 1;
      f.sets[depth].push_back(v);
    }
  }
  for (std::size_t k = depth; k >= 1; --k) {
    const std::vector<NodeRef>& current = f.sets[k];
    std::vector<NodeRef>& next = f.sets[k - 1];
    next = current;
    std::fill(seen.begin(), seen.end(), 0);
    for (NodeRef v : next) seen[g.global(v)] = 1;
    auto admit = [&](NodeRef v) {
      if (!seen[g.global(v)]) {
        seen[g.global(v)] = 1;
        next.push_back(v);
      }
    };
    FrontierLayer& layer = f.layers[k - 1];
    layer.centers = current;
    layer.one_hop.resize(current.size());
    layer.two_hop.resize(current.size());
    for (std::size_t i = 0; i < current.size(); ++i) {
      layer.one_hop[i] = sample_neighbors(g, current[i], one_hop_size, mode, rng);
      for (NodeRef v : layer.one_hop[i]) {
        admit(v);
        auto second = sample_neighbors(g, v, two_hop_size, mode, rng);
        for (NodeRef w : second) admit(w);
        layer.two_hop[i].insert(layer.two_hop[i].end(), second.begin(), second.end());
      }
    }
  }
  return f;
}

}  // namespace doubleh
