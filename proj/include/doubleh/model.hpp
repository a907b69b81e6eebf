// SPDX-License-Identifier: Apache-2.0
//
// DoubleH message passing over the user-tweet graph.
//
// Each layer treats a node's one-hop neighbors (the other node kind,
// "heterogeneous") and two-hop neighbors (the same kind, "homogeneous")
// separately: every neighbor vector goes through layernorm, dropout, a
// transform chosen by (layer, hop, center kind) and ReLU; the results are
// summed, concatenated with the node's previous representation, combined,
// rectified and L2-normalized. Users are classified from the last layer.
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "doubleh/errors.hpp"
#include "doubleh/graph.hpp"
#include "doubleh/random.hpp"
#include "doubleh/tensor.hpp"

namespace doubleh {

enum class Ablation { Full, HeteroOnly, HomoOnly };
enum class Aggregation { Sum, Mean, Max };
enum class Hop : std::size_t { One = 0, Two = 1 };

inline const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::Full: return "full";
    case Ablation::HeteroOnly: return "hetero-only";
    case Ablation::HomoOnly: return "homo-only";
  }
  return "?";
}

inline Ablation parse_ablation(const std::string& s) {
  if (s == "full") return Ablation::Full;
  if (s == "hetero-only") return Ablation::HeteroOnly;
  if (s == "homo-only") return Ablation::HomoOnly;
  throw ConfigError("unknown ablation '" + s + "' (expected full, hetero-only or homo-only)");
}

inline const char* to_string(Aggregation a) {
  switch (a) {
    case Aggregation::Sum: return "sum";
    case Aggregation::Mean: return "mean";
    case Aggregation::Max: return "max";
  }
  return "?";
}

inline Aggregation parse_aggregation(const std::string& s) {
  if (s == "sum") return Aggregation::Sum;
  if (s == "mean") return Aggregation::Mean;
  if (s == "max") return Aggregation::Max;
  throw ConfigError("unknown aggregation '" + s + "' (expected sum, mean or max)");
}

inline bool uses_hop(Ablation a, Hop hop) {
  return a == Ablation::Full || (hop == Hop::One ? a == Ablation::HeteroOnly : a == Ablation::HomoOnly);
}

struct DoubleHConfig {
  std::size_t layers = 2;
  std::size_t hidden = 32;
  std::size_t feature_dim = 16;
  double dropout = 0.1;
  std::size_t one_hop_size = 10;
  std::size_t two_hop_size = 10;
  Aggregation aggregation = Aggregation::Sum;
  Ablation ablation = Ablation::Full;
  std::size_t classes = 2;
  double layernorm_eps = 1e-5;
  double norm_eps = 1e-12;

  void validate() const {
    if (layers < 1) throw ConfigError("layers must be at least 1");
    if (hidden < 1 || feature_dim < 1) throw ConfigError("dimensions must be at least 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (one_hop_size < 1 || two_hop_size < 1) throw ConfigError("sampler sizes must be at least 1");
    if (classes < 2) throw ConfigError("need at least two classes");
    if (!(layernorm_eps > 0.0) || !(norm_eps > 0.0)) throw ConfigError("eps values must be positive");
  }

  std::size_t input_dim(std::size_t layer) const { return layer == 1 ? feature_dim : hidden; }

  friend bool operator==(const DoubleHConfig&, const DoubleHConfig&) = default;
};

inline void to_json(nlohmann::json& j, const DoubleHConfig& c) {
  j = {{"layers", c.layers},
       {"hidden", c.hidden},
       {"feature_dim", c.feature_dim},
       {"dropout", c.dropout},
       {"n1", c.one_hop_size},
       {"n2", c.two_hop_size},
       {"aggregation", to_string(c.aggregation)},
       {"ablation", to_string(c.ablation)},
       {"classes", c.classes},
       {"layernorm_eps", c.layernorm_eps},
       {"norm_eps", c.norm_eps}};
}

inline void from_json(const nlohmann::json& j, DoubleHConfig& c) {
  c.layers = j.at("layers").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.one_hop_size = j.at("n1").get<std::size_t>();
  c.two_hop_size = j.at("n2").get<std::size_t>();
  c.aggregation = parse_aggregation(j.at("aggregation").get<std::string>());
  c.ablation = parse_ablation(j.at("ablation").get<std::string>());
  c.classes = j.at("classes").get<std::size_t>();
  c.layernorm_eps = j.at("layernorm_eps").get<double>();
  c.norm_eps = j.at("norm_eps").get<double>();
}

/// Weights of one layer. transform[hop][center kind] maps a neighbor vector
/// (input_dim) to hidden; combine maps [previous ; aggregated] to hidden.
struct LayerParams {
  std::array<std::array<Tensor, 2>, 2> transform;
  Tensor combine;

  Tensor& transform_for(Hop hop, NodeKind center) {
    return transform[static_cast<std::size_t>(hop)][static_cast<std::size_t>(center)];
  }
  const Tensor& transform_for(Hop hop, NodeKind center) const {
    return transform[static_cast<std::size_t>(hop)][static_cast<std::size_t>(center)];
  }

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct ModelParams {
  std::vector<LayerParams> layers;
  Tensor classifier_weight;  ///< classes x hidden
  Tensor classifier_bias;    ///< 1 x classes

  /// Glorot-uniform weights, zero classifier bias.
  static ModelParams initialize(const DoubleHConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(derive_seed(seed, 0x1417));
    auto glorot = [&rng](std::size_t out, std::size_t in) {
      Tensor w(out, in);
      const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
      for (double& v : w.values()) v = (2.0 * uniform01(rng) - 1.0) * limit;
      return w;
    };
    ModelParams p;
    for (std::size_t k = 1; k <= config.layers; ++k) {
      LayerParams layer;
      const std::size_t in = config.input_dim(k);
      for (auto& per_hop : layer.transform)
        for (Tensor& w : per_hop) w = glorot(config.hidden, in);
      layer.combine = glorot(config.hidden, in + config.hidden);
      p.layers.push_back(std::move(layer));
    }
    p.classifier_weight = glorot(config.classes, config.hidden);
    p.classifier_bias = Tensor(1, config.classes);
    return p;
  }

  /// Flat parameter list in a fixed order: per layer the four transforms
  /// (hop-major, user before tweet) then combine; classifier weight, bias last.
  std::vector<Tensor*> tensors() {
    std::vector<Tensor*> out;
    for (LayerParams& l : layers) {
      for (auto& per_hop : l.transform)
        for (Tensor& w : per_hop) out.push_back(&w);
      out.push_back(&l.combine);
    }
    out.push_back(&classifier_weight);
    out.push_back(&classifier_bias);
    return out;
  }

  std::vector<const Tensor*> tensors() const {
    std::vector<const Tensor*> out;
    for (Tensor* t : const_cast<ModelParams*>(this)->tensors()) out.push_back(t);
    return out;
  }

  void check(const DoubleHConfig& config) const {
    auto expect = [](const Tensor& t, std::size_t r, std::size_t c, const std::string& what) {
      if (t.rows() != r || t.cols() != c) {
        throw ShapeError(what + " has shape " + shape_string(t) + ", expected " + std::to_string(r) + "x" +
                         std::to_string(c));
      }
      if (!t.all_finite()) throw NumericError(what + " holds non-finite values");
    };
    if (layers.size() != config.layers) throw ShapeError("parameter layer count does not match config");
    for (std::size_t k = 1; k <= layers.size(); ++k) {
      const std::size_t in = config.input_dim(k);
      for (const auto& per_hop : layers[k - 1].transform)
        for (const Tensor& w : per_hop) expect(w, config.hidden, in, "transform of layer " + std::to_string(k));
      expect(layers[k - 1].combine, config.hidden, in + config.hidden, "combine of layer " + std::to_string(k));
    }
    expect(classifier_weight, config.classes, config.hidden, "classifier weight");
    expect(classifier_bias, 1, config.classes, "classifier bias");
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Model parameters bound to a tape.
struct ParamVars {
  struct Layer {
    std::array<std::array<Var, 2>, 2> transform;
    Var combine;
    Var transform_for(Hop hop, NodeKind center) const {
      return transform[static_cast<std::size_t>(hop)][static_cast<std::size_t>(center)];
    }
  };
  std::vector<Layer> layers;
  Var classifier_weight;
  Var classifier_bias;
  std::vector<Var> all;  ///< same order as ModelParams::tensors()

  static ParamVars bind(Tape& tape, const ModelParams& p, bool trainable) {
    auto put = [&](const Tensor& t) { return trainable ? tape.variable(t) : tape.constant(t); };
    ParamVars v;
    for (const LayerParams& l : p.layers) {
      Layer bound;
      for (std::size_t h = 0; h < 2; ++h)
        for (std::size_t c = 0; c < 2; ++c) {
          bound.transform[h][c] = put(l.transform[h][c]);
          v.all.push_back(bound.transform[h][c]);
        }
      bound.combine = put(l.combine);
      v.all.push_back(bound.combine);
      v.layers.push_back(bound);
    }
    v.classifier_weight = put(p.classifier_weight);
    v.classifier_bias = put(p.classifier_bias);
    v.all.push_back(v.classifier_weight);
    v.all.push_back(v.classifier_bias);
    return v;
  }

  std::vector<Tensor> grads(const Tape& tape) const {
    std::vector<Tensor> out;
    out.reserve(all.size());
    for (Var v : all) out.push_back(tape.grad(v));
    return out;
  }
};

/// σ(W · D(L(h))) for every row of `neighbors`. Zero rows in, zero rows out.
inline Var transform_neighbor_set(Var neighbors, Var transform, double dropout_p, Mode mode, Rng& rng,
                                  double layernorm_eps = 1e-5) {
  if (neighbors.cols() != transform.cols()) {
    throw ShapeError("neighbor vectors of width " + std::to_string(neighbors.cols()) +
                     " do not match transform " + shape_string(transform.value()));
  }
  Var x = layernorm(neighbors, layernorm_eps);
  x = dropout(x, dropout_p, mode, rng);
  return relu(affine(x, transform));
}

/// Transformed neighbor rows together with the center each row belongs to.
struct NeighborBlock {
  Var rows;
  std::vector<std::size_t> center;
};

/// Reduces the selected neighbor blocks into one vector per center. With sum
/// aggregation this is the elementwise sum over the union of the hetero and
/// homo multisets; a center with nothing selected gets the zero vector.
inline Var aggregate_neighborhood(Tape& tape, std::span<const NeighborBlock> hetero,
                                  std::span<const NeighborBlock> homo, Ablation ablation, std::size_t centers,
                                  std::size_t dim, Aggregation aggregation = Aggregation::Sum) {
  std::vector<Var> parts;
  std::vector<std::size_t> segment;
  auto take = [&](std::span<const NeighborBlock> blocks) {
    for (const NeighborBlock& b : blocks) {
      if (b.rows.cols() != dim) throw ShapeError("aggregate: neighbor vectors have mismatched dimension");
      if (b.center.size() != b.rows.rows()) throw ShapeError("aggregate: one center index per row required");
      if (b.rows.rows() == 0) continue;
      parts.push_back(b.rows);
      segment.insert(segment.end(), b.center.begin(), b.center.end());
    }
  };
  if (uses_hop(ablation, Hop::One)) take(hetero);
  if (uses_hop(ablation, Hop::Two)) take(homo);
  if (parts.empty()) return tape.constant(Tensor(centers, dim));
  const Var stacked = parts.size() == 1 ? parts.front() : concat_rows(parts, dim);
  const SegmentReduce kind = aggregation == Aggregation::Sum    ? SegmentReduce::Sum
                             : aggregation == Aggregation::Mean ? SegmentReduce::Mean
                                                                : SegmentReduce::Max;
  return segment_reduce(stacked, segment, centers, kind);
}

/// l2_normalize(σ(W · [previous ; aggregated])) row by row.
inline Var layer_forward(Var previous, Var aggregated, Var combine, double norm_eps = 1e-12) {
  if (previous.cols() + aggregated.cols() != combine.cols()) {
    throw ShapeError("combine weight " + shape_string(combine.value()) + " does not accept [" +
                     std::to_string(previous.cols()) + " ; " + std::to_string(aggregated.cols()) + "]");
  }
  return l2_normalize(relu(affine(concat_cols(previous, aggregated), combine)), norm_eps);
}

struct ForwardResult {
  Var embeddings;              ///< one row per batch node
  std::vector<NodeRef> nodes;  ///< B^K in row order
};

/// Mini-batch forward pass over a prepared frontier. `features` holds one
/// input row per graph node, indexed by BipartiteGraph::global.
inline ForwardResult model_forward(Tape& tape, const BipartiteGraph& graph, const Frontier& frontier,
                                   const Tensor& features, const ParamVars& params, const DoubleHConfig& config,
                                   Mode mode, Rng& rng) {
  config.validate();
  if (frontier.depth != config.layers || params.layers.size() != config.layers) {
    throw ConfigError("frontier depth " + std::to_string(frontier.depth) + " does not match model layers " +
                      std::to_string(config.layers));
  }
  if (frontier.mode == SampleMode::Replacement &&
      (frontier.one_hop_size != config.one_hop_size || frontier.two_hop_size != config.two_hop_size)) {
    throw ConfigError("frontier sampler sizes do not match the model config");
  }
  if (features.rows() != graph.num_nodes() || features.cols() != config.feature_dim) {
    throw ShapeError("feature matrix " + shape_string(features) + " does not match graph/config");
  }

  constexpr std::size_t kAbsent = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> row_of(graph.num_nodes(), kAbsent);
  auto index_rows = [&](const std::vector<NodeRef>& nodes) {
    std::fill(row_of.begin(), row_of.end(), kAbsent);
    for (std::size_t i = 0; i < nodes.size(); ++i) row_of[graph.global(nodes[i])] = i;
  };
  auto row_for = [&](NodeRef v) {
    const std::size_t r = row_of[graph.global(v)];
    if (r == kAbsent) throw ConfigError("node " + to_string(v) + " has no embedding at the previous depth");
    return r;
  };

  const std::vector<NodeRef>& base = frontier.sets[0];
  Tensor h0(base.size(), config.feature_dim);
  for (std::size_t i = 0; i < base.size(); ++i) {
    const auto src = features.row(graph.global(base[i]));
    std::copy(src.begin(), src.end(), h0.row(i).begin());
  }
  Var h = tape.constant(std::move(h0));

  for (std::size_t k = 1; k <= config.layers; ++k) {
    const FrontierLayer& layer = frontier.layers[k - 1];
    const ParamVars::Layer& w = params.layers[k - 1];
    index_rows(frontier.sets[k - 1]);

    std::array<std::vector<NeighborBlock>, 2> blocks;  // by hop
    for (Hop hop : {Hop::One, Hop::Two}) {
      if (!uses_hop(config.ablation, hop)) continue;
      const auto& samples = hop == Hop::One ? layer.one_hop : layer.two_hop;
      for (NodeKind kind : {NodeKind::User, NodeKind::Tweet}) {
        std::vector<std::size_t> rows, center;
        for (std::size_t i = 0; i < layer.centers.size(); ++i) {
          if (layer.centers[i].kind != kind) continue;
          for (NodeRef n : samples[i]) {
            rows.push_back(row_for(n));
            center.push_back(i);
          }
        }
        if (rows.empty()) continue;
        Var gathered = gather_rows(h, rows);
        Var transformed = transform_neighbor_set(gathered, w.transform_for(hop, kind), config.dropout, mode, rng,
                                                 config.layernorm_eps);
        blocks[static_cast<std::size_t>(hop)].push_back({transformed, std::move(center)});
      }
    }
    Var aggregated = aggregate_neighborhood(tape, blocks[0], blocks[1], config.ablation, layer.centers.size(),
                                            config.hidden, config.aggregation);
    std::vector<std::size_t> self_rows;
    self_rows.reserve(layer.centers.size());
    for (NodeRef c : layer.centers) self_rows.push_back(row_for(c));
    Var previous = gather_rows(h, self_rows);
    h = layer_forward(previous, aggregated, w.combine, config.norm_eps);
  }
  return {h, frontier.sets[config.layers]};
}

/// Class logits W h + b for every row of `embeddings`.
inline Var classifier_logits(Var embeddings, const ParamVars& params) {
  return affine(embeddings, params.classifier_weight, params.classifier_bias);
}

/// softmax(W h + b) for one embedding.
inline std::vector<double> classify(std::span<const double> embedding, const Tensor& weight, const Tensor& bias) {
  if (weight.cols() != embedding.size() || bias.rows() != 1 || bias.cols() != weight.rows()) {
    throw ShapeError("classifier shapes do not conform");
  }
  std::vector<double> logits(weight.rows());
  for (std::size_t c = 0; c < weight.rows(); ++c) {
    double s = bias[c];
    const auto wr = weight.row(c);
    for (std::size_t i = 0; i < embedding.size(); ++i) s += wr[i] * embedding[i];
    logits[c] = s;
  }
  return softmax(logits);
}

/// Cross-entropy of per-user class probabilities against gold labels.
inline double batch_loss(const Tensor& probs, std::span<const std::size_t> gold, Reduction reduction = Reduction::Sum) {
  if (probs.rows() == 0 || gold.empty()) throw ConfigError("batch_loss: empty batch");
  if (probs.rows() != gold.size()) throw ShapeError("batch_loss: label count does not match batch");
  double total = 0.0;
  for (std::size_t r = 0; r < gold.size(); ++r) {
    if (gold[r] >= probs.cols()) throw ConfigError("batch_loss: label out of range");
    total -= std::log(probs(r, gold[r]));
  }
  if (!std::isfinite(total)) throw NumericError("batch_loss: non-finite loss");
  return reduction == Reduction::Mean ? total / static_cast<double>(gold.size()) : total;
}

}  // namespace doubleh
