// SPDX-License-Identifier: Apache-2.0
//
// Test-side helpers: finite differences, an independent dense model, and
// brute-force recounts. Nothing here calls into the library's math.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "doubleh/doubleh.hpp"

namespace doubleh::testing {

inline Tensor random_tensor(std::mt19937_64& gen, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(r, c);
  for (double& v : t.values()) v = d(gen);
  return t;
}

/// Per-entry relative error used by every gradient check.
inline double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

/// Compares tape gradients of a scalar function against central differences
/// over every entry of every input.
inline GradCheck check_gradients(const ScalarFn& f, std::vector<Tensor> inputs, double step = 1e-5) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
    Var loss = f(tape, vars);
    tape.backward(loss);
    for (const Var& v : vars) analytic.push_back(tape.grad(v));
  }
  auto eval = [&](const std::vector<Tensor>& in) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : in) vars.push_back(tape.constant(t));
    return f(tape, vars).value()[0];
  };
  GradCheck out;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k][i];
      inputs[k][i] = x0 + step;
      const double up = eval(inputs);
      inputs[k][i] = x0 - step;
      const double down = eval(inputs);
      inputs[k][i] = x0;
      const double numeric = (up - down) / (2.0 * step);
      out.max_rel = std::max(out.max_rel, rel_err(analytic[k][i], numeric));
      ++out.checked;
    }
  }
  return out;
}

// --- dense full-neighborhood model -------------------------------------------

struct DenseGraph {
  std::size_t users = 0;
  std::size_t tweets = 0;
  std::vector<std::vector<int>> adj;  ///< 0/1, (users + tweets)^2, users first

  std::size_t size() const { return users + tweets; }
  bool is_user(std::size_t v) const { return v < users; }
};

inline DenseGraph dense_from(std::size_t users, std::size_t tweets, const std::vector<Interaction>& edges) {
  DenseGraph g{users, tweets, std::vector<std::vector<int>>(users + tweets, std::vector<int>(users + tweets, 0))};
  auto id = [&](NodeRef n) { return n.kind == NodeKind::User ? n.index : users + n.index; };
  for (const Interaction& e : edges) {
    g.adj[id(e.a)][id(e.b)] = 1;
    g.adj[id(e.b)][id(e.a)] = 1;
  }
  return g;
}

using Vec = std::vector<double>;

inline Vec dense_layernorm(const Vec& x, double eps) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean) / std::sqrt(var + eps);
  return y;
}

inline Vec dense_matvec_relu(const Tensor& w, const Vec& x) {
  Vec y(w.rows(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < w.cols(); ++c) s += w(r, c) * x[c];
    y[r] = s > 0.0 ? s : 0.0;
  }
  return y;
}

/// Embeddings of every node after `config.layers` rounds, every neighbor
/// included: hetero = distinct adjacent nodes, homo = distinct neighbors of
/// each hetero neighbor (with multiplicity). Eval mode, sum aggregation.
inline std::vector<Vec> dense_forward(const DenseGraph& g, const std::vector<Vec>& features, const ModelParams& p,
                                      const DoubleHConfig& config) {
  std::vector<Vec> h = features;
  const bool one = config.ablation != Ablation::HomoOnly;
  const bool two = config.ablation != Ablation::HeteroOnly;
  for (std::size_t k = 0; k < config.layers; ++k) {
    const LayerParams& L = p.layers[k];
    std::vector<Vec> next(g.size());
    for (std::size_t v = 0; v < g.size(); ++v) {
      const std::size_t kind = g.is_user(v) ? 0 : 1;
      Vec agg(config.hidden, 0.0);
      auto add = [&](std::size_t hop, std::size_t w) {
        const Vec t = dense_matvec_relu(L.transform[hop][kind], dense_layernorm(h[w], config.layernorm_eps));
        for (std::size_t i = 0; i < agg.size(); ++i) agg[i] += t[i];
      };
      for (std::size_t w = 0; w < g.size(); ++w) {
        if (!g.adj[v][w]) continue;
        if (one) add(0, w);
        if (two)
          for (std::size_t x = 0; x < g.size(); ++x)
            if (g.adj[w][x]) add(1, x);
      }
      Vec cat = h[v];
      cat.insert(cat.end(), agg.begin(), agg.end());
      Vec z = dense_matvec_relu(L.combine, cat);
      double norm = 0.0;
      for (double a : z) norm += a * a;
      norm = std::max(std::sqrt(norm), config.norm_eps);
      for (double& a : z) a /= norm;
      next[v] = std::move(z);
    }
    h = std::move(next);
  }
  return h;
}

// --- random graphs ----------------------------------------------------------

struct RandomGraph {
  std::size_t users = 0;
  std::size_t tweets = 0;
  std::vector<Interaction> edges;
};

/// Every tweet gets one author; extra retweet edges are drawn at random.
inline RandomGraph random_bipartite(std::mt19937_64& gen, std::size_t users, std::size_t tweets,
                                    std::size_t retweets) {
  RandomGraph g{users, tweets, {}};
  std::uniform_int_distribution<std::uint32_t> pu(0, static_cast<std::uint32_t>(users - 1));
  std::uniform_int_distribution<std::uint32_t> pt(0, static_cast<std::uint32_t>(tweets - 1));
  for (std::uint32_t t = 0; t < tweets; ++t) g.edges.push_back({NodeRef::user(pu(gen)), NodeRef::tweet(t), EdgeKind::Post});
  for (std::size_t i = 0; i < retweets; ++i)
    g.edges.push_back({NodeRef::user(pu(gen)), NodeRef::tweet(pt(gen)), EdgeKind::Retweet});
  return g;
}

/// Generated dataset with its graph and the labeled users, ready to train.
struct Fixture {
  SyntheticData synthetic;
  std::unique_ptr<DatasetGraph> graph;
  TrainingData data;
};

inline std::unique_ptr<Fixture> make_fixture(const SyntheticParams& params) {
  auto f = std::make_unique<Fixture>();
  f->synthetic = generate_synthetic(params);
  f->graph = std::make_unique<DatasetGraph>(build_dataset_graph(f->synthetic.dataset));
  f->data.graph = &f->graph->graph;
  f->data.features = dataset_feature_matrix(f->synthetic.dataset, *f->graph);
  for (const LabelRecord& l : f->synthetic.dataset.labels) {
    f->data.users.push_back(*f->graph->index.find_user(l.user_id));
    f->data.labels.push_back(to_int(l.label));
  }
  return f;
}

/// Scoped temporary directory.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() /
           ("doubleh_" + name + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace doubleh::testing
