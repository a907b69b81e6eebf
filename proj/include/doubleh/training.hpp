// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "doubleh/errors.hpp"
#include "doubleh/graph.hpp"
#include "doubleh/model.hpp"
#include "doubleh/random.hpp"
#include "doubleh/tensor.hpp"

namespace doubleh {

// --- split ------------------------------------------------------------------

enum class Split : std::uint8_t { Train, Validation };

struct SplitMask {
  std::vector<Split> assignment;  ///< parallel to the labeled-user list
  std::uint64_t seed = 0;

  std::vector<std::size_t> indices(Split which) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] == which) out.push_back(i);
    return out;
  }

  friend bool operator==(const SplitMask&, const SplitMask&) = default;
};

/// Uniform random partition; round(ratio * n) users train, at least one user
/// on each side.
inline SplitMask split_dataset(std::size_t labeled_users, double train_ratio, std::uint64_t seed) {
  if (labeled_users < 2) throw ConfigError("need at least two labeled users to split");
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
  auto n_train = static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(labeled_users)));
  n_train = std::clamp<std::size_t>(n_train, 1, labeled_users - 1);
  std::vector<std::size_t> order(labeled_users);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x5b1));
  for (std::size_t i = labeled_users - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, i + 1)]);
  SplitMask mask{std::vector<Split>(labeled_users, Split::Validation), seed};
  for (std::size_t i = 0; i < n_train; ++i) mask.assignment[order[i]] = Split::Train;
  return mask;
}

// --- metrics ----------------------------------------------------------------

struct Metrics {
  double accuracy = 0.0;
  std::optional<double> auc;  ///< absent when only one class is present
  double f1_positive = 0.0;
  double f1_macro = 0.0;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

inline nlohmann::json to_json(const Metrics& m) {
  return {{"accuracy", m.accuracy},
          {"auc", m.auc ? nlohmann::json(*m.auc) : nlohmann::json(nullptr)},
          {"f1_positive", m.f1_positive},
          {"f1_macro", m.f1_macro}};
}

inline Metrics metrics_from_json(const nlohmann::json& j) {
  Metrics m;
  m.accuracy = j.at("accuracy").get<double>();
  if (!j.at("auc").is_null()) m.auc = j.at("auc").get<double>();
  m.f1_positive = j.at("f1_positive").get<double>();
  m.f1_macro = j.at("f1_macro").get<double>();
  return m;
}

/// `scores` are positive-class probabilities, `gold` 0/1 labels. Predictions
/// use score >= 0.5. AUC is the Mann-Whitney rank statistic with ties
/// counted half. F1 with an empty denominator is 0.
inline Metrics evaluate_metrics(std::span<const double> scores, std::span<const int> gold) {
  if (scores.empty()) throw ConfigError("evaluate_metrics: no predictions");
  if (scores.size() != gold.size()) throw ShapeError("evaluate_metrics: score and label counts differ");
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (gold[i] != 0 && gold[i] != 1) throw DataError("evaluate_metrics: labels must be 0 or 1");
    const bool pred = scores[i] >= 0.5;
    if (pred && gold[i] == 1) ++tp;
    else if (pred) ++fp;
    else if (gold[i] == 1) ++fn;
    else ++tn;
  }
  auto f1 = [](std::size_t t, std::size_t f_pos, std::size_t f_neg) {
    const std::size_t denom = 2 * t + f_pos + f_neg;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(t) / static_cast<double>(denom);
  };
  Metrics m;
  m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(scores.size());
  m.f1_positive = f1(tp, fp, fn);
  m.f1_macro = 0.5 * (m.f1_positive + f1(tn, fn, fp));

  // Average ranks over tied scores, then U = R_pos - n_pos(n_pos+1)/2.
  const std::size_t n_pos = tp + fn, n_neg = tn + fp;
  if (n_pos > 0 && n_neg > 0) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i;
      while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
      const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
      for (std::size_t k = i; k < j; ++k)
        if (gold[order[k]] == 1) rank_sum += avg_rank;
      i = j;
    }
    const double np = static_cast<double>(n_pos);
    m.auc = (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
  }
  return m;
}

// --- training -----------------------------------------------------------------

/// Graph, node features and the labeled users a model trains on.
struct TrainingData {
  const BipartiteGraph* graph = nullptr;
  Tensor features;                  ///< one row per node, global order
  std::vector<NodeRef> users;       ///< labeled users
  std::vector<int> labels;          ///< 0/1, parallel to users
};

struct TrainOptions {
  double lr = 0.001;
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  std::size_t patience = 10;  ///< stop after this many epochs without a validation F1 gain; 0 disables
  double split_ratio = 0.9;
  Reduction loss = Reduction::Mean;
  std::uint64_t split_seed = 1;
  std::uint64_t init_seed = 2;
  std::uint64_t sampler_seed = 3;
  bool verbose = false;

  friend bool operator==(const TrainOptions&, const TrainOptions&) = default;
};

inline void to_json(nlohmann::json& j, const TrainOptions& o) {
  j = {{"lr", o.lr},
       {"batch_size", o.batch_size},
       {"epochs", o.epochs},
       {"patience", o.patience},
       {"split_ratio", o.split_ratio},
       {"loss", o.loss == Reduction::Mean ? "mean" : "sum"},
       {"seeds", {{"split", o.split_seed}, {"init", o.init_seed}, {"sampler", o.sampler_seed}}}};
}

inline void from_json(const nlohmann::json& j, TrainOptions& o) {
  o.lr = j.at("lr").get<double>();
  o.batch_size = j.at("batch_size").get<std::size_t>();
  o.epochs = j.at("epochs").get<std::size_t>();
  o.patience = j.at("patience").get<std::size_t>();
  o.split_ratio = j.at("split_ratio").get<double>();
  o.loss = j.at("loss").get<std::string>() == "sum" ? Reduction::Sum : Reduction::Mean;
  o.split_seed = j.at("seeds").at("split").get<std::uint64_t>();
  o.init_seed = j.at("seeds").at("init").get<std::uint64_t>();
  o.sampler_seed = j.at("seeds").at("sampler").get<std::uint64_t>();
}

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;  ///< mean per-user training loss over the epoch
  Metrics validation;
  double seconds = 0.0;
};

struct TrainReport {
  DoubleHConfig config;
  TrainOptions options;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  Metrics best;
  std::uint64_t best_eval_seed = 0;
  double train_seconds = 0.0;
};

struct TrainResult {
  ModelParams params;  ///< best-validation-F1 parameters
  TrainReport report;
  SplitMask split;
};

namespace detail {

inline std::vector<NodeRef> pick(const std::vector<NodeRef>& all, std::span<const std::size_t> idx) {
  std::vector<NodeRef> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

inline std::uint64_t eval_seed(std::uint64_t sampler_seed, std::size_t epoch) {
  return derive_seed(sampler_seed, 0xe7a1, epoch);
}

}  // namespace detail

/// Positive-class probability for each user, in eval mode, over a frontier
/// sampled from `seed`. Users are processed in chunks of `batch_size`.
inline std::vector<double> predict_scores(const BipartiteGraph& graph, const Tensor& features,
                                          const ModelParams& params, const DoubleHConfig& config,
                                          std::span<const NodeRef> users, std::size_t batch_size, std::uint64_t seed,
                                          SampleMode mode = SampleMode::Replacement) {
  Rng rng(seed);
  std::vector<double> scores;
  scores.reserve(users.size());
  for (std::size_t start = 0; start < users.size(); start += batch_size) {
    const auto chunk = users.subspan(start, std::min(batch_size, users.size() - start));
    Tape tape;
    const ParamVars vars = ParamVars::bind(tape, params, false);
    const Frontier frontier =
        build_frontier(graph, chunk, config.layers, config.one_hop_size, config.two_hop_size, mode, rng);
    const ForwardResult fwd = model_forward(tape, graph, frontier, features, vars, config, Mode::Eval, rng);
    const Var logits = classifier_logits(fwd.embeddings, vars);
    // Batches are deduplicated by the frontier; map rows back to the chunk.
    for (NodeRef u : chunk) {
      const auto row = static_cast<std::size_t>(std::find(fwd.nodes.begin(), fwd.nodes.end(), u) - fwd.nodes.begin());
      const auto p = softmax(logits.value().row(row));
      scores.push_back(p[1]);
    }
  }
  return scores;
}

inline Metrics evaluate_users(const TrainingData& data, const ModelParams& params, const DoubleHConfig& config,
                              std::span<const std::size_t> which, std::size_t batch_size, std::uint64_t seed) {
  const auto users = detail::pick(data.users, which);
  const auto scores = predict_scores(*data.graph, data.features, params, config, users, batch_size, seed);
  std::vector<int> gold;
  for (std::size_t i : which) gold.push_back(data.labels[i]);
  return evaluate_metrics(scores, gold);
}

/// Mini-batch training with Adam, per-epoch validation and best-F1 selection.
/// Model selection and early stopping use macro F1.
inline TrainResult train_model(const TrainingData& data, const DoubleHConfig& config, const TrainOptions& options) {
  config.validate();
  if (data.graph == nullptr) throw ConfigError("training data has no graph");
  if (data.users.size() != data.labels.size()) throw ShapeError("one label per labeled user required");
  if (options.batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (!(options.lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  for (int l : data.labels)
    if (l != 0 && l != 1) throw DataError("training labels must be 0 or 1");
  const BipartiteGraph& graph = *data.graph;

  const auto clock_start = std::chrono::steady_clock::now();
  TrainResult result;
  result.split = split_dataset(data.users.size(), options.split_ratio, options.split_seed);
  const auto train_idx = result.split.indices(Split::Train);
  const auto val_idx = result.split.indices(Split::Validation);

  ModelParams params = ModelParams::initialize(config, options.init_seed);
  params.check(config);
  AdamState adam;
  const AdamOptions adam_opt{options.lr};

  TrainReport& report = result.report;
  report.config = config;
  report.options = options;
  double best_f1 = -1.0;
  std::size_t since_best = 0;

  std::vector<std::size_t> order = train_idx;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    Rng rng(derive_seed(options.sampler_seed, 0x7a1, epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

    double loss_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::span<const std::size_t> batch_idx(order.data() + start,
                                                   std::min(options.batch_size, order.size() - start));
      const auto batch = detail::pick(data.users, batch_idx);
      Tape tape;
      const ParamVars vars = ParamVars::bind(tape, params, true);
      const Frontier frontier = build_frontier(graph, batch, config.layers, config.one_hop_size,
                                               config.two_hop_size, SampleMode::Replacement, rng);
      const ForwardResult fwd = model_forward(tape, graph, frontier, data.features, vars, config, Mode::Train, rng);
      // Frontier rows are the distinct batch users in first-seen order.
      std::vector<std::size_t> targets;
      for (NodeRef u : fwd.nodes) {
        const auto pos = static_cast<std::size_t>(std::find(batch.begin(), batch.end(), u) - batch.begin());
        targets.push_back(static_cast<std::size_t>(data.labels[batch_idx[pos]]));
      }
      const CrossEntropy ce = softmax_cross_entropy(classifier_logits(fwd.embeddings, vars), targets, options.loss);
      const double loss = ce.loss.value()[0];
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
      }
      loss_total += options.loss == Reduction::Mean ? loss * static_cast<double>(targets.size()) : loss;
      tape.backward(ce.loss);
      const std::vector<Tensor> grads = vars.grads(tape);
      const auto tensors = params.tensors();
      adam_step(tensors, grads, adam, adam_opt);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = order.empty() ? 0.0 : loss_total / static_cast<double>(order.size());
    const std::uint64_t eseed = detail::eval_seed(options.sampler_seed, epoch);
    rec.validation = evaluate_users(data, params, config, val_idx, options.batch_size, eseed);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    report.epochs.push_back(rec);
    if (options.verbose) {
      std::fprintf(stderr, "epoch %zu loss %.6f val_acc %.4f val_f1 %.4f\n", epoch, rec.loss,
                   rec.validation.accuracy, rec.validation.f1_macro);
    }
    if (rec.validation.f1_macro > best_f1) {
      best_f1 = rec.validation.f1_macro;
      since_best = 0;
      result.params = params;
      report.best_epoch = epoch;
      report.best = rec.validation;
      report.best_eval_seed = eseed;
    } else if (options.patience > 0 && ++since_best >= options.patience) {
      break;
    }
  }
  if (report.epochs.empty()) result.params = params;
  report.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  return result;
}

/// Feature-only reference: logistic regression on the labeled users' own
/// input features, trained with the same split, optimizer and epoch budget.
/// Returns validation metrics of the best-F1 epoch.
inline Metrics train_feature_baseline(const TrainingData& data, const TrainOptions& options) {
  const SplitMask split = split_dataset(data.users.size(), options.split_ratio, options.split_seed);
  const auto train_idx = split.indices(Split::Train);
  const auto val_idx = split.indices(Split::Validation);
  const std::size_t dim = data.features.cols();
  auto rows_of = [&](std::span<const std::size_t> idx) {
    Tensor x(idx.size(), dim);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto src = data.features.row(data.graph->global(data.users[idx[i]]));
      std::copy(src.begin(), src.end(), x.row(i).begin());
    }
    return x;
  };
  Tensor weight(2, dim), bias(1, 2);
  {
    Rng rng(derive_seed(options.init_seed, 0xba5e));
    const double limit = std::sqrt(6.0 / static_cast<double>(dim + 2));
    for (double& v : weight.values()) v = (2.0 * uniform01(rng) - 1.0) * limit;
  }
  AdamState adam;
  const Tensor x_val = rows_of(val_idx);
  std::vector<int> gold_val;
  for (std::size_t i : val_idx) gold_val.push_back(data.labels[i]);
  Metrics best;
  double best_f1 = -1.0;
  std::size_t since_best = 0;
  std::vector<std::size_t> order = train_idx;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    Rng rng(derive_seed(options.sampler_seed, 0xba5e, epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(options.batch_size, order.size() - start));
      std::vector<std::size_t> targets;
      for (std::size_t i : idx) targets.push_back(static_cast<std::size_t>(data.labels[i]));
      Tape tape;
      const Var w = tape.variable(weight), b = tape.variable(bias);
      const CrossEntropy ce = softmax_cross_entropy(affine(tape.constant(rows_of(idx)), w, b), targets, options.loss);
      tape.backward(ce.loss);
      const std::vector<Tensor> grads{tape.grad(w), tape.grad(b)};
      const std::vector<Tensor*> params{&weight, &bias};
      adam_step(params, grads, adam, AdamOptions{options.lr});
    }
    std::vector<double> scores;
    for (std::size_t r = 0; r < x_val.rows(); ++r) scores.push_back(classify(x_val.row(r), weight, bias)[1]);
    const Metrics m = evaluate_metrics(scores, gold_val);
    if (m.f1_macro > best_f1) {
      best_f1 = m.f1_macro;
      best = m;
      since_best = 0;
    } else if (options.patience > 0 && ++since_best >= options.patience) {
      break;
    }
  }
  return best;
}

// --- reports ------------------------------------------------------------------

/// Stable short hash of a run configuration, used to key CSV rows.
inline std::string config_hash(const DoubleHConfig& config, const TrainOptions& options) {
  const nlohmann::json j = {{"model", config}, {"train", options}};
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(j.dump());
  return s.str();
}

inline nlohmann::json to_json(const TrainReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const EpochRecord& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"validation", to_json(e.validation)}, {"seconds", e.seconds}});
  }
  return {{"config", r.config},
          {"options", r.options},
          {"config_hash", config_hash(r.config, r.options)},
          {"epochs", epochs},
          {"best_epoch", r.best_epoch},
          {"best", to_json(r.best)},
          {"best_eval_seed", r.best_eval_seed},
          {"train_seconds", r.train_seconds}};
}

inline TrainReport report_from_json(const nlohmann::json& j) {
  TrainReport r;
  r.config = j.at("config").get<DoubleHConfig>();
  r.options = j.at("options").get<TrainOptions>();
  for (const auto& e : j.at("epochs")) {
    r.epochs.push_back({e.at("epoch").get<std::size_t>(), e.at("loss").get<double>(),
                        metrics_from_json(e.at("validation")), e.value("seconds", 0.0)});
  }
  r.best_epoch = j.at("best_epoch").get<std::size_t>();
  r.best = metrics_from_json(j.at("best"));
  r.best_eval_seed = j.at("best_eval_seed").get<std::uint64_t>();
  r.train_seconds = j.value("train_seconds", 0.0);
  return r;
}

/// Report JSON without wall-clock fields; identical for identical runs.
inline nlohmann::json deterministic_json(const TrainReport& r) {
  nlohmann::json j = to_json(r);
  j.erase("train_seconds");
  for (auto& e : j["epochs"]) e.erase("seconds");
  return j;
}

/// The wall-clock fields left out by deterministic_json.
inline nlohmann::json timing_json(const TrainReport& r) {
  std::vector<double> per_epoch;
  for (const EpochRecord& e : r.epochs) per_epoch.push_back(e.seconds);
  return {{"train_seconds", r.train_seconds}, {"epoch_seconds", per_epoch}};
}

inline void apply_timing(TrainReport& r, const nlohmann::json& timing) {
  r.train_seconds = timing.at("train_seconds").get<double>();
  const auto per_epoch = timing.at("epoch_seconds").get<std::vector<double>>();
  if (per_epoch.size() != r.epochs.size()) throw DataError("timing does not match the report's epochs");
  for (std::size_t i = 0; i < per_epoch.size(); ++i) r.epochs[i].seconds = per_epoch[i];
}

/// CSV rows: config_hash,epoch,loss,acc,auc,f1_pos,f1_macro,seconds
inline std::string metrics_csv(const TrainReport& r) {
  std::ostringstream out;
  out << "config_hash,epoch,loss,acc,auc,f1_pos,f1_macro,seconds\n";
  out << std::setprecision(17);
  const std::string hash = config_hash(r.config, r.options);
  for (const EpochRecord& e : r.epochs) {
    out << hash << ',' << e.epoch << ',' << e.loss << ',' << e.validation.accuracy << ',';
    if (e.validation.auc) out << *e.validation.auc;
    out << ',' << e.validation.f1_positive << ',' << e.validation.f1_macro << ',' << e.seconds << '\n';
  }
  return out.str();
}

// --- checkpoints ----------------------------------------------------------------

namespace detail {

inline nlohmann::json tensor_json(const Tensor& t) {
  return {{"rows", t.rows()}, {"cols", t.cols()}, {"data", t.storage()}};
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
  return Tensor(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

}  // namespace detail

struct Checkpoint {
  static constexpr int kVersion = 1;
  DoubleHConfig config;
  TrainOptions options;
  ModelParams params;
  std::size_t epoch = 0;
  std::uint64_t eval_seed = 0;  ///< sampler seed that produced the recorded validation metrics
  Metrics validation;
  nlohmann::json run = nlohmann::json::object();  ///< free-form run description (data paths, feature source)
};

inline nlohmann::json to_json(const Checkpoint& c) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerParams& l : c.params.layers) {
    nlohmann::json transform = nlohmann::json::object();
    for (Hop hop : {Hop::One, Hop::Two})
      for (NodeKind kind : {NodeKind::User, NodeKind::Tweet}) {
        transform[hop == Hop::One ? "one_hop" : "two_hop"][to_string(kind)] =
            detail::tensor_json(l.transform_for(hop, kind));
      }
    layers.push_back({{"transform", transform}, {"combine", detail::tensor_json(l.combine)}});
  }
  return {{"format", "doubleh-checkpoint"},
          {"version", Checkpoint::kVersion},
          {"config", c.config},
          {"options", c.options},
          {"epoch", c.epoch},
          {"eval_seed", c.eval_seed},
          {"validation", to_json(c.validation)},
          {"run", c.run},
          {"params",
           {{"layers", layers},
            {"classifier", {{"weight", detail::tensor_json(c.params.classifier_weight)},
                            {"bias", detail::tensor_json(c.params.classifier_bias)}}}}}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "doubleh-checkpoint") throw DataError("not a doubleh checkpoint");
  if (j.value("version", 0) != Checkpoint::kVersion) throw DataError("unsupported checkpoint version");
  Checkpoint c;
  try {
    c.config = j.at("config").get<DoubleHConfig>();
    c.options = j.at("options").get<TrainOptions>();
    c.epoch = j.at("epoch").get<std::size_t>();
    c.eval_seed = j.at("eval_seed").get<std::uint64_t>();
    c.validation = metrics_from_json(j.at("validation"));
    c.run = j.value("run", nlohmann::json::object());
    for (const auto& lj : j.at("params").at("layers")) {
      LayerParams l;
      for (Hop hop : {Hop::One, Hop::Two})
        for (NodeKind kind : {NodeKind::User, NodeKind::Tweet}) {
          l.transform_for(hop, kind) =
              detail::tensor_from_json(lj.at("transform").at(hop == Hop::One ? "one_hop" : "two_hop").at(to_string(kind)));
        }
      l.combine = detail::tensor_from_json(lj.at("combine"));
      c.params.layers.push_back(std::move(l));
    }
    c.params.classifier_weight = detail::tensor_from_json(j.at("params").at("classifier").at("weight"));
    c.params.classifier_bias = detail::tensor_from_json(j.at("params").at("classifier").at("bias"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
  c.params.check(c.config);
  return c;
}

inline void save_json(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline nlohmann::json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.filename().string() + ": malformed JSON");
  }
}

// --- efficiency -------------------------------------------------------------------

struct EfficiencyEntry {
  std::string model;  ///< e.g. "DoubleH-K2-full"
  std::size_t layers = 0;
  double f1 = 0.0;
  double seconds = 0.0;
  bool below_floor = false;
};

struct EfficiencyTable {
  std::vector<EfficiencyEntry> rows;  ///< sorted by layers, then model name
  double floor = 0.75;

  nlohmann::json to_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) {
      out.push_back({{"model", r.model}, {"layers", r.layers}, {"f1", r.f1}, {"train_seconds", r.seconds},
                     {"below_floor", r.below_floor}});
    }
    return {{"f1_floor", floor}, {"rows", out}};
  }

  /// Entries at or above the F1 floor.
  std::vector<EfficiencyEntry> eligible() const {
    std::vector<EfficiencyEntry> out;
    for (const auto& r : rows)
      if (!r.below_floor) out.push_back(r);
    return out;
  }

  std::string to_text() const {
    std::ostringstream s;
    s << std::left << std::setw(28) << "model" << std::setw(8) << "layers" << std::setw(10) << "f1" << "seconds\n";
    for (const auto& r : rows) {
      s << std::left << std::setw(28) << r.model << std::setw(8) << r.layers << std::setw(10) << std::fixed
        << std::setprecision(4) << r.f1 << std::setprecision(3) << r.seconds << (r.below_floor ? "  (below floor)" : "")
        << '\n';
    }
    return s.str();
  }
};

inline std::string model_label(const DoubleHConfig& c) {
  return "DoubleH-K" + std::to_string(c.layers) + "-" + to_string(c.ablation);
}

/// Uses the best-epoch macro F1 and total training seconds of each run.
inline EfficiencyTable efficiency_report(std::span<const TrainReport> runs, double f1_floor = 0.75) {
  if (runs.empty()) throw ConfigError("efficiency report needs at least one run");
  EfficiencyTable t;
  t.floor = f1_floor;
  for (const TrainReport& r : runs) {
    const double f1 = r.best.f1_macro;
    t.rows.push_back({model_label(r.config), r.config.layers, f1, r.train_seconds, f1 < f1_floor});
  }
  std::stable_sort(t.rows.begin(), t.rows.end(), [](const EfficiencyEntry& a, const EfficiencyEntry& b) {
    return std::tie(a.layers, a.model) < std::tie(b.layers, b.model);
  });
  return t;
}

}  // namespace doubleh
