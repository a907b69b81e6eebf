// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: gen, label, build-graph, train, eval, report.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
// failure. Failures print one JSON line {"error": kind, "message": text} to
// standard error.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "doubleh/doubleh.hpp"

namespace doubleh::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kNumericError = 4 };

struct GenArgs {
  fs::path out;
  SyntheticParams params;
};

struct LabelArgs {
  fs::path data;
  fs::path lexicon;
  fs::path out;
  double threshold = 0.5;
  std::string tie = "positive";
  std::size_t bins = 10;
};

struct GraphArgs {
  fs::path data;
  fs::path out;
};

struct FeatureArgs {
  std::string source = "dataset";  // dataset | hashed | random | file
  std::size_t dim = 16;
  std::uint64_t seed = 0;
  fs::path file;
  fs::path lexicon;
};

struct TrainArgs {
  fs::path data;
  fs::path labels;
  fs::path out;
  FeatureArgs features;
  DoubleHConfig model;
  TrainOptions train;
  std::string ablation = "full";
  std::string aggregation = "sum";
  std::string loss = "mean";
  bool full_scale = false;
};

struct EvalArgs {
  fs::path data;
  fs::path labels;
  fs::path checkpoint;
  fs::path out;
  std::string split = "validation";
};

struct ReportArgs {
  std::vector<fs::path> runs;
  fs::path out;
  double floor = 0.75;
};

inline json feature_json(const FeatureArgs& f) {
  json j = {{"source", f.source}, {"dim", f.dim}, {"seed", f.seed}};
  if (!f.file.empty()) j["file"] = f.file.string();
  if (!f.lexicon.empty()) j["lexicon"] = f.lexicon.string();
  return j;
}

inline FeatureArgs feature_from_json(const json& j) {
  FeatureArgs f;
  f.source = j.at("source").get<std::string>();
  f.dim = j.at("dim").get<std::size_t>();
  f.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("file")) f.file = j["file"].get<std::string>();
  if (j.contains("lexicon")) f.lexicon = j["lexicon"].get<std::string>();
  return f;
}

/// Labeled users of `labels` that exist in the graph, with their 0/1 labels.
inline void labeled_users(const std::vector<LabelRecord>& labels, const DatasetGraph& dg, TrainingData& td) {
  for (const LabelRecord& l : labels) {
    const auto u = dg.index.find_user(l.user_id);
    if (!u) throw DataError("label for unknown user '" + l.user_id + "'");
    td.users.push_back(*u);
    td.labels.push_back(to_int(l.label));
  }
  if (td.users.size() < 2) throw DataError("need at least two labeled users");
}

inline Tensor node_features(const Dataset& data, const DatasetGraph& dg, const FeatureArgs& f) {
  if (f.source == "dataset") {
    if (data.features.empty()) throw DataError("dataset has no features.jsonl; choose --features hashed|random|file");
    return dataset_feature_matrix(data, dg);
  }
  FeatureProvider provider;
  provider.dim = f.dim;
  provider.seed = f.seed;
  if (f.source == "hashed") {
    provider.method = FeatureMethod::HashedBagOfWords;
  } else if (f.source == "random") {
    provider.method = FeatureMethod::SeededRandom;
  } else if (f.source == "file") {
    provider.method = FeatureMethod::ExternalFile;
    provider.external = read_features(f.file);
  } else {
    throw ConfigError("unknown feature source '" + f.source + "'");
  }
  std::optional<HashtagLexicon> lexicon;
  if (!f.lexicon.empty()) lexicon = read_lexicon(f.lexicon);
  return provider_feature_matrix(data, dg, provider, lexicon ? &*lexicon : nullptr);
}

inline std::vector<LabelRecord> load_labels(const fs::path& data, const fs::path& labels) {
  const fs::path path = labels.empty() ? DatasetPaths{data}.labels() : labels;
  if (!fs::exists(path)) throw DataError("no labels file at " + path.string());
  return read_labels(path);
}

inline void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

// --- commands ---------------------------------------------------------------

inline json gen_config(const GenArgs& a) { return {{"command", "gen"}, {"synthetic", a.params}}; }

inline int run_gen(const GenArgs& a) {
  const SyntheticData synth = generate_synthetic(a.params);
  write_dataset(synth.dataset, DatasetPaths{a.out});
  save_json(a.out / "lexicon.json", synth.lexicon.to_json());
  save_json(a.out / "manifest.json", {{"run_config", gen_config(a)},
                                      {"users", synth.dataset.users.size()},
                                      {"tweets", synth.dataset.tweets.size()}});
  log_line("gen: wrote " + std::to_string(synth.dataset.users.size()) + " users, " +
           std::to_string(synth.dataset.tweets.size()) + " tweets to " + a.out.string());
  return kOk;
}

inline int run_label(const LabelArgs& a) {
  const Dataset data = read_dataset(DatasetPaths{a.data});
  const fs::path lex_path = a.lexicon.empty() ? a.data / "lexicon.json" : a.lexicon;
  const HashtagLexicon lexicon = read_lexicon(lex_path);
  if (a.tie != "positive" && a.tie != "negative") throw ConfigError("--tie must be positive or negative");
  const auto labels =
      weak_label_dataset(data, lexicon, a.threshold, a.tie == "positive" ? TieRule::Positive : TieRule::Negative);
  fs::create_directories(a.out);
  write_labels(a.out / "labels.jsonl", labels);
  std::vector<double> ratios;
  std::size_t positive = 0;
  for (const auto& l : labels) {
    ratios.push_back(*l.ratio);
    positive += l.label == StanceLabel::Positive;
  }
  const auto counts = ratio_histogram(ratios, a.bins);
  std::vector<double> edges;
  for (std::size_t b = 0; b <= a.bins; ++b) edges.push_back(static_cast<double>(b) / static_cast<double>(a.bins));
  const json config = {{"command", "label"},
                       {"data", a.data.string()},
                       {"lexicon", lex_path.string()},
                       {"threshold", a.threshold},
                       {"tie", a.tie},
                       {"bins", a.bins}};
  save_json(a.out / "histogram.json", {{"run_config", config},
                                       {"edges", edges},
                                       {"counts", counts},
                                       {"users", data.users.size()},
                                       {"labeled_users", labels.size()},
                                       {"positive", positive},
                                       {"negative", labels.size() - positive}});
  log_line("label: " + std::to_string(labels.size()) + " of " + std::to_string(data.users.size()) + " users labeled");
  return kOk;
}

inline int run_build_graph(const GraphArgs& a) {
  const Dataset data = read_dataset(DatasetPaths{a.data});
  const DatasetGraph dg = build_dataset_graph(data);
  fs::create_directories(a.out);
  std::vector<json> rows;
  for (const auto& r : dg.interactions) rows.push_back(to_json(r));
  detail::write_lines(a.out / "interactions.jsonl", rows);
  const std::size_t posts = dg.graph.count_edges(EdgeKind::Post) / 2;
  const std::size_t retweets = dg.graph.count_edges(EdgeKind::Retweet) / 2;
  std::size_t isolated = 0;
  for (std::uint32_t u = 0; u < dg.graph.num_users(); ++u) isolated += dg.graph.degree(NodeRef::user(u)) == 0;
  save_json(a.out / "graph_stats.json",
            {{"run_config", {{"command", "build-graph"}, {"data", a.data.string()}}},
             {"users", dg.graph.num_users()},
             {"tweets", dg.graph.num_tweets()},
             {"nodes", dg.graph.num_nodes()},
             {"directed_edges", dg.graph.num_edges()},
             {"post_interactions", posts},
             {"retweet_interactions", retweets},
             {"retweet_ratio", posts == 0 ? 0.0 : static_cast<double>(retweets) / static_cast<double>(posts)},
             {"isolated_users", isolated}});
  log_line("build-graph: " + std::to_string(dg.graph.num_nodes()) + " nodes, " +
           std::to_string(dg.graph.num_edges()) + " directed edges");
  return kOk;
}

inline json train_config(const TrainArgs& a) {
  return {{"command", "train"},
          {"data", a.data.string()},
          {"labels", a.labels.string()},
          {"features", feature_json(a.features)},
          {"model", a.model},
          {"train", a.train}};
}

inline int run_train(TrainArgs a) {
  if (a.full_scale) {
    a.model.hidden = 768;
    a.train.batch_size = 1024;
  }
  a.model.ablation = parse_ablation(a.ablation);
  a.model.aggregation = parse_aggregation(a.aggregation);
  if (a.loss != "mean" && a.loss != "sum") throw ConfigError("--loss must be mean or sum");
  a.train.loss = a.loss == "sum" ? Reduction::Sum : Reduction::Mean;

  const Dataset data = read_dataset(DatasetPaths{a.data});
  const DatasetGraph dg = build_dataset_graph(data);
  TrainingData td;
  td.graph = &dg.graph;
  td.features = node_features(data, dg, a.features);
  a.model.feature_dim = td.features.cols();
  a.features.dim = td.features.cols();
  labeled_users(load_labels(a.data, a.labels), dg, td);
  a.model.validate();

  log_line("train: " + std::to_string(td.users.size()) + " labeled users, " + model_label(a.model));
  const TrainResult result = train_model(td, a.model, a.train);

  const json config = train_config(a);
  Checkpoint ck;
  ck.config = a.model;
  ck.options = a.train;
  ck.params = result.params;
  ck.epoch = result.report.best_epoch;
  ck.eval_seed = result.report.best_eval_seed;
  ck.validation = result.report.best;
  ck.run = config;
  fs::create_directories(a.out);
  save_json(a.out / "checkpoint.json", to_json(ck));
  json report = deterministic_json(result.report);
  report["run_config"] = config;
  save_json(a.out / "report.json", report);
  save_json(a.out / "timing.json", timing_json(result.report));
  std::ofstream(a.out / "metrics.csv", std::ios::binary | std::ios::trunc) << metrics_csv(result.report);
  log_line("train: best epoch " + std::to_string(result.report.best_epoch) + " val_acc " +
           std::to_string(result.report.best.accuracy) + " val_f1 " + std::to_string(result.report.best.f1_macro));
  return kOk;
}

inline int run_eval(const EvalArgs& a) {
  const Checkpoint ck = checkpoint_from_json(load_json(a.checkpoint));
  const Dataset data = read_dataset(DatasetPaths{a.data});
  const DatasetGraph dg = build_dataset_graph(data);
  TrainingData td;
  td.graph = &dg.graph;
  td.features = node_features(data, dg, feature_from_json(ck.run.at("features")));
  if (td.features.cols() != ck.config.feature_dim) throw DataError("feature dimension does not match checkpoint");
  labeled_users(load_labels(a.data, a.labels), dg, td);

  std::vector<std::size_t> which;
  if (a.split == "all") {
    which.resize(td.users.size());
    for (std::size_t i = 0; i < which.size(); ++i) which[i] = i;
  } else if (a.split == "validation" || a.split == "train") {
    const SplitMask mask = split_dataset(td.users.size(), ck.options.split_ratio, ck.options.split_seed);
    which = mask.indices(a.split == "train" ? Split::Train : Split::Validation);
  } else {
    throw ConfigError("--split must be validation, train or all");
  }
  const Metrics m = evaluate_users(td, ck.params, ck.config, which, ck.options.batch_size, ck.eval_seed);
  json out = {{"run_config",
               {{"command", "eval"}, {"data", a.data.string()}, {"labels", a.labels.string()},
                {"checkpoint", a.checkpoint.string()}, {"split", a.split}}},
              {"model", model_label(ck.config)},
              {"users", which.size()},
              {"eval_seed", ck.eval_seed},
              {"metrics", to_json(m)}};
  save_json(a.out, out);
  log_line("eval: accuracy " + std::to_string(m.accuracy) + " f1_macro " + std::to_string(m.f1_macro));
  return kOk;
}

inline int run_report(const ReportArgs& a, std::ostream& out) {
  std::vector<TrainReport> reports;
  for (const fs::path& p : a.runs) {
    // A run directory or its report.json; timing.json sits next to it.
    const fs::path file = fs::is_directory(p) ? p / "report.json" : p;
    TrainReport r = report_from_json(load_json(file));
    const fs::path timing = file.parent_path() / "timing.json";
    if (fs::exists(timing)) apply_timing(r, load_json(timing));
    reports.push_back(std::move(r));
  }
  const EfficiencyTable table = efficiency_report(reports, a.floor);
  json j = table.to_json();
  std::vector<std::string> runs;
  for (const auto& p : a.runs) runs.push_back(p.string());
  j["run_config"] = {{"command", "report"}, {"runs", runs}, {"floor", a.floor}};
  if (!a.out.empty()) save_json(a.out, j);
  out << table.to_text();
  return kOk;
}

// --- dispatch ---------------------------------------------------------------

inline void error_line(std::ostream& err, const char* kind, const std::string& message) {
  err << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"DoubleH stance detection pipeline"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic planted-community dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.params.seed, "Generator seed");
  gen_cmd->add_option("--users-per-community", gen.params.users_per_community);
  gen_cmd->add_option("--tweets-per-user", gen.params.tweets_per_user);
  gen_cmd->add_option("--retweets-per-user", gen.params.retweets_per_user);
  gen_cmd->add_option("--p-in", gen.params.p_in, "Within-community retweet probability");
  gen_cmd->add_option("--mu", gen.params.mu, "Tweet feature signal strength");
  gen_cmd->add_option("--noise", gen.params.noise, "Tweet feature noise");
  gen_cmd->add_option("--user-mu", gen.params.user_mu, "User feature signal strength");
  gen_cmd->add_option("--user-noise", gen.params.user_noise, "User feature noise");
  gen_cmd->add_option("--dim", gen.params.feature_dim, "Feature dimension");
  gen_cmd->add_option("--hashtag-rate", gen.params.hashtag_rate);

  LabelArgs label;
  auto* label_cmd = app.add_subcommand("label", "Weakly label users from hashtags");
  label_cmd->add_option("--data", label.data, "Dataset directory")->required();
  label_cmd->add_option("--lexicon", label.lexicon, "Lexicon JSON (default <data>/lexicon.json)");
  label_cmd->add_option("--out", label.out, "Output directory")->required();
  label_cmd->add_option("--threshold", label.threshold, "User label threshold k_u");
  label_cmd->add_option("--tie", label.tie, "Label at f_u == threshold: positive|negative");
  label_cmd->add_option("--bins", label.bins, "Histogram bins");

  GraphArgs graph;
  auto* graph_cmd = app.add_subcommand("build-graph", "Build the user-tweet graph and report statistics");
  graph_cmd->add_option("--data", graph.data, "Dataset directory")->required();
  graph_cmd->add_option("--out", graph.out, "Output directory")->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a DoubleH model");
  train_cmd->add_option("--data", train.data, "Dataset directory")->required();
  train_cmd->add_option("--labels", train.labels, "Labels JSONL (default <data>/labels.jsonl)");
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--features", train.features.source, "dataset|hashed|random|file");
  train_cmd->add_option("--features-file", train.features.file);
  train_cmd->add_option("--feature-dim", train.features.dim);
  train_cmd->add_option("--feature-seed", train.features.seed);
  train_cmd->add_option("--lexicon", train.features.lexicon, "Lexicon whose hashtags are removed from tweet text");
  train_cmd->add_option("--layers", train.model.layers)->check(CLI::Range(1, 3));
  train_cmd->add_option("--hidden", train.model.hidden);
  train_cmd->add_option("--dropout", train.model.dropout);
  train_cmd->add_option("--n1", train.model.one_hop_size);
  train_cmd->add_option("--n2", train.model.two_hop_size);
  train_cmd->add_option("--agg", train.aggregation, "sum|mean|max");
  train_cmd->add_option("--ablation", train.ablation, "full|hetero-only|homo-only");
  train_cmd->add_option("--lr", train.train.lr);
  train_cmd->add_option("--batch", train.train.batch_size);
  train_cmd->add_option("--epochs", train.train.epochs);
  train_cmd->add_option("--patience", train.train.patience);
  train_cmd->add_option("--split", train.train.split_ratio, "Training fraction of labeled users");
  train_cmd->add_option("--loss", train.loss, "mean|sum");
  train_cmd->add_option("--split-seed", train.train.split_seed);
  train_cmd->add_option("--init-seed", train.train.init_seed);
  train_cmd->add_option("--sampler-seed", train.train.sampler_seed);
  train_cmd->add_flag("--full-scale", train.full_scale, "Hidden size 768 and batch 1024");
  train_cmd->add_flag("--verbose", train.train.verbose, "Log every epoch");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--data", eval.data, "Dataset directory")->required();
  eval_cmd->add_option("--labels", eval.labels, "Labels JSONL (default <data>/labels.jsonl)");
  eval_cmd->add_option("--checkpoint", eval.checkpoint)->required();
  eval_cmd->add_option("--out", eval.out, "Metrics JSON path")->required();
  eval_cmd->add_option("--split", eval.split, "validation|train|all");

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Efficiency table over training reports");
  report_cmd->add_option("--runs", report.runs, "Run directories or report.json files")->required();
  report_cmd->add_option("--floor", report.floor, "F1 floor");
  report_cmd->add_option("--out", report.out, "Table JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    error_line(err, "config", e.what());
    return kConfigError;
  }

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*label_cmd) return run_label(label);
    if (*graph_cmd) return run_build_graph(graph);
    if (*train_cmd) return run_train(train);
    if (*eval_cmd) return run_eval(eval);
    if (*report_cmd) return run_report(report, out);
  } catch (const NumericError& e) {
    error_line(err, "numeric", e.what());
    return kNumericError;
  } catch (const ConfigError& e) {
    error_line(err, "config", e.what());
    return kConfigError;
  } catch (const DataError& e) {
    error_line(err, "data", e.what());
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    error_line(err, "data", e.what());
    return kDataError;
  }
  return kConfigError;
}

}  // namespace doubleh::cli
