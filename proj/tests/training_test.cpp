// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

namespace doubleh {
namespace {

SyntheticParams small_world(std::uint64_t seed = 7) {
  SyntheticParams p;
  p.users_per_community = 30;
  p.tweets_per_user = 3;
  p.retweets_per_user = 3;
  p.feature_dim = 6;
  p.seed = seed;
  return p;
}

DoubleHConfig small_model(std::size_t layers = 2) {
  DoubleHConfig c;
  c.layers = layers;
  c.hidden = 8;
  c.feature_dim = 6;
  c.one_hop_size = 4;
  c.two_hop_size = 3;
  return c;
}

TrainOptions quick(std::size_t epochs) {
  TrainOptions o;
  o.epochs = epochs;
  o.batch_size = 16;
  o.lr = 0.01;
  return o;
}

nlohmann::json without_timing(const TrainReport& r) {
  nlohmann::json j = to_json(r);
  j.erase("train_seconds");
  for (auto& e : j["epochs"]) e.erase("seconds");
  return j;
}

TEST(Split, Examples) {
  const SplitMask a = split_dataset(10, 0.9, 3);
  EXPECT_EQ(a.indices(Split::Train).size(), 9u);
  EXPECT_EQ(a.indices(Split::Validation).size(), 1u);
  EXPECT_EQ(a, split_dataset(10, 0.9, 3));
  const SplitMask b = split_dataset(4, 0.5, 1);
  EXPECT_EQ(b.indices(Split::Train).size(), 2u);
  EXPECT_EQ(b.indices(Split::Validation).size(), 2u);
  EXPECT_THROW(split_dataset(1, 0.5, 1), ConfigError);
  EXPECT_THROW(split_dataset(10, 1.0, 1), ConfigError);
}

TEST(Split, PartitionWithinOneUserOfRatio) {
  for (std::size_t n = 2; n < 200; n += 7) {
    const SplitMask m = split_dataset(n, 0.9, n);
    const auto tr = m.indices(Split::Train), va = m.indices(Split::Validation);
    EXPECT_EQ(tr.size() + va.size(), n);
    EXPECT_LE(std::abs(static_cast<double>(tr.size()) - 0.9 * static_cast<double>(n)), 1.0);
    EXPECT_GE(va.size(), 1u);
  }
}

TEST(Metrics, Examples) {
  const double perfect[] = {0.9, 0.8, 0.2, 0.1};
  const int gold[] = {1, 1, 0, 0};
  const Metrics m = evaluate_metrics(perfect, gold);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(*m.auc, 1.0);
  EXPECT_EQ(m.f1_positive, 1.0);
  EXPECT_EQ(m.f1_macro, 1.0);
  const double inverted[] = {0.1, 0.2, 0.8, 0.9};
  EXPECT_EQ(*evaluate_metrics(inverted, gold).auc, 0.0);
  const double s3[] = {0.9, 0.4, 0.6};
  const int g3[] = {1, 0, 1};
  const Metrics k = evaluate_metrics(s3, g3);
  EXPECT_EQ(k.accuracy, 1.0);
  EXPECT_EQ(*k.auc, 1.0);
  EXPECT_EQ(k.f1_positive, 1.0);
  const int one_class[] = {1, 1, 1};
  const Metrics single = evaluate_metrics(s3, one_class);
  EXPECT_FALSE(single.auc.has_value());
  EXPECT_EQ(single.f1_positive, 0.8);
}

TEST(Metrics, MatchesBruteForce) {
  std::mt19937_64 gen(5);
  const double levels[] = {0.1, 0.3, 0.5, 0.5, 0.7, 0.9};
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + gen() % 12;
    std::vector<double> s(n);
    std::vector<int> g(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = levels[gen() % 6];
      g[i] = static_cast<int>(gen() % 2);
    }
    int tp = 0, tn = 0, fp = 0, fn = 0;
    double pairs = 0.0, wins = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool p = s[i] >= 0.5;
      tp += p && g[i] == 1;
      fp += p && g[i] == 0;
      fn += !p && g[i] == 1;
      tn += !p && g[i] == 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (g[i] != 1 || g[j] != 0) continue;
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
    }
    auto f1 = [](int t, int a, int b) { return 2 * t + a + b == 0 ? 0.0 : 2.0 * t / (2.0 * t + a + b); };
    const Metrics m = evaluate_metrics(s, g);
    EXPECT_EQ(m.accuracy, static_cast<double>(tp + tn) / static_cast<double>(n));
    EXPECT_EQ(m.f1_positive, f1(tp, fp, fn));
    EXPECT_EQ(m.f1_macro, 0.5 * (f1(tp, fp, fn) + f1(tn, fn, fp)));
    if (pairs == 0.0) {
      EXPECT_FALSE(m.auc.has_value());
    } else {
      ASSERT_TRUE(m.auc.has_value());
      EXPECT_DOUBLE_EQ(*m.auc, wins / pairs);
    }
  }
}

TEST(Train, DeterministicAcrossRuns) {
  const auto fx = testing::make_fixture(small_world());
  const TrainResult a = train_model(fx->data, small_model(), quick(2));
  const TrainResult b = train_model(fx->data, small_model(), quick(2));
  EXPECT_EQ(without_timing(a.report), without_timing(b.report));
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.split, b.split);
  ASSERT_EQ(a.report.epochs.size(), 2u);
}

TEST(Train, ZeroLearningRateKeepsInitialParameters) {
  const auto fx = testing::make_fixture(small_world());
  TrainOptions o = quick(3);
  o.lr = 0.0;
  const TrainResult r = train_model(fx->data, small_model(), o);
  EXPECT_EQ(r.params, ModelParams::initialize(small_model(), o.init_seed));
}

TEST(Train, LossDecreasesEarly) {
  int monotone = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SyntheticParams sp;
    sp.seed = seed;
    const auto fx = testing::make_fixture(sp);
    TrainOptions o;
    o.epochs = 5;
    o.patience = 0;
    o.sampler_seed = seed;
    o.init_seed = seed + 100;
    DoubleHConfig c;
    c.hidden = 16;
    c.one_hop_size = 5;
    c.two_hop_size = 3;
    const TrainResult r = train_model(fx->data, c, o);
    bool ok = true;
    for (std::size_t e = 1; e < r.report.epochs.size(); ++e)
      ok = ok && r.report.epochs[e].loss <= r.report.epochs[e - 1].loss;
    monotone += ok;
  }
  EXPECT_GE(monotone, 19);
}

TEST(Train, CheckpointReproducesValidation) {
  const auto fx = testing::make_fixture(small_world());
  const TrainResult r = train_model(fx->data, small_model(), quick(3));
  Checkpoint ck{small_model(), quick(3), r.params, r.report.best_epoch, r.report.best_eval_seed, r.report.best, {}};
  testing::TempDir dir("ckpt");
  save_json(dir.path / "ck.json", to_json(ck));
  const Checkpoint back = checkpoint_from_json(load_json(dir.path / "ck.json"));
  EXPECT_EQ(back.params, r.params);
  EXPECT_EQ(back.validation, r.report.best);
  const Metrics again = evaluate_users(fx->data, back.params, back.config, r.split.indices(Split::Validation),
                                       back.options.batch_size, back.eval_seed);
  EXPECT_EQ(again, r.report.best);
  EXPECT_THROW(checkpoint_from_json(nlohmann::json{{"format", "other"}}), DataError);
}

TEST(Report, JsonAndCsv) {
  const auto fx = testing::make_fixture(small_world());
  const TrainResult r = train_model(fx->data, small_model(), quick(2));
  const TrainReport back = report_from_json(to_json(r.report));
  EXPECT_EQ(to_json(back), to_json(r.report));
  const std::string csv = metrics_csv(r.report);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "config_hash,epoch,loss,acc,auc,f1_pos,f1_macro,seconds");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_NE(config_hash(small_model(1), quick(2)), config_hash(small_model(2), quick(2)));
}

TEST(Efficiency, TableAndFloor) {
  TrainReport one;
  one.config = small_model(1);
  one.best.f1_macro = 0.8;
  one.train_seconds = 1.0;
  const TrainReport single[] = {one};
  const EfficiencyTable t1 = efficiency_report(single);
  ASSERT_EQ(t1.rows.size(), 1u);
  EXPECT_EQ(t1.rows[0].model, "DoubleH-K1-full");

  TrainReport three = one, two = one;
  three.config = small_model(3);
  three.best.f1_macro = 0.7;
  two.config = small_model(2);
  const TrainReport runs[] = {three, one, two};
  const EfficiencyTable t = efficiency_report(runs, 0.75);
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.rows[0].layers, 1u);
  EXPECT_EQ(t.rows[2].layers, 3u);
  EXPECT_TRUE(t.rows[2].below_floor);
  EXPECT_EQ(t.eligible().size(), 2u);
  EXPECT_THROW(efficiency_report({}), ConfigError);
}

TEST(Baseline, RunsOnFixture) {
  const auto fx = testing::make_fixture(small_world());
  const Metrics m = train_feature_baseline(fx->data, quick(5));
  EXPECT_GE(m.accuracy, 0.0);
  EXPECT_LE(m.accuracy, 1.0);
}

}  // namespace
}  // namespace doubleh
