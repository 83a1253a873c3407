#include <cmath>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "pabee/bench.hpp"

namespace pabee {
namespace {

namespace fs = std::filesystem;

std::set<std::string> row_keys(const LabeledDataset& d) {
  std::set<std::string> keys;
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::string k;
    for (double v : d.inputs.row(i)) k += fmt::format("{:a},", v);
    keys.insert(k);
  }
  return keys;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("pabee_bench_" + name);
  fs::remove_all(dir);
  return dir;
}

TEST(Dataset, DeterministicGivenSeed) {
  for (auto kind : {DatasetKind::gaussian_blobs, DatasetKind::two_spirals, DatasetKind::regression_wave}) {
    DatasetSpec s;
    s.kind = kind;
    s.num_train = 120;
    s.num_eval = 80;
    const auto a = gen_synthetic(s);
    const auto b = gen_synthetic(s);
    EXPECT_EQ(a.train.inputs, b.train.inputs);
    EXPECT_EQ(a.eval.inputs, b.eval.inputs);
    EXPECT_EQ(a.train.labels, b.train.labels);
    EXPECT_EQ(a.train.values, b.train.values);
    s.seed = 1;
    EXPECT_NE(gen_synthetic(s).train.inputs, a.train.inputs);
  }
}

TEST(Dataset, SplitsAreDisjoint) {
  DatasetSpec s;
  s.kind = DatasetKind::two_spirals;
  s.num_train = 500;
  s.num_eval = 500;
  const auto d = gen_synthetic(s);
  const auto train = row_keys(d.train);
  const auto eval = row_keys(d.eval);
  EXPECT_EQ(train.size(), 500u);
  for (const auto& k : eval) EXPECT_EQ(train.count(k), 0u);
}

TEST(Dataset, ClassesBalancedWithinOne) {
  DatasetSpec s;
  s.num_classes = 3;
  s.num_train = 100;
  s.num_eval = 7;
  const auto d = gen_synthetic(s);
  std::vector<std::size_t> counts(3, 0);
  for (auto l : d.train.labels) ++counts[l];
  EXPECT_LE(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()), 1u);
  EXPECT_EQ(d.eval.labels.size(), 7u);
}

TEST(Dataset, RegressionTargetsStandardizedOnTrain) {
  DatasetSpec s;
  s.kind = DatasetKind::regression_wave;
  s.num_train = 400;
  const auto d = gen_synthetic(s);
  double mean = 0.0, sq = 0.0;
  for (double v : d.train.values) mean += v;
  mean /= 400.0;
  for (double v : d.train.values) sq += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(sq / 400.0, 1.0, 1e-12);
  EXPECT_EQ(d.train.task, Task::regression);
}

TEST(Dataset, WellSeparatedBlobsAreLinearlySeparable) {
  DatasetSpec s;
  s.separation = 10.0;
  s.noise = 0.1;
  s.num_train = 200;
  s.num_eval = 200;
  const auto d = gen_synthetic(s);
  // Nearest-centroid probe fit on train, scored on eval.
  std::vector<std::vector<double>> centroid(2, std::vector<double>(2, 0.0));
  std::vector<double> count(2, 0.0);
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    const auto l = d.train.labels[i];
    count[l] += 1.0;
    for (int j = 0; j < 2; ++j) centroid[l][j] += d.train.inputs(i, j);
  }
  for (int l = 0; l < 2; ++l) {
    for (int j = 0; j < 2; ++j) centroid[l][j] /= count[l];
  }
  std::size_t right = 0;
  for (std::size_t i = 0; i < d.eval.size(); ++i) {
    double dist[2];
    for (int l = 0; l < 2; ++l) {
      dist[l] = std::hypot(d.eval.inputs(i, 0) - centroid[l][0], d.eval.inputs(i, 1) - centroid[l][1]);
    }
    right += (dist[1] < dist[0] ? 1u : 0u) == d.eval.labels[i];
  }
  EXPECT_GE(static_cast<double>(right) / 200.0, 0.99);
}

TEST(Dataset, RejectsEmptySplits) {
  DatasetSpec s;
  s.num_eval = 0;
  EXPECT_THROW(gen_synthetic(s), ArgumentError);
  s = DatasetSpec{};
  s.num_train = 0;
  EXPECT_THROW(gen_synthetic(s), ArgumentError);
  s = DatasetSpec{};
  s.kind = DatasetKind::two_spirals;
  s.input_dim = 1;
  EXPECT_THROW(gen_synthetic(s), ArgumentError);
}

TEST(Config, ParsesKeysAndPolicies) {
  std::istringstream is(R"(# comment
dataset.kind = two_spirals
dataset.turns = 1.0
model.num_layers = 6
optimizer.epochs = 3
policy[0].kind = never
policy[1].kind = patience
policy[1].t = 2
policy[2].kind = entropy
policy[2].threshold = 0.3
run.seeds = 1,2,3
sweep.patience = 1:4
)");
  ConfigBuilder b;
  b.parse(is);
  const auto c = b.build();
  EXPECT_EQ(c.dataset.kind, DatasetKind::two_spirals);
  EXPECT_EQ(c.dataset.turns, 1.0);
  EXPECT_EQ(c.model.num_layers, 6u);
  ASSERT_EQ(c.policies.size(), 3u);
  EXPECT_EQ(c.policies[1], PolicyConfig::patience(2));
  EXPECT_EQ(c.policies[2], PolicyConfig::entropy(0.3));
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(c.sweep.patience_values(6), (std::vector<std::size_t>{1, 2, 3, 4}));
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, UnknownKeyNamesTheKey) {
  ConfigBuilder b;
  try {
    b.set("optimizer.lr", "0.1");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.key(), "optimizer.lr");
  }
}

TEST(Config, BadValuesNameTheKey) {
  ConfigBuilder b;
  try {
    b.set("optimizer.epochs", "many");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.key(), "optimizer.epochs");
  }
  EXPECT_THROW(b.set("model.nonlinearity", "sigmoid"), ValidationError);
  std::istringstream is("no equals sign here\n");
  EXPECT_THROW(b.parse(is), ValidationError);
}

TEST(Config, ValidationCatchesInconsistencies) {
  ExperimentConfig c;
  c.policies.clear();
  EXPECT_THROW(c.validate(), ValidationError);
  c = ExperimentConfig{};
  c.seeds.clear();
  EXPECT_THROW(c.validate(), ValidationError);
  c = ExperimentConfig{};
  c.sweep.t_max = 12;
  EXPECT_THROW(c.validate(), ValidationError);
  c = ExperimentConfig{};
  c.model.num_layers = 4;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.sweep.patience_values(4), (std::vector<std::size_t>{1, 2, 3}));
  c = ExperimentConfig{};
  c.dataset.kind = DatasetKind::regression_wave;
  c.policies = {PolicyConfig::entropy(0.2)};
  EXPECT_THROW(c.validate(), ValidationError);
  c = ExperimentConfig{};
  c.seeds = {1, 2};
  c.checkpoint = "m.ckpt";
  EXPECT_THROW(c.validate(), ValidationError);
  ConfigBuilder b;
  b.set("policy[1].kind", "never");
  EXPECT_THROW(b.build(), ValidationError);
}

TEST(Config, TextRoundTrip) {
  ConfigBuilder b;
  b.set("dataset.noise", "0.15");
  b.set("policy[0].kind", "maxprob");
  b.set("policy[0].threshold", "0.9");
  b.set("sweep.entropy_grid", "0.1,0.2");
  const auto text = to_config_text(b.build());
  std::istringstream is(text);
  ConfigBuilder again;
  again.parse(is);
  EXPECT_EQ(to_config_text(again.build()), text);
}

TEST(Median, OddAndEven) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_THROW(median({}), ArgumentError);
}

TEST(Sha256, KnownDigests) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

ExperimentConfig tiny_experiment(const fs::path& out) {
  ExperimentConfig c;
  c.dataset.num_train = 120;
  c.dataset.num_eval = 60;
  c.model.num_layers = 4;
  c.model.hidden_dim = 6;
  c.optimizer.epochs = 3;
  c.policies = {PolicyConfig::never(), PolicyConfig::patience(2)};

  c.sweep.entropy_grid = {0.1, 0.5};
  c.sweep.maxprob_grid = {0.9};
  c.seeds = {0, 1, 2};
  c.workers = 1;
  c.output_dir = out.string();
  return c;
}

TEST(Experiment, RerunsAreByteIdentical) {
  const auto a_dir = scratch("a");
  const auto b_dir = scratch("b");
  const ExperimentModes all{true, true, true};
  const auto a = run_experiment(tiny_experiment(a_dir), all);
  auto cfg_b = tiny_experiment(b_dir);
  cfg_b.workers = 3;
  const auto b = run_experiment(cfg_b, all);
  ASSERT_EQ(a.files, b.files);
  EXPECT_EQ(a.files.back(), "manifest.csv");
  for (const auto& f : a.files) EXPECT_EQ(read_file(a_dir / f), read_file(b_dir / f)) << f;
  EXPECT_EQ(a.seeds.size(), 3u);
  EXPECT_EQ(a.median_sweep.size(), 3u);
  fs::remove_all(a_dir);
  fs::remove_all(b_dir);
}

TEST(Experiment, CheckpointReloadGivesSameEvaluation) {
  const auto dir = scratch("ckpt");
  const ExperimentModes eval_only{true, false, false};
  auto cfg = tiny_experiment(dir / "train");
  const auto trained = run_experiment(cfg, eval_only);
  cfg.output_dir = (dir / "reload").string();
  cfg.checkpoint = (dir / "train" / "model_seed{seed}.ckpt").string();
  const auto reloaded = run_experiment(cfg, eval_only);
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto name = fmt::format("eval_seed{}.csv", s);
    EXPECT_EQ(read_file(dir / "train" / name), read_file(dir / "reload" / name));
  }
  fs::remove_all(dir);
}

TEST(Experiment, UnwritableOutputThrows) {
  const auto blocker = fs::temp_directory_path() / "pabee_bench_blocker";
  fs::remove_all(blocker);
  { std::ofstream(blocker) << "x"; }
  auto cfg = tiny_experiment(blocker / "sub");
  cfg.seeds = {0};
  EXPECT_THROW(run_experiment(cfg, ExperimentModes{true, false, false}), IoError);
  fs::remove(blocker);
}

TEST(Experiment, DivergenceNamesSeedAndConfig) {
  auto cfg = tiny_experiment(scratch("diverge"));
  cfg.dataset.kind = DatasetKind::regression_wave;
  cfg.model.nonlinearity = Nonlinearity::relu;
  cfg.optimizer.learning_rate = 1e6;
  cfg.optimizer.epochs = 20;
  cfg.seeds = {4};
  cfg.policies = {PolicyConfig::never()};
  try {
    run_experiment(cfg, ExperimentModes{});
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("seed 4"), std::string::npos) << what;
    EXPECT_NE(what.find("optimizer.learning_rate"), std::string::npos) << what;
  }
  fs::remove_all(cfg.output_dir);
}

class CompareTest : public ::testing::Test {
 protected:
  void SetUp() override {
    DatasetSpec s;
    s.num_train = 100;
    s.num_eval = 100;
    data_ = gen_synthetic(s);
    StackConfig c;
    c.num_layers = 6;
    c.hidden_dim = 8;
    OptimizerConfig o;
    o.epochs = 5;
    params_ = train(init_params(c), data_.train, o).params;
  }
  DatasetSplit data_;
  ModelParams params_;
};

TEST_F(CompareTest, ExtremeThresholds) {
  const auto rows = compare_criteria(params_, data_.eval, {1, 5}, {std::log(2.0) + 1e-9}, {1.0});
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0].policy, "never");
  EXPECT_EQ(rows[0].speedup, 1.0);
  EXPECT_EQ(rows[3].policy, "entropy");
  EXPECT_DOUBLE_EQ(rows[3].speedup, 6.0);
  EXPECT_EQ(rows[4].policy, "maxprob");
  EXPECT_EQ(rows[4].speedup, 1.0);
  EXPECT_EQ(rows[4].accuracy_or_mse, rows[0].accuracy_or_mse);
}

TEST_F(CompareTest, SweepMatchesDirectEvaluation) {
  const auto rows = sweep_patience(params_, data_.eval, {3, 1, 2});
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].t, 1u);
  const auto direct = evaluate(params_, PolicyConfig::patience(2), data_.eval);
  EXPECT_EQ(rows[1].report.accuracy_or_mse, direct.accuracy_or_mse);
  EXPECT_EQ(rows[1].report.exit_histogram, direct.exit_histogram);
  EXPECT_THROW(sweep_patience(params_, data_.eval, {6}), ArgumentError);
}

TEST_F(CompareTest, SpeedupNonIncreasingInPatience) {
  const auto rows = sweep_patience(params_, data_.eval, {1, 2, 3, 4, 5});
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_LE(rows[i].report.speedup, rows[i - 1].report.speedup);
  }
}

}  // namespace
}  // namespace pabee
