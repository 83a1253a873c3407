#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

namespace {

namespace fs = std::filesystem;

struct Run {
  int code = -1;
  std::string output;  // stdout and stderr interleaved
};

Run pabee(const std::string& args) {
  const std::string cmd = std::string(PABEE_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed");
  Run r;
  char buf[4096];
  std::size_t got = 0;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("pabee_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

TEST(Cli, HelpListsSubcommandsAndConfigKeys) {
  auto r = pabee("--help");
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"train", "eval", "sweep", "compare", "simulate", "bound", "lowerbound"}) {
    EXPECT_NE(r.output.find(sub), std::string::npos) << sub;
  }
  r = pabee("train --help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("(config: optimizer.learning_rate)"), std::string::npos);
}

TEST(Cli, MissingSubcommandIsAUsageError) { EXPECT_EQ(pabee("").code, 1); }

TEST(Cli, BoundReportsEveryForm) {
  auto r = pabee("bound --n 12 --t 4 --p 0.1 --q 0.2");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("theorem"), std::string::npos);
  EXPECT_NE(r.output.find("rhs=19.4312"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("holds=true"), std::string::npos);
  r = pabee("bound --n 12 --t 3 --p 0.1 --q 0.2");
  EXPECT_NE(r.output.find("lhs=9 rhs=7.7125 holds=false"), std::string::npos) << r.output;
  r = pabee("bound --n 12 --t 1 --p 0.9 --q 0.2");
  EXPECT_NE(r.output.find("disagree"), std::string::npos) << r.output;
}

TEST(Cli, BoundRejectsZeroQ) {
  const auto r = pabee("bound --q 0");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("q must be non-zero"), std::string::npos);
}

TEST(Cli, UnknownConfigKeyIsNamed) {
  const auto dir = scratch("badkey");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.cfg") << "optimizer.epochs = 2\nmodel.depth = 3\n";
  const auto r = pabee("train -c " + (dir / "bad.cfg").string() + " -o " + (dir / "out").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("model.depth"), std::string::npos) << r.output;
  EXPECT_EQ(pabee("train --set optimizer.lr=0.1").code, 1);
  fs::remove_all(dir);
}

TEST(Cli, MissingConfigFileIsAnIoError) {
  EXPECT_EQ(pabee("train -c /nonexistent/x.cfg").code, 3);
}

TEST(Cli, SimulateValidatesArguments) {
  EXPECT_EQ(pabee("simulate --trials 0").code, 1);
  EXPECT_EQ(pabee("simulate --q 1.5").code, 1);
  EXPECT_EQ(pabee("simulate --t 5:2").code, 1);
  EXPECT_EQ(pabee("simulate --t x").code, 1);
}

TEST(Cli, SimulateIsDeterministic) {
  const auto a = pabee("simulate --t 1:11 --q 0.2 --trials 3000 --seed 9");
  const auto b = pabee("simulate --t 1:11 --q 0.2 --trials 3000 --seed 9 --workers 3");
  EXPECT_EQ(a.code, 0);
  EXPECT_EQ(a.output, b.output);
  EXPECT_EQ(count_lines(a.output), 12u);
  EXPECT_EQ(a.output.rfind("n,t,q,p,trials,seed,acc_pabee,acc_conventional,stop_fraction\n", 0), 0u);
}

TEST(Cli, SimulateAccuracyGridShape) {
  const auto r = pabee("simulate --acc-grid 0.5:1.0:0.01 --t 1:11 --trials 200");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(count_lines(r.output), 1u + 51u * 11u);
}

TEST(Cli, LowerboundWritesCsv) {
  const auto dir = scratch("lb");
  const auto out = dir / "lb.csv";
  const auto r = pabee("lowerbound --t 2:3 --targets 0.5:0.8:0.1 --trials 2000 -o " + out.string());
  EXPECT_EQ(r.code, 0) << r.output;
  const auto text = slurp(out);
  EXPECT_EQ(count_lines(text), 1u + 4u * 2u);
  EXPECT_NE(text.find("0.50,2,0.500000"), std::string::npos) << text;
  fs::remove_all(dir);
}

TEST(Cli, TrainWritesOneCheckpointPerSeed) {
  const auto dir = scratch("seeds");
  const auto r = pabee("train --seeds 0,1,2,3,4 --optimizer.epochs 2 --dataset.num_train 80 --dataset.num_eval 20 "
                       "--model.num_layers 4 --model.hidden_dim 6 -o " + dir.string());
  EXPECT_EQ(r.code, 0) << r.output;
  for (int s = 0; s < 5; ++s) {
    EXPECT_TRUE(fs::exists(dir / ("model_seed" + std::to_string(s) + ".ckpt"))) << s;
    EXPECT_TRUE(fs::exists(dir / ("history_seed" + std::to_string(s) + ".csv"))) << s;
  }
  EXPECT_TRUE(fs::exists(dir / "manifest.csv"));
  fs::remove_all(dir);
}

TEST(Cli, EvalFromCheckpointMatchesTrainingRun) {
  const auto dir = scratch("eval");
  const std::string common =
      "--optimizer.epochs 2 --dataset.num_train 80 --dataset.num_eval 40 --model.num_layers 4 "
      "--model.hidden_dim 6 --set policy[0].kind=patience --set policy[0].t=2 ";
  auto r = pabee("eval " + common + "-o " + (dir / "a").string());
  ASSERT_EQ(r.code, 0) << r.output;
  r = pabee("eval " + common + "--checkpoint " + (dir / "a" / "model_seed{seed}.ckpt").string() + " -o " +
            (dir / "b").string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(slurp(dir / "a" / "eval_seed0.csv"), slurp(dir / "b" / "eval_seed0.csv"));
  EXPECT_NE(slurp(dir / "a" / "eval_seed0.csv").find("patience(t=2)"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, UnsupportedPolicyForRegressionIsRejected) {
  const auto r = pabee("eval --dataset.kind regression_wave --policy.kind entropy --policy.threshold 0.2");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("policy.kind"), std::string::npos) << r.output;
}

TEST(Cli, UnwritableOutputIsAnIoError) {
  const auto blocker = scratch("blocker");
  std::ofstream(blocker) << "x";
  EXPECT_EQ(pabee("simulate --trials 10 -o " + (blocker / "x.csv").string()).code, 3);
  EXPECT_EQ(pabee("train --optimizer.epochs 1 --dataset.num_train 10 -o " + (blocker / "run").string()).code, 3);
  fs::remove(blocker);
}

}  // namespace
