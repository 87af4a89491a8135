#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tuap/attack.hpp"
#include "tuap/data.hpp"
#include "tuap/nn.hpp"
#include "tuap/perturbation_io.hpp"

#ifndef UAP_BINARY
#error "UAP_BINARY must name the uap executable"
#endif

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
};

fs::path work_dir() {
  static const fs::path dir = [] {
    auto d = fs::path(::testing::TempDir()) / ("uap_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Run uap(const std::string& args) {
  const auto log = work_dir() / "stdout.txt";
  const std::string cmd = "cd '" + work_dir().string() + "' && '" UAP_BINARY "' " + args + " >'" + log.string() +
                          "' 2>'" + (work_dir() / "stderr.txt").string() + "'";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(work_dir() / p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

// Value printed on a "key value" line of a command's stdout.
double stdout_value(const std::string& out, const std::string& key) {
  std::istringstream in(out);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + " ", 0) == 0) return std::stod(line.substr(key.size() + 1));
  ADD_FAILURE() << "no '" << key << "' in output:\n" << out;
  return -1;
}

class Cli : public ::testing::Test {
 protected:
  // The desk model: default synthetic data, preset MLP, one epoch.
  static void SetUpTestSuite() { ASSERT_EQ(uap("train --data synth --seed 7 --out desk.uapm").code, 0); }
};

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(uap("train --data synth").code, 2);
  EXPECT_EQ(uap("train --preset resnet --out x.uapm").code, 2);
  EXPECT_EQ(uap("").code, 2);
  EXPECT_EQ(uap("gen-uap --model desk.uapm --target 0 --xi 1 --zeta 5 --out x.uapp").code, 2);
  EXPECT_EQ(uap("gen-uap --model desk.uapm --target 0 --out x.uapp").code, 2);
  EXPECT_EQ(uap("gen-uap --model desk.uapm --target 0 --zeta 5 --p inf --out x.uapp").code, 2);
  EXPECT_EQ(uap("sweep --model desk.uapm --zeta-grid 5,2 --out x.csv").code, 2);
}

TEST_F(Cli, RuntimeErrorsExitOne) {
  EXPECT_EQ(uap("train --data missing.uapd --out x.uapm").code, 1);
  EXPECT_EQ(uap("gen-uap --model missing.uapm --target 0 --zeta 5 --out x.uapp").code, 1);
  EXPECT_EQ(uap("gen-uap --model desk.uapm --target 10 --zeta 5 --out x.uapp").code, 1);
  EXPECT_EQ(uap("train --data cifar10 --data-dir /nonexistent --out x.uapm").code, 1);
  EXPECT_FALSE(fs::exists(work_dir() / "x.uapm"));
}

TEST_F(Cli, TrainReachesHeldOutAccuracyAndIsDeterministic) {
  auto r = uap("train --data synth --seed 7 --preset mlp --epochs 30 --out m30.uapm");
  ASSERT_EQ(r.code, 0);
  EXPECT_GE(stdout_value(r.out, "heldout_accuracy"), 0.9);
  ASSERT_EQ(uap("train --data synth --seed 7 --preset mlp --epochs 30 --out m30b.uapm").code, 0);
  EXPECT_EQ(slurp("m30.uapm"), slurp("m30b.uapm"));
}

TEST_F(Cli, ManifestListsExistingOutputs) {
  ASSERT_EQ(uap("gen-uap --model desk.uapm --target 1 --zeta 5 --imax 2 --seed 1 --out man.uapp").code, 0);
  auto m = nlohmann::json::parse(slurp("man.uapp.manifest.json"));
  EXPECT_EQ(m["command"], "gen-uap");
  EXPECT_GT(m["config"]["attack"]["xi"].get<double>(), 0.0);
  EXPECT_EQ(m["config"]["attack"]["epsilon"].get<double>(), 1.0);
  ASSERT_FALSE(m["outputs"].empty());
  for (const auto& o : m["outputs"]) EXPECT_TRUE(fs::exists(work_dir() / o.get<std::string>())) << o;
}

TEST_F(Cli, GenUapReachesTargetAtZetaTen) {
  ASSERT_EQ(uap("gen-uap --model desk.uapm --target 3 --zeta 10 --p 2 --imax 10 --seed 1 --out t3.uapp").code, 0);
  auto rows = csv_rows(slurp("t3.uapp.epochs.csv"));
  ASSERT_FALSE(rows.empty());
  ASSERT_EQ(rows.back().size(), 6u);
  EXPECT_GE(std::stod(rows.back()[1]), 0.8);
  EXPECT_NEAR(std::stod(rows.back()[3]), 10.0, 0.01);
}

TEST_F(Cli, IMaxOneWritesOneEpochRow) {
  ASSERT_EQ(uap("gen-uap --model desk.uapm --target 5 --zeta 2 --imax 1 --seed 1 --out one.uapp").code, 0);
  EXPECT_EQ(csv_rows(slurp("one.uapp.epochs.csv")).size(), 1u);
}

TEST_F(Cli, LinfBudgetHolds) {
  ASSERT_EQ(uap("gen-uap --model desk.uapm --target 2 --p inf --xi 0.05 --eps 0.03 --imax 3 --out inf.uapp").code, 0);
  auto pert = tuap::load_perturbation(work_dir() / "inf.uapp");
  EXPECT_EQ(pert.p, tuap::NormType::linf);
  EXPECT_LE(lp_norm(pert.rho, tuap::NormType::linf), 0.05 * (1 + 1e-6));
}

TEST_F(Cli, SweepRowCounts) {
  ASSERT_EQ(uap("sweep --model desk.uapm --zeta-grid 2,5,10 --targets 0 --seed 1 --out s0.csv").code, 0);
  auto rows = csv_rows(slurp("s0.csv"));
  ASSERT_EQ(rows.size(), 12u);
  for (const auto& r : rows) {
    ASSERT_EQ(r.size(), 9u);
    if (r[0] == "random") {
      EXPECT_LE(std::stod(r[6]), 0.3) << r[4];
    }
  }
  ASSERT_EQ(uap("sweep --model desk.uapm --zeta-grid 2,5,10 --targets all --seed 1 --out all.csv").code, 0);
  EXPECT_EQ(csv_rows(slurp("all.csv")).size(), 120u);
}

TEST_F(Cli, EvalOfZeroPerturbationIsBaseRate) {
  auto model = tuap::nn::load_model(work_dir() / "desk.uapm");
  tuap::Perturbation zero{tuap::Tensor(model.input_shape()), tuap::NormType::l2, 1.0, tuap::Generator::targeted_uap,
                          1.0, 0};
  tuap::save_perturbation(zero, work_dir() / "zero.uapp");
  ASSERT_EQ(uap("eval --model desk.uapm --uap zero.uapp --target 4 --set test --out zero.csv").code, 0);
  auto rows = csv_rows(slurp("zero.csv"));
  ASSERT_EQ(rows.size(), 1u);

  // The same split the CLI uses by default: 100 per class, 70 to the input set.
  auto pool = tuap::data::synth_dataset(10, 100, {32, 32, 1}, 0.05, 0);
  auto split = tuap::data::split_balanced(pool, {70, 0});
  std::size_t base = 0;
  for (const auto& x : split.test.images) base += classify(model, x) == 4;
  EXPECT_DOUBLE_EQ(std::stod(rows[0][6]), static_cast<double>(base) / static_cast<double>(split.test.size()));
  EXPECT_EQ(std::stod(rows[0][5]), 0.0);
  EXPECT_TRUE(fs::exists(work_dir() / "zero.csv.confusion.csv"));
}

TEST_F(Cli, EvalIsDeterministicAndFollowsZeta) {
  for (const char* z : {"5", "10"})
    ASSERT_EQ(uap(std::string("gen-uap --model desk.uapm --target 6 --seed 1 --zeta ") + z + " --out z" + z + ".uapp")
                  .code,
              0);
  ASSERT_EQ(uap("eval --model desk.uapm --uap z5.uapp --target 6 --out e5.csv").code, 0);
  ASSERT_EQ(uap("eval --model desk.uapm --uap z10.uapp --target 6 --out e10.csv").code, 0);
  ASSERT_EQ(uap("eval --model desk.uapm --uap z10.uapp --target 6 --out e10b.csv").code, 0);
  EXPECT_EQ(slurp("e10.csv"), slurp("e10b.csv"));
  EXPECT_GE(std::stod(csv_rows(slurp("e10.csv"))[0][6]), std::stod(csv_rows(slurp("e5.csv"))[0][6]));
}

TEST_F(Cli, EvalRejectsShapeMismatch) {
  tuap::save_perturbation(tuap::random_uap({8, 8, 1}, tuap::NormType::l2, 1.0, 0), work_dir() / "small.uapp");
  EXPECT_EQ(uap("eval --model desk.uapm --uap small.uapp --target 0 --out bad.csv").code, 1);
}

TEST_F(Cli, DatasetFileFeedsTheSamePipeline) {
  ASSERT_EQ(uap("make-data --synth-classes 3 --synth-per-class 20 --synth-shape 6x6x1 --data-seed 4 --out d.uapd").code,
            0);
  auto d = tuap::data::load_dataset(work_dir() / "d.uapd");
  EXPECT_EQ(d.size(), 60u);
  ASSERT_EQ(uap("train --data d.uapd --seed 1 --epochs 5 --lr 0.05 --out d.uapm").code, 0);
  ASSERT_EQ(uap("gen-uap --data d.uapd --model d.uapm --target 1 --zeta 10 --imax 2 --out d.uapp").code, 0);
  EXPECT_EQ(tuap::load_perturbation(work_dir() / "d.uapp").rho.shape(), (tuap::Shape{6, 6, 1}));
}

}  // namespace
