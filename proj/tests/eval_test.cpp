#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "tuap/eval.hpp"

using tuap::NormType;
using tuap::Tensor;

namespace {

TEST(Zeta, ImageNetScaleExample) {
  // Mean image norm 50,135 and ||rho||_2 = 3,000 give about 6%.
  std::vector<Tensor> images{Tensor::of({50135.0})};
  const double z = tuap::zeta(Tensor::of({3000.0}), images);
  EXPECT_NEAR(z, 5.98, 0.005);
  EXPECT_EQ(std::lround(z), 6);
  EXPECT_NEAR(tuap::xi_for_zeta(8.0, images), 4010.8, 1e-9);
  EXPECT_EQ(std::lround(tuap::xi_for_zeta(8.0, images) / 1000) * 1000, 4000);
}

TEST(Zeta, ZeroPerturbationAndRejectedTarget) {
  std::vector<Tensor> images{Tensor({4}, 0.5)};
  EXPECT_EQ(tuap::zeta(Tensor({4}), images), 0.0);
  EXPECT_THROW(tuap::xi_for_zeta(0.0, images), tuap::domain_error);
  EXPECT_THROW(tuap::xi_for_zeta(-1.0, images), tuap::domain_error);
  EXPECT_THROW(tuap::zeta(Tensor({4}), std::vector<Tensor>{}), tuap::domain_error);
}

TEST(Zeta, RoundTripAndScaleInvariance) {
  std::mt19937_64 rng(1);
  std::vector<Tensor> images;
  for (int i = 0; i < 20; ++i) images.push_back(oracle::random_tensor({3, 3, 2}, rng, 0, 1));
  auto dir = oracle::random_tensor({3, 3, 2}, rng);
  const double xi = tuap::xi_for_zeta(5.0, images);
  const Tensor rho = (xi / lp_norm(dir, NormType::l2)) * dir;
  EXPECT_NEAR(tuap::zeta(rho, images), 5.0, 1e-9);

  auto scaled = images;
  for (auto& x : scaled) x = 37.5 * x;
  EXPECT_NEAR(tuap::zeta(37.5 * rho, scaled), tuap::zeta(rho, images), 1e-9);
}

class SweepTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { problem = new fixture::SmallProblem(fixture::small_problem()); }
  static void TearDownTestSuite() { delete problem; }
  static fixture::SmallProblem* problem;
  const tuap::data::LabeledDataset& input() const { return problem->split.input; }
  const tuap::data::LabeledDataset& test() const { return problem->split.test; }
  const tuap::nn::Classifier& model() const { return problem->model; }
  tuap::AttackConfig base() const { return {0, 0.5, 1.0, NormType::l2, 3, 2}; }
};
fixture::SmallProblem* SweepTest::problem = nullptr;

TEST_F(SweepTest, OneGridPointGivesFourRowsInOrder) {
  const double grid[] = {10.0};
  auto rows = tuap::sweep(model(), 4, input(), test(), 1, grid, base());
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].report.generator, tuap::Generator::targeted_uap);
  EXPECT_EQ(rows[0].report.set, "input");
  EXPECT_EQ(rows[1].report.set, "test");
  EXPECT_EQ(rows[2].report.generator, tuap::Generator::random_sphere);
  EXPECT_EQ(rows[3].report.set, "test");
  for (const auto& r : rows) {
    EXPECT_NEAR(r.report.zeta, 10.0, 1e-6);
    EXPECT_EQ(r.report.xi, rows[0].report.xi);
  }
  EXPECT_EQ(rows[1].report.n_images, test().size());
}

TEST_F(SweepTest, ThreePointGridAndValidation) {
  const double grid[] = {2.0, 5.0, 10.0};
  EXPECT_EQ(tuap::sweep(model(), 4, input(), test(), 0, grid, base()).size(), 12u);
  const double unsorted[] = {5.0, 2.0};
  EXPECT_THROW(tuap::sweep(model(), 4, input(), test(), 0, unsorted, base()), tuap::domain_error);
  EXPECT_THROW(tuap::sweep(model(), 4, input(), test(), 0, std::span<const double>{}, base()), tuap::domain_error);
}

TEST_F(SweepTest, OverlappingSetsAreRejected) {
  const double grid[] = {5.0};
  auto leaky = test();
  leaky.images.push_back(input().images[0]);
  leaky.labels.push_back(input().labels[0]);
  leaky.indices.push_back(input().indices[0]);
  EXPECT_THROW(tuap::sweep(model(), 4, input(), leaky, 0, grid, base()), tuap::domain_error);
}

TEST_F(SweepTest, EmptyTestSetIsRejected) {
  const auto& pool = problem->split.input;
  auto all = tuap::data::split_balanced(pool, {pool.class_counts()[0], 0});
  ASSERT_TRUE(all.test.empty());
  const double grid[] = {5.0};
  EXPECT_THROW(tuap::sweep(model(), 4, all.input, all.test, 0, grid, base()), tuap::domain_error);
}

TEST_F(SweepTest, EvaluateCountsAndDiagnostics) {
  auto pert = tuap::random_uap(input().image_shape(), NormType::l2, 0.3, 1);
  const double ref = tuap::mean_l2_norm(input().images);
  auto rep = tuap::evaluate(model(), test(), "test", pert, 2, ref, 4);
  EXPECT_EQ(rep.hits, oracle::recount_hits(model(), test().images, pert.rho, 2));
  EXPECT_EQ(rep.r_ts, static_cast<double>(rep.hits) / static_cast<double>(test().size()));
  std::size_t total = 0, to_target = 0, oob = 0;
  for (const auto& row : rep.confusion) {
    for (auto v : row) total += v;
    to_target += row[2];
  }
  for (const auto& x : test().images)
    for (auto v : x + pert.rho) oob += (v < 0 || v > 1);
  EXPECT_EQ(total, test().size());
  EXPECT_EQ(to_target, rep.hits);
  EXPECT_EQ(rep.out_of_range_pixels, oob);
  EXPECT_THROW(tuap::evaluate(model(), test(), "test", pert, 4, ref, 4), tuap::domain_error);
  auto wrong = tuap::random_uap({2, 2, 1}, NormType::l2, 0.3, 1);
  EXPECT_THROW(tuap::evaluate(model(), test(), "test", wrong, 0, ref, 4), tuap::shape_error);
}

TEST_F(SweepTest, ZeroPerturbationGivesBaseRate) {
  tuap::Perturbation zero{Tensor(input().image_shape()), NormType::l2, 1.0, tuap::Generator::targeted_uap, 0.5, 0};
  auto rep = tuap::evaluate(model(), test(), "test", zero, 1, 1.0, 4);
  std::size_t base = 0;
  for (const auto& x : test().images) base += classify(model(), x) == 1;
  EXPECT_EQ(rep.hits, base);
  EXPECT_EQ(rep.zeta, 0.0);
}

TEST_F(SweepTest, CsvIsDeterministicAndWellFormed) {
  const double grid[] = {5.0, 10.0};
  auto a = tuap::to_csv(std::span<const tuap::SweepRow>(tuap::sweep(model(), 4, input(), test(), 3, grid, base())));
  auto b = tuap::to_csv(std::span<const tuap::SweepRow>(tuap::sweep(model(), 4, input(), test(), 3, grid, base())));
  EXPECT_EQ(a, b);
  std::istringstream in(a);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, tuap::kReportCsvHeader);
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 8) << line;
  }
  EXPECT_EQ(rows, 8);
  EXPECT_EQ(a.find('\r'), std::string::npos);
}

TEST(Csv, RowFormatting) {
  tuap::EvalReport r;
  r.generator = tuap::Generator::random_sphere;
  r.set = "test";
  r.target_class = 7;
  r.p = NormType::linf;
  r.xi = 0.125;
  r.zeta = 5.9838;
  r.r_ts = 0.75;
  r.n_images = 40;
  r.seed = 3;
  EXPECT_EQ(tuap::csv_row(r), "random,test,7,inf,0.125000,5.98,0.750000,40,3");
  r.confusion = {{2, 0}, {1, 3}};
  EXPECT_EQ(tuap::confusion_csv(r), "source_class,predicted_class,count\n0,0,2\n1,0,1\n1,1,3\n");
}

}  // namespace
