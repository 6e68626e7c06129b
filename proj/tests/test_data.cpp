#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>

#include "fif/data.hpp"
#include "fif/errors.hpp"
#include "fif/metrics.hpp"

namespace fif {
namespace {

namespace fs = std::filesystem;

class TempCsv {
 public:
  explicit TempCsv(const std::string& body) {
    path_ = fs::temp_directory_path() /
            ("fif_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             std::to_string(counter_++) + ".csv");
    std::ofstream(path_) << body;
  }
  ~TempCsv() { fs::remove(path_); }
  std::string path() const { return path_.string(); }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

void expect_covering(const Dataset& ds) {
  EXPECT_EQ(ds.train.begin, 0);
  EXPECT_EQ(ds.val.begin, ds.train.end);
  EXPECT_EQ(ds.test.begin, ds.val.end);
  EXPECT_EQ(ds.test.end, ds.n());
}

TEST(Sinusoid, NoiselessPointsLieOnCurve) {
  const Dataset ds = gen_sinusoid(500, 0.0, 1);
  ASSERT_EQ(ds.dim(), 2);
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    EXPECT_DOUBLE_EQ(ds.x(i, 1), std::sin(std::numbers::pi * ds.x(i, 0) / 2));
  }
  expect_covering(ds);
}

TEST(Sinusoid, IsotropicNoiseDisplacement) {
  // Regenerating with the same seed and zero noise gives the clean points
  // only if the clean draw is independent of the noise draw; use the
  // projection distance instead, which for small noise is ~ the normal
  // component, so E[offset^2] ~ sigma^2 (one of two isotropic directions).
  const double sigma = 0.1;
  const Dataset ds = gen_sinusoid(10000, sigma, 2);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    acc += std::pow(sinusoid_projection(ds.x(i, 0), ds.x(i, 1)).second, 2);
  }
  EXPECT_NEAR(acc / static_cast<double>(ds.n()), sigma * sigma, 0.1 * sigma * sigma);
}

TEST(Sinusoid, SameSeedIsBitIdentical) {
  const Dataset a = gen_sinusoid(100, 0.1, 3);
  const Dataset b = gen_sinusoid(100, 0.1, 3);
  const Dataset c = gen_sinusoid(100, 0.1, 4);
  EXPECT_EQ(a.x, b.x);
  EXPECT_NE(a.x, c.x);
}

TEST(Gaussian, IdentityCovarianceWithinClt) {
  const Dataset ds = gen_gaussian(100000, Matrix::Identity(3, 3), 5);
  const auto cov = sample_covariance(ds.x);
  ASSERT_TRUE(cov.has_value());
  EXPECT_LT((*cov - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 0.02);
}

TEST(Gaussian, SingleSampleHasNoCovariance) {
  const Dataset ds = gen_gaussian(1, Matrix::Identity(2, 2), 6, {1.0, 0.0});
  EXPECT_EQ(ds.n(), 1);
  EXPECT_FALSE(sample_covariance(ds.x).has_value());
}

TEST(Gaussian, EigenvaluesMatchDiagonal) {
  Matrix sigma = Matrix::Zero(3, 3);
  sigma.diagonal() << 4.0, 1.0, 0.25;
  const Dataset ds = gen_gaussian(100000, sigma, 7);
  const Vector ev = linalg::sym_eig(*sample_covariance(ds.x)).values;
  EXPECT_NEAR(ev(0), 4.0, 0.08);
  EXPECT_NEAR(ev(1), 1.0, 0.02);
  EXPECT_NEAR(ev(2), 0.25, 0.005);
}

TEST(Gaussian, SplitsFollowFractions) {
  const Dataset ds = gen_gaussian(1000, Matrix::Identity(2, 2), 8, {0.7, 0.2});
  EXPECT_EQ(ds.train.size(), 700);
  EXPECT_EQ(ds.val.size(), 200);
  EXPECT_EQ(ds.test.size(), 100);
  expect_covering(ds);
}

TEST(Mixture, ComponentMeansRecovered) {
  Matrix means(2, 2);
  means << -3.0, 0.0, 3.0, 0.0;
  const Dataset ds = gen_gaussian_mixture(20000, means, 0.5, 9);
  int left = 0;
  Vector sum_left = Vector::Zero(2);
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    if (ds.x(i, 0) < 0) {
      ++left;
      sum_left += ds.x.row(i).transpose();
    }
  }
  EXPECT_NEAR(left / 20000.0, 0.5, 0.02);
  EXPECT_NEAR(sum_left(0) / left, -3.0, 0.02);
  EXPECT_NEAR(sum_left(1) / left, 0.0, 0.02);
}

TEST(Csv, ParsesHandWrittenFile) {
  TempCsv f("1,2,3\n4,5,6.5\n-7,8e-1,9\n");
  CsvOptions o;
  o.standardize = false;
  SplitSpec s;
  s.fractions = SplitFractions{1.0, 0.0};
  const Dataset ds = load_csv(f.path(), s, o);
  Matrix expect(3, 3);
  expect << 1, 2, 3, 4, 5, 6.5, -7, 0.8, 9;
  EXPECT_EQ(ds.x, expect);
}

TEST(Csv, HeaderAndDelimiter) {
  TempCsv f("a;b\n1;2\n3;5\n");
  CsvOptions o;
  o.standardize = false;
  o.header = true;
  o.delimiter = ';';
  SplitSpec s;
  s.fractions = SplitFractions{1.0, 0.0};
  const Dataset ds = load_csv(f.path(), s, o);
  EXPECT_EQ(ds.n(), 2);
  EXPECT_EQ(ds.x(1, 1), 5.0);
}

TEST(Csv, StandardizesWithTrainStatistics) {
  std::string body;
  for (int i = 0; i < 10; ++i) body += std::to_string(i) + "," + std::to_string(i * i) + "\n";
  TempCsv f(body);
  SplitSpec s;
  s.train = {0, 1, 2, 3, 4, 5};
  s.val = {6, 7};
  s.test = {8, 9};
  const Dataset ds = load_csv(f.path(), s);
  const Matrix tr = ds.train_x();
  for (int c = 0; c < 2; ++c) {
    EXPECT_LT(std::abs(tr.col(c).mean()), 1e-12);
    const double sd = std::sqrt((tr.col(c).array() - tr.col(c).mean()).square().sum() / (tr.rows() - 1));
    EXPECT_NEAR(sd, 1.0, 1e-12);
  }
  // Val and test use the same affine map.
  EXPECT_NEAR(ds.x(ds.test.begin, 0), (8.0 - ds.mean(0)) / ds.std(0), 1e-12);
  EXPECT_NEAR(ds.mean(0), 2.5, 1e-12);
  expect_covering(ds);
}

TEST(Csv, DropsConstantColumns) {
  TempCsv f("1,7,2\n2,7,4\n3,7,7\n4,7,1\n");
  SplitSpec s;
  s.fractions = SplitFractions{1.0, 0.0};
  const Dataset ds = load_csv(f.path(), s);
  EXPECT_EQ(ds.dim(), 2);
  EXPECT_EQ(ds.kept_columns, (std::vector<int>{0, 2}));
}

TEST(Csv, RaggedRowReportsPosition) {
  TempCsv f("1,2\n3,4\n5\n");
  try {
    load_csv(f.path(), SplitSpec{});
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 3);
  }
}

TEST(Csv, NonNumericCellReportsPosition) {
  TempCsv f("1,2\n3,abc\n");
  try {
    load_csv(f.path(), SplitSpec{});
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 2);
    EXPECT_EQ(e.col(), 2);
  }
}

TEST(Csv, OverlappingSplitsRejected) {
  TempCsv f("1,2\n3,4\n5,6\n");
  SplitSpec s;
  s.train = {0, 1};
  s.test = {1, 2};
  EXPECT_THROW(load_csv(f.path(), s), std::invalid_argument);
}

TEST(Csv, PowerShapedFile) {
  // Six columns like the POWER table; explicit train indices select the shape.
  std::string body;
  for (int i = 0; i < 40; ++i) {
    for (int c = 0; c < 6; ++c) body += std::to_string((i * 7 + c * 3) % 11 + 0.5 * c) + (c < 5 ? "," : "\n");
  }
  TempCsv f(body);
  SplitSpec s;
  for (Eigen::Index i = 0; i < 30; ++i) s.train.push_back(i);
  for (Eigen::Index i = 30; i < 40; ++i) s.test.push_back(i);
  const Dataset ds = load_csv(f.path(), s);
  EXPECT_EQ(ds.train_x().rows(), 30);
  EXPECT_EQ(ds.train_x().cols(), 6);
}

TEST(Sidecar, RecordsSplitsAndStandardization) {
  const Dataset ds = gen_sinusoid(100, 0.1, 10);
  const nlohmann::json j = dataset_sidecar(ds);
  EXPECT_EQ(j["rows"], 100);
  EXPECT_EQ(j["dim"], 2);
  EXPECT_EQ(j["splits"]["train"][1], ds.train.end);
  EXPECT_EQ(j["meta"], ds.meta);
}

}  // namespace
}  // namespace fif
