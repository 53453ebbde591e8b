#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "nsgp/data.hpp"
#include "nsgp/errors.hpp"

namespace nsgp {
namespace {

Dataset parse(const std::string& text, const std::string& target = "", bool header = true) {
  std::istringstream in(text);
  return parse_csv(in, target, header);
}

Dataset line_dataset(Index n) {
  Dataset ds;
  ds.x = Vector::LinSpaced(n, 0.0, static_cast<double>(n - 1));
  ds.y = (ds.x.col(0).array() * 0.7).sin().matrix() + 0.1 * ds.x.col(0);
  ds.input_columns = {"t"};
  ds.target_column = "y";
  return ds;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("nsgp_data_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

TEST(Csv, ParsesHeaderAndTarget) {
  Dataset ds = parse("a,b,y\n1,2,3\n4,5,6\n", "y");
  ASSERT_EQ(ds.size(), 2);
  ASSERT_EQ(ds.input_dim(), 2);
  EXPECT_EQ(ds.input_columns, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(ds.target_column, "y");
  EXPECT_DOUBLE_EQ(ds.x(1, 0), 4.0);
  EXPECT_DOUBLE_EQ(ds.y(1), 6.0);
}

TEST(Csv, TargetMayBeAnyColumn) {
  Dataset ds = parse("y,a\n1,2\n3,4\n", "y");
  EXPECT_EQ(ds.input_columns, std::vector<std::string>{"a"});
  EXPECT_DOUBLE_EQ(ds.y(0), 1.0);
  EXPECT_DOUBLE_EQ(ds.x(1, 0), 4.0);
}

TEST(Csv, EmptyTargetMeansLastColumn) {
  Dataset ds = parse("t,v\n0,1\n1,2\n");
  EXPECT_EQ(ds.target_column, "v");
}

TEST(Csv, HeaderlessByIndex) {
  Dataset ds = parse("1,2,3\n4,5,6\n", "0", false);
  EXPECT_DOUBLE_EQ(ds.y(1), 4.0);
  EXPECT_DOUBLE_EQ(ds.x(0, 1), 3.0);
}

TEST(Csv, BadCellReportsRowAndColumn) {
  try {
    parse("t,y\n1,abc\n", "y");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 2u);
    EXPECT_EQ(e.column(), 2u);
  }
}

TEST(Csv, RaggedRowIsParseError) {
  EXPECT_THROW(parse("t,y\n1,2\n3\n", "y"), ParseError);
}

TEST(Csv, NonFiniteIsParseError) {
  EXPECT_THROW(parse("t,y\n1,nan\n", "y"), ParseError);
  EXPECT_THROW(parse("t,y\n1,inf\n", "y"), ParseError);
}

TEST(Csv, MissingTargetListsColumns) {
  try {
    parse("t,y\n1,2\n", "z");
    FAIL() << "expected MissingColumn";
  } catch (const MissingColumn& e) {
    EXPECT_NE(std::string(e.what()).find("t, y"), std::string::npos) << e.what();
  }
}

TEST(Csv, SingleColumnIsMissingColumn) {
  EXPECT_THROW(parse("y\n1\n2\n", "y"), MissingColumn);
}

TEST(Nyquist, EquispacedIsHalfTheRate) {
  Matrix x = Vector::LinSpaced(11, 0.0, 10.0);
  EXPECT_NEAR(nyquist(x).frequency(0), 0.5, 1e-12);
  x = Vector::LinSpaced(5, 0.0, 1.0);
  EXPECT_NEAR(nyquist(x).frequency(0), 2.0, 1e-12);
}

TEST(Nyquist, IrregularUsesSmallestGap) {
  Matrix x(4, 1);
  x << 0.0, 4.0, 5.0, 9.0;
  EXPECT_NEAR(nyquist(x).frequency(0), 1.0, 1e-12);
  x << 0.0, 10.0, 4.0, 14.0;
  EXPECT_NEAR(nyquist(x).frequency(0), 0.25, 1e-12);
}

TEST(Nyquist, OrderDoesNotMatter) {
  Matrix a(5, 1), b(5, 1);
  a << 0.0, 0.3, 0.7, 1.5, 2.0;
  b << 1.5, 0.0, 2.0, 0.7, 0.3;
  EXPECT_DOUBLE_EQ(nyquist(a).frequency(0), nyquist(b).frequency(0));
}

TEST(Nyquist, DuplicatesAreFlaggedAndCollapsed) {
  Matrix x(4, 1);
  x << 0.0, 1.0, 1.0, 2.0;
  const NyquistResult r = nyquist(x);
  EXPECT_TRUE(r.duplicates);
  EXPECT_NEAR(r.frequency(0), 0.5, 1e-12);
}

TEST(Nyquist, NeedsTwoDistinctValues) {
  EXPECT_THROW(nyquist(Matrix::Constant(3, 1, 2.0)), InvalidArgument);
}

TEST(Prepare, TenRowsSplitEightTwo) {
  Dataset ds = prepare(line_dataset(10), {}, 3);
  EXPECT_EQ(ds.split.train.size(), 8u);
  EXPECT_EQ(ds.split.test.size(), 2u);
  EXPECT_TRUE(ds.split.validation.empty());
}

TEST(Prepare, SplitsAreDisjointAndCover) {
  for (Index d : {1, 3}) {
    Dataset raw;
    std::mt19937_64 rng(d);
    std::normal_distribution<double> normal;
    raw.x.resize(200, d);
    raw.y.resize(200);
    for (Index i = 0; i < raw.x.size(); ++i) raw.x.data()[i] = normal(rng);
    for (Index i = 0; i < 200; ++i) raw.y(i) = normal(rng);
    Dataset ds = prepare(raw, {0.7, 0.1, 0.2}, 5);
    std::set<Index> all;
    all.insert(ds.split.train.begin(), ds.split.train.end());
    all.insert(ds.split.validation.begin(), ds.split.validation.end());
    all.insert(ds.split.test.begin(), ds.split.test.end());
    EXPECT_EQ(all.size(), 200u);
    EXPECT_EQ(ds.split.train.size() + ds.split.validation.size() + ds.split.test.size(), 200u);
    EXPECT_EQ(ds.split.test.size(), 40u);
    EXPECT_EQ(ds.split.validation.size(), 20u);
  }
}

TEST(Prepare, UnivariateTestSplitIsFiveWindows) {
  Dataset ds = prepare(line_dataset(500), {}, 11);
  std::vector<Index> test = ds.split.test;
  std::sort(test.begin(), test.end());
  ASSERT_EQ(test.size(), 100u);
  int runs = 1;
  for (std::size_t i = 1; i < test.size(); ++i) runs += test[i] != test[i - 1] + 1 ? 1 : 0;
  EXPECT_LE(runs, 5);
  // One window per fifth of the series.
  for (Index w = 0; w < 5; ++w) {
    const auto inside = std::count_if(test.begin(), test.end(),
                                      [&](Index i) { return i >= 100 * w && i < 100 * (w + 1); });
    EXPECT_EQ(inside, 20) << "fifth " << w;
  }
}

TEST(Prepare, NormalizesWithTrainStatistics) {
  Dataset ds = prepare(line_dataset(300), {0.7, 0.1, 0.2}, 2);
  const Matrix xt = ds.x_of(ds.split.train);
  const Vector yt = ds.y_of(ds.split.train);
  EXPECT_LT(std::abs(xt.mean()), 1e-10);
  EXPECT_LT(std::abs(yt.mean()), 1e-10);
  EXPECT_NEAR(std::sqrt((xt.array() - xt.mean()).square().mean()), 1.0, 1e-10);
  EXPECT_NEAR(std::sqrt((yt.array() - yt.mean()).square().mean()), 1.0, 1e-10);
  const Dataset raw = line_dataset(300);
  EXPECT_LT((ds.normalization.denormalize_y(ds.y) - raw.y).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((ds.normalization.denormalize_x(ds.x) - raw.x).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Prepare, NyquistIsInNormalizedUnits) {
  Dataset ds = prepare(line_dataset(100), {}, 1);
  EXPECT_NEAR(ds.nyquist(0), 0.5 * ds.normalization.x_std(0), 1e-9);
}

TEST(Prepare, TestTargetsDoNotLeakIntoNormalization) {
  Dataset raw = line_dataset(200);
  const Dataset a = prepare(raw, {}, 9);
  for (Index i : a.split.test) raw.y(i) += 1000.0;
  const Dataset b = prepare(raw, {}, 9);
  EXPECT_EQ(a.split.test, b.split.test);
  EXPECT_EQ(a.normalization.y_mean, b.normalization.y_mean);
  EXPECT_EQ(a.normalization.y_std, b.normalization.y_std);
}

TEST(Prepare, SameSeedSameSplit) {
  const Dataset a = prepare(line_dataset(200), {0.7, 0.1, 0.2}, 4);
  const Dataset b = prepare(line_dataset(200), {0.7, 0.1, 0.2}, 4);
  const Dataset c = prepare(line_dataset(200), {0.7, 0.1, 0.2}, 5);
  EXPECT_EQ(a.split.test, b.split.test);
  EXPECT_EQ(a.split.validation, b.split.validation);
  EXPECT_NE(a.split.test, c.split.test);
}

TEST(Prepare, ConstantTargetIsDegenerate) {
  Dataset raw = line_dataset(20);
  raw.y.setConstant(3.0);
  EXPECT_THROW(prepare(raw, {}, 0), DegenerateColumn);
}

TEST(Prepare, ConstantInputIsDegenerate) {
  Dataset raw;
  raw.x = Matrix::Random(20, 2);
  raw.x.col(1).setConstant(1.0);
  raw.y = Vector::Random(20);
  raw.input_columns = {"a", "b"};
  try {
    prepare(raw, {}, 0);
    FAIL();
  } catch (const DegenerateColumn& e) {
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
  }
}

TEST(Prepare, RejectsBadFractions) {
  EXPECT_THROW(prepare(line_dataset(10), {0.5, 0.0, 0.2}, 0), InvalidArgument);
  EXPECT_THROW(prepare(line_dataset(10), {1.0, 0.0, 0.0}, 0), InvalidArgument);
}

TEST(Synthetic, ChirpIsZeroAtQuarterWithoutNoise) {
  SyntheticSpec spec;
  spec.n = 5;
  spec.noise_std = 0.0;
  spec.f0 = 1.0;
  spec.rate = 2.0;
  const Dataset ds = synthesize(spec);
  // sin(2π(1 + 2·0.25)·0.25) = sin(0.75π)
  EXPECT_NEAR(ds.y(1), std::sin(0.75 * std::numbers::pi), 1e-12);
  EXPECT_NEAR(ds.y(0), 0.0, 1e-12);
  spec.f0 = 2.0;
  spec.rate = 0.0;
  EXPECT_NEAR(synthesize(spec).y(1), 0.0, 1e-12);
}

TEST(Synthetic, GpDrawHasRoughlyTheKernelVariance) {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::kGpDraw;
  spec.n = 50;
  spec.noise_std = 0.0;
  spec.gp_variance = 2.0;
  double total = 0.0;
  const int draws = 50;
  for (int s = 0; s < draws; ++s) {
    spec.seed = static_cast<std::uint64_t>(s);
    total += synthesize(spec).y.squaredNorm() / static_cast<double>(spec.n);
  }
  EXPECT_NEAR(total / draws, 2.0, 0.5);
}

TEST(Synthetic, SameSeedSameData) {
  SyntheticSpec spec;
  spec.seed = 42;
  EXPECT_EQ(synthesize(spec).y, synthesize(spec).y);
  spec.kind = SyntheticKind::kGpDraw;
  EXPECT_EQ(synthesize(spec).y, synthesize(spec).y);
}

TEST(Synthetic, KindNames) {
  EXPECT_EQ(synthetic_kind_from_string("chirp"), SyntheticKind::kChirp);
  EXPECT_EQ(to_string(SyntheticKind::kGpDraw), "gp-draw");
  EXPECT_THROW(synthetic_kind_from_string("sine"), InvalidArgument);
}

TEST(Pca, RecoversDominantDirection) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  Matrix x(400, 3);
  for (Index i = 0; i < 400; ++i) {
    const double t = normal(rng);
    x(i, 0) = t + 0.05 * normal(rng);
    x(i, 1) = 2.0 * t + 0.1 * normal(rng);
    x(i, 2) = normal(rng);
  }
  const PrincipalComponent pc = first_principal_component(x);
  EXPECT_NEAR(pc.loading.norm(), 1.0, 1e-10);
  EXPECT_NEAR(pc.loading(0), std::sqrt(0.5), 0.02);
  EXPECT_NEAR(pc.loading(1), std::sqrt(0.5), 0.02);
  EXPECT_LT(std::abs(pc.loading(2)), 0.2);
  EXPECT_EQ(pc.scores.size(), 400);

  // Dense eigendecomposition of the correlation matrix as the reference.
  Matrix z = x.rowwise() - x.colwise().mean();
  for (Index k = 0; k < 3; ++k) z.col(k) /= std::sqrt(z.col(k).squaredNorm() / 400.0);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(z.transpose() * z / 400.0);
  Vector top = eig.eigenvectors().col(2);
  if (top(1) < 0.0) top = -top;
  EXPECT_NEAR(pc.eigenvalue, eig.eigenvalues()(2), 1e-8);
  EXPECT_LT((pc.loading - top).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((pc.scores - z * top).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Pca, RejectsConstantColumn) {
  Matrix x = Matrix::Random(10, 2);
  x.col(0).setConstant(1.0);
  EXPECT_THROW(first_principal_component(x), DegenerateColumn);
}

TEST(Prepared, RoundTripsThroughFiles) {
  const auto dir = temp_dir("roundtrip");
  const Dataset ds = prepare(line_dataset(50), {0.7, 0.1, 0.2}, 8);
  const std::string csv = (dir / "cache.csv").string();
  save_prepared(ds, csv, csv + ".json");
  const Dataset back = load_prepared(csv);
  EXPECT_EQ(back.split.train, ds.split.train);
  EXPECT_EQ(back.split.validation, ds.split.validation);
  EXPECT_EQ(back.split.test, ds.split.test);
  EXPECT_EQ(back.seed, 8u);
  EXPECT_EQ(back.input_columns, ds.input_columns);
  EXPECT_LT((back.x - ds.x).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((back.y - ds.y).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(back.nyquist(0), ds.nyquist(0), 1e-12);
  std::filesystem::remove_all(dir);
}

TEST(Prepared, MissingSidecarFails) {
  const auto dir = temp_dir("nosidecar");
  const std::string csv = (dir / "cache.csv").string();
  write_file_atomic(csv, "t,y\n0,1\n1,2\n");
  EXPECT_THROW(load_prepared(csv), InvalidArgument);
  std::filesystem::remove_all(dir);
}

TEST(Files, AtomicWriteCreatesParents) {
  const auto dir = temp_dir("atomic");
  const std::string path = (dir / "a" / "b" / "out.txt").string();
  write_file_atomic(path, "hello\n");
  EXPECT_EQ(read_file(path), "hello\n");
  write_file_atomic(path, "again\n");
  EXPECT_EQ(read_file(path), "again\n");
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace nsgp
