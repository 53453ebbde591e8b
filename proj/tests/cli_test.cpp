#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"
#include "nsgp/data.hpp"

namespace nsgp::cli {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("nsgp_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write_series(const std::string& name, int n) const {
    std::ofstream f(path(name));
    f.precision(17);
    f << "t,y\n";
    for (int i = 0; i < n; ++i) {
      const double t = 0.1 * i;
      f << t << ',' << std::sin(t) << '\n';
    }
    return path(name);
  }

  std::vector<std::string> small_train(const std::string& data, const std::string& out) const {
    return {"train", "--data", data, "--kernel", "sm", "--q", "1", "--m", "10", "--iters", "60",
            "--restarts", "2", "--batch", "16", "--threads", "1", "--out", out};
  }

  fs::path dir_;
};

TEST_F(CliTest, TrainWritesArtifacts) {
  const auto data = write_series("d.csv", 40);
  const Outcome r = invoke(small_train(data, path("run")));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* f : {"model.json", "trace.csv", "prepared.csv", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(path("run") + "/" + f)) << f;
  }
  const auto manifest = nlohmann::json::parse(read_file(path("run/manifest.json")));
  EXPECT_EQ(manifest.at("command"), "train");
  EXPECT_EQ(manifest.at("dataset_fingerprint").get<std::string>().size(), 64u);
  const std::string trace = read_file(path("run/trace.csv"));
  EXPECT_EQ(trace.rfind("iteration,elbo,wall_ms\n", 0), 0u);
}

TEST_F(CliTest, UnknownKernelIsUsageError) {
  const auto data = write_series("d.csv", 40);
  const Outcome r = invoke({"train", "--data", data, "--kernel", "matern", "--out", path("x")});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("neural-gsm"), std::string::npos);
  EXPECT_EQ(invoke({"train", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(invoke({}).code, kExitUsage);
}

TEST_F(CliTest, MissingFileIsRuntimeError) {
  const Outcome r = invoke({"train", "--data", path("absent.csv"), "--out", path("x")});
  EXPECT_EQ(r.code, kExitFailure);
}

TEST_F(CliTest, RerunGivesIdenticalModel) {
  const auto data = write_series("d.csv", 40);
  ASSERT_EQ(invoke(small_train(data, path("a"))).code, kExitOk);
  auto args = small_train(data, path("b"));
  args[args.size() - 3] = "2";  // --threads
  ASSERT_EQ(invoke(args).code, kExitOk);
  EXPECT_EQ(read_file(path("a/model.json")), read_file(path("b/model.json")));
}

TEST_F(CliTest, ConfigFileAndExplicitFlags) {
  const auto data = write_series("d.csv", 40);
  {
    std::ofstream f(path("c.cfg"));
    f << "# comment\nkernel = rbf\nm = 10\niters = 20\nrestarts = 1\nbatch = 16\nseed = 3\n";
  }
  const Outcome r = invoke({"train", "--config", path("c.cfg"), "--data", data, "--seed", "4",
                            "--out", path("run")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const std::string model = read_file(path("run/model.json"));
  EXPECT_NE(model.find("\"rbf\""), std::string::npos);
  EXPECT_NE(model.find("\"seed\": 4"), std::string::npos);
}

TEST_F(CliTest, EvalOfOverfitModel) {
  const auto data = write_series("d.csv", 10);
  const Outcome t = invoke({"train", "--data", data, "--kernel", "rbf", "--m", "8", "--iters",
                            "1500", "--restarts", "1", "--batch", "8", "--lr", "0.05",
                            "--noise", "0.001", "--threads", "1", "--out", path("run")});
  ASSERT_EQ(t.code, kExitOk) << t.err;
  const Outcome e = invoke({"eval", "--model", path("run/model.json"), "--data", data, "--split",
                            "train", "--out", path("eval")});
  ASSERT_EQ(e.code, kExitOk) << e.err;
  const auto report = nlohmann::json::parse(e.out);
  EXPECT_LT(report.at("mse").get<double>(), 1e-3);
  EXPECT_EQ(report.at("n_test").get<int>(), 8);
  EXPECT_TRUE(fs::exists(path("eval/metrics.json")));
}

TEST_F(CliTest, EvalRejectsDimensionMismatch) {
  const auto data = write_series("d.csv", 40);
  ASSERT_EQ(invoke(small_train(data, path("run"))).code, kExitOk);
  {
    std::ofstream f(path("wide.csv"));
    f << "a,b,y\n";
    for (int i = 0; i < 20; ++i) f << i << ',' << i * i << ',' << i % 3 << '\n';
  }
  const Outcome e = invoke({"eval", "--model", path("run/model.json"), "--data", path("wide.csv")});
  EXPECT_EQ(e.code, kExitFailure);
  EXPECT_NE(e.err.find("input columns"), std::string::npos);
}

TEST_F(CliTest, SpectrogramShape) {
  const auto data = write_series("d.csv", 40);
  ASSERT_EQ(invoke(small_train(data, path("run"))).code, kExitOk);
  const Outcome s = invoke({"spectrogram", "--model", path("run/model.json"), "--sx", "50",
                            "--ss", "60", "--out", path("spec")});
  ASSERT_EQ(s.code, kExitOk) << s.err;
  std::istringstream in(read_file(path("spec/spectrogram.csv")));
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 50);
  }
  EXPECT_EQ(lines, 61);
}

TEST_F(CliTest, SpectrogramRejectsRbf) {
  const auto data = write_series("d.csv", 40);
  auto args = small_train(data, path("run"));
  args[4] = "rbf";
  ASSERT_EQ(invoke(args).code, kExitOk);
  const Outcome s = invoke({"spectrogram", "--model", path("run/model.json"), "--out", path("s")});
  EXPECT_EQ(s.code, kExitFailure);
}

TEST_F(CliTest, ReplayReproducesTraining) {
  const auto data = write_series("d.csv", 40);
  ASSERT_EQ(invoke(small_train(data, path("run"))).code, kExitOk);
  const Outcome r = invoke({"replay", "--manifest", path("run/manifest.json"), "--out", path("again")});
  EXPECT_EQ(r.code, kExitOk) << r.out << r.err;
  EXPECT_EQ(r.out.find("DIFFERS"), std::string::npos);
}

TEST_F(CliTest, ManifestsAreNumbered) {
  const auto data = write_series("d.csv", 40);
  ASSERT_EQ(invoke(small_train(data, path("run"))).code, kExitOk);
  ASSERT_EQ(invoke(small_train(data, path("run"))).code, kExitOk);
  EXPECT_TRUE(fs::exists(path("run/manifest.1.json")));
}

TEST_F(CliTest, SingleRowBenchmark) {
  const auto data = write_series("d.csv", 60);
  const Outcome b = invoke({"benchmark", "--datasets", data, "--kernels", "rbf", "--grid-q", "1",
                            "--grid-lr", "0.01", "--grid-batch", "16", "--iters", "30",
                            "--restarts", "1", "--m", "8", "--threads", "1", "--out", path("b")});
  ASSERT_EQ(b.code, kExitOk) << b.err;
  std::istringstream in(read_file(path("b/table.csv")));
  std::string header, row, extra;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_FALSE(std::getline(in, extra));
  EXPECT_EQ(row.rfind("d,rbf,1,", 0), 0u);
  EXPECT_NE(header.find("wall_ms_per_iter"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("b/table.txt")));
}

TEST_F(CliTest, PrepareThenTrainFromCache) {
  const auto data = write_series("d.csv", 40);
  ASSERT_EQ(invoke({"prepare", "--data", data, "--seed", "5", "--out", path("p")}).code, kExitOk);
  EXPECT_TRUE(fs::exists(path("p/prepared.csv.json")));
  ASSERT_EQ(invoke(small_train(path("p/prepared.csv"), path("run"))).code, kExitOk);
  EXPECT_EQ(read_file(path("p/prepared.csv")), read_file(path("run/prepared.csv")));
}

TEST_F(CliTest, SynthAndPca) {
  ASSERT_EQ(invoke({"synth", "--kind", "gp-draw", "--n", "50", "--out", path("s")}).code, kExitOk);
  EXPECT_TRUE(fs::exists(path("s/synthetic.csv")));
  EXPECT_EQ(invoke({"synth", "--kind", "square", "--out", path("s")}).code, kExitUsage);
  {
    std::ofstream f(path("m.csv"));
    f << "a,b,y\n";
    for (int i = 0; i < 20; ++i) f << i << ',' << 2 * i + (i % 2) << ',' << i << '\n';
  }
  ASSERT_EQ(invoke({"pca", "--data", path("m.csv"), "--out", path("p")}).code, kExitOk);
  EXPECT_EQ(read_file(path("p/pca.csv")).rfind("pc1,y\n", 0), 0u);
}

TEST(Sha256, KnownDigest) {
  const auto p = fs::temp_directory_path() / "nsgp_sha_abc.txt";
  { std::ofstream(p) << "abc"; }
  EXPECT_EQ(sha256_file(p.string()),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  fs::remove(p);
}

TEST(ExpandConfig, FileValuesPrecedeFlags) {
  const auto p = fs::temp_directory_path() / "nsgp_expand.cfg";
  { std::ofstream(p) << "lr = 0.5\nno-header = true\n"; }
  const auto out = expand_config({"train", "--lr", "0.1", "--config", p.string()});
  EXPECT_EQ(out, (std::vector<std::string>{"train", "--lr", "0.5", "--no-header", "--lr", "0.1"}));
  fs::remove(p);
}

}  // namespace
}  // namespace nsgp::cli
