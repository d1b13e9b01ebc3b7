#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "hslab/cli.hpp"
#include "hslab/synthetic.hpp"

using namespace hslab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void put(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("hslab_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Small compositional layer with groups {0,1} and {2,3}, plus a fast probe config.
  void make_compositional(const std::string& name, std::uint64_t seed = 1) {
    PlantSpec s;
    s.m_rows = 400;
    s.d_dims = 12;
    s.class_gap = 4;
    s.baseline = -1;
    s.seed = seed;
    auto m = gen_compositional(s, {0, 1}, {2, 3});
    m.meta["layer"] = "0";
    write_hsds(m, path(name));
    put(path("probe.json"), R"({"epochs": 20, "learning_rate": 0.003})");
  }

  fs::path dir_;
};

}  // namespace

TEST(Cli, NoArgumentsIsUsageError) {
  const auto r = run_cli({});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("error: Usage"), std::string::npos);
}

TEST(Cli, UnknownSubcommandPrintsUsage) {
  const auto r = run_cli({"frobnicate"});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_NE(r.err.find("replicate"), std::string::npos);
}

TEST(Cli, HelpSucceeds) {
  const auto r = run_cli({"--help"});
  EXPECT_EQ(r.code, cli::kExitOk);
  EXPECT_NE(r.out.find("tau-sweep"), std::string::npos);
  EXPECT_EQ(run_cli({"gic", "--help"}).code, cli::kExitOk);
}

TEST(Cli, MissingRequiredFlag) {
  EXPECT_EQ(run_cli({"probe-eval", "--model", "x"}).code, cli::kExitUsage);
}

TEST_F(CliTest, GicReferenceExample) {
  put(path("base.json"), R"({"accuracy": 0.99})");
  put(path("i1.json"), R"({"result": {"group": "RegretD", "report": {"accuracy": 0.981}}})");
  put(path("i2.json"), R"({"result": {"group": "Non-RegretD", "report": {"accuracy": 0.969}}})");
  put(path("u.json"), R"({"accuracy": 0.620})");
  const auto r = run_cli({"gic", "--baseline", path("base.json"), "--individual", path("i1.json"), path("i2.json"),
                          "--union", path("u.json"), "--no-timestamp", "--csv", path("gic.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  const double g = j["gic"]["gic"].get<double>();
  EXPECT_NEAR(g, 0.620 / 0.975, 1e-12);
  EXPECT_NEAR(g, 0.635, 0.01);
  EXPECT_EQ(j["gic"]["groups"], json({"RegretD", "Non-RegretD"}));
  EXPECT_FALSE(j.contains("generated_at"));
  EXPECT_EQ(slurp(path("gic.csv")).rfind("groups,baseline_accuracy,union_accuracy,gic\n", 0), 0u);
}

TEST_F(CliTest, GicWithoutAccuracyIsUsageError) {
  put(path("base.json"), R"({"nothing": 1})");
  put(path("u.json"), R"({"accuracy": 0.5})");
  const auto r = run_cli({"gic", "--baseline", path("base.json"), "--individual", path("u.json"), "--union",
                          path("u.json")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("error: InvalidConfig"), std::string::npos);
}

TEST_F(CliTest, CorruptDataIsDataError) {
  put(path("bad.hsds"), "NOPE and then some bytes");
  const auto r = run_cli({"rds", "--data", path("bad.hsds")});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find("error: MagicMismatch"), std::string::npos);
  EXPECT_NE(r.err.find("bad.hsds"), std::string::npos);
}

TEST_F(CliTest, ScdiOnLayerFiles) {
  PlantSpec base;
  base.m_rows = 2000;
  base.d_dims = 8;
  base.baseline = 2;
  base.class_gap = 4;
  base.signal_idx = {0};
  const std::vector<std::size_t> pattern{2, 0, 1};
  const auto files = write_layer_series(dir_, gen_layer_series(3, pattern, base), base);
  const auto r = run_cli({"scdi", "--layers", files[0].string(), files[1].string(), files[2].string(),
                          "--no-timestamp", "--csv", path("scdi.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  ASSERT_EQ(j["layers"].size(), 3u);
  EXPECT_EQ(j["layers"][0]["layer"], 0);
  // layer 1 has the widest gap and must score lowest
  const double s0 = j["layers"][0]["SCDI"], s1 = j["layers"][1]["SCDI"], s2 = j["layers"][2]["SCDI"];
  EXPECT_LT(s1, s2);
  EXPECT_LT(s2, s0);
  EXPECT_TRUE(fs::exists(path("scdi.csv")));
}

TEST_F(CliTest, SynthThenAnalyse) {
  ASSERT_EQ(run_cli({"synth", "--kind", "compositional", "--data", path("c.hsds"), "--truth", path("truth.json"),
                     "--rows", "400", "--dims", "12", "--signal", "0,1,2,3", "--baseline", "-1", "--seed", "3"})
                .code,
            0);
  const auto truth = json::parse(slurp(path("truth.json")));
  EXPECT_EQ(truth["groups"]["A"], json({0, 1}));
  put(path("probe.json"), R"({"epochs": 20, "learning_rate": 0.003})");

  auto r = run_cli({"probe-train", "--data", path("c.hsds"), "--model", path("m.hspm"), "--config",
                    path("probe.json"), "--test-out", path("test.hsds"), "--no-timestamp"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = json::parse(r.out);
  EXPECT_EQ(j["train_rows"], 280);
  EXPECT_EQ(j["test_rows"], 120);
  EXPECT_GE(j["test"]["accuracy"].get<double>(), 0.95);

  r = run_cli({"probe-eval", "--model", path("m.hspm"), "--data", path("test.hsds"), "--no-timestamp"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["report"], j["test"]);

  r = run_cli({"rds", "--data", path("c.hsds"), "--tau", "0.5", "--out", path("rds.json"), "--csv", path("rds.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.out.empty());
  const auto rds = json::parse(slurp(path("rds.json")));
  EXPECT_EQ(rds["pairs"], 200);
  EXPECT_EQ(rds["partition"]["RegretD"], json({0, 1}));
  EXPECT_EQ(rds["partition"]["Non-RegretD"], json({2, 3}));
  EXPECT_EQ(slurp(path("rds.csv")).rfind("neuron,rds,group\n0,", 0), 0u);

  r = run_cli({"intervene", "--model", path("m.hspm"), "--data", path("test.hsds"), "--partition", path("rds.json"),
               "--group", "RegretD+Non-RegretD", "--random-controls", "2", "--csv", path("iv.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  j = json::parse(r.out);
  EXPECT_EQ(j["result"]["group"], "RegretD+Non-RegretD");
  EXPECT_EQ(j["result"]["count"], 4);
  EXPECT_LE(j["result"]["report"]["accuracy"].get<double>(), 0.7);
  EXPECT_EQ(j["random_controls"].size(), 2u);
  std::istringstream csv(slurp(path("iv.csv")));
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  EXPECT_EQ(lines, 4);

  r = run_cli({"intervene", "--model", path("m.hspm"), "--data", path("test.hsds"), "--neurons", "0,1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["result"]["group"], "custom");

  r = run_cli({"intervene", "--model", path("m.hspm"), "--data", path("test.hsds"), "--partition", path("rds.json"),
               "--group", "Bogus"});
  EXPECT_EQ(r.code, cli::kExitUsage);

  r = run_cli({"mi", "--data", path("c.hsds"), "--partition", path("rds.json"), "--no-timestamp"});
  ASSERT_EQ(r.code, 0) << r.err;
  j = json::parse(r.out);
  ASSERT_EQ(j["pairs"].size(), 3u);
  EXPECT_EQ(j["pairs"][0]["group_a"], "RegretD");
  for (const auto& p : j["pairs"]) {
    EXPECT_GE(p["normalized_mi"].get<double>(), 0.0);
    EXPECT_LE(p["normalized_mi"].get<double>(), 1.0 + 1e-9);
  }

  r = run_cli({"mi", "--data", path("c.hsds"), "--group-a", "0", "--group-b", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(json::parse(r.out)["pairs"][0]["normalized_mi"].get<double>(), 1.0, 1e-9);

  r = run_cli({"tau-sweep", "--model", path("m.hspm"), "--data", path("test.hsds"), "--pairs-data", path("c.hsds"),
               "--tau", "0.1", "0.5", "--csv", path("sweep.csv"), "--long-csv", path("long.csv"), "--no-timestamp"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("sweep.csv")));
  EXPECT_TRUE(fs::exists(path("long.csv")));
  const auto again = run_cli({"tau-sweep", "--model", path("m.hspm"), "--data", path("test.hsds"), "--pairs-data",
                              path("c.hsds"), "--tau", "0.1", "0.5", "--no-timestamp"});
  EXPECT_EQ(r.out, again.out);

  r = run_cli({"random-removal", "--models", path("m.hspm"), "--data", path("test.hsds"), "--trials", "3",
               "--count", "2", "--no-timestamp"});
  ASSERT_EQ(r.code, 0) << r.err;
  j = json::parse(r.out);
  ASSERT_EQ(j["layers"].size(), 1u);

  r = run_cli({"random-removal", "--models", path("m.hspm"), path("m.hspm"), "--data", path("test.hsds")});
  EXPECT_EQ(r.code, cli::kExitUsage);
}

TEST_F(CliTest, MiOnConstantGroupIsDataError) {
  LabeledMatrix m;
  m.data = Matrix<float>(4, 2, 1.f);
  m.data(1, 1) = 2;
  m.labels = {0, 1, 0, 1};
  write_hsds(m, path("flat.hsds"));
  const auto r = run_cli({"mi", "--data", path("flat.hsds"), "--group-a", "0", "--group-b", "1"});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find("error: DegenerateEntropy"), std::string::npos);
}

TEST_F(CliTest, SynthSeriesWritesTruth) {
  const auto r = run_cli({"synth", "--kind", "series", "--out-dir", path("series"), "--pattern", "1,0", "--rows",
                          "20", "--dims", "4", "--no-timestamp"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "series" / "layer_1.hsds"));
  EXPECT_EQ(json::parse(r.out)["truth"]["expected_selected_layer"], 1);
  EXPECT_EQ(run_cli({"synth", "--kind", "series", "--out-dir", path("s2")}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"synth", "--kind", "spiral", "--data", path("x.hsds")}).code, cli::kExitUsage);
}

TEST_F(CliTest, ReplicateMissingKeyNamesIt) {
  put(path("cfg.json"), R"({"layers": ["a.hsds"], "tau": 0.05, "groups": []})");
  const auto r = run_cli({"replicate", "--config", path("cfg.json")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("\"probe\""), std::string::npos);
  put(path("cfg.json"), R"({"layers": ["a.hsds"], "probe": {}, "tau": 0.05, "groups": [], "colour": 1})");
  EXPECT_NE(run_cli({"replicate", "--config", path("cfg.json")}).err.find("\"colour\""), std::string::npos);
  put(path("cfg.json"), "{ not json");
  EXPECT_EQ(run_cli({"replicate", "--config", path("cfg.json")}).code, cli::kExitUsage);
}

TEST_F(CliTest, ReplicateMissingLayerIsDataError) {
  put(path("cfg.json"), R"({"layers": ["absent.hsds"], "probe": {}, "tau": 0.05, "groups": []})");
  const auto r = run_cli({"replicate", "--config", path("cfg.json")});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find("absent.hsds"), std::string::npos);
}

TEST_F(CliTest, ReplicateSingleLayerIsDeterministic) {
  make_compositional("layer.hsds");
  put(path("cfg.json"), R"({"layers": ["layer.hsds"], "probe": {"epochs": 20, "learning_rate": 0.003},
    "tau": 0.5, "groups": [["RegretD", "Non-RegretD"], ["RegretD"]], "seed": 7, "removal_trials": 3})");
  const std::vector<std::string> args{"replicate", "--config", path("cfg.json"), "--no-timestamp",
                                      "--csv", path("iv.csv")};
  const auto a = run_cli(args);
  ASSERT_EQ(a.code, 0) << a.err;
  const auto csv_a = slurp(path("iv.csv"));
  const auto b = run_cli(args);
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(csv_a, slurp(path("iv.csv")));

  const auto j = json::parse(a.out);
  EXPECT_EQ(j["selected_layer"], 0);
  EXPECT_EQ(j["seed"], 7);
  EXPECT_EQ(j["partition"]["RegretD"], json({0, 1}));
  EXPECT_FALSE(j.contains("generated_at"));

  const auto other = run_cli({"replicate", "--config", path("cfg.json"), "--no-timestamp", "--seed", "8"});
  ASSERT_EQ(other.code, 0) << other.err;
  EXPECT_EQ(json::parse(other.out)["seed"], 8);

  const auto overridden = run_cli({"replicate", "--config", path("cfg.json"), "--no-timestamp", "--bins", "10"});
  ASSERT_EQ(overridden.code, 0) << overridden.err;
  EXPECT_EQ(json::parse(overridden.out)["mutual_information"]["bins"], 10);
  EXPECT_EQ(run_cli({"replicate", "--config", path("cfg.json"), "--bins", "1"}).code, cli::kExitUsage);
}

TEST_F(CliTest, ProcessExitCodes) {
#ifdef HSLAB_CLI_PATH
  const std::string exe = HSLAB_CLI_PATH;
  const std::string quiet = " >" + path("o.txt") + " 2>" + path("e.txt");
  auto status = [](int raw) { return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1; };
  EXPECT_EQ(status(std::system((exe + " frobnicate" + quiet).c_str())), 2);
  put(path("bad.hsds"), "XXXX");
  EXPECT_EQ(status(std::system((exe + " rds --data " + path("bad.hsds") + quiet).c_str())), 3);
  EXPECT_NE(slurp(path("e.txt")).find("error: "), std::string::npos);
  EXPECT_EQ(status(std::system((exe + " --help" + quiet).c_str())), 0);
#else
  GTEST_SKIP() << "CLI binary not built";
#endif
}
