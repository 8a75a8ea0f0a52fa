#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("stein_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(const std::string& args) {
  const std::string cmd = std::string(STEIN_SELECT_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

TEST(Cli, ToyWritesOutputs) {
  const auto out = scratch("toy");
  ASSERT_EQ(run("toy --scenario ds,nested_ms --scores svc,k_a --n-grid 50,100 --seeds 0..1 --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "results.csv"));
  EXPECT_TRUE(fs::exists(out / "config.json"));
  EXPECT_TRUE(fs::exists(out / "plot_ds.svg"));
  EXPECT_TRUE(fs::exists(out / "plot_nested_ms.svg"));
  const std::string csv = slurp(out / "results.csv");
  EXPECT_EQ(csv.rfind("experiment,scenario,score,n,seed,foreground,value,normalized_value,decision\n", 0), 0u);
  EXPECT_NE(csv.find(",mean,"), std::string::npos);
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  const std::string args = "ppca-sim --n 300 --seeds 0..1 --no-plot --out ";
  ASSERT_EQ(run(args + a.string()), 0);
  ASSERT_EQ(run(args + b.string()), 0);
  EXPECT_EQ(slurp(a / "results.csv"), slurp(b / "results.csv"));
  EXPECT_EQ(slurp(a / "config.json"), slurp(b / "config.json"));
}

TEST(Cli, ConfigFileWithCommandLineOverride) {
  const auto dir = scratch("cfg");
  write(dir / "c.json", R"({"command": "toy", "scenario": "ms", "n-grid": [40, 80], "seeds": "3", "plot": false})");
  ASSERT_EQ(run("toy --config " + (dir / "c.json").string() + " --n-grid 60 --out " + (dir / "o").string()), 0);
  const std::string csv = slurp(dir / "o" / "results.csv");
  EXPECT_NE(csv.find("toy,ms,svc,60,3,"), std::string::npos) << csv;
  EXPECT_EQ(csv.find(",40,"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "o" / "plot_ms.svg"));
}

TEST(Cli, UnknownConfigKeyIsConfigError) {
  const auto dir = scratch("badkey");
  write(dir / "c.json", R"({"scenario": "ds", "bogus": 1})");
  EXPECT_EQ(run("toy --config " + (dir / "c.json").string() + " --out " + (dir / "o").string()), 2);
  EXPECT_FALSE(fs::exists(dir / "o" / "results.csv"));
  write(dir / "d.json", R"({"command": "calibrate"})");
  EXPECT_EQ(run("toy --config " + (dir / "d.json").string() + " --out " + (dir / "o").string()), 2);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("codes");
  EXPECT_EQ(run("toy --scores k_z --out " + dir.string()), 2);
  EXPECT_EQ(run("toy --policy nope --out " + dir.string()), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("select --input " + (dir / "missing.csv").string() + " --latent-dim 1 --out " + dir.string()), 4);
  write(dir / "nan.csv", "a,b,c\n1,2,3\n4,nan,6\n");
  EXPECT_EQ(run("select --input " + (dir / "nan.csv").string() + " --latent-dim 1 --out " + dir.string()), 4);
  write(dir / "ok.csv", "a,b,c\n1,2,3\n4,5,7\n2,1,1\n");
  EXPECT_EQ(run("select --input " + (dir / "ok.csv").string() + " --latent-dim 2 --out " + dir.string()), 2);
  write(dir / "one.csv", "a,b,c\n1,2,3\n");
  EXPECT_EQ(run("select --input " + (dir / "one.csv").string() + " --latent-dim 1 --out " + dir.string()), 3);
}

TEST(Cli, SelectOnCsvNamesColumns) {
  const auto dir = scratch("select");
  std::string csv = "g1,g2,g3,g4,g5\n";
  unsigned s = 12345;
  auto u = [&] {
    s = s * 1103515245u + 12345u;
    return static_cast<double>((s >> 8) % 10000) / 10000.0 - 0.5;
  };
  for (int i = 0; i < 120; ++i) {
    const double z = u();
    csv += std::to_string(z + 0.3 * u()) + "," + std::to_string(-z + 0.3 * u()) + "," + std::to_string(z + 0.3 * u()) +
           "," + std::to_string(0.3 * u()) + "," + std::to_string(u()) + "\n";
  }
  write(dir / "x.csv", csv);
  ASSERT_EQ(run("select --input " + (dir / "x.csv").string() + " --latent-dim 1 --t 1 --out " + (dir / "o").string()), 0);
  const std::string res = slurp(dir / "o" / "results.csv");
  EXPECT_NE(res.find("drop_g5"), std::string::npos) << res;
  EXPECT_NE(res.find("criticism"), std::string::npos);
}

TEST(Cli, CalibrateGaussianRuns) {
  const auto dir = scratch("cal");
  ASSERT_EQ(run("calibrate --model gaussian --n 200 --draws 3 --out " + dir.string()), 0);
  const std::string res = slurp(dir / "results.csv");
  EXPECT_NE(res.find("calibrate,gaussian,t_hat,200,median,"), std::string::npos) << res;
}

}  // namespace
