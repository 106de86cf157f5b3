#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DYSTOP_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string cfg(const char* name) { return std::string(DYSTOP_CONFIG_DIR) + "/" + name; }

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("dystop_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace

TEST(Cli, RunWritesOutputs) {
  auto out = scratch("run");
  EXPECT_EQ(run_cli("run " + cfg("smoke.cfg") + " --seed 3 --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "metrics.csv"));
  EXPECT_TRUE(fs::exists(out / "summary.json"));
  fs::remove_all(out);
}

TEST(Cli, SameSeedSameBytes) {
  auto a = scratch("a"), b = scratch("b");
  ASSERT_EQ(run_cli("run " + cfg("smoke.cfg") + " --out " + a.string()), 0);
  ASSERT_EQ(run_cli("run " + cfg("smoke.cfg") + " --out " + b.string()), 0);
  for (const char* f : {"metrics.csv", "topology.csv", "histograms.csv", "summary.json"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, SweepAndPolicyOverride) {
  auto out = scratch("sweep");
  EXPECT_EQ(run_cli("sweep " + cfg("smoke.cfg") + " --axis phi --values 0.4,0.7,1.0 --policy push_all --out " +
                    out.string()),
            0);
  EXPECT_TRUE(fs::exists(out / "metrics_phi_0.4.csv"));
  EXPECT_TRUE(fs::exists(out / "summary.csv"));
  EXPECT_NE(slurp(out / "summary.csv").find("push_all"), std::string::npos);
  fs::remove_all(out);
}

TEST(Cli, ConfigErrorsExitOne) {
  auto dir = scratch("bad");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.cfg") << "phi = -1\n";
  EXPECT_EQ(run_cli("run " + (dir / "bad.cfg").string() + " --out " + (dir / "o").string()), 1);
  EXPECT_EQ(run_cli("run /nonexistent.cfg"), 1);
  EXPECT_EQ(run_cli("run " + cfg("smoke.cfg") + " --policy nope --out " + (dir / "o").string()), 1);
  EXPECT_EQ(run_cli("sweep " + cfg("smoke.cfg") + " --axis eta --values 1 --out " + (dir / "o").string()), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  fs::remove_all(dir);
}

TEST(Cli, AbortExitsTwo) {
  auto dir = scratch("abort");
  fs::create_directories(dir);
  std::ofstream(dir / "nan.cfg") << "n_workers = 4\nlearner = logistic\nsamples_per_class = 20\neta = 1e300\n";
  EXPECT_EQ(run_cli("run " + (dir / "nan.cfg").string() + " --out " + (dir / "o").string()), 2);
  fs::remove_all(dir);
}
