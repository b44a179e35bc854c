#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("ctd_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    std::ofstream cfg(d / "small.cfg");
    cfg << "preset = strong_expert\n"
           "group.forum.n = 200\ngroup.clinical.n = 200\ngroup.dialogue.n = 200\ngroup.tools.n = 200\n"
           "budgets = 0.2, 0.5\nbatch_sizes = 32\ncoverage.trials = 5\n";
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const auto cmd = std::string(CTD_CLI_PATH) + " --config " + (workdir() / "small.cfg").string() + " --out-dir " +
                   (workdir() / "out").string() + " " + args + " > " + (workdir() / "log.txt").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace

// Steps share the output directory, so they run as one ordered test.
TEST(Cli, EndToEnd) {
  const auto out = workdir() / "out";
  ASSERT_EQ(run("--seed 5 generate"), 0) << slurp(workdir() / "log.txt");
  ASSERT_TRUE(fs::exists(out / "data.jsonl"));
  ASSERT_TRUE(fs::exists(out / "probe_train.jsonl"));
  ASSERT_EQ(run("train-probe"), 0) << slurp(workdir() / "log.txt");
  ASSERT_EQ(run("train-dv"), 0) << slurp(workdir() / "log.txt");
  ASSERT_EQ(run("calibrate --alpha 0.3"), 0) << slurp(workdir() / "log.txt");
  EXPECT_NE(slurp(out / "policy.json").find("\"type\": \"threshold\""), std::string::npos);
  EXPECT_NE(slurp(out / "calibration.json").find("p_values"), std::string::npos);
  ASSERT_EQ(run("calibrate --alpha 0.3 --signal uncertainty"), 0) << slurp(workdir() / "log.txt");
  EXPECT_NE(slurp(out / "policy.json").find("reference_scores"), std::string::npos);
  ASSERT_EQ(run("sweep"), 0) << slurp(workdir() / "log.txt");
  const auto csv = slurp(out / "sweep.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "strategy,budget,batch_size,delegation_rate,accuracy,auroc");
  ASSERT_EQ(run("coverage"), 0) << slurp(workdir() / "log.txt");
  ASSERT_EQ(run("group-analysis --alpha 0.4"), 0) << slurp(workdir() / "log.txt");
  EXPECT_TRUE(fs::exists(out / "groups.csv"));
  ASSERT_EQ(run("report --output " + (out / "again.csv").string()), 0);
  EXPECT_EQ(slurp(out / "again.csv"), csv);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("no-such-command"), 1);
  EXPECT_EQ(run("calibrate --alpha 1.5 --data /nonexistent.jsonl"), 1);
  EXPECT_EQ(run("calibrate --alpha notanumber"), 1);
  std::ofstream(workdir() / "bad.jsonl") << "{\"id\":\"a\",\"group\":\"g\",\"label\":3,\"features\":[1]}\n";
  EXPECT_EQ(run("train-probe --train " + (workdir() / "bad.jsonl").string()), 1);
  EXPECT_NE(slurp(workdir() / "log.txt").find("line 1"), std::string::npos);
  // A rank-deficient unpenalised ridge fit is a runtime failure.
  {
    std::ofstream flat(workdir() / "flat.jsonl");
    for (int i = 0; i < 20; ++i) {
      flat << "{\"id\":\"r" << i << "\",\"group\":\"g\",\"label\":" << i % 2 << ",\"features\":[" << i << ","
           << i << "],\"probe_score\":0.3,\"expert_score\":0.8}\n";
    }
  }
  std::ofstream(workdir() / "probe0.json")
      << R"({"kind":"logistic","dim":2,"weights":[0,0],"intercept":0})";
  std::ofstream(workdir() / "ridge0.cfg") << "dv.l2_strength = 0\n";
  const auto cmd = std::string(CTD_CLI_PATH) + " --config " + (workdir() / "ridge0.cfg").string() +
                   " --out-dir " + (workdir() / "out").string() + " train-dv --data " +
                   (workdir() / "flat.jsonl").string() + " --probe " + (workdir() / "probe0.json").string() +
                   " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  EXPECT_EQ(WEXITSTATUS(status), 2);
}
