#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <string>
#include <sys/wait.h>

namespace {

struct LabRun {
  int code = -1;
  std::string output;
};

// Runs fbm-lab with stdout and stderr merged.
LabRun lab(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + std::string(FBM_LAB_PATH) + " " + args + " 2>&1";
  LabRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 512> buf{};
  while (fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("fbm_cli_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Cli, HelpExitsZero) {
  EXPECT_EQ(lab("--help").code, 0);
  EXPECT_EQ(lab("train --help").code, 0);
}

TEST(Cli, TrainWithoutDatasetIsUsageError) {
  const LabRun r = lab("train --out " + scratch("nodata").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("--dataset"), std::string::npos) << r.output;
}

TEST(Cli, UnknownFlagAndMissingSubcommandAreUsageErrors) {
  EXPECT_EQ(lab("train --no-such-flag 3").code, 2);
  EXPECT_EQ(lab("").code, 2);
  EXPECT_EQ(lab("gen-data --out x --set notakeyvalue").code, 2);
}

TEST(Cli, OracleCheckPassesAndWritesManifest) {
  const auto out = scratch("oracle");
  const LabRun r = lab("oracle-check --out " + out.string());
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(std::filesystem::exists(out / "manifest.json"));
  EXPECT_TRUE(std::filesystem::exists(out / "oracle.json"));
}

TEST(Cli, GenTrainEvalPipeline) {
  const auto root = scratch("pipeline");
  const auto data = root / "data", run = root / "run", eval = root / "eval";
  LabRun r = lab("gen-data --out " + data.string() + " --episodes 4 --set env.episode_length=20");
  ASSERT_EQ(r.code, 0) << r.output;
  r = lab("train --dataset " + (data / "dataset.fbmd").string() + " --out " + run.string() +
          " --steps 20 --set train.batch_size=8 --set train.checkpoint_every=10");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(std::filesystem::exists(run / "metrics.csv"));
  EXPECT_TRUE(std::filesystem::exists(run / "manifest.json"));
  r = lab("eval --checkpoint " + run.string() + " --dataset " + (data / "dataset.fbmd").string() +
          " --out " + eval.string() + " --set eval.rollouts=1 --set eval.labels_k=40");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(std::filesystem::exists(eval / "scores.csv"));
  EXPECT_TRUE(std::filesystem::exists(eval / "summary.json"));
}

TEST(Cli, ThreadsEnvVarIsHonoured) {
  const auto out = scratch("threads");
  const LabRun bad = lab("gen-data --episodes 2 --out " + out.string(), "FBM_THREADS=0");
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.output.find("FBM_THREADS"), std::string::npos) << bad.output;
  EXPECT_EQ(lab("gen-data --episodes 2 --out " + out.string(), "FBM_THREADS=1").code, 0);
}
