// End-to-end checks of the installed command-line surface: exit codes,
// stdout summaries, artifact contracts.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kCli = VOXENC_CLI_PATH;

struct CommandResult {
  int exit_code = -1;
  std::string stdout_text;
};

CommandResult run_cli(const std::string& args, const fs::path& stdout_file) {
  const std::string command = kCli + " " + args + " > " + stdout_file.string() + " 2>/dev/null";
  const int status = std::system(command.c_str());
  CommandResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(stdout_file);
  std::stringstream ss;
  ss << in.rdbuf();
  result.stdout_text = ss.str();
  return result;
}

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "voxenc_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Cli, FullPipelineProducesTheContractedArtifacts) {
  const auto dir = temp_dir("pipeline");
  const auto out = dir / "stdout.json";

  auto result = run_cli("synth --out " + (dir / "study").string() +
                            " --spec /dev/null --seed 42",
                        out);
  // /dev/null is not valid JSON: data error.
  EXPECT_EQ(result.exit_code, 2);

  result = run_cli("synth --out " + (dir / "study").string(), out);
  ASSERT_EQ(result.exit_code, 0) << result.stdout_text;
  const json synth_summary = json::parse(result.stdout_text);
  EXPECT_EQ(synth_summary.at("command"), "synth");
  EXPECT_EQ(synth_summary.at("n_subjects").get<int>(), 5);

  result = run_cli("fit --manifest " + (dir / "study" / "manifest.json").string() + " --out " +
                       (dir / "fit").string() + " --threads 2",
                   out);
  ASSERT_EQ(result.exit_code, 0);
  const json fit_summary = json::parse(result.stdout_text);
  EXPECT_EQ(fit_summary.at("maps").size(), 5u);  // one map per subject
  for (const auto& name : fit_summary.at("maps"))
    EXPECT_TRUE(fs::exists(dir / "fit" / name.get<std::string>()));
  EXPECT_TRUE(fs::exists(dir / "fit" / "fit_report.json"));

  std::string maps_flag = " --maps";
  for (int s = 1; s <= 5; ++s)
    maps_flag += " " + (dir / "fit" / ("sub-0" + std::to_string(s) + "_rmap.npy")).string();
  result = run_cli("group" + maps_flag + " --out " + (dir / "group").string() +
                       " --fwhm-mm 3 --alpha 0.1",
                   out);
  ASSERT_EQ(result.exit_code, 0);
  const json group_summary = json::parse(result.stdout_text);
  EXPECT_EQ(group_summary.at("mode"), "one-sample");
  EXPECT_EQ(group_summary.at("df").get<int>(), 4);
  EXPECT_TRUE(fs::exists(dir / "group" / "t.npy"));
  EXPECT_TRUE(fs::exists(dir / "group" / "survived.npy"));

  result = run_cli("select --map " + (dir / "fit" / "sub-01_rmap.npy").string() + " --pct 25" +
                       " --out " + (dir / "sets" / "a.json").string(),
                   out);
  ASSERT_EQ(result.exit_code, 0);
  EXPECT_EQ(json::parse(result.stdout_text).at("n_selected").get<int>(), 50);  // 25% of 200

  for (int s = 2; s <= 3; ++s)
    run_cli("select --map " +
                (dir / "fit" / ("sub-0" + std::to_string(s) + "_rmap.npy")).string() +
                " --pct 25 --out " +
                (dir / "sets" / (std::string(1, static_cast<char>('a' + s - 1)) + ".json"))
                    .string(),
            out);
  result = run_cli("overlap --sets " + (dir / "sets" / "a.json").string() + " " +
                       (dir / "sets" / "b.json").string() + " " +
                       (dir / "sets" / "c.json").string() + " --out " +
                       (dir / "overlap.csv").string(),
                   out);
  ASSERT_EQ(result.exit_code, 0);
  const json overlap_summary = json::parse(result.stdout_text);
  EXPECT_EQ(overlap_summary.at("pairwise_percent").size(), 3u);
  EXPECT_TRUE(overlap_summary.contains("kway_percent"));
  EXPECT_TRUE(fs::exists(dir / "overlap.csv"));

  result = run_cli("score --map " + (dir / "fit" / "sub-01_rmap.npy").string() + " --set " +
                       (dir / "sets" / "a.json").string(),
                   out);
  ASSERT_EQ(result.exit_code, 0);
  const json score_summary = json::parse(result.stdout_text);
  EXPECT_TRUE(score_summary.at("brain_score").is_number());
  EXPECT_EQ(score_summary.at("subject"), "sub-01");

  result = run_cli("report --table " + std::string(VOXENC_DATA_DIR) + "/model_table.csv" +
                       " --out " + (dir / "report").string(),
                   out);
  ASSERT_EQ(result.exit_code, 0);
  EXPECT_TRUE(fs::exists(dir / "report" / "report.json"));
  EXPECT_TRUE(fs::exists(dir / "report" / "counterexamples.csv"));

  result = run_cli("render --map " + (dir / "fit" / "sub-01_rmap.npy").string() +
                       " --axis z --out " + (dir / "render").string(),
                   out);
  ASSERT_EQ(result.exit_code, 0);
  EXPECT_EQ(json::parse(result.stdout_text).at("n_slices").get<int>(), 6);
}

TEST(Cli, UsageErrorsExitOne) {
  const auto dir = temp_dir("usage");
  const auto out = dir / "stdout.json";
  EXPECT_EQ(run_cli("--definitely-not-a-flag", out).exit_code, 1);
  EXPECT_EQ(run_cli("fit", out).exit_code, 1);           // missing required flags
  EXPECT_EQ(run_cli("not-a-command", out).exit_code, 1);
  EXPECT_EQ(run_cli("--help", out).exit_code, 0);
}

TEST(Cli, DataErrorsExitTwo) {
  const auto dir = temp_dir("data_errors");
  const auto out = dir / "stdout.json";
  EXPECT_EQ(run_cli("fit --manifest " + (dir / "missing.json").string() + " --out " +
                        (dir / "o").string(),
                    out)
                .exit_code,
            2);
}

TEST(Cli, BuildDesignWritesOneDesignPerRun) {
  const auto dir = temp_dir("design");
  const auto out = dir / "stdout.json";
  ASSERT_EQ(run_cli("synth --out " + (dir / "study").string(), out).exit_code, 0);
  const auto result = run_cli("build-design --manifest " +
                                  (dir / "study" / "manifest.json").string() + " --out " +
                                  (dir / "designs").string(),
                              out);
  ASSERT_EQ(result.exit_code, 0);
  EXPECT_EQ(json::parse(result.stdout_text).at("n_designs").get<int>(), 45);  // 5 subjects x 9
  EXPECT_TRUE(fs::exists(dir / "designs" / "sub-01" / "run-01_design.npy"));
  EXPECT_TRUE(fs::exists(dir / "designs" / "sub-05" / "run-09_design.npy"));
}
