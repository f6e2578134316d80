// End-to-end checks of the command-line tool: outputs, manifests, determinism
// across reruns, and exit codes.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "cass/dataset.hpp"

namespace fs = std::filesystem;

namespace {

fs::path test_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "cass_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Runs the tool via the shell; stdout/stderr land next to the outputs.
int run_cli(const std::string& args, const fs::path& dir,
            const std::string& env_prefix = "") {
  std::string cmd = env_prefix + (env_prefix.empty() ? "" : " ") + CASS_BIN +
                    " " + args + " > " + (dir / "stdout.txt").string() +
                    " 2> " + (dir / "stderr.txt").string();
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> read_kv(const fs::path& path) {
  std::map<std::string, std::string> out;
  std::ifstream is(path);
  std::string line;
  while (std::getline(is, line)) {
    auto eq = line.find('=');
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

std::string checksum_hex(const fs::path& path) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(
                    cass::file_checksum(path.string())));
  return buf;
}

// Small dataset: 2 categories x 10 instances x 1 view, 4 held-out records.
int gen_tiny(const fs::path& dir, const fs::path& out, std::uint64_t seed = 5) {
  return run_cli(
      "gen-data --categories bottle,laptop --instances-per-category 10 "
      "--views-per-instance 1 --points 32 --obs-points 24 --seed " +
          std::to_string(seed) + " --out " + out.string(),
      dir);
}

fs::path write_tiny_config(const fs::path& dir, const std::string& extra = "") {
  fs::path path = dir / "config.txt";
  std::ofstream os(path);
  os << "latent_dim=8\npoints_m=32\nobs_points_p=24\n"
        "iters_s1=3\niters_s2=3\niters_s3=2\nlr_decay_every=2\n"
        "batch_size=4\nseed=3\nlog_every=1\n"
     << extra;
  return path;
}

int train_tiny(const fs::path& dir, const fs::path& data,
               const fs::path& config, const fs::path& out_dir,
               const std::string& extra = "") {
  return run_cli("train --config " + config.string() + " --data " +
                     data.string() + " --out-dir " + out_dir.string() + " " +
                     extra,
                 dir);
}

TEST(CliGenData, SameSeedSameBytesDifferentSeedDifferentChecksum) {
  fs::path dir = test_dir("gen_determinism");
  ASSERT_EQ(gen_tiny(dir, dir / "a.cass", 5), 0);
  ASSERT_EQ(gen_tiny(dir, dir / "b.cass", 5), 0);
  ASSERT_EQ(gen_tiny(dir, dir / "c.cass", 6), 0);
  EXPECT_EQ(read_file(dir / "a.cass"), read_file(dir / "b.cass"));
  auto a = read_kv(dir / "a.cass.manifest");
  auto b = read_kv(dir / "b.cass.manifest");
  auto c = read_kv(dir / "c.cass.manifest");
  EXPECT_EQ(a["dataset.checksum"], b["dataset.checksum"]);
  EXPECT_NE(a["dataset.checksum"], c["dataset.checksum"]);
}

TEST(CliGenData, ManifestReferencesOutputByChecksum) {
  fs::path dir = test_dir("gen_manifest");
  ASSERT_EQ(gen_tiny(dir, dir / "data.cass"), 0);
  auto kv = read_kv(dir / "data.cass.manifest");
  EXPECT_EQ(kv["command"], "gen-data");
  EXPECT_EQ(kv["seed"], "5");
  EXPECT_EQ(kv["dataset.path"], (dir / "data.cass").string());
  EXPECT_EQ(kv["dataset.checksum"], checksum_hex(dir / "data.cass"));
}

TEST(CliGenData, RelativeOutputLandsUnderEnvDir) {
  fs::path dir = test_dir("gen_envdir");
  fs::path redirect = dir / "redirect";
  int code = run_cli(
      "gen-data --categories bottle --instances-per-category 6 "
      "--views-per-instance 1 --points 32 --obs-points 24 --out data.cass",
      dir, "CASS_OUT_DIR=" + redirect.string());
  ASSERT_EQ(code, 0);
  EXPECT_TRUE(fs::exists(redirect / "data.cass"));
  EXPECT_TRUE(fs::exists(redirect / "data.cass.manifest"));
}

TEST(CliTrain, WritesCheckpointsCurveAndManifest) {
  fs::path dir = test_dir("train_outputs");
  ASSERT_EQ(gen_tiny(dir, dir / "data.cass"), 0);
  fs::path config = write_tiny_config(dir);
  ASSERT_EQ(train_tiny(dir, dir / "data.cass", config, dir / "run"), 0);

  for (int stage : {1, 2, 3})
    EXPECT_TRUE(
        fs::exists(dir / "run" / ("stage" + std::to_string(stage) + ".ckpt")));
  std::string curve = read_file(dir / "run" / "loss.csv");
  EXPECT_EQ(curve.substr(0, curve.find('\n')), "stage,iteration,term,value");

  auto kv = read_kv(dir / "run" / "manifest.txt");
  EXPECT_EQ(kv["command"], "train");
  EXPECT_EQ(kv["config.seed"], "3");
  EXPECT_EQ(kv["data.checksum"], checksum_hex(dir / "data.cass"));
  EXPECT_EQ(kv["stage3_checkpoint.checksum"],
            checksum_hex(dir / "run" / "stage3.ckpt"));
}

TEST(CliTrain, RerunsAreBitIdentical) {
  fs::path dir = test_dir("train_determinism");
  ASSERT_EQ(gen_tiny(dir, dir / "data.cass"), 0);
  fs::path config = write_tiny_config(dir);
  ASSERT_EQ(train_tiny(dir, dir / "data.cass", config, dir / "run1"), 0);
  ASSERT_EQ(train_tiny(dir, dir / "data.cass", config, dir / "run2"), 0);
  EXPECT_EQ(read_file(dir / "run1" / "stage3.ckpt"),
            read_file(dir / "run2" / "stage3.ckpt"));
  EXPECT_EQ(read_file(dir / "run1" / "loss.csv"),
            read_file(dir / "run2" / "loss.csv"));
}

TEST(CliTrain, StagedRunMatchesSingleRunBitExactly) {
  fs::path dir = test_dir("train_staged");
  ASSERT_EQ(gen_tiny(dir, dir / "data.cass"), 0);
  fs::path config = write_tiny_config(dir);
  ASSERT_EQ(train_tiny(dir, dir / "data.cass", config, dir / "all"), 0);
  ASSERT_EQ(train_tiny(dir, dir / "data.cass", config, dir / "s1",
                       "--stage 1"),
            0);
  ASSERT_EQ(train_tiny(dir, dir / "data.cass", config, dir / "s2",
                       "--stage 2 --resume " + (dir / "s1" / "stage1.ckpt").string()),
            0);
  ASSERT_EQ(train_tiny(dir, dir / "data.cass", config, dir / "s3",
                       "--stage 3 --resume " + (dir / "s2" / "stage2.ckpt").string()),
            0);
  EXPECT_EQ(read_file(dir / "all" / "stage3.ckpt"),
            read_file(dir / "s3" / "stage3.ckpt"));
}

TEST(CliTrain, LaterStageWithoutResumeIsUsageError) {
  fs::path dir = test_dir("train_needs_resume");
  ASSERT_EQ(gen_tiny(dir, dir / "data.cass"), 0);
  fs::path config = write_tiny_config(dir);
  EXPECT_EQ(train_tiny(dir, dir / "data.cass", config, dir / "run",
                       "--stage 2"),
            2);
  EXPECT_NE(read_file(dir / "stderr.txt").find("--resume"), std::string::npos);
}

TEST(CliTrain, MissingDatasetIsIoError) {
  fs::path dir = test_dir("train_missing_data");
  fs::path config = write_tiny_config(dir);
  EXPECT_EQ(train_tiny(dir, dir / "nope.cass", config, dir / "run"), 4);
}

TEST(CliTrain, DivergingLossIsNumericError) {
  fs::path dir = test_dir("train_divergence");
  ASSERT_EQ(gen_tiny(dir, dir / "data.cass"), 0);
  fs::path config = write_tiny_config(dir, "lr=1e154\n");
  EXPECT_EQ(train_tiny(dir, dir / "data.cass", config, dir / "run"), 3);
  EXPECT_NE(read_file(dir / "stderr.txt").find("non-finite"),
            std::string::npos);
}

TEST(CliUsage, BadFlagsAndSubcommandsExitTwo) {
  fs::path dir = test_dir("usage_errors");
  EXPECT_EQ(run_cli("", dir), 2);
  EXPECT_EQ(run_cli("frobnicate", dir), 2);
  EXPECT_EQ(run_cli("train --data x --frobnicate", dir), 2);
  EXPECT_EQ(run_cli("gen-data --seed notanumber", dir), 2);
}

TEST(CliEval, WritesMetricsApCurvesAndManifest) {
  fs::path dir = test_dir("eval_outputs");
  ASSERT_EQ(gen_tiny(dir, dir / "data.cass"), 0);
  fs::path config = write_tiny_config(dir);
  ASSERT_EQ(train_tiny(dir, dir / "data.cass", config, dir / "run"), 0);
  int code = run_cli("eval --checkpoint " +
                         (dir / "run" / "stage3.ckpt").string() + " --data " +
                         (dir / "data.cass").string() + " --out-csv " +
                         (dir / "m.csv").string() + " --svg " +
                         (dir / "curves.svg").string(),
                     dir);
  ASSERT_EQ(code, 0);

  std::istringstream metrics(read_file(dir / "m.csv"));
  std::string line;
  std::getline(metrics, line);
  EXPECT_EQ(line, "category,count,IoU25,IoU50,5d5cm,10d5cm,10d10cm,CD,EMD");
  std::vector<std::string> rows;
  while (std::getline(metrics, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 3u);  // two categories + overall
  EXPECT_EQ(rows.back().substr(0, 8), "overall,");

  std::string ap = read_file(dir / "m.ap.csv");
  EXPECT_EQ(ap.substr(0, ap.find('\n')), "metric,category,threshold,ap");
  EXPECT_EQ(read_file(dir / "curves.svg").substr(0, 4), "<svg");

  // 4 held-out records: probe skipped, noted on stderr.
  EXPECT_FALSE(fs::exists(dir / "m.probe.csv"));
  EXPECT_NE(read_file(dir / "stderr.txt").find("skipping factorization probe"),
            std::string::npos);

  auto kv = read_kv(dir / "m.csv.manifest");
  EXPECT_EQ(kv["checkpoint.checksum"],
            checksum_hex(dir / "run" / "stage3.ckpt"));
  EXPECT_EQ(kv["metrics_csv.checksum"], checksum_hex(dir / "m.csv"));
  EXPECT_EQ(kv["split"], "test");
}

TEST(CliEval, CheckpointDatasetMismatchIsUsageError) {
  fs::path dir = test_dir("eval_mismatch");
  ASSERT_EQ(gen_tiny(dir, dir / "data.cass"), 0);
  fs::path config = write_tiny_config(dir);
  ASSERT_EQ(train_tiny(dir, dir / "data.cass", config, dir / "run"), 0);
  ASSERT_EQ(run_cli(
                "gen-data --categories bottle --instances-per-category 6 "
                "--views-per-instance 1 --points 48 --obs-points 24 --out " +
                    (dir / "wide.cass").string(),
                dir),
            0);
  EXPECT_EQ(run_cli("eval --checkpoint " +
                        (dir / "run" / "stage3.ckpt").string() + " --data " +
                        (dir / "wide.cass").string() + " --out-csv " +
                        (dir / "m.csv").string(),
                    dir),
            2);
}

TEST(CliAblate, WritesOneRowPerAblation) {
  fs::path dir = test_dir("ablate_table");
  ASSERT_EQ(gen_tiny(dir, dir / "data.cass"), 0);
  fs::path config = write_tiny_config(dir);
  int code = run_cli("ablate --config " + config.string() + " --data " +
                         (dir / "data.cass").string() +
                         " --ablations none,no_vae --out " +
                         (dir / "table.csv").string(),
                     dir);
  ASSERT_EQ(code, 0);
  std::istringstream table(read_file(dir / "table.csv"));
  std::string line;
  std::getline(table, line);
  EXPECT_EQ(line, "ablation,count,IoU25,IoU50,5d5cm,10d5cm,10d10cm,CD,EMD");
  std::vector<std::string> rows;
  while (std::getline(table, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].substr(0, 5), "none,");
  EXPECT_EQ(rows[1].substr(0, 7), "no_vae,");
  EXPECT_TRUE(fs::exists(dir / "table.csv.manifest"));
}

}  // namespace
