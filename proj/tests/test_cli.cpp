#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "gapkit/cli.hpp"
#include "gapkit/records.hpp"

namespace gapkit {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Result r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gapkit_test_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

// A small run shared by the tests below.
const fs::path& tiny_run() {
  static const fs::path dir = [] {
    const fs::path d = scratch("run");
    const Result r = cli({"train-nets", "--preset", "custom", "--sizes", "50", "--loops", "1",
                          "--sigmas", "0,0.05", "--seeds", "1,2,3", "--num-hparams", "6",
                          "--train-steps", "200", "--test-size", "400", "--checkpoint", "true",
                          "--out", d.string(), "--quiet"});
    EXPECT_EQ(r.code, 0) << r.err;
    return d;
  }();
  return dir;
}

TEST(Cli, HelpExitsZero) {
  const Result r = cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("train-nets"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"evaluate"}).code, 2);  // missing --run
  EXPECT_EQ(cli({"train-nets", "--preset", "huge", "--out", scratch("bad").string()}).code, 2);
  EXPECT_EQ(cli({"train-nets", "--train-steps", "0", "--out", scratch("bad").string()}).code, 2);
}

TEST(Cli, MissingRunDirectoryExitsOne) {
  const Result r = cli({"evaluate", "--run", "/nonexistent/gapkit_run", "--scope", "per-dataset",
                        "--regime", "same-dist", "--family", "linear", "--labels", "gap"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("/nonexistent/gapkit_run"), std::string::npos) << r.err;
}

TEST(Cli, InvalidCellExitsTwo) {
  const Result r = cli({"evaluate", "--run", tiny_run().string(), "--scope", "per-dataset",
                        "--regime", "unseen-datasets", "--family", "linear", "--labels", "gap"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("single_model"), std::string::npos) << r.err;
}

TEST(Cli, TrainNetsWritesRunFiles) {
  const fs::path& run = tiny_run();
  EXPECT_TRUE(fs::exists(run / "records.jsonl"));
  EXPECT_TRUE(fs::exists(run / "config.txt"));
  EXPECT_TRUE(fs::exists(run / "manifest.json"));
  EXPECT_EQ(read_records(run / "records.jsonl").size(), 36u);
}

TEST(Cli, EvaluatePrintsJsonCellAndUpdatesManifest) {
  const fs::path& run = tiny_run();
  const fs::path calib = run / "calib.csv";
  const Result r = cli({"evaluate", "--run", run.string(), "--scope", "per-dataset", "--regime",
                        "same-dist", "--family", "linear", "--labels", "gap", "--calibration",
                        calib.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto cell = nlohmann::json::parse(r.out);
  EXPECT_EQ(cell.at("family"), "linear");
  EXPECT_EQ(cell.at("regime"), "same_dist");
  EXPECT_EQ(cell.at("per_fold").at("r2").size(), 3u);
  EXPECT_EQ(cell.at("n").get<int>() + cell.at("excluded_diverged").get<int>(), 36);
  const auto manifest = nlohmann::json::parse(read_text_file(run / "manifest.json"));
  EXPECT_TRUE(manifest.contains("eval_per_dataset_same_dist_linear_gap"));
  const std::string csv = read_text_file(calib);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "net_id,prediction,label");
}

TEST(Cli, ReportWritesTable) {
  const fs::path& run = tiny_run();
  const Result r = cli({"report", "--run", run.string(), "--labels", "test_acc", "--families",
                        "linear,rnn", "--steps", "20"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Linear"), std::string::npos);
  EXPECT_NE(r.out.find("RNN"), std::string::npos);
  EXPECT_EQ(r.out.find("DNN"), std::string::npos);
  EXPECT_TRUE(fs::exists(run / "report" / "table_test_acc.txt"));
  EXPECT_TRUE(fs::exists(run / "report" / "report_test_acc.jsonl"));
  const auto manifest = nlohmann::json::parse(read_text_file(run / "manifest.json"));
  EXPECT_EQ(manifest.at("report_test_acc").size(), 10u);
}

TEST(Cli, TrainGgpWritesModel) {
  const fs::path& run = tiny_run();
  const fs::path model = run / "linear.json";
  const Result r = cli({"train-ggp", "--run", run.string(), "--family", "linear", "--scope",
                        "single-model", "--labels", "gap", "--regime", "same-dist", "--fold", "0",
                        "--out", model.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(read_text_file(model));
  EXPECT_EQ(j.at("format"), "gapkit-ggp");
  EXPECT_EQ(cli({"train-ggp", "--run", run.string(), "--fold", "0", "--out", model.string()}).code, 2);
}

TEST(Cli, ExtractSignaturesMatchesRecords) {
  const fs::path& run = tiny_run();
  const fs::path out = run / "sig.jsonl";
  const Result r = cli({"extract-signatures", "--run", run.string(), "--lambda", "0.5", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto records = read_records(run / "records.jsonl");
  std::istringstream lines(read_text_file(out));
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    const auto id = j.at("net_id").get<std::size_t>();
    const auto& sig = records.at(id).signature;
    ASSERT_TRUE(sig.has_value());
    for (std::size_t l = 0; l < sig->rows.size(); ++l)
      for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(j.at("signature")[l][k].get<double>(), sig->rows[l][k]);
    ++n;
  }
  EXPECT_GT(n, 0u);
}

TEST(Cli, GenDatasetsAndSampleHparams) {
  const fs::path dir = scratch("gen");
  Result r = cli({"gen-datasets", "--spec", "k=2,sigma=0.05,m=100,seed=3", "--out", dir.string(),
                  "--test-size", "50"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    (void)e;
    ++files;
  }
  EXPECT_EQ(files, 2u);
  r = cli({"sample-hparams", "--count", "5", "--seed", "2019"});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 5);
  EXPECT_EQ(cli({"gen-datasets", "--out", dir.string()}).code, 2);
}

TEST(Cli, ExportAnalysis) {
  const fs::path& run = tiny_run();
  const fs::path svg = run / "svg";
  const Result r = cli({"export-analysis", "--run", run.string(), "--out", (run / "a.csv").string(),
                        "--svg-dir", svg.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(svg / "gap_vs_train_acc_dropout.svg"));
}

TEST(Cli, BinaryExitCodes) {
  const std::string bin = GAPKIT_CLI_PATH;
  EXPECT_EQ(std::system((bin + " --help > /dev/null").c_str()), 0);
  const int bad = std::system((bin + " nonsense > /dev/null 2>&1").c_str());
  ASSERT_TRUE(WIFEXITED(bad));
  EXPECT_EQ(WEXITSTATUS(bad), 2);
  const int missing = std::system((bin + " export-analysis --run /nonexistent --out /tmp/x.csv > /dev/null 2>&1").c_str());
  ASSERT_TRUE(WIFEXITED(missing));
  EXPECT_EQ(WEXITSTATUS(missing), 1);
}

}  // namespace
}  // namespace gapkit
