#include <gtest/gtest.h>
#include <nlohmann/json.hpp>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pavepci/cli.hpp"
#include "pavepci/data.hpp"
#include "pavepci/errors.hpp"
#include "pavepci/image.hpp"

namespace fs = std::filesystem;
using namespace pavepci;
using namespace pavepci::cli;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

MetricReport report(const std::string& name, double rmse, double mae, double mape, double r2) {
  MetricReport r;
  r.model = name;
  r.rmse = rmse;
  r.mae = mae;
  r.mape = mape;
  r.r2 = r2;
  r.n = 771;
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("pavepci_cli_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    const CliRun fx = run({"make-fixture", (root_ / "fixture").string(), "--count", "10", "--fixture-size", "48"});
    ASSERT_EQ(fx.code, 0) << fx.err;
    const CliRun tr = run({"train", (root_ / "fixture" / "manifest.csv").string(), "--output-dir",
                        (root_ / "run").string(), "--image-size", "32", "--max-epochs", "2",
                        "--no-augment", "--batch-size", "4", "--seed", "5"});
    ASSERT_EQ(tr.code, 0) << tr.err;
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static fs::path manifest() { return root_ / "fixture" / "manifest.csv"; }
  static fs::path checkpoint() { return root_ / "run" / "best.ckpt"; }
  static inline fs::path root_;
};

}  // namespace

TEST(ConfigText, ParsesCommentsAndDashes) {
  const auto v = parse_config_text("# header\nlr = 0.001  # inline\n\ngallery-k=4\n");
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v.at("lr"), "0.001");
  EXPECT_EQ(v.at("gallery_k"), "4");
  EXPECT_THROW(parse_config_text("lr 0.001\n"), ConfigError);
  EXPECT_THROW(parse_config_text(" = 3\n"), ConfigError);
}

TEST(ConfigText, FormatRoundTrips) {
  const std::map<std::string, std::string> v{{"seed", "7"}, {"alpha", "0.25"}, {"family", "resnet50"}};
  const std::string text = format_config(v);
  EXPECT_EQ(text, "alpha = 0.25\nfamily = resnet50\nseed = 7\n");
  EXPECT_EQ(parse_config_text(text), v);
}

TEST(Compare, MarksLowestRmseOfPublishedTriple) {
  const Comparison c = compare_reports({report("ResNet50", 19.2841, 14.0296, 70.7574, 0.56),
                                        report("DenseNet161", 19.1858, 13.9583, 65.4751, 0.57),
                                        report("ResNet50 + CBAM", 18.7194, 13.9311, 58.5616, 0.61)});
  EXPECT_NE(c.text.find("18.7194*"), std::string::npos) << c.text;
  EXPECT_EQ(c.text.find("19.2841*"), std::string::npos);
  EXPECT_EQ(c.text.find("19.1858*"), std::string::npos);
  EXPECT_NE(c.text.find("0.6100*"), std::string::npos);
  const auto j = nlohmann::json::parse(c.json);
  EXPECT_EQ(j["best"]["rmse"], "ResNet50 + CBAM");
  EXPECT_EQ(j["best"]["mape"], "ResNet50 + CBAM");
  EXPECT_EQ(j["best"]["r2"], "ResNet50 + CBAM");
}

TEST(Compare, TextAndJsonCarryTheSameNumbers) {
  const Comparison c = compare_reports({report("a", 1.23456, 0.5, 10.0, 0.9), report("b", 2.0, 0.25, 12.5, 0.8)});
  const auto j = nlohmann::json::parse(c.json);
  for (const auto& row : j["rows"]) {
    for (const char* key : {"rmse", "mae", "mape", "r2"}) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4f", row[key].get<double>());
      EXPECT_NE(c.text.find(buf), std::string::npos) << key;
    }
  }
}

TEST(Compare, UndefinedValuesShowAsNa) {
  MetricReport a = report("a", 1, 1, 1, 1);
  a.r2.reset();
  const Comparison c = compare_reports({a, report("b", 2, 2, 2, 0.5)});
  EXPECT_NE(c.text.find("n/a"), std::string::npos);
  const auto j = nlohmann::json::parse(c.json);
  EXPECT_TRUE(j["rows"][0]["r2"].is_null());
  EXPECT_EQ(j["best"]["r2"], "b");
}

TEST(Compare, RejectsSingleReportAndDuplicateNames) {
  EXPECT_THROW(compare_reports({report("a", 1, 1, 1, 1)}), ConfigError);
  EXPECT_THROW(compare_reports({report("a", 1, 1, 1, 1), report("a", 2, 2, 2, 2)}), ConfigError);
}

TEST(ExitCodes, UsageErrorsReturnTwo) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"train", "--no-such-flag", "1"}).code, kExitUsage);
  const CliRun bad_family = run({"train", "m.csv", "--family", "vgg16", "--output-dir",
                              (fs::temp_directory_path() / "pavepci_cli_badfam").string()});
  EXPECT_EQ(bad_family.code, kExitUsage);
  EXPECT_NE(bad_family.err.find("Usage"), std::string::npos) << bad_family.err;
  fs::remove_all(fs::temp_directory_path() / "pavepci_cli_badfam");
}

TEST(ExitCodes, HelpIsSuccess) {
  const CliRun r = run({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("visualize"), std::string::npos);
}

TEST(ExitCodes, RuntimeFailureReturnsOne) {
  const fs::path out = fs::temp_directory_path() / ("pavepci_cli_missing_" + std::to_string(::getpid()));
  const CliRun r = run({"train", "/nonexistent/manifest.csv", "--output-dir", out.string()});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
  fs::remove_all(out);
}

TEST(ExitCodes, UnknownConfigKeyIsUsageError) {
  const fs::path dir = fs::temp_directory_path() / ("pavepci_cli_cfg_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  std::ofstream(dir / "bad.cfg") << "lr = 0.1\nlearning_rate = 0.1\n";
  const CliRun r = run({"make-fixture", (dir / "fx").string(), "--config", (dir / "bad.cfg").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("learning_rate"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Precedence, DefaultsThenEnvThenFileThenFlags) {
  const fs::path dir = fs::temp_directory_path() / ("pavepci_cli_prec_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "f.cfg") << "count = 4\nseed = 3\npci_min = 20\n";
  ::setenv("PAVE_PCI_OUTPUT_DIR", (dir / "from_env").string().c_str(), 1);
  const CliRun r = run({"make-fixture", "--config", (dir / "f.cfg").string(), "--count", "5"});
  ::unsetenv("PAVE_PCI_OUTPUT_DIR");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto resolved = parse_config_text(slurp(dir / "from_env" / "config.resolved"));
  EXPECT_EQ(resolved.at("output_dir"), (dir / "from_env").string());
  EXPECT_EQ(resolved.at("count"), "5");
  EXPECT_EQ(resolved.at("seed"), "3");
  EXPECT_EQ(resolved.at("pci_min"), "20");
  EXPECT_EQ(resolved.at("pci_max"), "95");
  EXPECT_EQ(load_manifest(dir / "from_env" / "manifest.csv").size(), 5u);
  fs::remove_all(dir);
}

TEST_F(CliTest, TrainWritesArtifacts) {
  const fs::path run_dir = root_ / "run";
  EXPECT_TRUE(fs::exists(run_dir / "best.ckpt"));
  EXPECT_TRUE(fs::exists(run_dir / "split.csv"));
  EXPECT_TRUE(fs::exists(run_dir / "config.resolved"));
  const std::string log = slurp(run_dir / "train_log.csv");
  EXPECT_EQ(log.rfind("epoch,train_loss,val_mae,val_mape,val_rmse,lr\n", 0), 0u) << log;
}

TEST_F(CliTest, ReplayFromResolvedConfigGivesIdenticalLog) {
  const fs::path replay = root_ / "replay";
  const CliRun r = run({"train", "--config", (root_ / "run" / "config.resolved").string(), "--output-dir",
                     replay.string(), "--verbose=false"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(replay / "train_log.csv"), slurp(root_ / "run" / "train_log.csv"));
  EXPECT_EQ(slurp(replay / "split.csv"), slurp(root_ / "run" / "split.csv"));
}

TEST_F(CliTest, EvaluateWritesOneRowPerSampleAndMatchingMetrics) {
  const fs::path out = root_ / "eval";
  const CliRun r = run({"evaluate", checkpoint().string(), manifest().string(), "--output-dir", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(out / "predictions.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "image_path,actual_pci,predicted_pci");
  std::vector<double> actual, predicted;
  while (std::getline(in, line)) {
    const auto a = line.find(','), b = line.rfind(',');
    actual.push_back(std::stod(line.substr(a + 1, b - a - 1)));
    predicted.push_back(std::stod(line.substr(b + 1)));
  }
  ASSERT_EQ(actual.size(), 10u);
  const auto j = nlohmann::json::parse(slurp(out / "metrics.json"));
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) abs_sum += std::abs(actual[i] - predicted[i]);
  EXPECT_NEAR(j["mae"].get<double>(), abs_sum / 10.0, 1e-12);
  EXPECT_EQ(j["n"], 10);
  EXPECT_EQ(j["model"], "resnet50_cbam");
}

TEST_F(CliTest, EvaluateRejectsFamilyMismatch) {
  const CliRun r = run({"evaluate", checkpoint().string(), manifest().string(), "--family", "densenet161",
                     "--output-dir", (root_ / "mismatch").string()});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find("densenet161"), std::string::npos);
}

TEST_F(CliTest, PredictListsEveryImage) {
  const auto records = load_manifest(manifest());
  const CliRun r = run({"predict", checkpoint().string(), records[0].image_path.string(),
                     records[1].image_path.string(), "--output-dir", (root_ / "pred").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 3);
}

TEST_F(CliTest, VisualizeWritesTwoGalleriesOfKCells) {
  const fs::path out = root_ / "vis";
  const CliRun r = run({"visualize", checkpoint().string(), manifest().string(), "--gallery-k", "3",
                     "--output-dir", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  int galleries = 0;
  for (const auto& e : fs::directory_iterator(out / "figures")) {
    if (e.path().filename().string().rfind("gallery_", 0) == 0) ++galleries;
  }
  EXPECT_EQ(galleries, 2);
  for (const char* name : {"gallery_best.png", "gallery_worst.png"}) {
    const Image g = read_image(out / "figures" / name);
    EXPECT_EQ(g.width, 10 + 3 * 170) << name;  // three cells in one row
  }
  std::size_t overlays = 0;
  for (const auto& e : fs::directory_iterator(out / "figures" / "overlays")) overlays += e.is_regular_file();
  EXPECT_EQ(overlays, 10u);

  const fs::path again = root_ / "vis_again";
  ASSERT_EQ(run({"visualize", checkpoint().string(), manifest().string(), "--gallery-k", "3",
                 "--output-dir", again.string()})
                .code,
            0);
  EXPECT_EQ(slurp(out / "figures" / "index.json"), slurp(again / "figures" / "index.json"));
}

TEST_F(CliTest, VisualizeOverlaysNeedAttention) {
  const fs::path base = root_ / "base";
  ASSERT_EQ(run({"train", manifest().string(), "--family", "resnet50", "--output-dir", base.string(),
                 "--image-size", "32", "--max-epochs", "1", "--no-augment", "--verbose=false"})
                .code,
            0);
  const CliRun r = run({"visualize", (base / "best.ckpt").string(), manifest().string(), "--output-dir",
                     (root_ / "vis_base").string()});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find("overlays"), std::string::npos);
  const CliRun plots_only = run({"visualize", (base / "best.ckpt").string(), manifest().string(), "--no-overlays",
                              "--output-dir", (root_ / "vis_base2").string()});
  EXPECT_EQ(plots_only.code, 0) << plots_only.err;
}

TEST_F(CliTest, CompareReadsReportFiles) {
  const fs::path dir = root_ / "reports";
  fs::create_directories(dir);
  std::ofstream(dir / "a.json") << to_json(report("ResNet50", 19.2841, 14.0296, 70.7574, 0.56));
  std::ofstream(dir / "b.json") << to_json(report("DenseNet161", 19.1858, 13.9583, 65.4751, 0.57));
  std::ofstream(dir / "c.json") << to_json(report("ResNet50 + CBAM", 18.7194, 13.9311, 58.5616, 0.61));
  const CliRun r = run({"compare", (dir / "a.json").string(), (dir / "b.json").string(), (dir / "c.json").string(),
                     "--output-dir", (root_ / "cmp").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("18.7194*"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(root_ / "cmp" / "comparison.json"));
  const CliRun single = run({"compare", (dir / "a.json").string(), "--output-dir", (root_ / "cmp1").string()});
  EXPECT_EQ(single.code, kExitUsage);
}
