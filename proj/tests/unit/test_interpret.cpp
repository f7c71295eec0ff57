#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>

#include "pavepci/fixture.hpp"
#include "pavepci/hash.hpp"
#include "pavepci/interpret.hpp"
#include "pavepci/metrics.hpp"
#include "pavepci/render.hpp"
#include "test_util.hpp"

namespace pavepci {
namespace {

namespace fs = std::filesystem;
using testing::random_tensor;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Image gradient_image(int w, int h) {
  Image img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t* px = img.at(x, y);
      px[0] = static_cast<std::uint8_t>((x * 255) / std::max(w - 1, 1));
      px[1] = static_cast<std::uint8_t>((y * 255) / std::max(h - 1, 1));
      px[2] = static_cast<std::uint8_t>((x + y) % 256);
    }
  }
  return img;
}

TEST(Hash, KnownVectors) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_THROW(sha256_file("/nonexistent/file"), LoadError);
}

TEST(Colormap, EndpointsAndMidpoint) {
  EXPECT_EQ(jet(0.0), (Rgb{0, 0, 128}));
  EXPECT_EQ(jet(0.5), (Rgb{128, 255, 128}));
  EXPECT_EQ(jet(1.0), (Rgb{128, 0, 0}));
  EXPECT_EQ(jet(-3.0), jet(0.0));
  EXPECT_EQ(jet(7.0), jet(1.0));
  EXPECT_EQ(jet(NAN), jet(0.0));
  // Cool half is blue-dominant, warm half red-dominant.
  for (double t = 0.0; t < 0.4; t += 0.05) EXPECT_GT(jet(t).b, jet(t).r) << t;
  for (double t = 0.65; t <= 1.0; t += 0.05) EXPECT_GT(jet(t).r, jet(t).b) << t;
}

TEST(Canvas, DrawsTextAndClipsOutOfBounds) {
  Canvas c(40, 20, kWhite);
  c.text(1, 1, "R^2", kBlack);
  int dark = 0;
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 40; ++x) dark += c.get(x, y) == kBlack;
  }
  EXPECT_GT(dark, 10);
  c.line(-10, -10, 100, 100, kRed);
  c.marker(39, 19, 5, kBlue);
  EXPECT_EQ(c.get(39, 19), kBlue);
  EXPECT_EQ(Canvas::text_width("abc", 2), 36);
}

class AttentionTraceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    model_ = new Model(build_model(ArchitectureSpec::for_family(Family::resnet50_cbam), 17));
  }
  static void TearDownTestSuite() {
    delete model_;
    model_ = nullptr;
  }
  static Model* model_;
};
Model* AttentionTraceTest::model_ = nullptr;

TEST_F(AttentionTraceTest, SixteenMapsWithStageResolutions) {
  const auto x = random_tensor<float>({1, 3, 224, 224}, 3, 0.0, 1.0);
  const AttentionTrace trace = extract_attention(*model_, x);
  ASSERT_EQ(trace.entries.size(), 16u);
  const std::map<int, std::pair<int, int>> expected{{1, {56, 256}}, {2, {28, 512}}, {3, {14, 1024}}, {4, {7, 2048}}};
  std::map<int, int> per_stage;
  for (const auto& e : trace.entries) {
    ++per_stage[e.stage];
    const auto [side, channels] = expected.at(e.stage);
    EXPECT_EQ(e.spatial.shape(), (Shape{1, 1, side, side})) << e.block;
    EXPECT_EQ(e.channel.shape(), (Shape{1, channels, 1, 1})) << e.block;
    for (float v : e.spatial.storage()) ASSERT_TRUE(v > 0.0f && v < 1.0f) << e.block << " spatial " << v;
    for (float v : e.channel.storage()) ASSERT_TRUE(v > 0.0f && v < 1.0f) << e.block << " channel " << v;
  }
  EXPECT_EQ(per_stage, (std::map<int, int>{{1, 3}, {2, 4}, {3, 6}, {4, 3}}));
  EXPECT_EQ(trace.entries.front().block, "layer1.0.cbam");
  EXPECT_EQ(trace.last_of_stage(4).block, "layer4.2.cbam");
}

TEST_F(AttentionTraceTest, TracingDoesNotChangePredictions) {
  const auto x = random_tensor<float>({2, 3, 64, 64}, 4, 0.0, 1.0);
  const std::vector<double> plain = model_->predict(x);
  const AttentionTrace trace = extract_attention(*model_, x);
  ASSERT_EQ(trace.predictions.size(), 2u);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(trace.predictions[i], plain[i], 1e-6);
  EXPECT_EQ(model_->predict(x), plain);
  EXPECT_FALSE(model_->training());
}

TEST_F(AttentionTraceTest, ZeroInputGivesHalfEverywhere) {
  const AttentionTrace trace = extract_attention(*model_, Tensor<float>(1, 3, 64, 64, 0.0f));
  ASSERT_EQ(trace.entries.size(), 16u);
  for (const auto& e : trace.entries) {
    for (float v : e.spatial.storage()) ASSERT_EQ(v, 0.5f) << e.block;
    for (float v : e.channel.storage()) ASSERT_EQ(v, 0.5f) << e.block;
  }
}

TEST(AttentionTrace, BaselineModelIsUnsupported) {
  Model m = build_model(ArchitectureSpec::for_family(Family::resnet50), 1);
  EXPECT_THROW(extract_attention(m, Tensor<float>(1, 3, 32, 32)), UnsupportedModelError);
}

TEST(Overlay, ConstantHalfMapGivesUniformMidTint) {
  const Image img = gradient_image(37, 23);
  const Image out = overlay(img, Tensor<float>(1, 1, 7, 7, 0.5f), 0.5);
  const std::uint8_t mid[3] = {128, 255, 128};
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const auto want = static_cast<std::uint8_t>(std::lround(0.5 * img.pixels[i] + 0.5 * mid[i % 3]));
    ASSERT_EQ(out.pixels[i], want) << i;
  }
}

TEST(Overlay, FullAttentionRegionIsWarmEnd) {
  const Image img = gradient_image(40, 40);
  Tensor<float> map(1, 1, 4, 4, 0.0f);
  for (int y = 0; y < 4; ++y) map.at(0, 0, y, 0) = map.at(0, 0, y, 1) = 1.0f;
  const Image out = overlay(img, map, 1.0);
  for (int y = 0; y < 40; ++y) {
    for (int x = 0; x < 10; ++x) {
      const std::uint8_t* px = out.at(x, y);
      ASSERT_EQ((Rgb{px[0], px[1], px[2]}), jet(1.0)) << x << "," << y;
    }
    const std::uint8_t* far = out.at(39, y);
    EXPECT_EQ((Rgb{far[0], far[1], far[2]}), jet(0.0));
  }
  EXPECT_EQ(overlay(img, map, 0.0), img);
}

TEST(Overlay, RejectsBadAlphaAndMap) {
  const Image img = gradient_image(8, 8);
  EXPECT_THROW(overlay(img, Tensor<float>(1, 1, 2, 2, 0.5f), 1.5), ConfigError);
  EXPECT_THROW(overlay(img, Tensor<float>(1, 1, 2, 2, 0.5f), -0.1), ConfigError);
  EXPECT_THROW(overlay(img, Tensor<float>(1, 1, 2, 2, 1.5f), 0.5), InputError);
  EXPECT_THROW(overlay(img, Tensor<float>(1, 2, 2, 2, 0.5f), 0.5), InputError);
}

TEST(Overlay, GoldenOutputIsByteStable) {
  const fs::path dir = fs::temp_directory_path() / ("pavepci_golden_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const Image img = gradient_image(64, 48);
  const auto map = random_tensor<float>({1, 1, 7, 7}, 99, 0.0, 1.0);
  write_png(dir / "a.png", overlay(img, map, 0.5));
  write_png(dir / "b.png", overlay(img, map, 0.5));
  EXPECT_EQ(slurp(dir / "a.png"), slurp(dir / "b.png"));
  // Pinned pixel digest; PNG bytes may vary with the zlib version.
  const Image back = read_image(dir / "a.png");
  const std::string pixels(back.pixels.begin(), back.pixels.end());
  EXPECT_EQ(sha256_hex(pixels), "66a9404352bfff3acaa3fd651959718210ec2581274758353032db72f2d1cb21");
  fs::remove_all(dir);
}

std::vector<PredictionRow> rows_of(const std::vector<std::pair<double, double>>& pairs) {
  std::vector<PredictionRow> rows;
  for (const auto& [a, p] : pairs) rows.push_back({"", a, p});
  return rows;
}

TEST(Gallery, PublishedPairsOrderByAbsoluteError) {
  const auto rows = rows_of({{100, 97}, {62, 63}, {25, 36}});
  EXPECT_EQ(gallery_selection(rows, 2, GalleryOrder::best), (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(gallery_selection(rows, 1, GalleryOrder::worst), (std::vector<std::size_t>{2}));
}

TEST(Gallery, TiesFollowManifestOrderAndSelectionsPartition) {
  const auto rows = rows_of({{50, 52}, {10, 8}, {70, 75}, {30, 32}, {90, 85}, {40, 40}});
  EXPECT_EQ(gallery_selection(rows, 6, GalleryOrder::best), (std::vector<std::size_t>{5, 0, 1, 3, 2, 4}));
  for (std::size_t k = 1; k < rows.size(); ++k) {
    auto best = gallery_selection(rows, k, GalleryOrder::best);
    const auto worst = gallery_selection(rows, rows.size() - k, GalleryOrder::worst);
    best.insert(best.end(), worst.begin(), worst.end());
    std::sort(best.begin(), best.end());
    EXPECT_EQ(best, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5})) << "k=" << k;
  }
  EXPECT_THROW(gallery_selection({}, 1, GalleryOrder::best), InputError);
  EXPECT_THROW(gallery_selection(rows, 7, GalleryOrder::best), InputError);
  EXPECT_THROW(gallery_selection(rows, 0, GalleryOrder::worst), InputError);
}

TEST(Plots, AnnotationMatchesMetricsModule) {
  EXPECT_EQ(r2_annotation(1.0), "R^2 = 1.0000");
  std::vector<double> y{10, 20, 30, 40}, mean(4, 25.0);
  EXPECT_EQ(r2_annotation(r_squared(y, mean)), "R^2 = 0.0000");

  Rng rng(5);
  std::vector<PredictionRow> rows;
  std::vector<double> a, p;
  for (int i = 0; i < 20; ++i) {
    a.push_back(rng.uniform(0, 100));
    p.push_back(std::clamp(a.back() + rng.uniform(-20, 20), 0.0, 100.0));
    rows.push_back({"", a.back(), p.back()});
  }
  const Image scatter = render_scatter_plot(rows, "m");
  EXPECT_EQ(scatter.width, 480);
  const Image line = render_line_plot(rows, "m");
  EXPECT_EQ(line.width, 760);
  EXPECT_THROW(render_scatter_plot(rows_of({{50, 40}}), "m"), UndefinedMetricError);
  EXPECT_THROW(render_scatter_plot(rows_of({{50, 40}, {50, 60}}), "m"), UndefinedMetricError);
}

class FiguresTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("pavepci_fig_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    FixtureOptions fo;
    fo.count = 5;
    fo.size = 48;
    records_ = make_crack_fixture(dir_ / "data", fo);
    ckpt_ = dir_ / "model.ckpt";
    std::ofstream(ckpt_) << "checkpoint bytes";
    for (std::size_t i = 0; i < records_.size(); ++i) {
      rows_.push_back({records_[i].image_path.string(), records_[i].pci, 50.0 + 3.0 * i});
    }
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_, ckpt_;
  std::vector<SampleRecord> records_;
  std::vector<PredictionRow> rows_;
};

TEST_F(FiguresTest, WritesEveryArtifactAndStableIndex) {
  Model model = build_model(ArchitectureSpec::for_family(Family::resnet50_cbam), 2);
  FigureOptions opt;
  opt.preprocess.size = 32;
  opt.gallery_k = 2;
  const FigureIndex idx = render_figures(model, records_, rows_, ckpt_, dir_ / "data/manifest.csv",
                                         dir_ / "figures", opt);
  std::map<std::string, int> kinds;
  for (const auto& a : idx.artifacts) {
    ++kinds[a.kind];
    EXPECT_TRUE(fs::exists(dir_ / "figures" / a.path)) << a.path;
    EXPECT_EQ(sha256_file(dir_ / "figures" / a.path), a.sha256);
  }
  EXPECT_EQ(kinds, (std::map<std::string, int>{
                       {"overlay", 5}, {"gallery_best", 1}, {"gallery_worst", 1}, {"line", 1}, {"scatter", 1}}));
  EXPECT_TRUE(fs::exists(dir_ / "figures/overlays/crack_000.png"));
  EXPECT_TRUE(fs::exists(dir_ / "figures/scatter_resnet50_cbam.png"));
  EXPECT_EQ(idx.checkpoint_sha256, sha256_hex("checkpoint bytes"));

  std::vector<double> a, p;
  for (const auto& r : rows_) {
    a.push_back(r.actual);
    p.push_back(r.predicted);
  }
  const auto j = nlohmann::json::parse(slurp(dir_ / "figures/index.json"));
  EXPECT_EQ(j["r2"].get<double>(), r_squared(a, p));
  EXPECT_EQ(j["manifest"]["sha256"], sha256_file(dir_ / "data/manifest.csv"));

  const std::string first = slurp(dir_ / "figures/index.json");
  render_figures(model, records_, rows_, ckpt_, dir_ / "data/manifest.csv", dir_ / "figures", opt);
  EXPECT_EQ(slurp(dir_ / "figures/index.json"), first);

  // A 2-cell gallery is one row of two thumbnails.
  const Image g = read_image(dir_ / "figures/gallery_best.png");
  EXPECT_EQ(g.width, 10 + 2 * 170);
}

TEST_F(FiguresTest, OverlaysOnBaselineAreRejected) {
  Model model = build_model(ArchitectureSpec::for_family(Family::resnet50), 2);
  FigureOptions opt;
  opt.preprocess.size = 32;
  EXPECT_THROW(render_figures(model, records_, rows_, ckpt_, dir_ / "data/manifest.csv", dir_ / "figures", opt),
               UnsupportedModelError);
  EXPECT_FALSE(fs::exists(dir_ / "figures/index.json"));
  opt.overlays = false;
  const FigureIndex idx =
      render_figures(model, records_, rows_, ckpt_, dir_ / "data/manifest.csv", dir_ / "figures", opt);
  EXPECT_EQ(idx.artifacts.size(), 4u);
  opt.gallery_k = 6;
  EXPECT_THROW(render_figures(model, records_, rows_, ckpt_, dir_ / "data/manifest.csv", dir_ / "figures", opt),
               ConfigError);
}

}  // namespace
}  // namespace pavepci
