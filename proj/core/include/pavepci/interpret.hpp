#pragma once

// Attention-map extraction and the qualitative figures: heatmap overlays,
// best/worst prediction galleries, and actual-vs-predicted plots.

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "pavepci/backbones.hpp"
#include "pavepci/data.hpp"
#include "pavepci/image.hpp"

namespace pavepci {

struct AttentionEntry {
  std::string block;  // e.g. "layer3.4.cbam"
  int stage = 0;      // 1..4
  Tensor<float> channel;  // (B,C,1,1)
  Tensor<float> spatial;  // (B,1,H,W)
};

struct AttentionTrace {
  std::vector<AttentionEntry> entries;  // forward order
  std::vector<double> predictions;      // clamped, one per batch item

  // Last block of a stage (1..4). Throws InputError for an absent stage.
  const AttentionEntry& last_of_stage(int stage) const;
};

// Eval-mode forward pass that records every CBAM block's maps. The
// prediction is the same as without tracing. Throws UnsupportedModelError
// for models without attention.
AttentionTrace extract_attention(Model& model, const Tensor<float>& batch);

// Blends jet(map) over the image: out = (1-alpha)*image + alpha*colour. The
// map (item b of a (B,1,h,w) tensor, values in [0,1]) is bilinearly
// resampled to the image size. Throws ConfigError for alpha outside [0,1]
// and InputError for map values outside [0,1].
Image overlay(const Image& image, const Tensor<float>& map, double alpha, int b = 0);

struct PredictionRow {
  std::string image_path;
  double actual = 0.0;
  double predicted = 0.0;
};

enum class GalleryOrder { best, worst };
std::string to_string(GalleryOrder order);

// Indices of k rows ranked by |actual - predicted|. Best ranks ascending
// error with ties going to the earlier row; worst is the exact reverse of
// that ranking, so best-k and worst-(n-k) partition the rows. Throws
// InputError for empty rows or k outside [1, n].
std::vector<std::size_t> gallery_selection(const std::vector<PredictionRow>& rows, std::size_t k,
                                           GalleryOrder order);

// Grid of thumbnails, each captioned with actual and predicted PCI.
Image render_gallery(const std::vector<PredictionRow>& rows, std::size_t k, GalleryOrder order,
                     int thumb = 160);

// "R^2 = 0.6100"
std::string r2_annotation(double r2);

// Actual and predicted series against sample index.
Image render_line_plot(const std::vector<PredictionRow>& rows, const std::string& title);
// Predicted against actual with the identity line and an R^2 annotation.
// Throws UndefinedMetricError when R^2 is undefined.
Image render_scatter_plot(const std::vector<PredictionRow>& rows, const std::string& title);

struct FigureOptions {
  bool overlays = true;
  int overlay_stage = 4;  // spatial map of the last block of this stage
  double alpha = 0.5;
  std::size_t overlay_limit = 0;  // 0 renders every row
  bool gallery = true;
  std::size_t gallery_k = 3;
  bool plots = true;
  std::string model_name;  // used in plot file names; defaults to the family
  PreprocessConfig preprocess;
};

struct FigureArtifact {
  std::string kind;  // overlay, gallery_best, gallery_worst, line, scatter
  std::string path;  // relative to the figures directory
  std::string sha256;
};

struct FigureIndex {
  std::string checkpoint_path;
  std::string checkpoint_sha256;
  std::string manifest_path;
  std::string manifest_sha256;
  std::string model;
  double r2 = 0.0;
  bool has_r2 = false;
  std::vector<FigureArtifact> artifacts;

  std::string to_json() const;
};

// Writes overlays/<image>.png, gallery_{best,worst}.png,
// {line,scatter}_<model>.png and index.json under `figures_dir`. `rows`
// and `records` share manifest order.
FigureIndex render_figures(Model& model, const std::vector<SampleRecord>& records,
                           const std::vector<PredictionRow>& rows,
                           const std::filesystem::path& checkpoint_path,
                           const std::filesystem::path& manifest_path,
                           const std::filesystem::path& figures_dir, const FigureOptions& options);

}  // namespace pavepci
