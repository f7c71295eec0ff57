#pragma once

// Manifest loading, source-level train/validation split, the 4-variant
// augmentation expansion, preprocessing and deterministic batching.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pavepci/image.hpp"
#include "pavepci/tensor.hpp"

namespace pavepci {

enum class Augmentation { identity, hflip, vflip, jitter };

std::string to_string(Augmentation a);

// Multiplicative factors; 1.0 leaves the image unchanged.
struct JitterParams {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  bool operator==(const JitterParams&) const = default;
};

struct SampleRecord {
  std::filesystem::path image_path;  // resolved
  std::string source_id;             // image_path as written in the manifest
  double pci = 0.0;
  int row = 0;                       // 1-based data row in the manifest
  Augmentation augmentation = Augmentation::identity;
  JitterParams jitter;
};

struct ManifestOptions {
  bool check_files = true;
};

// CSV with header `image_path,pci`; relative paths resolve against the
// manifest's directory. Throws LoadError naming the line for malformed rows,
// PCI outside [0,100], missing image files or duplicate paths, and for an
// empty manifest.
std::vector<SampleRecord> load_manifest(const std::filesystem::path& path,
                                        const ManifestOptions& options = {});

void write_manifest(const std::filesystem::path& path, const std::vector<SampleRecord>& records);

struct SplitConfig {
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> val;
};

// Number of training sources for n sources: round-half-up of fraction * n,
// kept within [1, n-1].
std::size_t train_source_count(std::size_t n, double train_fraction);

// Partitions by source_id. The assignment depends only on the set of
// source ids and the seed; records keep manifest order inside each part.
// Throws InputError for fewer than 2 distinct sources and ConfigError for a
// fraction outside (0,1).
Split split_sources(const std::vector<SampleRecord>& records, const SplitConfig& config);

// `source_id,partition` audit file.
void write_split_csv(const std::filesystem::path& path, const Split& split);

struct AugmentationPolicy {
  // Factors are drawn uniformly from [1 - range, 1 + range].
  double brightness = 0.2;
  double contrast = 0.2;
  double saturation = 0.2;
  std::uint64_t seed = 0;
};

JitterParams draw_jitter(const AugmentationPolicy& policy, const std::string& source_id);

// Every identity record becomes {identity, hflip, vflip, jitter}, in that
// order.
std::vector<SampleRecord> augment_expand(const std::vector<SampleRecord>& records,
                                         const AugmentationPolicy& policy);

struct PreprocessConfig {
  int size = 224;
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> std{0.229f, 0.224f, 0.225f};
};

// In-place colour jitter on a (1,3,H,W) tensor in [0,1]: brightness scale,
// contrast blend towards the mean luma, saturation blend towards per-pixel
// luma, then clamp to [0,1].
void apply_jitter(Tensor<float>& rgb, const JitterParams& jitter);

// Resize to size x size, scale to [0,1], augment, normalize. Output is
// (1,3,size,size).
Tensor<float> preprocess(const Image& image, Augmentation augmentation, const JitterParams& jitter,
                         const PreprocessConfig& config);
Tensor<float> preprocess(const Image& image, const PreprocessConfig& config);

// Batches of indices into [0, n). With shuffling the order is a Fisher-Yates
// permutation keyed on (seed, epoch).
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   bool shuffle, std::uint64_t seed, int epoch);

// Indexed source of preprocessed samples.
class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual std::size_t size() const = 0;
  // (1,3,S,S)
  virtual Tensor<float> input(std::size_t i) const = 0;
  virtual double label(std::size_t i) const = 0;
  virtual std::string name(std::size_t i) const = 0;
};

// Decodes and preprocesses records on demand. Results are cached while the
// cache stays within `cache_bytes`.
class ImageDataset : public Dataset {
 public:
  ImageDataset(std::vector<SampleRecord> records, PreprocessConfig config,
               std::size_t cache_bytes = std::size_t{1} << 30);

  std::size_t size() const override { return records_.size(); }
  Tensor<float> input(std::size_t i) const override;
  double label(std::size_t i) const override { return records_.at(i).pci; }
  std::string name(std::size_t i) const override;
  const SampleRecord& record(std::size_t i) const { return records_.at(i); }
  const std::vector<SampleRecord>& records() const { return records_; }

 private:
  std::vector<SampleRecord> records_;
  PreprocessConfig config_;
  std::size_t cache_bytes_;
  mutable std::size_t cached_ = 0;
  mutable std::map<std::size_t, Tensor<float>> cache_;
};

// In-memory samples, mainly for tests.
class TensorDataset : public Dataset {
 public:
  TensorDataset(Tensor<float> inputs, std::vector<double> labels);

  std::size_t size() const override { return labels_.size(); }
  Tensor<float> input(std::size_t i) const override;
  double label(std::size_t i) const override { return labels_.at(i); }
  std::string name(std::size_t i) const override { return "sample" + std::to_string(i); }

 private:
  Tensor<float> inputs_;
  std::vector<double> labels_;
};

// Stacks the selected samples into (B,3,S,S).
Tensor<float> gather_inputs(const Dataset& data, const std::vector<std::size_t>& indices);
std::vector<double> gather_labels(const Dataset& data, const std::vector<std::size_t>& indices);

}  // namespace pavepci
