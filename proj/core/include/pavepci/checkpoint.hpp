#pragma once

// Binary checkpoints: architecture header, named float32 tensors, training
// state. See docs/checkpoint_format.md for the byte layout.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "pavepci/backbones.hpp"

namespace pavepci {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

// Adam moments or SGD momentum, keyed by parameter name.
struct OptimizerState {
  std::string kind;  // "adam" or "sgd"; empty when never stepped
  std::int64_t step = 0;
  std::vector<NamedTensor> slots;  // e.g. "m/layer1.0.conv1.weight"
};

struct SchedulerState {
  double lr = 0.0;
  double best = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  int reductions = 0;
};

struct TrainingState {
  int epoch = 0;  // last completed epoch, 1-based; 0 before training
  int best_epoch = 0;
  double best_metric = std::numeric_limits<double>::infinity();
  std::string monitor = "val_mae";
  int epochs_without_improvement = 0;
  SchedulerState scheduler;
  OptimizerState optimizer;
  // Free-form string metadata (e.g. preprocessing size, seed).
  std::map<std::string, std::string> metadata;
};

struct LoadedCheckpoint {
  Model model;
  TrainingState state;
};

std::string spec_to_json(const ArchitectureSpec& spec);
// Throws LoadError on malformed or incomplete JSON.
ArchitectureSpec spec_from_json(const std::string& text);

void save_checkpoint(Model& model, const TrainingState& state,
                     const std::filesystem::path& path);

// Rebuilds the model described by the file and restores its tensors.
// Throws LoadError on I/O failure, bad magic, unsupported version, checksum
// mismatch or a missing tensor.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// As above, but first checks the stored architecture against `expected` and
// throws SpecMismatchError when they differ.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const ArchitectureSpec& expected);

// Overwrites the parameters and buffers of an existing model. Throws
// SpecMismatchError if the stored architecture differs from model.spec().
TrainingState load_weights(Model& model, const std::filesystem::path& path);

// Header only, without reading tensors.
ArchitectureSpec peek_checkpoint_spec(const std::filesystem::path& path);

struct BackboneLoadReport {
  std::vector<std::string> matched;    // target tensors copied from the file
  std::vector<std::string> fresh;      // target tensors absent from the file
  std::vector<std::string> unmatched;  // file tensors with no target
  std::vector<std::string> head;       // head tensors skipped on both sides
};

// Copies every non-head tensor of the checkpoint into the model by name.
// Tensors present only in the model keep their initialization (CBAM blocks
// when a plain resnet50 is loaded into resnet50_cbam). Throws LoadError on a
// shape mismatch for a shared name.
BackboneLoadReport load_backbone(Model& model, const std::filesystem::path& path);

}  // namespace pavepci
