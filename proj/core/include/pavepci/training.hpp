#pragma once

// Supervised regression training: losses, optimizers, a reduce-on-plateau
// learning-rate schedule, early stopping, and the epoch loop that ties them
// together with per-epoch validation and best-weight retention.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pavepci/backbones.hpp"
#include "pavepci/checkpoint.hpp"
#include "pavepci/data.hpp"

namespace pavepci {

enum class LossKind { mse, l1, huber };
enum class OptimizerKind { adam, sgd };
enum class Monitor { val_mae, val_rmse, val_loss };

std::string to_string(LossKind kind);
std::string to_string(OptimizerKind kind);
std::string to_string(Monitor monitor);
// These throw ConfigError for unknown names.
LossKind parse_loss(const std::string& name);
OptimizerKind parse_optimizer(const std::string& name);
Monitor parse_monitor(const std::string& name);

struct LossValue {
  double value = 0.0;   // mean over the batch
  Tensor<float> grad;   // d value / d prediction, same shape as the prediction
};

// prediction is (B,1,1,1); targets has B entries. huber_delta only applies to
// LossKind::huber.
LossValue compute_loss(LossKind kind, const Tensor<float>& prediction,
                       const std::vector<double>& targets, double huber_delta = 1.0);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.0;  // sgd only
  double weight_decay = 0.0;

  void validate() const;
};

// Updates a fixed list of parameters in place from their accumulated
// gradients.
class Optimizer {
 public:
  Optimizer(std::vector<NamedParameter<float>> params, OptimizerConfig config);

  void step(double lr);
  std::int64_t steps() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }

  OptimizerState state() const;
  // Throws LoadError if the state does not fit these parameters.
  void load_state(const OptimizerState& state);

 private:
  std::vector<NamedParameter<float>> params_;
  OptimizerConfig config_;
  std::int64_t steps_ = 0;
  std::vector<Tensor<float>> m_;  // first moment / momentum buffer
  std::vector<Tensor<float>> v_;  // second moment (adam)
};

struct PlateauConfig {
  double factor = 0.1;
  int patience = 3;
  double min_lr = 1e-7;
  // Relative improvement a value needs over the best so far to count.
  double threshold = 1e-4;

  void validate() const;
};

// Reduce-on-plateau for a metric that should decrease. After `patience`
// consecutive updates without improvement the rate is multiplied by
// `factor`, floored at `min_lr`, and the counter restarts.
class PlateauScheduler {
 public:
  PlateauScheduler(PlateauConfig config, double initial_lr);

  // Returns the learning rate for the next epoch. Throws InputError for a
  // non-finite value.
  double update(double value);
  double lr() const { return state_.lr; }
  const SchedulerState& state() const { return state_; }
  void load_state(const SchedulerState& state) { state_ = state; }

 private:
  PlateauConfig config_;
  SchedulerState state_;
};

// Counts consecutive non-improving values (strictly lower is better).
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);

  // Feeds the metric of `epoch`; returns true when training should stop.
  bool update(double value, int epoch);
  bool last_improved() const { return last_improved_; }
  int best_epoch() const { return best_epoch_; }
  double best() const { return best_; }
  int bad_epochs() const { return bad_; }

 private:
  int patience_;
  double best_;
  int best_epoch_ = 0;
  int bad_ = 0;
  bool last_improved_ = false;
};

// Forward, loss, backward and one optimizer update on a single batch.
// Returns the loss before the update. The module must be in training mode.
// Throws TrainingError when the loss or any gradient is not finite.
double train_step(Module<float>& net, Optimizer& optimizer, const Tensor<float>& inputs,
                  const std::vector<double>& targets, LossKind loss, double lr,
                  double grad_clip = 0.0, double huber_delta = 1.0);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_mae = 0.0;
  double val_mape = 0.0;  // NaN when no target reaches the MAPE floor
  double val_rmse = 0.0;
  double lr = 0.0;  // rate used during the epoch
  double seconds = 0.0;
};

struct TrainingLog {
  std::vector<EpochRecord> rows;
  int best_epoch = 0;
  bool stopped_early = false;

  // epoch,train_loss,val_mae,val_mape,val_rmse,lr,seconds. Without seconds
  // the text is a deterministic function of the run.
  std::string to_csv(bool include_seconds = true) const;
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainConfig {
  int max_epochs = 100;
  double initial_lr = 1e-4;
  LossKind loss = LossKind::mse;
  double huber_delta = 1.0;
  OptimizerConfig optimizer;
  PlateauConfig scheduler;
  int early_stop_patience = 10;
  Monitor monitor = Monitor::val_mae;
  std::uint64_t seed = 0;
  std::size_t batch_size = 16;
  bool shuffle = true;
  double grad_clip = 0.0;  // global L2 norm; 0 disables
  double mape_min_denominator = 1.0;
  // Best checkpoint is written here after each improving epoch when set.
  std::filesystem::path checkpoint_path;
  // Extra metadata stored in the checkpoint.
  std::map<std::string, std::string> metadata;
  std::function<void(const EpochRecord&)> on_epoch;

  void validate() const;
};

struct TrainResult {
  TrainingLog log;
  TrainingState state;  // as of the best epoch
};

struct EvalResult {
  std::vector<double> predictions;  // clamped
  double loss = 0.0;                // on raw outputs
};

// Eval-mode predictions over a whole dataset, in dataset order.
EvalResult evaluate_dataset(Model& model, const Dataset& data, std::size_t batch_size,
                            LossKind loss = LossKind::mse, double huber_delta = 1.0);

// Runs up to max_epochs, validating after each, and leaves the model holding
// the weights of the best epoch. Throws ConfigError for an invalid config or
// an empty split and TrainingError on a non-finite loss or gradient.
TrainResult train(Model& model, const Dataset& train_data, const Dataset& val_data,
                  const TrainConfig& config);

}  // namespace pavepci
