#include "pavepci/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "pavepci/metrics.hpp"

namespace pavepci {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

void require_training(const Module<float>& net) {
  if (!net.training()) throw InputError("train_step: module must be in training mode");
}

void check_gradients(std::vector<NamedParameter<float>>& params) {
  for (auto& p : params) {
    const Tensor<float>& g = p.param->grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) throw TrainingError("non-finite gradient in " + p.name);
    }
  }
}

void clip_gradients(std::vector<NamedParameter<float>>& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params) {
    const Tensor<float>& g = p.param->grad;
    for (std::size_t i = 0; i < g.size(); ++i) sq += static_cast<double>(g[i]) * g[i];
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const auto scale = static_cast<float>(max_norm / norm);
  for (auto& p : params) {
    Tensor<float>& g = p.param->grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= scale;
  }
}

struct Snapshot {
  std::vector<Tensor<float>> params;
  std::vector<Tensor<float>> buffers;
};

Snapshot take_snapshot(Model& model) {
  Snapshot s;
  for (auto& p : model.network().named_parameters()) s.params.push_back(p.param->value);
  for (auto& b : model.network().named_buffers()) s.buffers.push_back(*b.tensor);
  return s;
}

void restore_snapshot(Model& model, const Snapshot& s) {
  auto params = model.network().named_parameters();
  auto buffers = model.network().named_buffers();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].param->value = s.params[i];
  for (std::size_t i = 0; i < buffers.size(); ++i) *buffers[i].tensor = s.buffers[i];
}

double monitor_value(const EpochRecord& r, Monitor m) {
  switch (m) {
    case Monitor::val_mae:
      return r.val_mae;
    case Monitor::val_rmse:
      return r.val_rmse;
    case Monitor::val_loss:
      return r.val_loss;
  }
  return r.val_mae;
}

}  // namespace

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::mse:
      return "mse";
    case LossKind::l1:
      return "l1";
    case LossKind::huber:
      return "huber";
  }
  return "?";
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }

std::string to_string(Monitor monitor) {
  switch (monitor) {
    case Monitor::val_mae:
      return "val_mae";
    case Monitor::val_rmse:
      return "val_rmse";
    case Monitor::val_loss:
      return "val_loss";
  }
  return "?";
}

LossKind parse_loss(const std::string& name) {
  if (name == "mse") return LossKind::mse;
  if (name == "l1") return LossKind::l1;
  if (name == "huber") return LossKind::huber;
  throw ConfigError("unknown loss '" + name + "' (expected mse, l1 or huber)");
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + name + "' (expected adam or sgd)");
}

Monitor parse_monitor(const std::string& name) {
  if (name == "val_mae") return Monitor::val_mae;
  if (name == "val_rmse") return Monitor::val_rmse;
  if (name == "val_loss") return Monitor::val_loss;
  throw ConfigError("unknown monitor metric '" + name + "' (expected val_mae, val_rmse or val_loss)");
}

LossValue compute_loss(LossKind kind, const Tensor<float>& prediction,
                       const std::vector<double>& targets, double huber_delta) {
  const std::size_t b = targets.size();
  if (b == 0 || prediction.size() != b) {
    throw InputError("loss: " + std::to_string(b) + " targets for prediction " +
                     prediction.shape().str());
  }
  if (kind == LossKind::huber && !(huber_delta > 0.0)) throw ConfigError("huber_delta must be > 0");
  LossValue out{0.0, Tensor<float>(prediction.shape())};
  const double inv = 1.0 / static_cast<double>(b);
  for (std::size_t i = 0; i < b; ++i) {
    const double d = static_cast<double>(prediction[i]) - targets[i];
    double l = 0.0, g = 0.0;
    switch (kind) {
      case LossKind::mse:
        l = d * d;
        g = 2.0 * d;
        break;
      case LossKind::l1:
        l = std::abs(d);
        g = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
        break;
      case LossKind::huber:
        if (std::abs(d) <= huber_delta) {
          l = 0.5 * d * d;
          g = d;
        } else {
          l = huber_delta * (std::abs(d) - 0.5 * huber_delta);
          g = d > 0 ? huber_delta : -huber_delta;
        }
        break;
    }
    out.value += l * inv;
    out.grad[i] = static_cast<float>(g * inv);
  }
  return out;
}

void OptimizerConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0,1)");
  }
  if (!(eps > 0.0)) throw ConfigError("adam eps must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
}

Optimizer::Optimizer(std::vector<NamedParameter<float>> params, OptimizerConfig config)
    : params_(std::move(params)), config_(config) {
  config_.validate();
  for (auto& p : params_) {
    m_.emplace_back(p.param->value.shape());
    if (config_.kind == OptimizerKind::adam) v_.emplace_back(p.param->value.shape());
  }
}

void Optimizer::step(double lr) {
  ++steps_;
  const double wd = config_.weight_decay;
  if (config_.kind == OptimizerKind::sgd) {
    const double mom = config_.momentum;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor<float>& w = params_[k].param->value;
      const Tensor<float>& g = params_[k].param->grad;
      Tensor<float>& buf = m_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        double gi = static_cast<double>(g[i]) + wd * w[i];
        if (mom > 0.0) {
          buf[i] = static_cast<float>(mom * buf[i] + gi);
          gi = buf[i];
        }
        w[i] = static_cast<float>(w[i] - lr * gi);
      }
    }
    return;
  }
  const double b1 = config_.beta1, b2 = config_.beta2, eps = config_.eps;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double step_size = lr / c1;
  const double sqrt_c2 = std::sqrt(c2);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor<float>& w = params_[k].param->value;
    const Tensor<float>& g = params_[k].param->grad;
    Tensor<float>& m = m_[k];
    Tensor<float>& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = static_cast<double>(g[i]) + wd * w[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      w[i] = static_cast<float>(w[i] - step_size * mi / (std::sqrt(vi) / sqrt_c2 + eps));
    }
  }
}

OptimizerState Optimizer::state() const {
  OptimizerState s;
  s.kind = to_string(config_.kind);
  s.step = steps_;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    s.slots.push_back({"m/" + params_[k].name, m_[k]});
    if (config_.kind == OptimizerKind::adam) s.slots.push_back({"v/" + params_[k].name, v_[k]});
  }
  return s;
}

void Optimizer::load_state(const OptimizerState& state) {
  if (state.kind.empty() && state.slots.empty()) return;
  if (state.kind != to_string(config_.kind)) {
    throw LoadError("optimizer state is for '" + state.kind + "', not '" + to_string(config_.kind) + "'");
  }
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& slot : state.slots) by_name[slot.name] = &slot.value;
  auto fetch = [&](const std::string& name, Tensor<float>& dst) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw LoadError("optimizer state lacks " + name);
    if (it->second->shape() != dst.shape()) throw LoadError("optimizer state shape mismatch for " + name);
    dst = *it->second;
  };
  for (std::size_t k = 0; k < params_.size(); ++k) {
    fetch("m/" + params_[k].name, m_[k]);
    if (config_.kind == OptimizerKind::adam) fetch("v/" + params_[k].name, v_[k]);
  }
  steps_ = state.step;
}

void PlateauConfig::validate() const {
  if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("scheduler factor must lie in (0,1)");
  if (patience < 1) throw ConfigError("scheduler patience must be >= 1");
  if (!(min_lr > 0.0)) throw ConfigError("scheduler min_lr must be > 0");
  if (!(threshold >= 0.0)) throw ConfigError("scheduler threshold must be >= 0");
}

PlateauScheduler::PlateauScheduler(PlateauConfig config, double initial_lr) : config_(config) {
  config_.validate();
  if (!(initial_lr > 0.0) || !std::isfinite(initial_lr)) throw ConfigError("initial_lr must be > 0");
  state_.lr = initial_lr;
}

double PlateauScheduler::update(double value) {
  if (!std::isfinite(value)) throw InputError("scheduler: monitored value is not finite");
  if (value < state_.best * (1.0 - config_.threshold) || std::isinf(state_.best)) {
    state_.best = value;
    state_.bad_epochs = 0;
    return state_.lr;
  }
  if (++state_.bad_epochs >= config_.patience) {
    double next = state_.lr * config_.factor;
    // Snap values that only miss the floor by rounding (1e-4 * 0.1^3).
    if (next <= config_.min_lr * (1.0 + 1e-9)) next = config_.min_lr;
    if (next < state_.lr) ++state_.reductions;
    state_.lr = next;
    state_.bad_epochs = 0;
  }
  return state_.lr;
}

EarlyStopping::EarlyStopping(int patience)
    : patience_(patience), best_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw ConfigError("early_stop_patience must be >= 1");
}

bool EarlyStopping::update(double value, int epoch) {
  last_improved_ = value < best_;
  if (last_improved_) {
    best_ = value;
    best_epoch_ = epoch;
    bad_ = 0;
    return false;
  }
  return ++bad_ >= patience_;
}

double train_step(Module<float>& net, Optimizer& optimizer, const Tensor<float>& inputs,
                  const std::vector<double>& targets, LossKind loss, double lr, double grad_clip,
                  double huber_delta) {
  require_training(net);
  net.zero_grad();
  const Tensor<float> prediction = net.forward(inputs);
  LossValue l = compute_loss(loss, prediction, targets, huber_delta);
  if (!std::isfinite(l.value)) throw TrainingError("non-finite loss");
  net.backward(l.grad);
  auto params = net.named_parameters();
  check_gradients(params);
  if (grad_clip > 0.0) clip_gradients(params, grad_clip);
  optimizer.step(lr);
  return l.value;
}

std::string TrainingLog::to_csv(bool include_seconds) const {
  std::ostringstream out;
  out << "epoch,train_loss,val_mae,val_mape,val_rmse,lr";
  if (include_seconds) out << ",seconds";
  out << '\n';
  for (const auto& r : rows) {
    out << r.epoch << ',' << fmt("%.10g", r.train_loss) << ',' << fmt("%.10g", r.val_mae) << ','
        << (std::isnan(r.val_mape) ? std::string() : fmt("%.10g", r.val_mape)) << ','
        << fmt("%.10g", r.val_rmse) << ',' << fmt("%.6g", r.lr);
    if (include_seconds) out << ',' << fmt("%.3f", r.seconds);
    out << '\n';
  }
  return out.str();
}

void TrainingLog::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << to_csv(true);
  if (!out) throw Error("cannot write " + path.string());
}

void TrainConfig::validate() const {
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (!(initial_lr > 0.0) || !std::isfinite(initial_lr)) throw ConfigError("initial_lr must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be >= 0");
  if (loss == LossKind::huber && !(huber_delta > 0.0)) throw ConfigError("huber_delta must be > 0");
  if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
  optimizer.validate();
  scheduler.validate();
}

EvalResult evaluate_dataset(Model& model, const Dataset& data, std::size_t batch_size,
                            LossKind loss, double huber_delta) {
  if (data.size() == 0) throw InputError("evaluate: empty dataset");
  const bool was_training = model.training();
  model.set_training(false);
  EvalResult out;
  const auto& head = model.spec().head;
  double weighted = 0.0;
  try {
    for (const auto& batch : make_batches(data.size(), batch_size, false, 0, 0)) {
      const Tensor<float> x = gather_inputs(data, batch);
      validate_input_batch(x);
      const std::vector<double> y = gather_labels(data, batch);
      const Tensor<float> raw = model.forward(x);
      weighted += compute_loss(loss, raw, y, huber_delta).value * static_cast<double>(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        out.predictions.push_back(std::clamp(static_cast<double>(raw[i]), head.clamp_min, head.clamp_max));
      }
    }
  } catch (...) {
    model.set_training(was_training);
    throw;
  }
  model.set_training(was_training);
  out.loss = weighted / static_cast<double>(data.size());
  return out;
}

TrainResult train(Model& model, const Dataset& train_data, const Dataset& val_data,
                  const TrainConfig& config) {
  config.validate();
  if (train_data.size() == 0) throw ConfigError("training split is empty");
  if (val_data.size() == 0) throw ConfigError("validation split is empty");

  auto params = model.network().named_parameters();
  Optimizer optimizer(params, config.optimizer);
  PlateauScheduler scheduler(config.scheduler, config.initial_lr);
  EarlyStopping stopper(config.early_stop_patience);

  std::vector<double> val_labels(val_data.size());
  for (std::size_t i = 0; i < val_data.size(); ++i) val_labels[i] = val_data.label(i);

  TrainResult result;
  TrainingState st;
  st.monitor = to_string(config.monitor);
  st.metadata = config.metadata;
  Snapshot best;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord row;
    row.epoch = epoch;
    row.lr = scheduler.lr();

    model.set_training(true);
    const auto batches = make_batches(train_data.size(), config.batch_size, config.shuffle,
                                      config.seed, epoch);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Tensor<float> x = gather_inputs(train_data, batches[b]);
      const std::vector<double> y = gather_labels(train_data, batches[b]);
      try {
        const double l = train_step(model.network(), optimizer, x, y, config.loss, row.lr,
                                    config.grad_clip, config.huber_delta);
        loss_sum += l * static_cast<double>(batches[b].size());
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(b) + ", lr " + fmt("%g", row.lr));
      }
    }
    row.train_loss = loss_sum / static_cast<double>(train_data.size());

    const EvalResult eval = evaluate_dataset(model, val_data, config.batch_size, config.loss,
                                             config.huber_delta);
    row.val_loss = eval.loss;
    row.val_mae = mae(val_labels, eval.predictions);
    row.val_rmse = rmse(val_labels, eval.predictions);
    try {
      row.val_mape = mape(val_labels, eval.predictions, config.mape_min_denominator).value;
    } catch (const UndefinedMetricError&) {
      row.val_mape = std::numeric_limits<double>::quiet_NaN();
    }
    const double monitored = monitor_value(row, config.monitor);
    if (!std::isfinite(monitored) || !std::isfinite(row.val_loss)) {
      throw TrainingError("non-finite validation result at epoch " + std::to_string(epoch) +
                          ", lr " + fmt("%g", row.lr));
    }

    const bool stop = stopper.update(monitored, epoch);
    scheduler.update(monitored);

    st.epoch = epoch;
    st.epochs_without_improvement = stopper.bad_epochs();
    st.scheduler = scheduler.state();
    if (stopper.last_improved()) {
      st.best_epoch = epoch;
      st.best_metric = monitored;
      st.optimizer = optimizer.state();
      best = take_snapshot(model);
      result.state = st;
      if (!config.checkpoint_path.empty()) save_checkpoint(model, st, config.checkpoint_path);
    }

    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.rows.push_back(row);
    if (config.on_epoch) config.on_epoch(row);
    if (stop) {
      result.log.stopped_early = true;
      break;
    }
  }

  // Hand back the best epoch, not the last.
  restore_snapshot(model, best);
  result.log.best_epoch = stopper.best_epoch();
  return result;
}

}  // namespace pavepci
