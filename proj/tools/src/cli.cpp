#include "pavepci/cli.hpp"

#if __has_include(<CLI/CLI.hpp>)
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif
#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>

#include "pavepci/checkpoint.hpp"
#include "pavepci/data.hpp"
#include "pavepci/errors.hpp"
#include "pavepci/fixture.hpp"
#include "pavepci/hash.hpp"
#include "pavepci/interpret.hpp"
#include "pavepci/random.hpp"
#include "pavepci/training.hpp"

namespace pavepci::cli {

namespace fs = std::filesystem;

namespace {

enum Scope : unsigned {
  kTrain = 1,
  kEvaluate = 2,
  kPredict = 4,
  kVisualize = 8,
  kCompare = 16,
  kFixture = 32,
  kModelIO = kEvaluate | kPredict | kVisualize,
  kAll = 63,
};

struct KeyDef {
  const char* key;
  const char* fallback;
  unsigned scope;
  bool flag;
  const char* help;
};

// clang-format off
const KeyDef kKeys[] = {
    {"output_dir", "pavepci_out", kAll, false, "directory for all outputs (default: $PAVE_PCI_OUTPUT_DIR)"},
    {"seed", "0", kAll, false, "root seed for every random stream"},
    {"manifest", "", kTrain | kModelIO, false, "CSV manifest with columns image_path,pci"},
    {"checkpoint", "", kModelIO, false, "checkpoint file"},
    {"family", "resnet50_cbam", kTrain | kModelIO, false, "resnet50, resnet50_cbam or densenet161"},
    {"image_size", "224", kTrain | kModelIO, false, "square input size in pixels"},
    {"batch_size", "16", kTrain | kModelIO, false, "samples per batch"},
    {"cache_mb", "1024", kTrain | kModelIO, false, "preprocessed-image cache budget"},
    {"max_epochs", "100", kTrain, false, "upper bound on training epochs"},
    {"lr", "0.0001", kTrain, false, "initial learning rate"},
    {"loss", "mse", kTrain, false, "mse, l1 or huber"},
    {"huber_delta", "1", kTrain, false, "huber transition point"},
    {"optimizer", "adam", kTrain, false, "adam or sgd"},
    {"momentum", "0", kTrain, false, "sgd momentum"},
    {"weight_decay", "0", kTrain, false, "L2 penalty added to gradients"},
    {"scheduler_factor", "0.1", kTrain, false, "plateau learning-rate factor"},
    {"scheduler_patience", "3", kTrain, false, "epochs without improvement before a reduction"},
    {"scheduler_threshold", "0.0001", kTrain, false, "relative improvement that counts"},
    {"min_lr", "1e-07", kTrain, false, "learning-rate floor"},
    {"early_stop_patience", "10", kTrain, false, "epochs without improvement before stopping"},
    {"monitor", "val_mae", kTrain, false, "val_mae, val_rmse or val_loss"},
    {"train_fraction", "0.9", kTrain, false, "share of source images used for training"},
    {"augment", "true", kTrain, true, "expand each image to identity, hflip, vflip, jitter"},
    {"jitter_brightness", "0.2", kTrain, false, "brightness factor range"},
    {"jitter_contrast", "0.2", kTrain, false, "contrast factor range"},
    {"jitter_saturation", "0.2", kTrain, false, "saturation factor range"},
    {"grad_clip", "0", kTrain, false, "global gradient-norm limit, 0 disables"},
    {"mape_min_denominator", "1", kTrain | kEvaluate, false, "targets below this are left out of MAPE"},
    {"reduction_ratio", "16", kTrain, false, "CBAM channel reduction ratio"},
    {"spatial_kernel", "7", kTrain, false, "CBAM spatial kernel size"},
    {"pretrained_backbone", "", kTrain, false, "checkpoint whose backbone weights initialize the model"},
    {"verbose", "true", kTrain, true, "print one line per epoch"},
    {"model_name", "", kEvaluate | kVisualize, false, "label used in reports and figures (default: family)"},
    {"overlays", "true", kVisualize, true, "render attention overlays"},
    {"overlay_stage", "4", kVisualize, false, "stage (1-4) whose last spatial map is overlaid"},
    {"alpha", "0.5", kVisualize, false, "overlay opacity in [0,1]"},
    {"overlay_limit", "0", kVisualize, false, "overlay at most this many images, 0 for all"},
    {"gallery", "true", kVisualize, true, "render best/worst galleries"},
    {"gallery_k", "3", kVisualize, false, "cells per gallery"},
    {"plots", "true", kVisualize, true, "render line and scatter plots"},
    {"count", "16", kFixture, false, "number of fixture images"},
    {"fixture_size", "128", kFixture, false, "fixture image side in pixels"},
    {"pci_min", "5", kFixture, false, "lowest fixture label"},
    {"pci_max", "95", kFixture, false, "highest fixture label"},
};
// clang-format on

const KeyDef* find_key(const std::string& key) {
  for (const auto& k : kKeys) {
    if (key == k.key) return &k;
  }
  return nullptr;
}

std::string dashed(std::string s) {
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

std::string shortest(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Merged option values for one command.
class Settings {
 public:
  std::map<std::string, std::string> values;
  std::set<std::string> explicit_keys;  // set by config file or flag

  const std::string& str(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) throw ConfigError("option '" + key + "' does not apply to this command");
    return it->second;
  }
  bool given(const std::string& key) const { return explicit_keys.count(key) > 0; }

  double real(const std::string& key) const {
    const std::string& v = str(key);
    double out = 0.0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size()) {
      throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
    return out;
  }
  long long integer(const std::string& key) const {
    const std::string& v = str(key);
    long long out = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size()) {
      throw ConfigError(key + ": expected an integer, got '" + v + "'");
    }
    return out;
  }
  int positive(const std::string& key) const {
    const long long v = integer(key);
    if (v < 1 || v > 1'000'000'000) throw ConfigError(key + " must be a positive integer");
    return static_cast<int>(v);
  }
  std::uint64_t seed() const {
    const std::string& v = str("seed");
    std::uint64_t out = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size()) {
      throw ConfigError("seed: expected a non-negative integer, got '" + v + "'");
    }
    return out;
  }
  bool boolean(const std::string& key) const {
    std::string v = str(key);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
  }
  fs::path required_path(const std::string& key) const {
    const std::string& v = str(key);
    if (v.empty()) throw ConfigError("missing required option: " + key);
    return v;
  }
};

struct CommandContext {
  const Settings& s;
  std::ostream& out;
  std::ostream& err;
  fs::path output_dir;
};

PreprocessConfig preprocess_for(const Settings& s, const TrainingState& state) {
  PreprocessConfig pc;
  if (s.given("image_size")) {
    pc.size = s.positive("image_size");
  } else if (auto it = state.metadata.find("image_size"); it != state.metadata.end()) {
    pc.size = std::stoi(it->second);
  }
  if (pc.size < 32) throw ConfigError("image_size must be at least 32");
  return pc;
}

std::size_t cache_bytes(const Settings& s) {
  const long long mb = s.integer("cache_mb");
  if (mb < 0) throw ConfigError("cache_mb must be >= 0");
  return static_cast<std::size_t>(mb) << 20;
}

LoadedCheckpoint open_checkpoint(const Settings& s) {
  const fs::path path = s.required_path("checkpoint");
  if (s.given("family")) {
    const Family want = parse_family(s.str("family"));
    const ArchitectureSpec have = peek_checkpoint_spec(path);
    if (have.family != want) {
      throw SpecMismatchError("checkpoint " + path.string() + " holds " + to_string(have.family) +
                              " but family=" + to_string(want) + " was requested");
    }
  }
  return load_checkpoint(path);
}

std::string model_label(const Settings& s, const Model& model) {
  const std::string& name = s.str("model_name");
  return name.empty() ? to_string(model.spec().family) : name;
}

struct Scored {
  std::vector<SampleRecord> records;
  std::vector<double> actual;
  std::vector<double> predicted;  // rounded to 6 decimals, as written
};

Scored score_manifest(const Settings& s, Model& model, const TrainingState& state) {
  Scored sc;
  sc.records = load_manifest(s.required_path("manifest"));
  ImageDataset ds(sc.records, preprocess_for(s, state), cache_bytes(s));
  const EvalResult e = evaluate_dataset(model, ds, static_cast<std::size_t>(s.positive("batch_size")));
  for (std::size_t i = 0; i < sc.records.size(); ++i) {
    sc.actual.push_back(sc.records[i].pci);
    sc.predicted.push_back(std::stod(fixed(e.predictions[i], 6)));
  }
  return sc;
}

int cmd_train(const CommandContext& c) {
  const Settings& s = c.s;
  const std::uint64_t seed = s.seed();
  TrainConfig tc;
  tc.max_epochs = s.positive("max_epochs");
  tc.initial_lr = s.real("lr");
  tc.loss = parse_loss(s.str("loss"));
  tc.huber_delta = s.real("huber_delta");
  tc.optimizer.kind = parse_optimizer(s.str("optimizer"));
  tc.optimizer.momentum = s.real("momentum");
  tc.optimizer.weight_decay = s.real("weight_decay");
  tc.scheduler.factor = s.real("scheduler_factor");
  tc.scheduler.patience = s.positive("scheduler_patience");
  tc.scheduler.threshold = s.real("scheduler_threshold");
  tc.scheduler.min_lr = s.real("min_lr");
  tc.early_stop_patience = s.positive("early_stop_patience");
  tc.monitor = parse_monitor(s.str("monitor"));
  tc.seed = seed;
  tc.batch_size = static_cast<std::size_t>(s.positive("batch_size"));
  tc.grad_clip = s.real("grad_clip");
  tc.mape_min_denominator = s.real("mape_min_denominator");
  tc.checkpoint_path = c.output_dir / "best.ckpt";
  tc.validate();

  ArchitectureSpec spec = ArchitectureSpec::for_family(parse_family(s.str("family")));
  spec.reduction_ratio = s.positive("reduction_ratio");
  spec.spatial_kernel = s.positive("spatial_kernel");
  const std::string pretrained = s.str("pretrained_backbone");
  spec.pretrained_backbone = !pretrained.empty();
  spec.validate();
  PreprocessConfig pc;
  pc.size = s.positive("image_size");
  if (pc.size < 32) throw ConfigError("image_size must be at least 32");

  const fs::path manifest = s.required_path("manifest");
  const auto records = load_manifest(manifest);

  const Split split = split_sources(records, {s.real("train_fraction"), seed});
  write_split_csv(c.output_dir / "split.csv", split);
  AugmentationPolicy policy{s.real("jitter_brightness"), s.real("jitter_contrast"),
                            s.real("jitter_saturation"), seed};
  const bool augment = s.boolean("augment");
  const auto train_records = augment ? augment_expand(split.train, policy) : split.train;
  const auto val_records = augment ? augment_expand(split.val, policy) : split.val;

  ImageDataset train_set(train_records, pc, cache_bytes(s));
  ImageDataset val_set(val_records, pc, cache_bytes(s));

  Model model = build_model(spec, derive_seed(seed, "model"));
  if (!pretrained.empty()) {
    const BackboneLoadReport rep = load_backbone(model, pretrained);
    c.out << "backbone: " << rep.matched.size() << " tensors loaded, " << rep.fresh.size()
          << " freshly initialized\n";
  }

  tc.metadata = {{"image_size", std::to_string(pc.size)},
                 {"seed", std::to_string(seed)},
                 {"manifest_sha256", sha256_file(manifest)},
                 {"train_samples", std::to_string(train_records.size())},
                 {"val_samples", std::to_string(val_records.size())}};
  if (s.boolean("verbose")) {
    tc.on_epoch = [&out = c.out](const EpochRecord& r) {
      out << "epoch " << r.epoch << "  train_loss " << fixed(r.train_loss, 4) << "  val_mae "
          << fixed(r.val_mae, 4) << "  val_rmse " << fixed(r.val_rmse, 4) << "  lr " << shortest(r.lr)
          << "  " << fixed(r.seconds, 1) << "s\n";
      out.flush();
    };
  }
  c.out << "training " << to_string(spec.family) << " on " << train_records.size() << " samples ("
        << split.train.size() << " sources), validating on " << val_records.size() << "\n";
  const TrainResult result = train(model, train_set, val_set, tc);
  write_text(c.output_dir / "train_log.csv", result.log.to_csv(false));
  c.out << "best epoch " << result.log.best_epoch << " of " << result.log.rows.size() << ", "
        << to_string(tc.monitor) << " " << fixed(result.state.best_metric, 4)
        << (result.log.stopped_early ? " (stopped early)" : "") << "\n"
        << "checkpoint: " << tc.checkpoint_path.string() << "\n";
  return kExitOk;
}

int cmd_evaluate(const CommandContext& c) {
  LoadedCheckpoint ck = open_checkpoint(c.s);
  const Scored sc = score_manifest(c.s, ck.model, ck.state);
  std::string csv = "image_path,actual_pci,predicted_pci\n";
  for (std::size_t i = 0; i < sc.records.size(); ++i) {
    csv += csv_field(sc.records[i].source_id) + "," + shortest(sc.actual[i]) + "," + shortest(sc.predicted[i]) + "\n";
  }
  write_text(c.output_dir / "predictions.csv", csv);
  const MetricReport report =
      evaluate_metrics(sc.actual, sc.predicted, c.s.real("mape_min_denominator"), model_label(c.s, ck.model));
  const std::string json = to_json(report);
  write_text(c.output_dir / "metrics.json", json);
  c.out << json;
  return kExitOk;
}

int cmd_predict(const CommandContext& c, const std::vector<std::string>& images) {
  LoadedCheckpoint ck = open_checkpoint(c.s);
  std::vector<SampleRecord> records;
  if (!c.s.str("manifest").empty()) records = load_manifest(c.s.str("manifest"));
  for (const auto& img : images) {
    if (!fs::is_regular_file(img)) throw LoadError("image not found: " + img);
    SampleRecord r;
    r.image_path = img;
    r.source_id = img;
    records.push_back(std::move(r));
  }
  if (records.empty()) throw ConfigError("predict needs image paths or --manifest");
  ImageDataset ds(records, preprocess_for(c.s, ck.state), cache_bytes(c.s));
  const EvalResult e = evaluate_dataset(ck.model, ds, static_cast<std::size_t>(c.s.positive("batch_size")));
  std::string csv = "image_path,predicted_pci\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    csv += csv_field(records[i].source_id) + "," + fixed(e.predictions[i], 6) + "\n";
  }
  write_text(c.output_dir / "predictions.csv", csv);
  c.out << csv;
  return kExitOk;
}

int cmd_visualize(const CommandContext& c) {
  LoadedCheckpoint ck = open_checkpoint(c.s);
  FigureOptions opt;
  opt.overlays = c.s.boolean("overlays");
  opt.overlay_stage = static_cast<int>(c.s.integer("overlay_stage"));
  opt.alpha = c.s.real("alpha");
  const long long limit = c.s.integer("overlay_limit");
  if (limit < 0) throw ConfigError("overlay_limit must be >= 0");
  opt.overlay_limit = static_cast<std::size_t>(limit);
  opt.gallery = c.s.boolean("gallery");
  opt.gallery_k = static_cast<std::size_t>(c.s.positive("gallery_k"));
  opt.plots = c.s.boolean("plots");
  opt.model_name = model_label(c.s, ck.model);
  opt.preprocess = preprocess_for(c.s, ck.state);
  if (opt.overlays && ck.model.cbam_blocks().empty()) {
    throw UnsupportedModelError("overlays need a resnet50_cbam checkpoint; this one holds " +
                                to_string(ck.model.spec().family) + " (use --no-overlays)");
  }
  const Scored sc = score_manifest(c.s, ck.model, ck.state);
  std::vector<PredictionRow> rows;
  for (std::size_t i = 0; i < sc.records.size(); ++i) {
    rows.push_back({sc.records[i].image_path.string(), sc.actual[i], sc.predicted[i]});
  }
  const FigureIndex idx = render_figures(ck.model, sc.records, rows, c.s.required_path("checkpoint"),
                                         c.s.required_path("manifest"), c.output_dir / "figures", opt);
  c.out << "wrote " << idx.artifacts.size() << " figures to " << (c.output_dir / "figures").string() << "\n";
  return kExitOk;
}

int cmd_compare(const CommandContext& c, const std::vector<std::string>& paths) {
  std::vector<MetricReport> reports;
  for (const auto& p : paths) reports.push_back(metric_report_from_json(read_text(p)));
  const Comparison cmp = compare_reports(reports);
  write_text(c.output_dir / "comparison.txt", cmp.text);
  write_text(c.output_dir / "comparison.json", cmp.json);
  c.out << cmp.text;
  return kExitOk;
}

int cmd_make_fixture(const CommandContext& c) {
  FixtureOptions fo;
  fo.count = c.s.positive("count");
  fo.size = c.s.positive("fixture_size");
  fo.seed = c.s.seed();
  fo.pci_min = c.s.real("pci_min");
  fo.pci_max = c.s.real("pci_max");
  const auto records = make_crack_fixture(c.output_dir, fo);
  c.out << "wrote " << records.size() << " images and " << (c.output_dir / "manifest.csv").string() << "\n";
  return kExitOk;
}

struct Command {
  Command(std::string n, unsigned sc, std::string d) : name(std::move(n)), scope(sc), description(std::move(d)) {}

  std::string name;
  unsigned scope;
  std::string description;
  CLI::App* app = nullptr;
  std::string config_path;
  std::map<std::string, std::string> text;
  std::map<std::string, bool> flags;
  std::map<std::string, CLI::Option*> options;
  std::vector<std::string> extra;  // images or reports
};

Settings resolve(const Command& cmd) {
  Settings s;
  for (const auto& k : kKeys) {
    if (k.scope & cmd.scope) s.values[k.key] = k.fallback;
  }
  if (const char* env = std::getenv("PAVE_PCI_OUTPUT_DIR"); env && *env) s.values["output_dir"] = env;
  if (!cmd.config_path.empty()) {
    for (const auto& [key, value] : parse_config_text(read_text(cmd.config_path))) {
      const KeyDef* def = find_key(key);
      if (!def) throw ConfigError(cmd.config_path + ": unknown key '" + key + "'");
      if (!(def->scope & cmd.scope)) continue;
      s.values[key] = value;
      s.explicit_keys.insert(key);
    }
  }
  for (const auto& [key, opt] : cmd.options) {
    if (opt->count() == 0) continue;
    const KeyDef* def = find_key(key);
    s.values[key] = def->flag ? (cmd.flags.at(key) ? "true" : "false") : cmd.text.at(key);
    s.explicit_keys.insert(key);
  }
  return s;
}

int dispatch(Command& cmd, std::ostream& out, std::ostream& err) {
  const Settings s = resolve(cmd);
  const fs::path output_dir = s.str("output_dir");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  fs::create_directories(output_dir);
  write_text(output_dir / "config.resolved", format_config(s.values));
  const CommandContext ctx{s, out, err, output_dir};
  if (cmd.name == "train") return cmd_train(ctx);
  if (cmd.name == "evaluate") return cmd_evaluate(ctx);
  if (cmd.name == "predict") return cmd_predict(ctx, cmd.extra);
  if (cmd.name == "visualize") return cmd_visualize(ctx);
  if (cmd.name == "compare") return cmd_compare(ctx, cmd.extra);
  return cmd_make_fixture(ctx);
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(n) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(n) + ": empty key");
    std::replace(key.begin(), key.end(), '-', '_');
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

std::string format_config(const std::map<std::string, std::string>& values) {
  std::string out;
  for (const auto& [k, v] : values) out += k + " = " + v + "\n";
  return out;
}

Comparison compare_reports(const std::vector<MetricReport>& reports) {
  if (reports.size() < 2) throw ConfigError("compare needs at least two reports");
  std::set<std::string> names;
  for (const auto& r : reports) {
    if (!names.insert(r.model).second) throw ConfigError("duplicate model name in reports: '" + r.model + "'");
  }
  struct Column {
    const char* key;
    const char* title;
    bool lower_is_better;
    std::function<std::optional<double>(const MetricReport&)> get;
  };
  const std::vector<Column> columns{
      {"rmse", "RMSE", true, [](const MetricReport& r) { return std::optional<double>(r.rmse); }},
      {"mae", "MAE", true, [](const MetricReport& r) { return std::optional<double>(r.mae); }},
      {"mape", "MAPE (%)", true, [](const MetricReport& r) { return r.mape; }},
      {"r2", "R^2", false, [](const MetricReport& r) { return r.r2; }},
  };
  std::vector<std::optional<std::size_t>> best(columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) {
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const auto v = columns[c].get(reports[i]);
      if (!v) continue;
      if (!best[c]) {
        best[c] = i;
        continue;
      }
      const double b = *columns[c].get(reports[*best[c]]);
      if (columns[c].lower_is_better ? *v < b : *v > b) best[c] = i;
    }
  }

  std::size_t name_w = 5;
  for (const auto& r : reports) name_w = std::max(name_w, r.model.size());
  auto pad_right = [](std::string s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
  auto pad_left = [](std::string s, std::size_t w) { return std::string(w > s.size() ? w - s.size() : 0, ' ') + s; };
  const std::size_t col_w = 12;
  std::string text = pad_right("model", name_w);
  for (const auto& col : columns) text += pad_left(col.title, col_w) + " ";
  text += "\n";
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < reports.size(); ++i) {
    text += pad_right(reports[i].model, name_w);
    nlohmann::ordered_json row;
    row["model"] = reports[i].model;
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto v = columns[c].get(reports[i]);
      text += pad_left(v ? fixed(*v, 4) : "n/a", col_w) + (best[c] == i ? "*" : " ");
      row[columns[c].key] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
    }
    row["n"] = reports[i].n;
    rows.push_back(std::move(row));
    text += "\n";
  }
  text += "* best value in each column\n";
  nlohmann::ordered_json j;
  j["rows"] = std::move(rows);
  nlohmann::ordered_json marks;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    marks[columns[c].key] = best[c] ? nlohmann::ordered_json(reports[*best[c]].model) : nlohmann::ordered_json(nullptr);
  }
  j["best"] = std::move(marks);
  return {text, j.dump(2) + "\n"};
}

static int run_cli_unguarded(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pavement Condition Index regression from pavement images."};
  app.name("pavepci");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::vector<Command> commands{
      {"train", kTrain, "Train a model on a manifest and keep the best checkpoint"},
      {"evaluate", kEvaluate, "Score a checkpoint on a manifest: predictions.csv and metrics.json"},
      {"predict", kPredict, "Predict PCI for images"},
      {"compare", kCompare, "Tabulate two or more metrics.json reports"},
      {"visualize", kVisualize, "Render attention overlays, galleries and plots"},
      {"make-fixture", kFixture, "Write a synthetic crack-image dataset with a manifest"},
  };
  for (auto& cmd : commands) {
    cmd.app = app.add_subcommand(cmd.name, cmd.description);
    cmd.app->add_option("--config", cmd.config_path, "key = value file; flags override it");
    std::vector<std::string> positional;
    if (cmd.name == "train") positional = {"manifest"};
    if (cmd.name == "evaluate" || cmd.name == "visualize") positional = {"checkpoint", "manifest"};
    if (cmd.name == "predict") positional = {"checkpoint"};
    if (cmd.name == "make-fixture") positional = {"output_dir"};
    auto add_key = [&cmd](const KeyDef& k, bool is_positional) {
      std::string names = "--" + dashed(k.key);
      if (dashed(k.key) != k.key) names += std::string(",--") + k.key;
      if (k.flag) {
        names += ",!--no-" + dashed(k.key);
        cmd.options[k.key] = cmd.app->add_flag(names, cmd.flags[k.key], std::string(k.help) + " [" + k.fallback + "]");
        return;
      }
      if (is_positional) names = std::string(k.key) + "," + names;
      std::string help = k.help;
      if (*k.fallback) help += std::string(" [") + k.fallback + "]";
      cmd.options[k.key] = cmd.app->add_option(names, cmd.text[k.key], help);
    };
    // Positional arguments bind in the order they are added.
    for (const auto& key : positional) add_key(*find_key(key), true);
    if (cmd.name == "predict") cmd.app->add_option("images", cmd.extra, "image files");
    if (cmd.name == "compare") cmd.app->add_option("reports", cmd.extra, "metrics.json files");
    for (const auto& k : kKeys) {
      if (!(k.scope & cmd.scope)) continue;
      if (std::find(positional.begin(), positional.end(), k.key) != positional.end()) continue;
      add_key(k, false);
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  for (auto& cmd : commands) {
    if (!cmd.app->parsed()) continue;
    try {
      return dispatch(cmd, out, err);
    } catch (const ConfigError& e) {
      err << "error: " << e.what() << "\n" << cmd.app->help();
      return kExitUsage;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return kExitFailure;
    }
  }
  return kExitUsage;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return run_cli_unguarded(args, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace pavepci::cli
