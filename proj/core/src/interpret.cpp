#include "pavepci/interpret.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "pavepci/hash.hpp"
#include "pavepci/metrics.hpp"
#include "pavepci/render.hpp"

namespace pavepci {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

int stage_of(const std::string& block) {
  // "layerN.<i>.cbam"
  if (block.rfind("layer", 0) == 0 && block.size() > 5) return block[5] - '0';
  return 0;
}

// Restores eval/train mode and detaches observers on scope exit.
class TraceGuard {
 public:
  TraceGuard(Model& model) : model_(model), was_training_(model.training()) {}
  ~TraceGuard() {
    for (CbamBlock<float>* b : model_.cbam_blocks()) b->clear_observer();
    model_.set_training(was_training_);
  }

 private:
  Model& model_;
  bool was_training_;
};

struct Axis {
  double lo, hi;
  int p0, p1;  // pixel positions of lo and hi
  int map(double v) const { return p0 + static_cast<int>(std::lround((v - lo) / (hi - lo) * (p1 - p0))); }
};

double nice_step(double span, int max_ticks) {
  const double raw = span / std::max(max_ticks, 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) return m * mag;
  }
  return 10.0 * mag;
}

std::string tick_label(double v) {
  return std::abs(v - std::round(v)) < 1e-9 ? fmt("%.0f", v) : fmt("%g", v);
}

// PCI axis covering [0,100] and any out-of-range values.
std::pair<double, double> value_range(const std::vector<PredictionRow>& rows) {
  double lo = 0.0, hi = 100.0;
  for (const auto& r : rows) {
    lo = std::min({lo, r.actual, r.predicted});
    hi = std::max({hi, r.actual, r.predicted});
  }
  return {std::floor(lo / 10.0) * 10.0, std::ceil(hi / 10.0) * 10.0};
}

void draw_y_axis(Canvas& c, const Axis& y, int x_left, int x_right) {
  const double step = nice_step(y.hi - y.lo, 5);
  for (double v = y.lo; v <= y.hi + 1e-9; v += step) {
    const int py = y.map(v);
    c.line(x_left, py, x_right, py, kLightGray);
    const std::string label = tick_label(v);
    c.text(x_left - 6 - Canvas::text_width(label), py - 3, label, kBlack);
  }
}

void check_rows(const std::vector<PredictionRow>& rows) {
  if (rows.empty()) throw InputError("no predictions to plot");
  for (const auto& r : rows) {
    if (!std::isfinite(r.actual) || !std::isfinite(r.predicted)) {
      throw InputError("non-finite prediction row for " + r.image_path);
    }
  }
}

std::string sanitize(std::string s) {
  for (char& ch : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.';
    if (!ok) ch = '_';
  }
  return s.empty() ? std::string("image") : s;
}

}  // namespace

const AttentionEntry& AttentionTrace::last_of_stage(int stage) const {
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    if (it->stage == stage) return *it;
  }
  throw InputError("no attention maps recorded for stage " + std::to_string(stage));
}

AttentionTrace extract_attention(Model& model, const Tensor<float>& batch) {
  if (model.cbam_blocks().empty()) {
    throw UnsupportedModelError("attention maps need a model with CBAM blocks; " +
                                to_string(model.spec().family) + " has none");
  }
  validate_input_batch(batch);
  AttentionTrace trace;
  TraceGuard guard(model);
  model.network().visit([&](const std::string& path, Module<float>& m) {
    auto* block = dynamic_cast<CbamBlock<float>*>(&m);
    if (!block) return;
    block->set_observer(
        [&trace](const std::string& name, const AttentionMap<float>& channel,
                 const AttentionMap<float>& spatial) {
          trace.entries.push_back({name, stage_of(name), channel.values, spatial.values});
        },
        path);
  });
  model.set_training(false);
  const Tensor<float> raw = model.forward(batch);
  const auto& head = model.spec().head;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    trace.predictions.push_back(std::clamp(static_cast<double>(raw[i]), head.clamp_min, head.clamp_max));
  }
  return trace;
}

Image overlay(const Image& image, const Tensor<float>& map, double alpha, int b) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("overlay alpha must lie in [0,1], got " + fmt("%g", alpha));
  if (map.c() != 1 || b < 0 || b >= map.n()) throw InputError("overlay: expected a (B,1,H,W) map, got " + map.shape().str());
  if (image.width < 1 || image.height < 1) throw InputError("overlay: empty image");
  Tensor<float> one(1, 1, map.h(), map.w());
  std::copy_n(map.plane(b, 0), one.size(), one.data());
  for (std::size_t i = 0; i < one.size(); ++i) {
    if (!(one[i] >= 0.0f && one[i] <= 1.0f)) throw InputError("overlay: map values must lie in [0,1]");
  }
  const Tensor<float> up = resize_bilinear(one, image.height, image.width);
  Image out(image.width, image.height);
  for (std::size_t i = 0; i < up.size(); ++i) {
    const Rgb c = jet(up[i]);
    const std::uint8_t heat[3] = {c.r, c.g, c.b};
    for (int k = 0; k < 3; ++k) {
      const double v = (1.0 - alpha) * image.pixels[i * 3 + k] + alpha * heat[k];
      out.pixels[i * 3 + k] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  return out;
}

std::string to_string(GalleryOrder order) { return order == GalleryOrder::best ? "best" : "worst"; }

std::vector<std::size_t> gallery_selection(const std::vector<PredictionRow>& rows, std::size_t k,
                                           GalleryOrder order) {
  if (rows.empty()) throw InputError("gallery: no predictions");
  if (k < 1 || k > rows.size()) {
    throw InputError("gallery: k must lie in [1, " + std::to_string(rows.size()) + "], got " + std::to_string(k));
  }
  check_rows(rows);
  std::vector<std::size_t> idx(rows.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto err = [&](std::size_t i) { return std::abs(rows[i].actual - rows[i].predicted); };
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return err(a) < err(b); });
  if (order == GalleryOrder::worst) std::reverse(idx.begin(), idx.end());
  idx.resize(k);
  return idx;
}

Image render_gallery(const std::vector<PredictionRow>& rows, std::size_t k, GalleryOrder order, int thumb) {
  const auto picks = gallery_selection(rows, k, order);
  if (thumb < 16) throw ConfigError("gallery thumbnails must be at least 16 pixels");
  const int cols = static_cast<int>(std::min<std::size_t>(picks.size(), 5));
  const int nrows = static_cast<int>((picks.size() + cols - 1) / cols);
  const int pad = 10, caption = 34, title_h = 30;
  const int cell_w = thumb + pad, cell_h = thumb + caption + pad;
  Canvas c(pad + cols * cell_w, title_h + nrows * cell_h, kWhite);
  c.text(pad, 10, to_string(order) + " " + std::to_string(picks.size()) + " predictions", kBlack, 2);
  for (std::size_t i = 0; i < picks.size(); ++i) {
    const PredictionRow& r = rows[picks[i]];
    const int x = pad + static_cast<int>(i % cols) * cell_w;
    const int y = title_h + static_cast<int>(i / cols) * cell_h;
    c.blit(resize_image(read_image(r.image_path), thumb, thumb), x, y);
    c.rect(x - 1, y - 1, thumb + 2, thumb + 2, kGray);
    c.text(x, y + thumb + 6, "actual " + fmt("%.1f", r.actual), kBlue);
    c.text(x, y + thumb + 18, "pred   " + fmt("%.1f", r.predicted), kRed);
  }
  return c.image();
}

std::string r2_annotation(double r2) { return "R^2 = " + fmt("%.4f", r2); }

Image render_line_plot(const std::vector<PredictionRow>& rows, const std::string& title) {
  check_rows(rows);
  const int w = 760, h = 420, left = 60, right = 20, top = 44, bottom = 50;
  Canvas c(w, h, kWhite);
  const auto [lo, hi] = value_range(rows);
  const Axis y{lo, hi, h - bottom, top};
  const double n = static_cast<double>(rows.size());
  const Axis x{0.0, std::max(n - 1.0, 1.0), left, w - right};
  draw_y_axis(c, y, left, w - right);
  const double step = std::max(1.0, nice_step(std::max(n - 1.0, 1.0), 10));
  for (double v = 0; v <= n - 1 + 1e-9; v += step) {
    const int px = x.map(v);
    c.line(px, h - bottom, px, h - bottom + 4, kBlack);
    const std::string label = tick_label(v);
    c.text(px - Canvas::text_width(label) / 2, h - bottom + 8, label, kBlack);
  }
  c.line(left, top, left, h - bottom, kBlack);
  c.line(left, h - bottom, w - right, h - bottom, kBlack);
  auto series = [&](bool actual, Rgb colour) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double v = actual ? rows[i].actual : rows[i].predicted;
      const int px = x.map(static_cast<double>(i)), py = y.map(v);
      if (i > 0) {
        const double pv = actual ? rows[i - 1].actual : rows[i - 1].predicted;
        c.line(x.map(static_cast<double>(i - 1)), y.map(pv), px, py, colour);
      }
      c.marker(px, py, 2, colour);
    }
  };
  series(true, kBlue);
  series(false, kRed);
  c.text(left, 12, title, kBlack, 2);
  const int lx = w - right - 110;
  c.fill_rect(lx, 14, 12, 4, kBlue);
  c.text(lx + 18, 12, "actual", kBlack);
  c.fill_rect(lx, 28, 12, 4, kRed);
  c.text(lx + 18, 26, "predicted", kBlack);
  c.text(w / 2 - Canvas::text_width("sample index") / 2, h - 18, "sample index", kBlack);
  c.text(6, top - 14, "PCI", kBlack);
  return c.image();
}

Image render_scatter_plot(const std::vector<PredictionRow>& rows, const std::string& title) {
  check_rows(rows);
  std::vector<double> actual, predicted;
  for (const auto& r : rows) {
    actual.push_back(r.actual);
    predicted.push_back(r.predicted);
  }
  const double r2 = r_squared(actual, predicted);
  const int size = 480, left = 60, right = 20, top = 44, bottom = 50;
  Canvas c(size, size, kWhite);
  const auto [lo, hi] = value_range(rows);
  const Axis y{lo, hi, size - bottom, top};
  const Axis x{lo, hi, left, size - right};
  draw_y_axis(c, y, left, size - right);
  const double step = nice_step(hi - lo, 5);
  for (double v = lo; v <= hi + 1e-9; v += step) {
    const int px = x.map(v);
    c.line(px, size - bottom, px, size - bottom + 4, kBlack);
    const std::string label = tick_label(v);
    c.text(px - Canvas::text_width(label) / 2, size - bottom + 8, label, kBlack);
  }
  c.line(left, top, left, size - bottom, kBlack);
  c.line(left, size - bottom, size - right, size - bottom, kBlack);
  c.dashed_line(x.map(lo), y.map(lo), x.map(hi), y.map(hi), kGray, 5);
  for (const auto& r : rows) c.marker(x.map(r.actual), y.map(r.predicted), 2, kBlue);
  c.text(left, 12, title, kBlack, 2);
  c.text(left + 8, top + 6, r2_annotation(r2), kBlack);
  c.text(size / 2 - Canvas::text_width("actual PCI") / 2, size - 18, "actual PCI", kBlack);
  c.text(6, top - 14, "predicted PCI", kBlack);
  return c.image();
}

std::string FigureIndex::to_json() const {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["checkpoint"] = {{"path", checkpoint_path}, {"sha256", checkpoint_sha256}};
  j["manifest"] = {{"path", manifest_path}, {"sha256", manifest_sha256}};
  j["r2"] = has_r2 ? nlohmann::ordered_json(r2) : nlohmann::ordered_json(nullptr);
  nlohmann::ordered_json arts = nlohmann::ordered_json::array();
  for (const auto& a : artifacts) arts.push_back({{"kind", a.kind}, {"path", a.path}, {"sha256", a.sha256}});
  j["artifacts"] = std::move(arts);
  return j.dump(2) + "\n";
}

FigureIndex render_figures(Model& model, const std::vector<SampleRecord>& records,
                           const std::vector<PredictionRow>& rows,
                           const std::filesystem::path& checkpoint_path,
                           const std::filesystem::path& manifest_path,
                           const std::filesystem::path& figures_dir, const FigureOptions& options) {
  namespace fs = std::filesystem;
  if (records.size() != rows.size()) throw InputError("render_figures: records and predictions differ in length");
  if (rows.empty()) throw InputError("render_figures: no predictions");
  if (!(options.alpha >= 0.0 && options.alpha <= 1.0)) throw ConfigError("overlay alpha must lie in [0,1]");
  if (options.overlay_stage < 1 || options.overlay_stage > 4) throw ConfigError("overlay stage must lie in 1..4");
  if (options.gallery && (options.gallery_k < 1 || options.gallery_k > rows.size())) {
    throw ConfigError("gallery_k must lie in [1, " + std::to_string(rows.size()) + "]");
  }
  if (options.overlays && model.cbam_blocks().empty()) {
    throw UnsupportedModelError("overlays need resnet50_cbam; checkpoint holds " + to_string(model.spec().family));
  }

  FigureIndex index;
  index.model = options.model_name.empty() ? to_string(model.spec().family) : options.model_name;
  index.checkpoint_path = checkpoint_path.string();
  index.checkpoint_sha256 = sha256_file(checkpoint_path);
  index.manifest_path = manifest_path.string();
  index.manifest_sha256 = sha256_file(manifest_path);
  fs::create_directories(figures_dir);
  auto emit = [&](const std::string& kind, const std::string& rel, const Image& img) {
    const fs::path path = figures_dir / rel;
    write_png(path, img);
    index.artifacts.push_back({kind, rel, sha256_file(path)});
  };

  if (options.overlays) {
    std::set<std::string> used;
    const std::size_t limit = options.overlay_limit == 0 ? records.size() : std::min(options.overlay_limit, records.size());
    for (std::size_t i = 0; i < limit; ++i) {
      const Image source = read_image(records[i].image_path);
      const Tensor<float> x = preprocess(source, options.preprocess);
      const AttentionTrace trace = extract_attention(model, x);
      const Image img = overlay(source, trace.last_of_stage(options.overlay_stage).spatial, options.alpha);
      std::string stem = sanitize(fs::path(records[i].source_id).stem().string());
      std::string name = stem;
      for (int n = 2; used.count(name); ++n) name = stem + "-" + std::to_string(n);
      used.insert(name);
      emit("overlay", "overlays/" + name + ".png", img);
    }
  }
  if (options.gallery) {
    emit("gallery_best", "gallery_best.png", render_gallery(rows, options.gallery_k, GalleryOrder::best));
    emit("gallery_worst", "gallery_worst.png", render_gallery(rows, options.gallery_k, GalleryOrder::worst));
  }
  if (options.plots) {
    const std::string tag = sanitize(index.model);
    emit("line", "line_" + tag + ".png", render_line_plot(rows, index.model + ": actual vs predicted"));
    emit("scatter", "scatter_" + tag + ".png", render_scatter_plot(rows, index.model));
    std::vector<double> a, p;
    for (const auto& r : rows) {
      a.push_back(r.actual);
      p.push_back(r.predicted);
    }
    index.r2 = r_squared(a, p);
    index.has_r2 = true;
  }

  std::ofstream out(figures_dir / "index.json", std::ios::binary);
  out << index.to_json();
  if (!out) throw Error("cannot write " + (figures_dir / "index.json").string());
  return index;
}

}  // namespace pavepci
