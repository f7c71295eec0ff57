#include "pavepci/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "pavepci/random.hpp"

namespace pavepci {

std::string to_string(Augmentation a) {
  switch (a) {
    case Augmentation::identity:
      return "identity";
    case Augmentation::hflip:
      return "hflip";
    case Augmentation::vflip:
      return "vflip";
    case Augmentation::jitter:
      return "jitter";
  }
  return "unknown";
}

namespace {

// Splits one CSV line; double quotes may wrap a field and "" escapes a quote.
std::vector<std::string> split_csv(const std::string& line, bool& ok) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  ok = true;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else {
      fields.back() += ch;
    }
  }
  if (quoted) ok = false;
  return fields;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

std::vector<SampleRecord> load_manifest(const std::filesystem::path& path,
                                        const ManifestOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open manifest " + path.string());
  const std::filesystem::path base = path.parent_path();
  std::vector<SampleRecord> records;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  auto fail = [&](const std::string& why) {
    throw LoadError("manifest " + path.string() + " line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    bool ok = true;
    auto fields = split_csv(line, ok);
    if (!ok) fail("unterminated quote");
    for (auto& f : fields) f = trim(f);
    if (!header_seen) {
      if (fields.size() != 2 || fields[0] != "image_path" || fields[1] != "pci") {
        fail("expected header 'image_path,pci'");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 2) fail("expected 2 fields, found " + std::to_string(fields.size()));
    if (fields[0].empty()) fail("empty image_path");
    double pci = 0.0;
    const std::string& v = fields[1];
    const auto res = std::from_chars(v.data(), v.data() + v.size(), pci);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(pci)) {
      fail("pci '" + v + "' is not a number");
    }
    if (pci < 0.0 || pci > 100.0) fail("pci " + v + " outside [0,100]");
    if (!seen.insert(fields[0]).second) fail("duplicate image_path " + fields[0]);
    SampleRecord r;
    r.source_id = fields[0];
    const std::filesystem::path p(fields[0]);
    r.image_path = p.is_absolute() ? p : base / p;
    r.pci = pci;
    r.row = static_cast<int>(records.size()) + 1;
    if (options.check_files && !std::filesystem::is_regular_file(r.image_path)) {
      fail("image file not found: " + r.image_path.string());
    }
    records.push_back(std::move(r));
  }
  if (!header_seen) throw LoadError("manifest " + path.string() + " is empty");
  if (records.empty()) throw LoadError("manifest " + path.string() + " has no samples");
  return records;
}

void write_manifest(const std::filesystem::path& path, const std::vector<SampleRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write manifest " + path.string());
  out << "image_path,pci\n";
  for (const auto& r : records) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), r.pci);
    out << csv_quote(r.source_id) << ',' << std::string(buf, res.ptr) << '\n';
  }
}

std::size_t train_source_count(std::size_t n, double train_fraction) {
  if (n < 2) throw InputError("split needs at least 2 distinct sources, got " + std::to_string(n));
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0,1)");
  }
  // The small epsilon keeps exact halves (e.g. 0.9 * 5 = 4.5) from rounding
  // down through representation error.
  const auto k = static_cast<std::size_t>(std::floor(train_fraction * n + 0.5 + 1e-9));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

Split split_sources(const std::vector<SampleRecord>& records, const SplitConfig& config) {
  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.source_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const std::size_t n_train = train_source_count(ids.size(), config.train_fraction);

  Rng rng(derive_seed(config.seed, "split"));
  for (std::size_t i = ids.size() - 1; i > 0; --i) {
    std::swap(ids[i], ids[rng.below(i + 1)]);
  }
  const std::set<std::string> train_ids(ids.begin(), ids.begin() + n_train);
  Split split;
  for (const auto& r : records) {
    (train_ids.count(r.source_id) ? split.train : split.val).push_back(r);
  }
  return split;
}

void write_split_csv(const std::filesystem::path& path, const Split& split) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write split file " + path.string());
  out << "source_id,partition\n";
  std::set<std::string> done;
  for (const auto& [part, records] : {std::pair{"train", &split.train}, {"val", &split.val}}) {
    for (const auto& r : *records) {
      if (done.insert(r.source_id).second) out << csv_quote(r.source_id) << ',' << part << '\n';
    }
  }
}

JitterParams draw_jitter(const AugmentationPolicy& policy, const std::string& source_id) {
  Rng rng(derive_seed(policy.seed, "jitter:" + source_id));
  JitterParams j;
  j.brightness = rng.uniform(1.0 - policy.brightness, 1.0 + policy.brightness);
  j.contrast = rng.uniform(1.0 - policy.contrast, 1.0 + policy.contrast);
  j.saturation = rng.uniform(1.0 - policy.saturation, 1.0 + policy.saturation);
  return j;
}

std::vector<SampleRecord> augment_expand(const std::vector<SampleRecord>& records,
                                         const AugmentationPolicy& policy) {
  std::vector<SampleRecord> out;
  out.reserve(records.size() * 4);
  for (const auto& r : records) {
    for (Augmentation a : {Augmentation::identity, Augmentation::hflip, Augmentation::vflip,
                           Augmentation::jitter}) {
      SampleRecord v = r;
      v.augmentation = a;
      v.jitter = a == Augmentation::jitter ? draw_jitter(policy, r.source_id) : JitterParams{};
      out.push_back(std::move(v));
    }
  }
  return out;
}

void apply_jitter(Tensor<float>& rgb, const JitterParams& jitter) {
  if (rgb.n() != 1 || rgb.c() != 3) throw InputError("apply_jitter expects (1,3,H,W)");
  const std::size_t plane = rgb.shape().plane();
  float* r = rgb.plane(0, 0);
  float* g = rgb.plane(0, 1);
  float* b = rgb.plane(0, 2);
  auto luma = [&](std::size_t i) { return 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i]; };
  auto clamp01 = [](float v) { return std::clamp(v, 0.0f, 1.0f); };

  const auto bf = static_cast<float>(jitter.brightness);
  for (float* p : {r, g, b}) {
    for (std::size_t i = 0; i < plane; ++i) p[i] = clamp01(p[i] * bf);
  }
  double mean = 0.0;
  for (std::size_t i = 0; i < plane; ++i) mean += luma(i);
  const auto m = static_cast<float>(mean / static_cast<double>(plane));
  const auto cf = static_cast<float>(jitter.contrast);
  for (float* p : {r, g, b}) {
    for (std::size_t i = 0; i < plane; ++i) p[i] = clamp01(m + cf * (p[i] - m));
  }
  const auto sf = static_cast<float>(jitter.saturation);
  for (std::size_t i = 0; i < plane; ++i) {
    const float l = luma(i);
    r[i] = clamp01(l + sf * (r[i] - l));
    g[i] = clamp01(l + sf * (g[i] - l));
    b[i] = clamp01(l + sf * (b[i] - l));
  }
}

Tensor<float> preprocess(const Image& image, Augmentation augmentation, const JitterParams& jitter,
                         const PreprocessConfig& config) {
  if (config.size < 1) throw ConfigError("preprocess size must be positive");
  Tensor<float> t = resize_bilinear(to_tensor(image), config.size, config.size);
  switch (augmentation) {
    case Augmentation::identity:
      break;
    case Augmentation::hflip:
      t = flip_horizontal(t);
      break;
    case Augmentation::vflip:
      t = flip_vertical(t);
      break;
    case Augmentation::jitter:
      apply_jitter(t, jitter);
      break;
  }
  const std::size_t plane = t.shape().plane();
  for (int c = 0; c < 3; ++c) {
    float* p = t.plane(0, c);
    const float mean = config.mean[c];
    const float inv = 1.0f / config.std[c];
    for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - mean) * inv;
  }
  return t;
}

Tensor<float> preprocess(const Image& image, const PreprocessConfig& config) {
  return preprocess(image, Augmentation::identity, JitterParams{}, config);
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   bool shuffle, std::uint64_t seed, int epoch) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle && n > 1) {
    Rng rng(derive_seed(seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size) {
    batches.emplace_back(order.begin() + i, order.begin() + std::min(n, i + batch_size));
  }
  return batches;
}

ImageDataset::ImageDataset(std::vector<SampleRecord> records, PreprocessConfig config,
                           std::size_t cache_bytes)
    : records_(std::move(records)), config_(config), cache_bytes_(cache_bytes) {}

Tensor<float> ImageDataset::input(std::size_t i) const {
  if (auto it = cache_.find(i); it != cache_.end()) return it->second;
  const SampleRecord& r = records_.at(i);
  Tensor<float> t = preprocess(read_image(r.image_path), r.augmentation, r.jitter, config_);
  const std::size_t bytes = t.size() * sizeof(float);
  if (cached_ + bytes <= cache_bytes_) {
    cache_.emplace(i, t);
    cached_ += bytes;
  }
  return t;
}

std::string ImageDataset::name(std::size_t i) const {
  const SampleRecord& r = records_.at(i);
  if (r.augmentation == Augmentation::identity) return r.source_id;
  return r.source_id + "#" + to_string(r.augmentation);
}

TensorDataset::TensorDataset(Tensor<float> inputs, std::vector<double> labels)
    : inputs_(std::move(inputs)), labels_(std::move(labels)) {
  if (static_cast<std::size_t>(inputs_.n()) != labels_.size()) {
    throw InputError("TensorDataset: " + std::to_string(inputs_.n()) + " inputs but " +
                     std::to_string(labels_.size()) + " labels");
  }
}

Tensor<float> TensorDataset::input(std::size_t i) const {
  if (i >= labels_.size()) throw InputError("TensorDataset index out of range");
  Tensor<float> t(1, inputs_.c(), inputs_.h(), inputs_.w());
  std::copy_n(inputs_.image(static_cast<int>(i)), t.size(), t.data());
  return t;
}

Tensor<float> gather_inputs(const Dataset& data, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw InputError("gather_inputs: empty batch");
  Tensor<float> first = data.input(indices[0]);
  Tensor<float> out(static_cast<int>(indices.size()), first.c(), first.h(), first.w());
  std::copy_n(first.data(), first.size(), out.image(0));
  for (std::size_t k = 1; k < indices.size(); ++k) {
    const Tensor<float> t = data.input(indices[k]);
    if (!(t.shape() == first.shape())) throw InputError("gather_inputs: inconsistent sample shapes");
    std::copy_n(t.data(), t.size(), out.image(static_cast<int>(k)));
  }
  return out;
}

std::vector<double> gather_labels(const Dataset& data, const std::vector<std::size_t>& indices) {
  std::vector<double> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(data.label(i));
  return out;
}

}  // namespace pavepci
