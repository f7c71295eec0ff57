#include "pavepci/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

namespace pavepci {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'P', 'A', 'V', 'E', 'P', 'C', 'I', '1'};

enum class Section : std::uint8_t { parameter = 0, buffer = 1, optimizer = 2 };

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.append(c, n);
  }
  template <typename I>
  void scalar(I v) {
    bytes(&v, sizeof(v));
  }
  void tensor(const std::string& name, Section section, const Tensor<float>& t) {
    scalar<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    bytes(name.data(), name.size());
    scalar<std::uint8_t>(static_cast<std::uint8_t>(section));
    const Shape& s = t.shape();
    for (int d : {s.n, s.c, s.h, s.w}) scalar<std::int32_t>(d);
    bytes(t.data(), t.size() * sizeof(float));
  }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::string path) : buf_(buf), path_(std::move(path)) {}

  void bytes(void* p, std::size_t n) {
    if (n > limit_ - pos_) fail("truncated file");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  template <typename I>
  I scalar() {
    I v{};
    bytes(&v, sizeof(v));
    return v;
  }
  std::string string(std::size_t n) {
    if (n > limit_ - pos_) fail("truncated file");
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void set_limit(std::size_t limit) { limit_ = limit; }
  std::size_t position() const { return pos_; }

  [[noreturn]] void fail(const std::string& why) const {
    throw LoadError("checkpoint " + path_ + ": " + why);
  }

 private:
  const std::string& buf_;
  std::string path_;
  std::size_t pos_ = 0;
  std::size_t limit_ = std::string::npos;
};

struct StoredTensor {
  Section section;
  Tensor<float> value;
};

struct ParsedFile {
  ArchitectureSpec spec;
  TrainingState state;
  std::map<std::string, StoredTensor> tensors;
  std::vector<std::string> order;
};

json spec_json(const ArchitectureSpec& spec) {
  return json{
      {"family", to_string(spec.family)},
      {"stage_depths", spec.stage_depths},
      {"reduction_ratio", spec.reduction_ratio},
      {"spatial_kernel", spec.spatial_kernel},
      {"growth_rate", spec.growth_rate},
      {"block_config", spec.block_config},
      {"init_features", spec.init_features},
      {"bottleneck_width", spec.bottleneck_width},
      {"head",
       {{"pooled_features", spec.head.pooled_features},
        {"output_dim", spec.head.output_dim},
        {"clamp_min", spec.head.clamp_min},
        {"clamp_max", spec.head.clamp_max},
        {"bias_init", spec.head.bias_init}}},
      {"pretrained_backbone", spec.pretrained_backbone},
  };
}

ArchitectureSpec spec_from(const json& j) {
  try {
    ArchitectureSpec spec;
    spec.family = parse_family(j.at("family").get<std::string>());
    spec.stage_depths = j.at("stage_depths").get<std::array<int, 4>>();
    spec.reduction_ratio = j.at("reduction_ratio").get<int>();
    spec.spatial_kernel = j.at("spatial_kernel").get<int>();
    spec.growth_rate = j.at("growth_rate").get<int>();
    spec.block_config = j.at("block_config").get<std::array<int, 4>>();
    spec.init_features = j.at("init_features").get<int>();
    spec.bottleneck_width = j.at("bottleneck_width").get<int>();
    const json& h = j.at("head");
    spec.head.pooled_features = h.at("pooled_features").get<int>();
    spec.head.output_dim = h.at("output_dim").get<int>();
    spec.head.clamp_min = h.at("clamp_min").get<double>();
    spec.head.clamp_max = h.at("clamp_max").get<double>();
    spec.head.bias_init = h.at("bias_init").get<double>();
    spec.pretrained_backbone = j.at("pretrained_backbone").get<bool>();
    return spec;
  } catch (const json::exception& e) {
    throw LoadError(std::string("malformed architecture spec: ") + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(std::string("malformed architecture spec: ") + e.what());
  }
}

// JSON has no infinity; store non-finite values as null.
json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

json state_json(const TrainingState& s) {
  return json{
      {"epoch", s.epoch},
      {"best_epoch", s.best_epoch},
      {"best_metric", number_or_null(s.best_metric)},
      {"monitor", s.monitor},
      {"epochs_without_improvement", s.epochs_without_improvement},
      {"scheduler",
       {{"lr", s.scheduler.lr},
        {"best", number_or_null(s.scheduler.best)},
        {"bad_epochs", s.scheduler.bad_epochs},
        {"reductions", s.scheduler.reductions}}},
      {"optimizer", {{"kind", s.optimizer.kind}, {"step", s.optimizer.step}}},
      {"metadata", s.metadata},
  };
}

TrainingState state_from(const json& j) {
  TrainingState s;
  s.epoch = j.at("epoch").get<int>();
  s.best_epoch = j.at("best_epoch").get<int>();
  s.best_metric = number_from(j.at("best_metric"));
  s.monitor = j.at("monitor").get<std::string>();
  s.epochs_without_improvement = j.at("epochs_without_improvement").get<int>();
  const json& sc = j.at("scheduler");
  s.scheduler.lr = sc.at("lr").get<double>();
  s.scheduler.best = number_from(sc.at("best"));
  s.scheduler.bad_epochs = sc.at("bad_epochs").get<int>();
  s.scheduler.reductions = sc.at("reductions").get<int>();
  s.optimizer.kind = j.at("optimizer").at("kind").get<std::string>();
  s.optimizer.step = j.at("optimizer").at("step").get<std::int64_t>();
  s.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
  return s;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return buf;
}

// Magic, version and header; leaves the reader at the tensor count.
std::pair<ArchitectureSpec, json> parse_header(Reader& r) {
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(magic)) != 0) r.fail("not a pavepci checkpoint");
  const auto version = r.scalar<std::uint32_t>();
  if (version != kCheckpointVersion) {
    r.fail("unsupported format version " + std::to_string(version));
  }
  const auto header_len = r.scalar<std::uint64_t>();
  json header;
  try {
    header = json::parse(r.string(header_len));
  } catch (const json::exception& e) {
    r.fail(std::string("malformed header: ") + e.what());
  }
  if (!header.contains("architecture") || !header.contains("training_state")) {
    r.fail("header lacks architecture or training_state");
  }
  return {spec_from(header.at("architecture")), header};
}

ParsedFile parse(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  Reader r(buf, path.string());
  if (buf.size() < sizeof(kMagic) + sizeof(std::uint64_t)) r.fail("truncated file");
  const std::size_t body = buf.size() - sizeof(std::uint64_t);
  std::uint64_t stored = 0;
  std::memcpy(&stored, buf.data() + body, sizeof(stored));
  if (fnv1a64(std::string_view(buf.data(), body)) != stored) r.fail("checksum mismatch");
  r.set_limit(body);

  ParsedFile file;
  auto [spec, header] = parse_header(r);
  file.spec = spec;
  try {
    file.state = state_from(header.at("training_state"));
  } catch (const json::exception& e) {
    r.fail(std::string("malformed training state: ") + e.what());
  }
  const auto count = r.scalar<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.scalar<std::uint32_t>();
    std::string name = r.string(name_len);
    const auto section = r.scalar<std::uint8_t>();
    if (section > 2) r.fail("bad section tag for " + name);
    Shape s;
    s.n = r.scalar<std::int32_t>();
    s.c = r.scalar<std::int32_t>();
    s.h = r.scalar<std::int32_t>();
    s.w = r.scalar<std::int32_t>();
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) r.fail("negative extent for " + name);
    Tensor<float> t(s);
    r.bytes(t.data(), t.size() * sizeof(float));
    if (file.tensors.count(name)) r.fail("duplicate tensor " + name);
    file.order.push_back(name);
    file.tensors.emplace(std::move(name), StoredTensor{static_cast<Section>(section), std::move(t)});
  }
  if (r.position() != body) r.fail("trailing bytes before checksum");
  return file;
}

// Structural equality; initialization-only fields are ignored.
bool same_architecture(ArchitectureSpec a, ArchitectureSpec b) {
  a.pretrained_backbone = b.pretrained_backbone = false;
  a.head.bias_init = b.head.bias_init = 0.0;
  return a == b;
}

void require_spec(const ArchitectureSpec& stored, const ArchitectureSpec& expected,
                  const std::filesystem::path& path) {
  if (!same_architecture(stored, expected)) {
    throw SpecMismatchError("checkpoint " + path.string() + " holds " +
                            to_string(stored.family) + " " + spec_to_json(stored) +
                            ", expected " + to_string(expected.family) + " " +
                            spec_to_json(expected));
  }
}

void restore(Model& model, ParsedFile& file, const std::filesystem::path& path) {
  auto& net = model.network();
  auto take = [&](const std::string& name, Tensor<float>& dst, Section section) {
    auto it = file.tensors.find(name);
    if (it == file.tensors.end() || it->second.section != section) {
      throw LoadError("checkpoint " + path.string() + " lacks tensor " + name);
    }
    if (!(it->second.value.shape() == dst.shape())) {
      throw LoadError("checkpoint " + path.string() + ": tensor " + name + " has shape " +
                      it->second.value.shape().str() + ", model expects " + dst.shape().str());
    }
    dst = std::move(it->second.value);
    file.tensors.erase(it);
  };
  for (auto& np : net.named_parameters()) take(np.name, np.param->value, Section::parameter);
  for (auto& nb : net.named_buffers()) take(nb.name, *nb.tensor, Section::buffer);
  for (const std::string& name : file.order) {
    auto it = file.tensors.find(name);
    if (it == file.tensors.end()) continue;
    if (it->second.section != Section::optimizer) {
      throw LoadError("checkpoint " + path.string() + " has unknown tensor " + name);
    }
    file.state.optimizer.slots.push_back({name, std::move(it->second.value)});
  }
}

}  // namespace

std::string spec_to_json(const ArchitectureSpec& spec) { return spec_json(spec).dump(); }

ArchitectureSpec spec_from_json(const std::string& text) {
  try {
    return spec_from(json::parse(text));
  } catch (const json::parse_error& e) {
    throw LoadError(std::string("malformed architecture spec: ") + e.what());
  }
}

void save_checkpoint(Model& model, const TrainingState& state,
                     const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.scalar<std::uint32_t>(kCheckpointVersion);
  const std::string header =
      json{{"architecture", spec_json(model.spec())}, {"training_state", state_json(state)}}
          .dump();
  w.scalar<std::uint64_t>(header.size());
  w.bytes(header.data(), header.size());

  auto params = model.network().named_parameters();
  auto buffers = model.network().named_buffers();
  w.scalar<std::uint64_t>(params.size() + buffers.size() + state.optimizer.slots.size());
  for (const auto& np : params) w.tensor(np.name, Section::parameter, np.param->value);
  for (const auto& nb : buffers) w.tensor(nb.name, Section::buffer, *nb.tensor);
  for (const auto& slot : state.optimizer.slots) {
    w.tensor(slot.name, Section::optimizer, slot.value);
  }
  w.scalar<std::uint64_t>(fnv1a64(w.buffer()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + tmp.string());
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw Error("short write to checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  ParsedFile file = parse(path);
  Model model = build_model(file.spec, 0);
  restore(model, file, path);
  return {std::move(model), std::move(file.state)};
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const ArchitectureSpec& expected) {
  require_spec(peek_checkpoint_spec(path), expected, path);
  return load_checkpoint(path);
}

TrainingState load_weights(Model& model, const std::filesystem::path& path) {
  ParsedFile file = parse(path);
  require_spec(file.spec, model.spec(), path);
  restore(model, file, path);
  return std::move(file.state);
}

ArchitectureSpec peek_checkpoint_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  std::string prefix(sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t), '\0');
  in.read(prefix.data(), static_cast<std::streamsize>(prefix.size()));
  if (in.gcount() != static_cast<std::streamsize>(prefix.size())) {
    throw LoadError("checkpoint " + path.string() + ": truncated file");
  }
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, prefix.data() + 12, sizeof(header_len));
  if (header_len > (std::uint64_t{1} << 26)) {
    throw LoadError("checkpoint " + path.string() + ": implausible header length");
  }
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  std::string buf = prefix + header;
  Reader r(buf, path.string());
  return parse_header(r).first;
}

BackboneLoadReport load_backbone(Model& model, const std::filesystem::path& path) {
  ParsedFile file = parse(path);
  const std::string target_head = model.network().head_prefix();
  const std::string source_head =
      file.spec.family == Family::densenet161 ? "classifier." : "fc.";
  BackboneLoadReport report;
  std::set<std::string> used;

  auto visit = [&](const std::string& name, Tensor<float>& dst, Section section) {
    if (name.rfind(target_head, 0) == 0) {
      report.head.push_back(name);
      return;
    }
    auto it = file.tensors.find(name);
    if (it == file.tensors.end() || it->second.section != section) {
      report.fresh.push_back(name);
      return;
    }
    if (!(it->second.value.shape() == dst.shape())) {
      throw LoadError("backbone tensor " + name + " has shape " +
                      it->second.value.shape().str() + ", model expects " + dst.shape().str());
    }
    dst = it->second.value;
    used.insert(name);
    report.matched.push_back(name);
  };
  for (auto& np : model.network().named_parameters()) {
    visit(np.name, np.param->value, Section::parameter);
  }
  for (auto& nb : model.network().named_buffers()) visit(nb.name, *nb.tensor, Section::buffer);
  for (const std::string& name : file.order) {
    const StoredTensor& t = file.tensors.at(name);
    if (t.section == Section::optimizer || used.count(name)) continue;
    if (name.rfind(source_head, 0) == 0) {
      report.head.push_back(name);
    } else {
      report.unmatched.push_back(name);
    }
  }
  return report;
}

}  // namespace pavepci
