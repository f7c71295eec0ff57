#include "pavepci/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pavepci/random.hpp"

namespace pavepci {

double crack_coverage(double pci) { return 0.16 * (100.0 - std::clamp(pci, 0.0, 100.0)) / 100.0; }

Image render_crack_image(double pci, int size, std::uint64_t seed) {
  if (size < 8) throw ConfigError("fixture images must be at least 8 pixels wide");
  Rng rng(seed);
  Image img(size, size);
  std::vector<std::uint8_t> crack(static_cast<std::size_t>(size) * size, 0);

  // Aggregate texture: gray base with per-pixel noise and a faint tint.
  const double base = 0.52 + 0.04 * rng.uniform(-1.0, 1.0);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double v = base + 0.06 * rng.uniform(-1.0, 1.0);
      std::uint8_t* px = img.at(x, y);
      px[0] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v + 0.01, 0.0, 1.0)));
      px[1] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
      px[2] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v - 0.02, 0.0, 1.0)));
    }
  }

  // Random-walk cracks, two pixels wide, until the coverage target is met.
  const auto target = static_cast<std::size_t>(std::lround(crack_coverage(pci) * size * size));
  std::size_t covered = 0;
  auto mark = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= size || y >= size) return;
    std::uint8_t& c = crack[static_cast<std::size_t>(y) * size + x];
    if (!c) {
      c = 1;
      ++covered;
    }
  };
  while (covered < target) {
    double x = rng.uniform(0.0, size), y = rng.uniform(0.0, size);
    double heading = rng.uniform(0.0, 2.0 * M_PI);
    const int steps = size / 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(size)));
    for (int s = 0; s < steps && covered < target; ++s) {
      heading += rng.uniform(-0.35, 0.35);
      x += std::cos(heading);
      y += std::sin(heading);
      if (x < 0 || y < 0 || x >= size || y >= size) break;
      const int ix = static_cast<int>(x), iy = static_cast<int>(y);
      mark(ix, iy);
      if (covered < target) mark(ix + 1, iy);
    }
  }
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (!crack[static_cast<std::size_t>(y) * size + x]) continue;
      const auto v = static_cast<std::uint8_t>(24 + rng.below(20));
      std::uint8_t* px = img.at(x, y);
      px[0] = px[1] = px[2] = v;
    }
  }
  return img;
}

std::vector<SampleRecord> make_crack_fixture(const std::filesystem::path& dir,
                                             const FixtureOptions& options) {
  if (options.count < 1) throw ConfigError("fixture count must be >= 1");
  if (!(options.pci_min >= 0.0 && options.pci_max <= 100.0 && options.pci_min <= options.pci_max)) {
    throw ConfigError("fixture PCI range must lie within [0,100]");
  }
  std::vector<double> labels(options.count);
  for (int i = 0; i < options.count; ++i) {
    const double t = options.count == 1 ? 0.5 : static_cast<double>(i) / (options.count - 1);
    // One decimal place keeps manifest values exact.
    labels[i] = std::round(10.0 * (options.pci_min + t * (options.pci_max - options.pci_min))) / 10.0;
  }
  Rng rng(derive_seed(options.seed, "fixture-labels"));
  for (std::size_t i = labels.size() - 1; i > 0; --i) std::swap(labels[i], labels[rng.below(i + 1)]);

  std::vector<SampleRecord> records;
  for (int i = 0; i < options.count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "images/crack_%03d.png", i);
    const std::filesystem::path path = dir / name;
    write_png(path, render_crack_image(labels[i], options.size,
                                       derive_seed(options.seed, "fixture-image", i)));
    SampleRecord r;
    r.source_id = name;
    r.image_path = path;
    r.pci = labels[i];
    r.row = i + 1;
    records.push_back(std::move(r));
  }
  write_manifest(dir / "manifest.csv", records);
  return records;
}

}  // namespace pavepci
