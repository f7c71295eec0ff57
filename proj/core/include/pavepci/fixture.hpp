#pragma once

// Synthetic pavement images for smoke tests: a noisy asphalt texture with
// dark crack polylines whose total extent grows as PCI falls.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pavepci/data.hpp"
#include "pavepci/image.hpp"

namespace pavepci {

struct FixtureOptions {
  int count = 16;
  int size = 128;
  std::uint64_t seed = 0;
  // Labels are spread evenly over [pci_min, pci_max] and then shuffled.
  double pci_min = 5.0;
  double pci_max = 95.0;
};

// Fraction of pixels covered by cracks at a given PCI.
double crack_coverage(double pci);

Image render_crack_image(double pci, int size, std::uint64_t seed);

// Writes <dir>/images/crack_NNN.png and <dir>/manifest.csv; returns the
// manifest records.
std::vector<SampleRecord> make_crack_fixture(const std::filesystem::path& dir,
                                             const FixtureOptions& options);

}  // namespace pavepci
