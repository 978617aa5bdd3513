#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "setsum/rng.hpp"
#include "setsum/tensor.hpp"

namespace setsum {

enum class SlotKind {
  real,     // a training image
  black,    // substituted by an all-zero image with probability p
  padding,  // all-zero filler for the last set when n does not divide m
};

struct SampleSlot {
  SlotKind kind = SlotKind::padding;
  std::size_t image = 0;  // index into the training set, valid for real slots

  static SampleSlot real(std::size_t index) { return {SlotKind::real, index}; }
  static SampleSlot black() { return {SlotKind::black, 0}; }
  static SampleSlot padding() { return {SlotKind::padding, 0}; }

  bool is_real() const noexcept { return kind == SlotKind::real; }

  friend bool operator==(const SampleSlot&, const SampleSlot&) = default;
};

// A virtual sample: n slots plus the summed label of its real slots.
struct SampleSet {
  std::vector<SampleSlot> slots;
  double virtual_label = 0.0;

  std::size_t real_count() const;

  friend bool operator==(const SampleSet&, const SampleSet&) = default;
};

struct SetSamplerConfig {
  std::size_t n = 4;
  double p = 0.1;
  // Draw set members with replacement instead of partitioning a permutation.
  bool with_replacement = false;
};

double virtual_label(std::span<const double> labels);

// One epoch of virtual samples over `labels.size()` training images: a random
// permutation cut into ceil(m/n) sets of n slots, the last padded when n does
// not divide m, then each real slot replaced by black with probability p.
// No random draws are spent on substitution when p == 0.
std::vector<SampleSet> make_epoch_sets(std::span<const double> labels,
                                       const SetSamplerConfig& config, Rng& rng);

// Number of distinct non-empty sets of at most n out of m samples: sum_{i=1..n} C(m, i).
boost::multiprecision::cpp_int count_combinations(std::size_t m, std::size_t n);

struct AugmentationConfig {
  std::vector<std::size_t> flip_axes{0, 1};  // spatial axes (0-based) eligible for flipping
  double rotation_range = 0.2;               // radians, symmetric
  std::size_t translation_range = 2;         // voxels, symmetric

  friend bool operator==(const AugmentationConfig&, const AugmentationConfig&) = default;
};

// Geometric primitives on (channels, spatial...) images. Uncovered voxels are 0.
Tensor flip(const Tensor& image, std::size_t spatial_axis);
Tensor translate(const Tensor& image, std::span<const std::int64_t> offsets);
// 2D: one in-plane angle. 3D: angles about axes 0, 1 and 2, applied in that
// order. Rotation is about the spatial center with (bi/tri)linear interpolation.
Tensor rotate(const Tensor& image, std::span<const double> angles);

// Random flips (probability 0.5 per allowed axis), rotation uniform in
// ±rotation_range, integer translation uniform in ±translation_range.
Tensor random_geometric_augment(const Tensor& image, const AugmentationConfig& config, Rng& rng);

std::pair<Tensor, double> mixup_pair(const Tensor& x1, double y1, const Tensor& x2, double y2,
                                     double lambda);

}  // namespace setsum
