#include "setsum/augment.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "setsum/errors.hpp"

namespace setsum {

std::size_t SampleSet::real_count() const {
  std::size_t count = 0;
  for (const SampleSlot& s : slots) count += s.is_real() ? 1 : 0;
  return count;
}

double virtual_label(std::span<const double> labels) {
  double total = 0.0;
  for (double y : labels) total += y;
  return total;
}

std::vector<SampleSet> make_epoch_sets(std::span<const double> labels,
                                       const SetSamplerConfig& config, Rng& rng) {
  const std::size_t m = labels.size();
  if (m == 0) throw std::invalid_argument("make_epoch_sets: empty training set");
  if (config.n == 0) throw std::invalid_argument("make_epoch_sets: n must be positive");
  if (!(config.p >= 0.0 && config.p <= 1.0)) {
    throw std::invalid_argument("make_epoch_sets: p must lie in [0,1]");
  }
  const std::size_t set_count = (m + config.n - 1) / config.n;
  std::vector<SampleSet> sets(set_count);

  if (config.with_replacement) {
    for (SampleSet& set : sets) {
      for (std::size_t i = 0; i < config.n; ++i) set.slots.push_back(SampleSlot::real(rng.index(m)));
    }
  } else {
    const std::vector<std::size_t> order = rng.permutation(m);
    for (std::size_t i = 0; i < set_count * config.n; ++i) {
      sets[i / config.n].slots.push_back(i < m ? SampleSlot::real(order[i]) : SampleSlot::padding());
    }
  }

  for (SampleSet& set : sets) {
    if (config.p > 0.0) {
      for (SampleSlot& slot : set.slots) {
        if (slot.is_real() && rng.bernoulli(config.p)) slot = SampleSlot::black();
      }
    }
    std::vector<double> real_labels;
    for (const SampleSlot& slot : set.slots) {
      if (slot.is_real()) real_labels.push_back(labels[slot.image]);
    }
    set.virtual_label = virtual_label(real_labels);
  }
  return sets;
}

boost::multiprecision::cpp_int count_combinations(std::size_t m, std::size_t n) {
  if (n < 1 || n > m) {
    throw std::invalid_argument("count_combinations needs 1 <= n <= m, got m=" +
                                std::to_string(m) + " n=" + std::to_string(n));
  }
  boost::multiprecision::cpp_int total = 0;
  boost::multiprecision::cpp_int binom = 1;  // C(m, 0)
  for (std::size_t i = 1; i <= n; ++i) {
    binom = binom * (m - i + 1) / i;
    total += binom;
  }
  return total;
}

namespace {

struct Layout {
  std::size_t channels;
  Shape spatial;
  std::size_t plane;  // voxels per channel
};

Layout layout_of(const Tensor& image) {
  if (image.rank() != 3 && image.rank() != 4) {
    throw ShapeError("augmentation expects (channels, 2 or 3 spatial dims), got " +
                     to_string(image.shape()));
  }
  Layout l{image.extent(0), Shape(image.shape().begin() + 1, image.shape().end()), 0};
  l.plane = element_count(l.spatial);
  return l;
}

// Spatial extents padded to 3 (leading unit axes for 2D).
std::array<std::size_t, 3> extents3(const Shape& spatial) {
  if (spatial.size() == 2) return {1, spatial[0], spatial[1]};
  return {spatial[0], spatial[1], spatial[2]};
}

}  // namespace

Tensor flip(const Tensor& image, std::size_t spatial_axis) {
  const Layout l = layout_of(image);
  if (spatial_axis >= l.spatial.size()) {
    throw ShapeError("flip: spatial axis " + std::to_string(spatial_axis) + " out of range");
  }
  const auto e = extents3(l.spatial);
  const std::size_t axis3 = spatial_axis + (3 - l.spatial.size());
  Tensor out(image.shape());
  for (std::size_t c = 0; c < l.channels; ++c) {
    for (std::size_t z = 0; z < e[0]; ++z)
      for (std::size_t y = 0; y < e[1]; ++y)
        for (std::size_t x = 0; x < e[2]; ++x) {
          std::array<std::size_t, 3> src{z, y, x};
          src[axis3] = e[axis3] - 1 - src[axis3];
          out[c * l.plane + (z * e[1] + y) * e[2] + x] =
              image[c * l.plane + (src[0] * e[1] + src[1]) * e[2] + src[2]];
        }
  }
  return out;
}

Tensor translate(const Tensor& image, std::span<const std::int64_t> offsets) {
  const Layout l = layout_of(image);
  if (offsets.size() != l.spatial.size()) {
    throw ShapeError("translate: need one offset per spatial axis");
  }
  const auto e = extents3(l.spatial);
  std::array<std::int64_t, 3> shift{0, 0, 0};
  for (std::size_t i = 0; i < offsets.size(); ++i) shift[i + (3 - offsets.size())] = offsets[i];
  Tensor out(image.shape());
  for (std::size_t c = 0; c < l.channels; ++c) {
    for (std::size_t z = 0; z < e[0]; ++z)
      for (std::size_t y = 0; y < e[1]; ++y)
        for (std::size_t x = 0; x < e[2]; ++x) {
          const std::int64_t sz = static_cast<std::int64_t>(z) - shift[0];
          const std::int64_t sy = static_cast<std::int64_t>(y) - shift[1];
          const std::int64_t sx = static_cast<std::int64_t>(x) - shift[2];
          if (sz < 0 || sy < 0 || sx < 0 || sz >= static_cast<std::int64_t>(e[0]) ||
              sy >= static_cast<std::int64_t>(e[1]) || sx >= static_cast<std::int64_t>(e[2])) {
            continue;
          }
          out[c * l.plane + (z * e[1] + y) * e[2] + x] =
              image[c * l.plane + (static_cast<std::size_t>(sz) * e[1] + static_cast<std::size_t>(sy)) * e[2] +
                    static_cast<std::size_t>(sx)];
        }
  }
  return out;
}

namespace {

using Matrix3 = std::array<std::array<double, 3>, 3>;

Matrix3 multiply(const Matrix3& a, const Matrix3& b) {
  Matrix3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

// Rotation in the plane orthogonal to `axis` of (z, y, x) coordinates.
Matrix3 axis_rotation(int axis, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Matrix3 r{};
  r[axis][axis] = 1.0;
  const int a = (axis + 1) % 3;
  const int b = (axis + 2) % 3;
  r[a][a] = c;
  r[a][b] = -s;
  r[b][a] = s;
  r[b][b] = c;
  return r;
}

}  // namespace

Tensor rotate(const Tensor& image, std::span<const double> angles) {
  const Layout l = layout_of(image);
  const bool planar = l.spatial.size() == 2;
  if (angles.size() != (planar ? 1u : 3u)) {
    throw ShapeError(planar ? "rotate: 2D images take one angle" : "rotate: 3D images take three angles");
  }
  Matrix3 rot = axis_rotation(0, planar ? angles[0] : 0.0);
  if (!planar) rot = multiply(axis_rotation(2, angles[2]), multiply(axis_rotation(1, angles[1]), axis_rotation(0, angles[0])));

  const auto e = extents3(l.spatial);
  const std::array<double, 3> center{(static_cast<double>(e[0]) - 1.0) / 2.0,
                                     (static_cast<double>(e[1]) - 1.0) / 2.0,
                                     (static_cast<double>(e[2]) - 1.0) / 2.0};
  Tensor out(image.shape());
  for (std::size_t z = 0; z < e[0]; ++z)
    for (std::size_t y = 0; y < e[1]; ++y)
      for (std::size_t x = 0; x < e[2]; ++x) {
        // Inverse map: source = R^T (dest - center) + center.
        const std::array<double, 3> d{static_cast<double>(z) - center[0],
                                      static_cast<double>(y) - center[1],
                                      static_cast<double>(x) - center[2]};
        std::array<double, 3> src{};
        for (int i = 0; i < 3; ++i) {
          src[i] = center[i];
          for (int k = 0; k < 3; ++k) src[i] += rot[k][i] * d[k];
        }
        std::array<std::int64_t, 3> base{};
        std::array<double, 3> frac{};
        for (int i = 0; i < 3; ++i) {
          const double f = std::floor(src[i]);
          base[i] = static_cast<std::int64_t>(f);
          frac[i] = src[i] - f;
        }
        for (std::size_t c = 0; c < l.channels; ++c) {
          double value = 0.0;
          for (int corner = 0; corner < 8; ++corner) {
            std::array<std::int64_t, 3> p{};
            double w = 1.0;
            for (int i = 0; i < 3; ++i) {
              const int bit = (corner >> (2 - i)) & 1;
              p[i] = base[i] + bit;
              w *= bit ? frac[i] : 1.0 - frac[i];
            }
            if (w == 0.0) continue;
            if (p[0] < 0 || p[1] < 0 || p[2] < 0 || p[0] >= static_cast<std::int64_t>(e[0]) ||
                p[1] >= static_cast<std::int64_t>(e[1]) || p[2] >= static_cast<std::int64_t>(e[2])) {
              continue;
            }
            value += w * image[c * l.plane + (static_cast<std::size_t>(p[0]) * e[1] +
                                              static_cast<std::size_t>(p[1])) * e[2] +
                               static_cast<std::size_t>(p[2])];
          }
          out[c * l.plane + (z * e[1] + y) * e[2] + x] = value;
        }
      }
  return out;
}

Tensor random_geometric_augment(const Tensor& image, const AugmentationConfig& config, Rng& rng) {
  const Layout l = layout_of(image);
  if (!(config.rotation_range >= 0.0)) {
    throw std::invalid_argument("rotation_range must be non-negative");
  }
  Tensor out = image;
  for (std::size_t axis : config.flip_axes) {
    if (axis >= l.spatial.size()) {
      throw ShapeError("flip axis " + std::to_string(axis) + " exceeds image dimensionality");
    }
    if (rng.bernoulli(0.5)) out = flip(out, axis);
  }
  if (config.rotation_range > 0.0) {
    std::vector<double> angles(l.spatial.size() == 2 ? 1 : 3);
    for (double& a : angles) a = rng.uniform(-config.rotation_range, config.rotation_range);
    out = rotate(out, angles);
  }
  if (config.translation_range > 0) {
    const auto range = static_cast<std::int64_t>(config.translation_range);
    std::vector<std::int64_t> offsets(l.spatial.size());
    for (std::int64_t& o : offsets) o = rng.integer(-range, range);
    out = translate(out, offsets);
  }
  return out;
}

std::pair<Tensor, double> mixup_pair(const Tensor& x1, double y1, const Tensor& x2, double y2,
                                     double lambda) {
  if (x1.shape() != x2.shape()) {
    throw ShapeError("mixup_pair: shapes " + to_string(x1.shape()) + " and " +
                     to_string(x2.shape()) + " differ");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("mixup lambda must lie in [0,1]");
  Tensor mixed(x1.shape());
  for (std::size_t i = 0; i < mixed.size(); ++i) mixed[i] = lambda * x1[i] + (1.0 - lambda) * x2[i];
  return {std::move(mixed), lambda * y1 + (1.0 - lambda) * y2};
}

}  // namespace setsum
