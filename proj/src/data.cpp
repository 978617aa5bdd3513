#include "setsum/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "detail/bytes.hpp"
#include "detail/text.hpp"
#include "setsum/errors.hpp"

namespace setsum {

namespace {

constexpr std::string_view kTensorMagic = "SSTF1";
constexpr int kPlacementRestarts = 100;
constexpr int kPlacementTries = 1000;

std::vector<std::size_t> unravel(std::size_t flat, const Shape& extent) {
  std::vector<std::size_t> index(extent.size());
  for (std::size_t d = extent.size(); d-- > 0;) {
    index[d] = flat % extent[d];
    flat /= extent[d];
  }
  return index;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (dims != 2 && dims != 3) throw std::invalid_argument("synthetic dims must be 2 or 3");
  if (image_extent.size() != static_cast<std::size_t>(dims)) {
    throw std::invalid_argument("image_extent needs " + std::to_string(dims) + " extents");
  }
  if (blob_count_range.first > blob_count_range.second) {
    throw std::invalid_argument("blob_count_range min exceeds max");
  }
  if (!(blob_sigma_range.first > 0.0) || blob_sigma_range.first > blob_sigma_range.second) {
    throw std::invalid_argument("blob_sigma_range must be positive with min <= max");
  }
  if (!(intensity_range.first > 0.0) || intensity_range.first > intensity_range.second) {
    throw std::invalid_argument("intensity_range must be positive with min <= max");
  }
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be non-negative");
  for (std::size_t e : image_extent) {
    if (static_cast<double>(e) < 4.0 * blob_sigma_range.second) {
      throw std::invalid_argument("image extent " + std::to_string(e) +
                                  " is below 4x the largest blob sigma");
    }
  }
}

Tensor render_blobs(const Shape& extent, const std::vector<Blob>& blobs) {
  Shape shape{1};
  shape.insert(shape.end(), extent.begin(), extent.end());
  Tensor field(shape);
  for (std::size_t i = 0; i < field.size(); ++i) {
    const std::vector<std::size_t> index = unravel(i, extent);
    double value = 0.0;
    for (const Blob& b : blobs) {
      double r2 = 0.0;
      for (std::size_t d = 0; d < extent.size(); ++d) {
        const double delta = static_cast<double>(index[d]) - b.center[d];
        r2 += delta * delta;
      }
      value += b.intensity * std::exp(-r2 / (2.0 * b.sigma * b.sigma));
    }
    field[i] = value;
  }
  return field;
}

GeneratedImage generate_blob_image(const SyntheticConfig& config, Rng& rng) {
  config.validate();
  GeneratedImage out;
  const auto k = static_cast<std::size_t>(
      rng.integer(static_cast<std::int64_t>(config.blob_count_range.first),
                  static_cast<std::int64_t>(config.blob_count_range.second)));

  bool placed = false;
  for (int restart = 0; restart < kPlacementRestarts && !placed; ++restart) {
    out.blobs.clear();
    placed = true;
    for (std::size_t b = 0; b < k && placed; ++b) {
      Blob blob;
      blob.sigma = rng.uniform(config.blob_sigma_range.first, config.blob_sigma_range.second);
      blob.intensity = rng.uniform(config.intensity_range.first, config.intensity_range.second);
      bool found = false;
      for (int attempt = 0; attempt < kPlacementTries && !found; ++attempt) {
        blob.center.clear();
        for (std::size_t e : config.image_extent) {
          const double lo = 2.0 * blob.sigma - 0.5;
          const double hi = static_cast<double>(e) - 0.5 - 2.0 * blob.sigma;
          blob.center.push_back(lo < hi ? rng.uniform(lo, hi) : lo);
        }
        found = std::all_of(out.blobs.begin(), out.blobs.end(), [&](const Blob& other) {
          double d2 = 0.0;
          for (std::size_t d = 0; d < blob.center.size(); ++d) {
            const double delta = blob.center[d] - other.center[d];
            d2 += delta * delta;
          }
          const double min_distance = 2.0 * (blob.sigma + other.sigma);
          return d2 >= min_distance * min_distance;
        });
      }
      if (found) {
        out.blobs.push_back(blob);
      } else {
        placed = false;
      }
    }
  }
  if (!placed) {
    throw std::runtime_error("could not place " + std::to_string(k) + " non-overlapping blobs in " +
                             to_string(config.image_extent) + " after " +
                             std::to_string(kPlacementRestarts) + " restarts");
  }

  out.clean = render_blobs(config.image_extent, out.blobs);
  out.image = out.clean;
  if (config.noise_sigma > 0.0) {
    for (double& v : out.image.data()) v = std::max(0.0, v + rng.normal(0.0, config.noise_sigma));
  }
  out.count_label = k;
  out.volume_label = static_cast<std::size_t>(
      std::count_if(out.clean.data().begin(), out.clean.data().end(),
                    [&](double v) { return v > config.volume_threshold; }));
  return out;
}

std::vector<double> center_of_mass(const Tensor& image) {
  if (image.rank() < 2) throw ShapeError("center_of_mass: need (channels, spatial...)");
  const Shape spatial(image.shape().begin() + 1, image.shape().end());
  const std::size_t plane = element_count(spatial);
  std::vector<double> weighted(spatial.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    double w = 0.0;
    for (std::size_t c = 0; c < image.extent(0); ++c) w += image[c * plane + i];
    if (w == 0.0) continue;
    const std::vector<std::size_t> index = unravel(i, spatial);
    for (std::size_t d = 0; d < spatial.size(); ++d) weighted[d] += w * static_cast<double>(index[d]);
    total += w;
  }
  std::vector<double> center(spatial.size());
  for (std::size_t d = 0; d < spatial.size(); ++d) {
    center[d] = total == 0.0 ? (static_cast<double>(spatial[d]) - 1.0) / 2.0 : weighted[d] / total;
  }
  return center;
}

Tensor center_of_mass_crop(const Tensor& image, const Shape& crop_extent) {
  if (image.rank() < 2) throw ShapeError("center_of_mass_crop: need (channels, spatial...)");
  const Shape spatial(image.shape().begin() + 1, image.shape().end());
  if (crop_extent.size() != spatial.size()) {
    throw ShapeError("center_of_mass_crop: crop has " + std::to_string(crop_extent.size()) +
                     " extents, image has " + std::to_string(spatial.size()) + " spatial dims");
  }
  for (std::size_t d = 0; d < spatial.size(); ++d) {
    if (crop_extent[d] == 0 || crop_extent[d] > spatial[d]) {
      throw ShapeError("center_of_mass_crop: crop extent " + std::to_string(crop_extent[d]) +
                       " invalid for spatial dim " + std::to_string(d) + " of extent " +
                       std::to_string(spatial[d]));
    }
  }
  const std::vector<double> center = center_of_mass(image);
  std::vector<std::size_t> origin(spatial.size());
  for (std::size_t d = 0; d < spatial.size(); ++d) {
    const double c = std::round(center[d]);
    // Window [c - floor(crop/2), ...) clamped to [0, extent - crop].
    const double start = c - static_cast<double>(crop_extent[d] / 2);
    const double max_start = static_cast<double>(spatial[d] - crop_extent[d]);
    origin[d] = static_cast<std::size_t>(std::clamp(start, 0.0, max_start));
  }
  Shape out_shape{image.extent(0)};
  out_shape.insert(out_shape.end(), crop_extent.begin(), crop_extent.end());
  Tensor out(out_shape);
  const std::size_t in_plane = element_count(spatial);
  const std::size_t out_plane = element_count(crop_extent);
  for (std::size_t c = 0; c < image.extent(0); ++c) {
    for (std::size_t i = 0; i < out_plane; ++i) {
      const std::vector<std::size_t> index = unravel(i, crop_extent);
      std::size_t flat = 0;
      for (std::size_t d = 0; d < spatial.size(); ++d) flat = flat * spatial[d] + index[d] + origin[d];
      out[c * out_plane + i] = image[c * in_plane + flat];
    }
  }
  return out;
}

Tensor rescale_intensity(const Tensor& image) {
  Tensor out(image.shape());
  if (image.size() == 0) return out;
  const auto [lo, hi] = std::minmax_element(image.data().begin(), image.data().end());
  const double min = *lo;
  const double range = *hi - *lo;
  if (range == 0.0) return out;
  for (std::size_t i = 0; i < image.size(); ++i) out[i] = (image[i] - min) / range;
  return out;
}

std::string encode_tensor(const Tensor& tensor) {
  if (tensor.rank() > 255) throw ShapeError("tensor rank exceeds 255");
  std::string out(kTensorMagic);
  out.push_back(static_cast<char>(tensor.rank()));
  for (std::size_t e : tensor.shape()) {
    if (e > 0xffffffffu) throw ShapeError("tensor extent exceeds u32");
    detail::put_u32(out, static_cast<std::uint32_t>(e));
  }
  for (double v : tensor.data()) detail::put_f64(out, v);
  return out;
}

Tensor decode_tensor(const std::string& bytes) {
  if (bytes.size() < kTensorMagic.size() ||
      bytes.compare(0, kTensorMagic.size(), kTensorMagic) != 0) {
    throw FormatError("bad magic: tensor files must start with \"SSTF1\"");
  }
  detail::ByteReader reader(bytes);
  reader.take(kTensorMagic.size(), "magic");
  const std::size_t rank = reader.u8("rank");
  Shape shape;
  for (std::size_t d = 0; d < rank; ++d) shape.push_back(reader.u32("extent"));
  const std::size_t count = element_count(shape);
  if (reader.remaining() != count * 8) {
    throw FormatError("payload length mismatch: extents " + to_string(shape) + " declare " +
                      std::to_string(count) + " values (" + std::to_string(count * 8) +
                      " bytes), file holds " + std::to_string(reader.remaining()) + " bytes");
  }
  std::vector<double> data(count);
  for (double& v : data) v = reader.f64("value");
  return Tensor(std::move(shape), std::move(data));
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  detail::write_file(path, encode_tensor(tensor));
}

Tensor read_tensor(const std::filesystem::path& path) {
  try {
    return decode_tensor(detail::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw std::invalid_argument("split must be train, val or test, got '" + text + "'");
}

std::string to_string(LabelKind kind) { return kind == LabelKind::count ? "count" : "volume"; }

LabelKind parse_label_kind(const std::string& text) {
  if (text == "count") return LabelKind::count;
  if (text == "volume") return LabelKind::volume;
  throw std::invalid_argument("label kind must be count or volume, got '" + text + "'");
}

std::vector<ImageRecord> DatasetManifest::split(Split which) const {
  std::vector<ImageRecord> out;
  for (const ImageRecord& r : records) {
    if (r.split == which) out.push_back(r);
  }
  return out;
}

std::filesystem::path DatasetManifest::resolve(const ImageRecord& record) const {
  const std::filesystem::path p(record.path);
  return p.is_absolute() ? p : base_dir / p;
}

std::string manifest_to_csv(const std::vector<ImageRecord>& records) {
  std::string out = "path,count_label,volume_label,split\n";
  for (const ImageRecord& r : records) {
    if (r.path.find(',') != std::string::npos || r.path.find('\n') != std::string::npos) {
      throw FormatError("manifest paths may not contain commas or newlines: " + r.path);
    }
    out += r.path + "," + std::to_string(r.count_label) + "," + std::to_string(r.volume_label) +
           "," + to_string(r.split) + "\n";
  }
  return out;
}

std::vector<ImageRecord> manifest_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "path,count_label,volume_label,split") {
    throw FormatError("manifest header must be 'path,count_label,volume_label,split'");
  }
  std::vector<ImageRecord> records;
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (detail::trim(line).empty()) continue;
    const std::vector<std::string> fields = detail::split(line, ',');
    if (fields.size() != 4) {
      throw FormatError("manifest line " + std::to_string(line_number) + ": expected 4 fields, got " +
                        std::to_string(fields.size()));
    }
    try {
      ImageRecord r;
      r.path = fields[0];
      r.count_label = static_cast<std::size_t>(detail::parse_uint(fields[1]));
      r.volume_label = static_cast<std::size_t>(detail::parse_uint(fields[2]));
      r.split = parse_split(fields[3]);
      records.push_back(std::move(r));
    } catch (const std::invalid_argument& e) {
      throw FormatError("manifest line " + std::to_string(line_number) + ": " + e.what());
    }
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (std::size_t j = i + 1; j < records.size(); ++j) {
      if (records[i].path == records[j].path) {
        throw FormatError("manifest lists " + records[i].path + " twice");
      }
    }
  }
  return records;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ImageRecord>& records) {
  detail::write_file(path, manifest_to_csv(records));
}

DatasetManifest read_manifest(const std::filesystem::path& path, LabelKind kind) {
  DatasetManifest manifest;
  manifest.records = manifest_from_csv(detail::read_file(path));
  manifest.label_kind = kind;
  manifest.base_dir = path.parent_path();
  return manifest;
}

LabeledImages LabeledImages::subset(const std::vector<std::size_t>& indices) const {
  LabeledImages out;
  for (std::size_t i : indices) {
    out.images.push_back(images.at(i));
    out.labels.push_back(labels.at(i));
    out.paths.push_back(paths.at(i));
  }
  return out;
}

Tensor preprocess(const Tensor& image, const PreprocessConfig& config) {
  Tensor out = image;
  if (config.center_crop) {
    Shape crop = config.crop_extent;
    if (crop.size() + 1 != image.rank()) {
      throw ShapeError("crop_extent " + to_string(crop) + " does not match image " +
                       to_string(image.shape()));
    }
    for (std::size_t d = 0; d < crop.size(); ++d) crop[d] = std::min(crop[d], image.extent(d + 1));
    out = center_of_mass_crop(out, crop);
  }
  if (config.rescale) out = rescale_intensity(out);
  return out;
}

LabeledImages load_split(const DatasetManifest& manifest, Split which,
                         const PreprocessConfig& config) {
  LabeledImages out;
  for (const ImageRecord& r : manifest.records) {
    if (r.split != which) continue;
    out.images.push_back(preprocess(read_tensor(manifest.resolve(r)), config));
    out.labels.push_back(r.label(manifest.label_kind));
    out.paths.push_back(r.path);
  }
  return out;
}

std::vector<ImageRecord> generate_dataset(const SyntheticConfig& config, const DatasetSizes& sizes,
                                          std::uint64_t seed, const std::filesystem::path& directory) {
  config.validate();
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw IoError("cannot create " + directory.string() + ": " + ec.message());
  const std::size_t total = sizes.train + sizes.val + sizes.test;
  std::vector<ImageRecord> records;
  for (std::size_t i = 0; i < total; ++i) {
    Rng rng(derive_seed(seed, {0x696d67, i}));
    const GeneratedImage g = generate_blob_image(config, rng);
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05zu.sstf", i);
    write_tensor(directory / name, g.image);
    ImageRecord r;
    r.path = name;
    r.count_label = g.count_label;
    r.volume_label = g.volume_label;
    r.split = i < sizes.train ? Split::train : (i < sizes.train + sizes.val ? Split::val : Split::test);
    records.push_back(std::move(r));
  }
  write_manifest(directory / "manifest.csv", records);
  return records;
}

}  // namespace setsum
