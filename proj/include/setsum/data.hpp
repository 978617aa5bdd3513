#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "setsum/rng.hpp"
#include "setsum/tensor.hpp"

namespace setsum {

struct SyntheticConfig {
  Shape image_extent{16, 16};  // spatial extents
  int dims = 2;
  std::pair<std::size_t, std::size_t> blob_count_range{0, 8};
  std::pair<double, double> blob_sigma_range{0.7, 1.0};
  std::pair<double, double> intensity_range{0.5, 1.0};
  // Noise off by default: per-image rescaling stretches the noise of a blob-free
  // image to the full [0, 1] range.
  double noise_sigma = 0.0;
  double volume_threshold = 0.25;

  void validate() const;
};

struct Blob {
  std::vector<double> center;  // spatial coordinates
  double sigma = 1.0;
  double intensity = 1.0;
};

struct GeneratedImage {
  Tensor image;  // (1, spatial...) noisy, clipped at 0
  Tensor clean;  // (1, spatial...) noise-free blob field
  std::vector<Blob> blobs;
  std::size_t count_label = 0;
  std::size_t volume_label = 0;
};

// Evaluates sum_k intensity_k * exp(-|x - c_k|^2 / (2 sigma_k^2)) on the grid.
Tensor render_blobs(const Shape& extent, const std::vector<Blob>& blobs);

// k ~ U{count range} isotropic Gaussian blobs with centers at least
// 2(sigma_i + sigma_j) apart, plus Gaussian noise. Throws when the blobs
// cannot be placed.
GeneratedImage generate_blob_image(const SyntheticConfig& config, Rng& rng);

// Window of crop_extent (spatial) centered at the rounded intensity-weighted
// center of mass, clamped inside the image. An all-zero image uses the
// geometric center.
Tensor center_of_mass_crop(const Tensor& image, const Shape& crop_extent);
// Intensity-weighted center of mass per spatial axis (geometric center if all zero).
std::vector<double> center_of_mass(const Tensor& image);

// (x - min) / (max - min); a constant image maps to zeros.
Tensor rescale_intensity(const Tensor& image);

// Tensor file: "SSTF1", u8 rank, u32 LE extents, f64 LE payload.
std::string encode_tensor(const Tensor& tensor);
Tensor decode_tensor(const std::string& bytes);
void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);

enum class Split { train, val, test };
enum class LabelKind { count, volume };

std::string to_string(Split split);
Split parse_split(const std::string& text);
std::string to_string(LabelKind kind);
LabelKind parse_label_kind(const std::string& text);

struct ImageRecord {
  std::string path;  // relative to the manifest directory unless absolute
  std::size_t count_label = 0;
  std::size_t volume_label = 0;
  Split split = Split::train;

  double label(LabelKind kind) const {
    return static_cast<double>(kind == LabelKind::count ? count_label : volume_label);
  }

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct DatasetManifest {
  std::vector<ImageRecord> records;
  LabelKind label_kind = LabelKind::count;
  std::filesystem::path base_dir;  // directory paths are resolved against

  std::vector<ImageRecord> split(Split which) const;
  std::filesystem::path resolve(const ImageRecord& record) const;
};

// CSV header: path,count_label,volume_label,split
std::string manifest_to_csv(const std::vector<ImageRecord>& records);
std::vector<ImageRecord> manifest_from_csv(const std::string& text);
void write_manifest(const std::filesystem::path& path, const std::vector<ImageRecord>& records);
DatasetManifest read_manifest(const std::filesystem::path& path, LabelKind kind = LabelKind::count);

struct PreprocessConfig {
  Shape crop_extent{64, 64};  // clamped to the image extent
  bool center_crop = true;
  bool rescale = true;
};

struct LabeledImages {
  std::vector<Tensor> images;
  std::vector<double> labels;
  std::vector<std::string> paths;

  std::size_t size() const noexcept { return images.size(); }
  LabeledImages subset(const std::vector<std::size_t>& indices) const;
};

Tensor preprocess(const Tensor& image, const PreprocessConfig& config);

// Reads and preprocesses every record of a split (in manifest order).
LabeledImages load_split(const DatasetManifest& manifest, Split which,
                         const PreprocessConfig& config);

struct DatasetSizes {
  std::size_t train = 24;
  std::size_t val = 8;
  std::size_t test = 100;
};

// Writes img_NNNNN.sstf files plus manifest.csv into `directory`; records are
// assigned train, then val, then test in generation order.
std::vector<ImageRecord> generate_dataset(const SyntheticConfig& config, const DatasetSizes& sizes,
                                          std::uint64_t seed, const std::filesystem::path& directory);

}  // namespace setsum
