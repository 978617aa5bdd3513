#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "detail/bytes.hpp"
#include "setsum/data.hpp"
#include "setsum/errors.hpp"
#include "support/oracles.hpp"

using namespace setsum;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("setsum_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Brute-force voxel scan of the blob field.
std::size_t threshold_count(const Shape& extent, const std::vector<Blob>& blobs, double threshold) {
  std::size_t count = 0;
  const std::size_t depth = extent.size() == 3 ? extent[0] : 1;
  const std::size_t h = extent[extent.size() - 2], w = extent.back();
  for (std::size_t z = 0; z < depth; ++z)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double v = 0.0;
        for (const Blob& b : blobs) {
          std::vector<double> p = extent.size() == 3 ? std::vector<double>{double(z), double(y), double(x)}
                                                     : std::vector<double>{double(y), double(x)};
          double d2 = 0.0;
          for (std::size_t a = 0; a < p.size(); ++a) d2 += (p[a] - b.center[a]) * (p[a] - b.center[a]);
          v += b.intensity * std::exp(-d2 / (2 * b.sigma * b.sigma));
        }
        count += v > threshold;
      }
  return count;
}

}  // namespace

TEST_SUITE("generate_blob_image") {
  TEST_CASE("fixed count range gives that count") {
    SyntheticConfig c;
    c.blob_count_range = {3, 3};
    Rng rng(1);
    const GeneratedImage g = generate_blob_image(c, rng);
    CHECK(g.count_label == 3);
    CHECK(g.blobs.size() == 3);
    CHECK(g.image.shape() == Shape{1, 16, 16});
  }

  TEST_CASE("no blobs and no noise is a zero image") {
    SyntheticConfig c;
    c.blob_count_range = {0, 0};
    c.noise_sigma = 0.0;
    Rng rng(2);
    const GeneratedImage g = generate_blob_image(c, rng);
    CHECK(g.image == Tensor({1, 16, 16}));
    CHECK(g.count_label == 0);
    CHECK(g.volume_label == 0);
  }

  TEST_CASE("labels match the brute-force oracle") {
    SyntheticConfig c;
    Rng rng(3);
    for (int i = 0; i < 30; ++i) {
      const GeneratedImage g = generate_blob_image(c, rng);
      CHECK(g.count_label == g.blobs.size());
      CHECK(g.volume_label == threshold_count(c.image_extent, g.blobs, c.volume_threshold));
      std::size_t from_clean = 0;
      for (double v : g.clean.data()) from_clean += v > c.volume_threshold;
      CHECK(g.volume_label == from_clean);
      CHECK(g.count_label <= 8);
      for (double v : g.image.data()) CHECK(v >= 0.0);
      for (std::size_t a = 0; a < g.blobs.size(); ++a)
        for (std::size_t b = a + 1; b < g.blobs.size(); ++b) {
          double d2 = 0.0;
          for (std::size_t k = 0; k < 2; ++k) {
            const double d = g.blobs[a].center[k] - g.blobs[b].center[k];
            d2 += d * d;
          }
          CHECK(std::sqrt(d2) >= 2 * (g.blobs[a].sigma + g.blobs[b].sigma));
        }
    }
  }

  TEST_CASE("3D generation") {
    SyntheticConfig c;
    c.dims = 3;
    c.image_extent = {10, 10, 10};
    c.blob_count_range = {2, 4};
    Rng rng(4);
    const GeneratedImage g = generate_blob_image(c, rng);
    CHECK(g.image.shape() == Shape{1, 10, 10, 10});
    CHECK(g.volume_label == threshold_count(c.image_extent, g.blobs, c.volume_threshold));
  }

  TEST_CASE("same seed gives the same image") {
    SyntheticConfig c;
    Rng a(5), b(5);
    CHECK(generate_blob_image(c, a).image == generate_blob_image(c, b).image);
  }

  TEST_CASE("impossible placement is rejected with a diagnostic") {
    SyntheticConfig c;
    c.blob_count_range = {40, 40};
    Rng rng(6);
    try {
      generate_blob_image(c, rng);
      FAIL("expected failure");
    } catch (const std::exception& e) {
      CHECK(std::string(e.what()).find("40") != std::string::npos);
    }
  }

  TEST_CASE("invalid configs are rejected") {
    SyntheticConfig reversed;
    reversed.blob_count_range = {5, 2};
    CHECK_THROWS(reversed.validate());
    SyntheticConfig tiny;
    tiny.image_extent = {3, 16};
    CHECK_THROWS(tiny.validate());
    SyntheticConfig negative;
    negative.noise_sigma = -1;
    CHECK_THROWS(negative.validate());
    SyntheticConfig wrong_rank;
    wrong_rank.dims = 3;
    CHECK_THROWS(wrong_rank.validate());
  }
}

TEST_SUITE("center_of_mass_crop") {
  TEST_CASE("point mass centers the window") {
    Tensor image({1, 11, 11});
    image[5 * 11 + 5] = 2.0;
    const Tensor crop = center_of_mass_crop(image, {3, 3});
    CHECK(crop.shape() == Shape{1, 3, 3});
    CHECK(crop[4] == 2.0);
  }

  TEST_CASE("uniform image uses the geometric center") {
    const Tensor image({1, 9, 9}, 1.0);
    const auto com = center_of_mass(image);
    CHECK(com == std::vector<double>{4.0, 4.0});
    const auto zero = center_of_mass(Tensor({1, 9, 9}));
    CHECK(zero == std::vector<double>{4.0, 4.0});
  }

  TEST_CASE("two-point weighted mean") {
    Tensor image({1, 12, 12});
    image[2 * 12 + 1] = 1.0;
    image[6 * 12 + 9] = 3.0;
    const auto com = center_of_mass(image);
    CHECK(com[0] == doctest::Approx((2 * 1.0 + 6 * 3.0) / 4.0));
    CHECK(com[1] == doctest::Approx((1 * 1.0 + 9 * 3.0) / 4.0));
    // rounded center (5, 7): window rows 4..6, cols 6..8
    const Tensor crop = center_of_mass_crop(image, {3, 3});
    Tensor expected({1, 3, 3});
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c) expected[r * 3 + c] = image[(4 + r) * 12 + 6 + c];
    CHECK(crop == expected);
  }

  TEST_CASE("window clamps at the border") {
    Tensor image({1, 8, 8});
    image[0] = 1.0;
    const Tensor crop = center_of_mass_crop(image, {4, 4});
    CHECK(crop[0] == 1.0);
    CHECK_THROWS_AS(center_of_mass_crop(image, {9, 4}), ShapeError);
  }

  TEST_CASE("positive scaling selects the same window") {
    Rng rng(7);
    const Tensor image = oracle::random_tensor({1, 16, 16}, rng, 0.0, 1.0);
    CHECK(center_of_mass_crop(3.5 * image, {6, 6}) == 3.5 * center_of_mass_crop(image, {6, 6}));
  }
}

TEST_SUITE("rescale_intensity") {
  TEST_CASE("endpoints and constant images") {
    CHECK(rescale_intensity(Tensor::vector({2, 4})) == Tensor::vector({0, 1}));
    CHECK(rescale_intensity(Tensor({1, 3, 3}, 7.0)) == Tensor({1, 3, 3}));
  }

  TEST_CASE("range and idempotence") {
    Rng rng(8);
    for (int i = 0; i < 10; ++i) {
      const Tensor r = rescale_intensity(oracle::random_tensor({1, 6, 6}, rng, -3, 5));
      double lo = 1e9, hi = -1e9;
      for (double v : r.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      CHECK(lo == 0.0);
      CHECK(hi == 1.0);
      CHECK(max_abs_difference(rescale_intensity(r), r) < 1e-15);
    }
  }
}

TEST_SUITE("tensor files") {
  TEST_CASE("round trip is bit-identical") {
    Rng rng(9);
    const Tensor t = oracle::random_tensor({3, 16, 16}, rng);
    const fs::path dir = scratch_dir("tensor");
    write_tensor(dir / "t.sstf", t);
    CHECK(read_tensor(dir / "t.sstf") == t);
    const std::string bytes = encode_tensor(t);
    CHECK(bytes.substr(0, 5) == "SSTF1");
    CHECK(bytes.size() == 5 + 1 + 3 * 4 + t.size() * 8);
    fs::remove_all(dir);
  }

  TEST_CASE("wrong magic names the magic") {
    std::string bytes = encode_tensor(Tensor({2, 2}));
    bytes[0] = 'X';
    try {
      decode_tensor(bytes);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("SSTF1") != std::string::npos);
    }
  }

  TEST_CASE("payload length must match the header") {
    std::string bytes = "SSTF1";
    bytes.push_back(1);
    detail::put_u32(bytes, 100);
    for (int i = 0; i < 99; ++i) detail::put_f64(bytes, 1.0);
    CHECK_THROWS_AS(decode_tensor(bytes), FormatError);
    detail::put_f64(bytes, 1.0);
    CHECK(decode_tensor(bytes).size() == 100);
    detail::put_f64(bytes, 1.0);
    CHECK_THROWS_AS(decode_tensor(bytes), FormatError);
    CHECK_THROWS_AS(decode_tensor("SSTF"), FormatError);
    CHECK_THROWS_AS(read_tensor("/nonexistent/t.sstf"), IoError);
  }
}

TEST_SUITE("manifest") {
  TEST_CASE("csv round trip") {
    const std::vector<ImageRecord> records{{"a.sstf", 3, 17, Split::train},
                                           {"sub/b.sstf", 0, 0, Split::val},
                                           {"c.sstf", 8, 60, Split::test}};
    const std::string csv = manifest_to_csv(records);
    CHECK(csv.rfind("path,count_label,volume_label,split\n", 0) == 0);
    CHECK(manifest_from_csv(csv) == records);
  }

  TEST_CASE("malformed csv is rejected") {
    CHECK_THROWS(manifest_from_csv("file,count,volume,split\n"));
    CHECK_THROWS(manifest_from_csv("path,count_label,volume_label,split\na.sstf,1,2,holdout\n"));
    CHECK_THROWS(manifest_from_csv("path,count_label,volume_label,split\na.sstf,1,2\n"));
    CHECK_THROWS(manifest_from_csv("path,count_label,volume_label,split\na.sstf,-1,2,train\n"));
    CHECK_THROWS(manifest_from_csv("path,count_label,volume_label,split\na.sstf,1,2,train\na.sstf,1,2,val\n"));
  }

  TEST_CASE("generated dataset is consistent and deterministic") {
    const fs::path a = scratch_dir("gen_a");
    const fs::path b = scratch_dir("gen_b");
    SyntheticConfig c;
    const DatasetSizes sizes{5, 2, 3};
    const auto records = generate_dataset(c, sizes, 42, a);
    generate_dataset(c, sizes, 42, b);
    CHECK(records.size() == 10);
    CHECK(detail::read_file(a / "manifest.csv") == detail::read_file(b / "manifest.csv"));
    std::set<std::string> paths;
    for (const ImageRecord& r : records) {
      CHECK(paths.insert(r.path).second);
      CHECK(detail::read_file(a / r.path) == detail::read_file(b / r.path));
    }
    const DatasetManifest m = read_manifest(a / "manifest.csv");
    CHECK(m.split(Split::train).size() == 5);
    CHECK(m.split(Split::val).size() == 2);
    CHECK(m.split(Split::test).size() == 3);

    const LabeledImages train = load_split(m, Split::train, {});
    CHECK(train.size() == 5);
    for (std::size_t i = 0; i < train.size(); ++i) {
      CHECK(train.images[i].shape() == Shape{1, 16, 16});
      CHECK(train.labels[i] == static_cast<double>(m.split(Split::train)[i].count_label));
    }
    const DatasetManifest volume = read_manifest(a / "manifest.csv", LabelKind::volume);
    CHECK(load_split(volume, Split::test, {}).labels[0] ==
          static_cast<double>(volume.split(Split::test)[0].volume_label));
    fs::remove_all(a);
    fs::remove_all(b);
  }

  TEST_CASE("preprocess crops and rescales") {
    Rng rng(10);
    const Tensor image = oracle::random_tensor({1, 16, 16}, rng, 0.0, 2.0);
    const Tensor out = preprocess(image, {{8, 8}, true, true});
    CHECK(out.shape() == Shape{1, 8, 8});
    const Tensor untouched = preprocess(image, {{64, 64}, false, false});
    CHECK(untouched == image);
  }

  TEST_CASE("missing manifest is an io error") {
    CHECK_THROWS_AS(read_manifest("/nonexistent/manifest.csv"), IoError);
  }
}
