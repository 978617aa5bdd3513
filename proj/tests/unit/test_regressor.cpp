#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "setsum/errors.hpp"
#include "setsum/regressor.hpp"
#include "support/oracles.hpp"

using namespace setsum;

namespace {

ArchitectureConfig tiny_config(bool zero_bias = true, std::uint64_t seed = 4) {
  ArchitectureConfig c;
  c.input_shape = {1, 6, 6};
  c.conv_blocks = {{3, 3}, {4, 3}};
  c.skip_connections = {{0, 2}};
  c.zero_bias = zero_bias;
  c.seed = seed;
  return c;
}

std::vector<Tensor> random_images(const Shape& shape, std::size_t count, Rng& rng) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(oracle::random_tensor(shape, rng, 0.0, 1.0));
  return out;
}

}  // namespace

TEST_SUITE("build_base_regressor") {
  TEST_CASE("same seed twice gives bit-identical parameters") {
    CHECK(build_base_regressor(ArchitectureConfig{}) == build_base_regressor(ArchitectureConfig{}));
    ArchitectureConfig other;
    other.seed = 1;
    CHECK_FALSE(build_base_regressor(ArchitectureConfig{}).parameters() == build_base_regressor(other).parameters());
  }

  TEST_CASE("zero_bias omits every bias") {
    const RegressorModel model = build_base_regressor(ArchitectureConfig{});
    for (std::size_t s = 0; s < model.parameters().size(); ++s) {
      CHECK(model.parameters().name(s).find("bias") == std::string::npos);
    }
    ArchitectureConfig biased;
    biased.zero_bias = false;
    CHECK(build_base_regressor(biased).parameters().find("fc.bias").has_value());
  }

  TEST_CASE("parameter count matches the shape-walk oracle") {
    ArchitectureConfig biased;
    biased.zero_bias = false;
    ArchitectureConfig three_d = tiny_config();
    three_d.input_shape = {2, 5, 5, 5};
    three_d.dims = 3;
    three_d.skip_connections = {{0, 1}, {0, 2}};
    for (const ArchitectureConfig& c : {ArchitectureConfig{}, biased, tiny_config(), three_d}) {
      const RegressorModel m = build_base_regressor(c);
      CHECK(m.parameter_count() == oracle::parameter_count(c));
      CHECK(m.parameter_count() == m.parameters().element_count());
    }
    CHECK(build_base_regressor(ArchitectureConfig{}).parameter_count() == 13352);
  }

  TEST_CASE("inconsistent configs are rejected") {
    ArchitectureConfig backwards;
    backwards.skip_connections = {{2, 1}};
    CHECK_THROWS(build_base_regressor(backwards));
    ArchitectureConfig too_far;
    too_far.skip_connections = {{0, 5}};
    CHECK_THROWS(build_base_regressor(too_far));
    ArchitectureConfig empty_block;
    empty_block.conv_blocks[1] = {0, 3};
    CHECK_THROWS(build_base_regressor(empty_block));
    ArchitectureConfig zero_kernel;
    zero_kernel.conv_blocks[0] = {8, 0};
    CHECK_THROWS(build_base_regressor(zero_kernel));
    ArchitectureConfig bad_dims;
    bad_dims.dims = 3;
    CHECK_THROWS(build_base_regressor(bad_dims));
    ArchitectureConfig no_blocks;
    no_blocks.conv_blocks = {};
    no_blocks.skip_connections = {};
    CHECK_THROWS(build_base_regressor(no_blocks));
    ArchitectureConfig bad_dropout;
    bad_dropout.dropout_rate = 1.0;
    CHECK_THROWS(build_base_regressor(bad_dropout));
  }

  TEST_CASE("architecture text round-trips") {
    ArchitectureConfig c = tiny_config(false, 99);
    c.dropout_rate = 0.25;
    CHECK(architecture_from_text(to_text(c)) == c);
    CHECK(architecture_from_text(to_text(ArchitectureConfig{})) == ArchitectureConfig{});
  }
}

TEST_SUITE("predict") {
  TEST_CASE("black input with zero bias gives exactly 0") {
    const RegressorModel model = build_base_regressor(ArchitectureConfig{});
    CHECK(model.predict(black_image(model.architecture())) == 0.0);
  }

  TEST_CASE("outputs are finite and repeatable") {
    const RegressorModel model = build_base_regressor(ArchitectureConfig{});
    Rng rng(2);
    for (const Tensor& image : random_images({1, 16, 16}, 5, rng)) {
      const double y = model.predict(image);
      CHECK(std::isfinite(y));
      CHECK(model.predict(image) == y);
    }
  }

  TEST_CASE("shape mismatch is rejected") {
    const RegressorModel model = build_base_regressor(ArchitectureConfig{});
    CHECK_THROWS_AS(model.predict(Tensor({1, 16, 15})), ShapeError);
    CHECK_THROWS_AS(model.predict(Tensor({2, 16, 16})), ShapeError);
  }

  TEST_CASE("dropout is inactive at inference") {
    ArchitectureConfig c = tiny_config();
    c.dropout_rate = 0.5;
    const RegressorModel model = build_base_regressor(c);
    Rng rng(3);
    const Tensor image = oracle::random_tensor({1, 6, 6}, rng, 0.0, 1.0);
    Graph g(model.parameters());
    const NodeId out = model.forward(g, g.constant(image));
    CHECK(g.value(out).item() == model.predict(image));
  }
}

TEST_SUITE("hydra") {
  TEST_CASE("singleton set equals predict") {
    const RegressorModel model = build_base_regressor(tiny_config(false));
    Rng rng(5);
    const auto images = random_images({1, 6, 6}, 1, rng);
    CHECK(hydra_forward(model, images) == model.predict(images[0]));
  }

  TEST_CASE("four black slots give 0") {
    const RegressorModel model = build_base_regressor(ArchitectureConfig{});
    const std::vector<Tensor> blacks(4, black_image(model.architecture()));
    CHECK(hydra_forward(model, blacks) == 0.0);
  }

  TEST_CASE("permuting a set leaves the output unchanged") {
    const RegressorModel model = build_base_regressor(tiny_config());
    Rng rng(6);
    auto images = random_images({1, 6, 6}, 4, rng);
    const double a = hydra_forward(model, images);
    std::reverse(images.begin(), images.end());
    std::swap(images[0], images[2]);
    CHECK(std::abs(hydra_forward(model, images) - a) < 1e-12);
  }

  TEST_CASE("padding with black slots adds f(B) per slot") {
    const RegressorModel model = build_base_regressor(tiny_config(false));
    Rng rng(7);
    const Tensor image = oracle::random_tensor({1, 6, 6}, rng, 0.0, 1.0);
    const Tensor black = black_image(model.architecture());
    const std::vector<Tensor> set{image, black, black, black};
    CHECK(std::abs(hydra_forward(model, set) - (model.predict(image) + 3 * model.predict(black))) < 1e-12);
  }

  TEST_CASE("empty set is rejected") {
    const RegressorModel model = build_base_regressor(tiny_config());
    CHECK_THROWS(hydra_forward(model, std::span<const Tensor>{}));
    CHECK_THROWS(hydra_loss(model, std::span<const Tensor>{}, 0.0, LossKind::mse));
  }

  TEST_CASE("grouped and per-sample losses differ") {
    // predictions (1, 2), labels (2, 1)
    CHECK(loss_value(LossKind::mse, 1, 2) + loss_value(LossKind::mse, 2, 1) == 2.0);
    CHECK(loss_value(LossKind::mse, 1 + 2, 2 + 1) == 0.0);
  }

  TEST_CASE("perfect predictions give zero loss") {
    const RegressorModel model = build_base_regressor(tiny_config());
    Rng rng(8);
    const auto images = random_images({1, 6, 6}, 3, rng);
    const double target = hydra_forward(model, images);
    for (LossKind kind : {LossKind::mse, LossKind::mae}) {
      const LossEvaluation e = hydra_loss(model, images, target, kind);
      CHECK(e.loss == 0.0);
    }
  }

  TEST_CASE("grouped gradient equals the replicated-branch graph") {
    for (bool zero_bias : {true, false}) {
      const RegressorModel model = build_base_regressor(tiny_config(zero_bias, 12));
      Rng rng(9);
      for (int trial = 0; trial < 10; ++trial) {
        auto images = random_images({1, 6, 6}, 4, rng);
        if (trial % 3 == 0) images[3] = black_image(model.architecture());
        const double label = rng.uniform(0.0, 4.0);
        for (LossKind kind : {LossKind::mse, LossKind::mae}) {
          const LossEvaluation grouped = hydra_loss(model, images, label, kind);
          const oracle::ReplicatedResult replicated = oracle::replicated_hydra(model, images, label, kind);
          CHECK(std::abs(grouped.loss - replicated.loss) <= 1e-10);
          for (std::size_t s = 0; s < grouped.gradients.size(); ++s) {
            CHECK(max_abs_difference(grouped.gradients[s], replicated.gradients[s]) <= 1e-10);
          }
        }
      }
    }
  }

  TEST_CASE("duplicated image doubles the single-image gradient at the same error") {
    const RegressorModel model = build_base_regressor(tiny_config(false, 21));
    Rng rng(10);
    const Tensor image = oracle::random_tensor({1, 6, 6}, rng, 0.0, 1.0);
    const double label = 1.7;
    const std::vector<Tensor> pair{image, image};
    const LossEvaluation both = hydra_loss(model, pair, label, LossKind::mse);
    // single-image graph: d/dθ of f(I), scaled by the summed-prediction error derivative
    Graph g(model.parameters());
    const NodeId out = model.forward(g, g.constant(image));
    const GradientMap df = g.backpropagate(out);
    const double dl = loss_derivative(LossKind::mse, 2 * model.predict(image), label);
    for (std::size_t s = 0; s < df.size(); ++s) {
      CHECK(max_abs_difference(both.gradients[s], (2.0 * dl) * df[s]) <= 1e-10);
    }
  }

  TEST_CASE("gradients match finite differences") {
    RegressorModel model = build_base_regressor(tiny_config(false, 30));
    Rng rng(11);
    const auto images = random_images({1, 6, 6}, 3, rng);
    for (LossKind kind : {LossKind::mse, LossKind::mae}) {
      const double label = kind == LossKind::mse ? 2.0 : 50.0;  // keep MAE away from its kink
      const LossEvaluation e = hydra_loss(model, images, label, kind);
      auto loss = [&] { return hydra_loss(model, images, label, kind).loss; };
      for (std::size_t s = 0; s < model.parameters().size(); ++s) {
        for (std::size_t i = 0; i < model.parameters().value(s).size(); ++i) {
          const double numeric = oracle::central_difference(loss, model.parameters().value(s)[i], 1e-5);
          CHECK(oracle::relative_error(e.gradients[s][i], numeric) < 1e-3);
        }
      }
    }
  }

  TEST_CASE("default architecture on 8x8 matches finite differences") {
    ArchitectureConfig c;
    c.input_shape = {1, 8, 8};
    RegressorModel model = build_base_regressor(c);
    // Resample until every ReLU input is away from the kink.
    Rng rng(12);
    Tensor image;
    double margin = 0.0;
    for (int attempt = 0; attempt < 200 && margin <= 1e-4; ++attempt) {
      image = oracle::random_tensor({1, 8, 8}, rng, 0.0, 1.0);
      Graph g(model.parameters());
      model.forward(g, g.constant(image));
      margin = 1e9;
      for (NodeId n = 0; n < g.node_count(); ++n) {
        if (g.kind(n) != OpKind::relu) continue;
        for (double v : g.value(g.inputs(n)[0]).data()) margin = std::min(margin, std::abs(v));
      }
    }
    REQUIRE(margin > 1e-4);
    const std::vector<Tensor> single{image};
    const LossEvaluation e = hydra_loss(model, single, 2.0, LossKind::mse);
    auto loss = [&] { return oracle::single_image_loss(model, image, 2.0, LossKind::mse); };
    double worst = 0.0, largest = 0.0;
    for (std::size_t s = 0; s < model.parameters().size(); ++s) {
      for (std::size_t i = 0; i < model.parameters().value(s).size(); ++i) {
        const double numeric = oracle::central_difference(loss, model.parameters().value(s)[i], 1e-5);
        worst = std::max(worst, oracle::relative_error(e.gradients[s][i], numeric));
        largest = std::max(largest, std::abs(e.gradients[s][i]));
      }
    }
    CHECK(largest > 1e-3);
    CHECK(worst < 1e-4);
  }

  TEST_CASE("loss kinds") {
    CHECK(to_string(parse_loss_kind("mae")) == "mae");
    CHECK(parse_loss_kind("mse") == LossKind::mse);
    CHECK_THROWS(parse_loss_kind("huber"));
    CHECK(loss_value(LossKind::mae, 1.0, 3.5) == 2.5);
    CHECK(loss_derivative(LossKind::mae, 2.0, 2.0) == 0.0);
    CHECK(loss_derivative(LossKind::mae, 1.0, 2.0) == -1.0);
    CHECK(loss_derivative(LossKind::mse, 3.0, 1.0) == 4.0);
  }
}

TEST_SUITE("model file") {
  TEST_CASE("round-trip is bit-exact") {
    ArchitectureConfig c = tiny_config(false, 17);
    c.dropout_rate = 0.1;
    const RegressorModel model = build_base_regressor(c);
    const std::string bytes = encode_model(model);
    CHECK(bytes.substr(0, 5) == "SSRM1");
    CHECK(decode_model(bytes) == model);
    CHECK(encode_model(decode_model(bytes)) == bytes);

    const auto path = std::filesystem::temp_directory_path() / "setsum_test_model.ssrm";
    save_model(path, model);
    CHECK(load_model(path) == model);
    std::filesystem::remove(path);
  }

  TEST_CASE("corrupt files are rejected") {
    const std::string bytes = encode_model(build_base_regressor(tiny_config()));
    CHECK_THROWS_AS(decode_model("XXXX1" + bytes.substr(5)), FormatError);
    CHECK_THROWS_AS(decode_model(bytes.substr(0, bytes.size() - 3)), FormatError);
    CHECK_THROWS_AS(decode_model(bytes + "extra"), FormatError);
    CHECK_THROWS_AS(decode_model(""), FormatError);
    CHECK_THROWS_AS(load_model("/nonexistent/dir/model.ssrm"), IoError);
  }
}
