#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "setsum/graph.hpp"
#include "setsum/rng.hpp"
#include "setsum/tensor.hpp"

namespace setsum {

struct ConvBlock {
  std::size_t feature_maps = 8;
  std::size_t kernel_size = 3;

  friend bool operator==(const ConvBlock&, const ConvBlock&) = default;
};

// Block `to` additionally receives the output of block `from` by channel
// concatenation. `to == conv_blocks.size()` targets the pooling stage.
struct SkipConnection {
  std::size_t from = 0;
  std::size_t to = 0;

  friend bool operator==(const SkipConnection&, const SkipConnection&) = default;
};

struct ArchitectureConfig {
  Shape input_shape{1, 16, 16};  // (channels, spatial...)
  int dims = 2;
  std::vector<ConvBlock> conv_blocks{{8, 3}, {16, 3}, {24, 3}, {32, 3}};
  std::vector<SkipConnection> skip_connections{{0, 2}};
  double dropout_rate = 0.0;
  bool zero_bias = true;
  std::uint64_t seed = 0;

  friend bool operator==(const ArchitectureConfig&, const ArchitectureConfig&) = default;
};

// Serialized as key=value lines (also the text block inside model files).
std::string to_text(const ArchitectureConfig& config);
ArchitectureConfig architecture_from_text(const std::string& text);

enum class LossKind { mse, mae };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& text);

// Scalar loss L(prediction, target) and its derivative in prediction.
double loss_value(LossKind kind, double prediction, double target);
double loss_derivative(LossKind kind, double prediction, double target);

struct ForwardMode {
  bool training = false;
  Rng* rng = nullptr;  // dropout randomness; required only when training with dropout
};

// The base regressor: conv blocks (conv + ReLU [+ dropout]) with optional
// concatenating skips, global average pooling [+ dropout], FC to one scalar
// with no output activation.
class RegressorModel {
 public:
  RegressorModel(ArchitectureConfig config, ParameterStore params);

  const ArchitectureConfig& architecture() const noexcept { return config_; }
  const ParameterStore& parameters() const noexcept { return params_; }
  ParameterStore& parameters() noexcept { return params_; }
  std::size_t parameter_count() const { return params_.element_count(); }

  // Appends f(image) to `graph` (which must be bound to parameters()).
  // Returns the scalar output node.
  NodeId forward(Graph& graph, NodeId image, const ForwardMode& mode = {}) const;

  // f(image) in inference mode.
  double predict(const Tensor& image) const;

  void check_input(const Tensor& image) const;

  friend bool operator==(const RegressorModel&, const RegressorModel&) = default;

 private:
  ArchitectureConfig config_;
  ParameterStore params_;
};

// Fan-in scaled uniform initialization drawn from config.seed.
RegressorModel build_base_regressor(const ArchitectureConfig& config);

// All-zero image of the model's input shape.
Tensor black_image(const ArchitectureConfig& config);

// g(S) = sum_i f(I_i) over the slots of one set, all sharing one parameter set.
double hydra_forward(const RegressorModel& model, std::span<const Tensor> slots);

struct LossEvaluation {
  double loss = 0.0;
  double prediction = 0.0;  // summed prediction over the set
  GradientMap gradients;
};

// L(sum_i f(I_i), label) with its parameter gradient. Slots are evaluated one
// at a time: since dL/dθ = L'(Σŷ)·Σ dŷ_i/dθ, only one branch graph and one
// gradient buffer are alive at any point.
LossEvaluation hydra_loss(const RegressorModel& model, std::span<const Tensor> slots,
                          double label, LossKind loss_kind, const ForwardMode& mode = {});

// Model file: "SSRM1", u32 LE length + architecture text, then f64 LE parameters.
std::string encode_model(const RegressorModel& model);
RegressorModel decode_model(const std::string& bytes);
void save_model(const std::filesystem::path& path, const RegressorModel& model);
RegressorModel load_model(const std::filesystem::path& path);

}  // namespace setsum
