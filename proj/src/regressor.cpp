#include "setsum/regressor.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "detail/bytes.hpp"
#include "detail/text.hpp"
#include "setsum/errors.hpp"

namespace setsum {

namespace {

constexpr std::string_view kModelMagic = "SSRM1";

std::size_t same_padding(std::size_t kernel) { return (kernel - 1) / 2; }

std::string conv_weight_name(std::size_t block) { return "conv" + std::to_string(block) + ".weight"; }
std::string conv_bias_name(std::size_t block) { return "conv" + std::to_string(block) + ".bias"; }

struct StageShape {
  std::size_t channels;
  Shape spatial;
};

// Per-block input channel counts plus the channel count entering the pooling
// stage. walk_shapes throws on any inconsistency.
struct ShapeWalk {
  std::vector<std::size_t> block_in_channels;
  std::size_t pooled_channels = 0;
};

ShapeWalk walk_shapes(const ArchitectureConfig& config) {
  if (config.dims != 2 && config.dims != 3) {
    throw ShapeError("architecture dims must be 2 or 3, got " + std::to_string(config.dims));
  }
  if (config.input_shape.size() != static_cast<std::size_t>(config.dims) + 1) {
    throw ShapeError("input_shape " + to_string(config.input_shape) + " must have 1 + " +
                     std::to_string(config.dims) + " extents");
  }
  for (std::size_t d = 0; d < config.input_shape.size(); ++d) {
    if (config.input_shape[d] == 0) {
      throw ShapeError("input_shape dim " + std::to_string(d) + " is zero");
    }
  }
  if (config.conv_blocks.empty()) throw ShapeError("architecture needs at least one conv block");
  if (!(config.dropout_rate >= 0.0 && config.dropout_rate < 1.0)) {
    throw std::invalid_argument("dropout_rate must lie in [0,1)");
  }
  const std::size_t blocks = config.conv_blocks.size();
  for (const SkipConnection& s : config.skip_connections) {
    if (!(s.from < s.to) || s.to > blocks) {
      throw ShapeError("skip connection " + std::to_string(s.from) + "->" + std::to_string(s.to) +
                       " must go forward from a block to a later block (or " +
                       std::to_string(blocks) + " for the pooling stage)");
    }
  }

  std::vector<StageShape> outputs;
  ShapeWalk walk;
  StageShape current{config.input_shape[0],
                     Shape(config.input_shape.begin() + 1, config.input_shape.end())};
  auto merge_skips = [&](std::size_t target, StageShape in) {
    for (const SkipConnection& s : config.skip_connections) {
      if (s.to != target) continue;
      if (outputs[s.from].spatial != in.spatial) {
        throw ShapeError("skip connection " + std::to_string(s.from) + "->" +
                         std::to_string(s.to) + ": spatial extents " +
                         to_string(outputs[s.from].spatial) + " and " + to_string(in.spatial) +
                         " differ");
      }
      in.channels += outputs[s.from].channels;
    }
    return in;
  };
  for (std::size_t b = 0; b < blocks; ++b) {
    const ConvBlock& block = config.conv_blocks[b];
    if (block.feature_maps == 0 || block.kernel_size == 0) {
      throw ShapeError("conv block " + std::to_string(b) + " needs positive feature maps and kernel");
    }
    StageShape in = b == 0 ? current : merge_skips(b, outputs.back());
    walk.block_in_channels.push_back(in.channels);
    StageShape out{block.feature_maps, {}};
    for (std::size_t extent : in.spatial) {
      const std::size_t pad = same_padding(block.kernel_size);
      if (extent + 2 * pad < block.kernel_size) {
        throw ShapeError("conv block " + std::to_string(b) + ": extent " + std::to_string(extent) +
                         " too small for kernel " + std::to_string(block.kernel_size));
      }
      out.spatial.push_back(extent + 2 * pad - block.kernel_size + 1);
    }
    outputs.push_back(out);
  }
  walk.pooled_channels = merge_skips(blocks, outputs.back()).channels;
  return walk;
}

}  // namespace

std::string to_text(const ArchitectureConfig& config) {
  std::ostringstream out;
  out << "input_shape=" << detail::join_sizes(config.input_shape) << "\n";
  out << "dims=" << config.dims << "\n";
  out << "conv_blocks=";
  for (std::size_t i = 0; i < config.conv_blocks.size(); ++i) {
    out << (i ? "," : "") << config.conv_blocks[i].feature_maps << ":"
        << config.conv_blocks[i].kernel_size;
  }
  out << "\nskip_connections=";
  for (std::size_t i = 0; i < config.skip_connections.size(); ++i) {
    out << (i ? "," : "") << config.skip_connections[i].from << ":"
        << config.skip_connections[i].to;
  }
  out << "\ndropout_rate=" << detail::format_double(config.dropout_rate) << "\n";
  out << "zero_bias=" << (config.zero_bias ? "true" : "false") << "\n";
  out << "seed=" << config.seed << "\n";
  return out.str();
}

ArchitectureConfig architecture_from_text(const std::string& text) {
  std::map<std::string, std::string> values;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("architecture line without '=': " + line);
    values[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = values.find(key);
    if (it == values.end()) throw FormatError(std::string("architecture is missing key ") + key);
    return it->second;
  };
  try {
    ArchitectureConfig config;
    config.input_shape = detail::parse_size_list(get("input_shape"));
    config.dims = static_cast<int>(detail::parse_uint(get("dims")));
    config.conv_blocks.clear();
    for (auto [maps, kernel] : detail::parse_pair_list(get("conv_blocks"))) {
      config.conv_blocks.push_back({maps, kernel});
    }
    config.skip_connections.clear();
    for (auto [from, to] : detail::parse_pair_list(get("skip_connections"))) {
      config.skip_connections.push_back({from, to});
    }
    config.dropout_rate = detail::parse_double(get("dropout_rate"));
    config.zero_bias = detail::parse_bool(get("zero_bias"));
    config.seed = detail::parse_uint(get("seed"));
    return config;
  } catch (const FormatError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("bad architecture value: ") + e.what());
  }
}

std::string to_string(LossKind kind) { return kind == LossKind::mse ? "mse" : "mae"; }

LossKind parse_loss_kind(const std::string& text) {
  if (text == "mse") return LossKind::mse;
  if (text == "mae") return LossKind::mae;
  throw std::invalid_argument("loss must be mse or mae, got '" + text + "'");
}

double loss_value(LossKind kind, double prediction, double target) {
  const double r = prediction - target;
  return kind == LossKind::mse ? r * r : std::abs(r);
}

double loss_derivative(LossKind kind, double prediction, double target) {
  const double r = prediction - target;
  if (kind == LossKind::mse) return 2.0 * r;
  return r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
}

RegressorModel::RegressorModel(ArchitectureConfig config, ParameterStore params)
    : config_(std::move(config)), params_(std::move(params)) {
  walk_shapes(config_);
  const std::size_t expected =
      config_.conv_blocks.size() * (config_.zero_bias ? 1 : 2) + (config_.zero_bias ? 1 : 2);
  if (params_.size() != expected) {
    throw ShapeError("model expects " + std::to_string(expected) + " parameter tensors, got " +
                     std::to_string(params_.size()));
  }
}

void RegressorModel::check_input(const Tensor& image) const {
  if (image.shape() != config_.input_shape) {
    throw ShapeError("image shape " + to_string(image.shape()) + " does not match model input " +
                     to_string(config_.input_shape));
  }
}

NodeId RegressorModel::forward(Graph& graph, NodeId image, const ForwardMode& mode) const {
  const bool use_dropout = mode.training && config_.dropout_rate > 0.0;
  if (use_dropout && mode.rng == nullptr) {
    throw std::invalid_argument("training with dropout requires an rng");
  }
  auto drop = [&](NodeId x) {
    return use_dropout ? graph.dropout(x, config_.dropout_rate, true, *mode.rng) : x;
  };
  auto with_skips = [&](std::size_t target, NodeId x, const std::vector<NodeId>& outputs) {
    for (const SkipConnection& s : config_.skip_connections) {
      if (s.to == target) x = graph.concat_channels(x, outputs[s.from]);
    }
    return x;
  };

  std::vector<NodeId> outputs;
  for (std::size_t b = 0; b < config_.conv_blocks.size(); ++b) {
    const NodeId in = b == 0 ? image : with_skips(b, outputs.back(), outputs);
    const NodeId weight = graph.parameter(*params_.find(conv_weight_name(b)));
    std::optional<NodeId> bias;
    if (!config_.zero_bias) bias = graph.parameter(*params_.find(conv_bias_name(b)));
    ops::ConvParams cp{1, same_padding(config_.conv_blocks[b].kernel_size), config_.dims};
    outputs.push_back(drop(graph.relu(graph.conv(in, weight, bias, cp))));
  }
  const NodeId pooled =
      drop(graph.global_avg_pool(with_skips(config_.conv_blocks.size(), outputs.back(), outputs)));
  const NodeId fc_weight = graph.parameter(*params_.find("fc.weight"));
  std::optional<NodeId> fc_bias;
  if (!config_.zero_bias) fc_bias = graph.parameter(*params_.find("fc.bias"));
  return graph.fully_connected(pooled, fc_weight, fc_bias);
}

double RegressorModel::predict(const Tensor& image) const {
  check_input(image);
  Graph graph(params_);
  const NodeId out = forward(graph, graph.constant(image));
  return graph.value(out).item();
}

RegressorModel build_base_regressor(const ArchitectureConfig& config) {
  const ShapeWalk walk = walk_shapes(config);
  Rng rng(config.seed);
  ParameterStore params;
  auto he_uniform = [&](Shape shape, std::size_t fan_in) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
    return t;
  };
  for (std::size_t b = 0; b < config.conv_blocks.size(); ++b) {
    const ConvBlock& block = config.conv_blocks[b];
    Shape kernel{block.feature_maps, walk.block_in_channels[b]};
    std::size_t fan_in = walk.block_in_channels[b];
    for (int d = 0; d < config.dims; ++d) {
      kernel.push_back(block.kernel_size);
      fan_in *= block.kernel_size;
    }
    params.add(conv_weight_name(b), he_uniform(kernel, fan_in));
    if (!config.zero_bias) params.add(conv_bias_name(b), Tensor(Shape{block.feature_maps}));
  }
  params.add("fc.weight", he_uniform(Shape{1, walk.pooled_channels}, walk.pooled_channels));
  if (!config.zero_bias) params.add("fc.bias", Tensor(Shape{1}));
  return RegressorModel(config, std::move(params));
}

Tensor black_image(const ArchitectureConfig& config) { return Tensor(config.input_shape); }

double hydra_forward(const RegressorModel& model, std::span<const Tensor> slots) {
  if (slots.empty()) throw std::invalid_argument("hydra_forward: empty set");
  double total = 0.0;
  for (const Tensor& image : slots) total += model.predict(image);
  return total;
}

LossEvaluation hydra_loss(const RegressorModel& model, std::span<const Tensor> slots,
                          double label, LossKind loss_kind, const ForwardMode& mode) {
  if (slots.empty()) throw std::invalid_argument("hydra_loss: empty set");
  LossEvaluation result;
  result.gradients = zero_gradients(model.parameters());
  for (const Tensor& image : slots) {
    model.check_input(image);
    Graph graph(model.parameters());
    const NodeId out = model.forward(graph, graph.constant(image), mode);
    result.prediction += graph.value(out).item();
    accumulate(result.gradients, graph.backpropagate(out));
  }
  result.loss = loss_value(loss_kind, result.prediction, label);
  const double upstream = loss_derivative(loss_kind, result.prediction, label);
  for (Tensor& g : result.gradients) {
    for (double& v : g.data()) v *= upstream;
  }
  return result;
}

std::string encode_model(const RegressorModel& model) {
  std::string out(kModelMagic);
  const std::string text = to_text(model.architecture());
  detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  const ParameterStore& params = model.parameters();
  for (std::size_t slot = 0; slot < params.size(); ++slot) {
    for (double v : params.value(slot).data()) detail::put_f64(out, v);
  }
  return out;
}

RegressorModel decode_model(const std::string& bytes) {
  detail::ByteReader reader(bytes);
  if (bytes.size() < kModelMagic.size() || bytes.compare(0, kModelMagic.size(), kModelMagic) != 0) {
    throw FormatError("bad magic: model files must start with \"SSRM1\"");
  }
  reader.take(kModelMagic.size(), "magic");
  const std::uint32_t text_size = reader.u32("architecture length");
  const std::string text(reader.take(text_size, "architecture text"));
  RegressorModel model = build_base_regressor(architecture_from_text(text));
  ParameterStore& params = model.parameters();
  const std::size_t expected = params.element_count() * 8;
  if (reader.remaining() != expected) {
    throw FormatError("model payload is " + std::to_string(reader.remaining()) +
                      " bytes, architecture needs " + std::to_string(expected));
  }
  for (std::size_t slot = 0; slot < params.size(); ++slot) {
    for (double& v : params.value(slot).data()) v = reader.f64("parameter");
  }
  return model;
}

void save_model(const std::filesystem::path& path, const RegressorModel& model) {
  detail::write_file(path, encode_model(model));
}

RegressorModel load_model(const std::filesystem::path& path) {
  return decode_model(detail::read_file(path));
}

}  // namespace setsum
