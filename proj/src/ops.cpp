#include "setsum/ops.hpp"

#include <algorithm>
#include <string>

#include "setsum/errors.hpp"

namespace setsum::ops {

namespace {

// Every convolution is evaluated as a 3D one; 2D inputs get a unit depth axis.
struct Geometry {
  std::size_t channels, depth, height, width;
  std::size_t out_channels, kd, kh, kw;
  std::size_t od, oh, ow;
  std::size_t pad_d, pad;
  std::size_t stride;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

Geometry geometry(const Shape& input, const Shape& kernel, const ConvParams& params) {
  require(params.dims == 2 || params.dims == 3,
          "conv: dims must be 2 or 3, got " + std::to_string(params.dims));
  require(params.stride >= 1, "conv: stride must be positive");
  const std::size_t rank = static_cast<std::size_t>(params.dims) + 1;
  require(input.size() == rank, "conv: input rank " + std::to_string(input.size()) +
                                    " does not match (channels + " +
                                    std::to_string(params.dims) + " spatial dims)");
  require(kernel.size() == rank + 1,
          "conv: kernel rank " + std::to_string(kernel.size()) + " must be " +
              std::to_string(rank + 1) + " (out_ch, in_ch, spatial...)");
  require(kernel[1] == input[0], "conv: kernel in_ch (dim 1) = " + std::to_string(kernel[1]) +
                                     " but input channels (dim 0) = " + std::to_string(input[0]));

  Geometry g{};
  g.channels = input[0];
  g.out_channels = kernel[0];
  g.stride = params.stride;
  g.pad = params.padding;
  if (params.dims == 2) {
    g.depth = 1;
    g.kd = 1;
    g.pad_d = 0;
    g.height = input[1];
    g.width = input[2];
    g.kh = kernel[2];
    g.kw = kernel[3];
  } else {
    g.depth = input[1];
    g.kd = kernel[2];
    g.pad_d = params.padding;
    g.height = input[2];
    g.width = input[3];
    g.kh = kernel[3];
    g.kw = kernel[4];
  }
  auto out_extent = [&](std::size_t in, std::size_t k, std::size_t pad, std::size_t stride,
                        std::size_t dim) {
    require(k >= 1, "conv: kernel spatial dim " + std::to_string(dim) + " is zero");
    require(in + 2 * pad >= k, "conv: spatial dim " + std::to_string(dim) + " extent " +
                                   std::to_string(in) + " (padded " +
                                   std::to_string(in + 2 * pad) + ") smaller than kernel " +
                                   std::to_string(k));
    return (in + 2 * pad - k) / stride + 1;
  };
  const std::size_t first_spatial = 1;
  if (params.dims == 3) {
    g.od = out_extent(g.depth, g.kd, g.pad_d, g.stride, first_spatial);
    g.oh = out_extent(g.height, g.kh, g.pad, g.stride, first_spatial + 1);
    g.ow = out_extent(g.width, g.kw, g.pad, g.stride, first_spatial + 2);
  } else {
    g.od = 1;
    g.oh = out_extent(g.height, g.kh, g.pad, g.stride, first_spatial);
    g.ow = out_extent(g.width, g.kw, g.pad, g.stride, first_spatial + 1);
  }
  return g;
}

// Range of output indices o with 0 <= o*stride + k - pad < in.
struct Span {
  std::size_t begin, end;
};

Span valid_outputs(std::size_t k, std::size_t pad, std::size_t stride, std::size_t in,
                   std::size_t out) {
  // o*stride >= pad - k
  std::size_t begin = 0;
  if (pad > k) begin = (pad - k + stride - 1) / stride;
  // o*stride + k - pad <= in - 1  ->  o <= (in - 1 + pad - k) / stride
  std::size_t end = 0;
  if (in + pad >= k + 1) end = std::min(out, (in - 1 + pad - k) / stride + 1);
  if (end < begin) end = begin;
  return {begin, end};
}

Shape output_shape(const Geometry& g, int dims) {
  if (dims == 2) return {g.out_channels, g.oh, g.ow};
  return {g.out_channels, g.od, g.oh, g.ow};
}

}  // namespace

Shape conv_output_shape(const Shape& input, const Shape& kernel, const ConvParams& params) {
  return output_shape(geometry(input, kernel, params), params.dims);
}

Tensor conv(const Tensor& input, const Tensor& kernel, const Tensor* bias,
            const ConvParams& params) {
  const Geometry g = geometry(input.shape(), kernel.shape(), params);
  if (bias != nullptr) {
    require(bias->rank() == 1 && bias->extent(0) == g.out_channels,
            "conv: bias shape " + to_string(bias->shape()) + " must be (" +
                std::to_string(g.out_channels) + ")");
  }
  Tensor out(output_shape(g, params.dims));
  const double* in = input.raw();
  const double* w = kernel.raw();
  double* o = out.raw();
  const std::size_t in_plane = g.height * g.width;
  const std::size_t in_volume = g.depth * in_plane;
  const std::size_t out_plane = g.oh * g.ow;
  const std::size_t out_volume = g.od * out_plane;
  const std::size_t k_volume = g.kd * g.kh * g.kw;

  for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
    double* o_c = o + oc * out_volume;
    if (bias != nullptr) std::fill(o_c, o_c + out_volume, (*bias)[oc]);
    for (std::size_t ic = 0; ic < g.channels; ++ic) {
      const double* in_c = in + ic * in_volume;
      const double* w_c = w + (oc * g.channels + ic) * k_volume;
      for (std::size_t a = 0; a < g.kd; ++a) {
        const Span sd = valid_outputs(a, g.pad_d, g.stride, g.depth, g.od);
        for (std::size_t b = 0; b < g.kh; ++b) {
          const Span sh = valid_outputs(b, g.pad, g.stride, g.height, g.oh);
          for (std::size_t c = 0; c < g.kw; ++c) {
            const Span sw = valid_outputs(c, g.pad, g.stride, g.width, g.ow);
            if (sw.begin == sw.end) continue;
            const double weight = w_c[(a * g.kh + b) * g.kw + c];
            for (std::size_t z = sd.begin; z < sd.end; ++z) {
              const std::size_t iz = z * g.stride + a - g.pad_d;
              for (std::size_t y = sh.begin; y < sh.end; ++y) {
                const std::size_t iy = y * g.stride + b - g.pad;
                double* o_row = o_c + z * out_plane + y * g.ow + sw.begin;
                const double* i_row =
                    in_c + iz * in_plane + iy * g.width + (sw.begin * g.stride + c - g.pad);
                const std::size_t count = sw.end - sw.begin;
                if (g.stride == 1) {
                  for (std::size_t x = 0; x < count; ++x) o_row[x] += weight * i_row[x];
                } else {
                  for (std::size_t x = 0; x < count; ++x) o_row[x] += weight * i_row[x * g.stride];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

ConvGradients conv_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_output,
                            const ConvParams& params) {
  const Geometry g = geometry(input.shape(), kernel.shape(), params);
  require(grad_output.shape() == output_shape(g, params.dims),
          "conv_backward: grad_output shape " + to_string(grad_output.shape()) +
              " does not match forward output");
  ConvGradients grads{Tensor(input.shape()), Tensor(kernel.shape()), Tensor(Shape{g.out_channels})};
  const double* in = input.raw();
  const double* w = kernel.raw();
  const double* go = grad_output.raw();
  double* gi = grads.input.raw();
  double* gw = grads.kernel.raw();
  const std::size_t in_plane = g.height * g.width;
  const std::size_t in_volume = g.depth * in_plane;
  const std::size_t out_plane = g.oh * g.ow;
  const std::size_t out_volume = g.od * out_plane;
  const std::size_t k_volume = g.kd * g.kh * g.kw;

  for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
    const double* go_c = go + oc * out_volume;
    double total = 0.0;
    for (std::size_t i = 0; i < out_volume; ++i) total += go_c[i];
    grads.bias[oc] = total;
    for (std::size_t ic = 0; ic < g.channels; ++ic) {
      const double* in_c = in + ic * in_volume;
      double* gi_c = gi + ic * in_volume;
      const double* w_c = w + (oc * g.channels + ic) * k_volume;
      double* gw_c = gw + (oc * g.channels + ic) * k_volume;
      for (std::size_t a = 0; a < g.kd; ++a) {
        const Span sd = valid_outputs(a, g.pad_d, g.stride, g.depth, g.od);
        for (std::size_t b = 0; b < g.kh; ++b) {
          const Span sh = valid_outputs(b, g.pad, g.stride, g.height, g.oh);
          for (std::size_t c = 0; c < g.kw; ++c) {
            const Span sw = valid_outputs(c, g.pad, g.stride, g.width, g.ow);
            if (sw.begin == sw.end) continue;
            const std::size_t k_index = (a * g.kh + b) * g.kw + c;
            const double weight = w_c[k_index];
            double acc = 0.0;
            for (std::size_t z = sd.begin; z < sd.end; ++z) {
              const std::size_t iz = z * g.stride + a - g.pad_d;
              for (std::size_t y = sh.begin; y < sh.end; ++y) {
                const std::size_t iy = y * g.stride + b - g.pad;
                const double* go_row = go_c + z * out_plane + y * g.ow + sw.begin;
                const std::size_t row_offset =
                    iz * in_plane + iy * g.width + (sw.begin * g.stride + c - g.pad);
                const double* i_row = in_c + row_offset;
                double* gi_row = gi_c + row_offset;
                const std::size_t count = sw.end - sw.begin;
                if (g.stride == 1) {
                  for (std::size_t x = 0; x < count; ++x) {
                    acc += go_row[x] * i_row[x];
                    gi_row[x] += weight * go_row[x];
                  }
                } else {
                  for (std::size_t x = 0; x < count; ++x) {
                    acc += go_row[x] * i_row[x * g.stride];
                    gi_row[x * g.stride] += weight * go_row[x];
                  }
                }
              }
            }
            gw_c[k_index] += acc;
          }
        }
      }
    }
  }
  return grads;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_output) {
  require(input.shape() == grad_output.shape(), "relu_backward: shape mismatch");
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? grad_output[i] : 0.0;
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require(a.rank() >= 1 && a.rank() == b.rank(),
          "concat_channels: ranks " + std::to_string(a.rank()) + " and " +
              std::to_string(b.rank()) + " differ");
  for (std::size_t d = 1; d < a.rank(); ++d) {
    require(a.extent(d) == b.extent(d),
            "concat_channels: spatial dim " + std::to_string(d) + " differs (" +
                std::to_string(a.extent(d)) + " vs " + std::to_string(b.extent(d)) + ")");
  }
  Shape shape = a.shape();
  shape[0] = a.extent(0) + b.extent(0);
  std::vector<double> data;
  data.reserve(a.size() + b.size());
  data.insert(data.end(), a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Tensor(std::move(shape), std::move(data));
}

Tensor slice_channels(const Tensor& input, std::size_t begin, std::size_t end) {
  require(input.rank() >= 1 && begin <= end && end <= input.extent(0),
          "slice_channels: range [" + std::to_string(begin) + "," + std::to_string(end) +
              ") outside channel dim 0");
  Shape shape = input.shape();
  const std::size_t per_channel = input.extent(0) == 0 ? 0 : input.size() / input.extent(0);
  shape[0] = end - begin;
  auto first = input.data().begin() + static_cast<std::ptrdiff_t>(begin * per_channel);
  auto last = input.data().begin() + static_cast<std::ptrdiff_t>(end * per_channel);
  return Tensor(std::move(shape), std::vector<double>(first, last));
}

Tensor global_avg_pool(const Tensor& input) {
  require(input.rank() >= 2, "global_avg_pool: need (channels, spatial...), got " +
                                 to_string(input.shape()));
  const std::size_t channels = input.extent(0);
  const std::size_t positions = input.size() / std::max<std::size_t>(channels, 1);
  Tensor out(Shape{channels});
  for (std::size_t c = 0; c < channels; ++c) {
    double total = 0.0;
    const double* p = input.raw() + c * positions;
    for (std::size_t i = 0; i < positions; ++i) total += p[i];
    out[c] = total / static_cast<double>(positions);
  }
  return out;
}

Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& grad_output) {
  Tensor out(input_shape);
  const std::size_t channels = input_shape.at(0);
  require(grad_output.size() == channels, "global_avg_pool_backward: channel count mismatch");
  const std::size_t positions = out.size() / std::max<std::size_t>(channels, 1);
  for (std::size_t c = 0; c < channels; ++c) {
    const double g = grad_output[c] / static_cast<double>(positions);
    std::fill(out.raw() + c * positions, out.raw() + (c + 1) * positions, g);
  }
  return out;
}

Tensor fully_connected(const Tensor& input, const Tensor& weights, const Tensor* bias) {
  require(weights.rank() == 2, "fully_connected: weights must be (out, in), got " +
                                   to_string(weights.shape()));
  const std::size_t out_dim = weights.extent(0);
  const std::size_t in_dim = weights.extent(1);
  require(input.size() == in_dim, "fully_connected: weights dim 1 = " + std::to_string(in_dim) +
                                      " but input has " + std::to_string(input.size()) +
                                      " elements");
  if (bias != nullptr) {
    require(bias->size() == out_dim, "fully_connected: bias has " + std::to_string(bias->size()) +
                                         " elements, weights dim 0 = " + std::to_string(out_dim));
  }
  Tensor out(Shape{out_dim});
  for (std::size_t r = 0; r < out_dim; ++r) {
    double acc = bias != nullptr ? (*bias)[r] : 0.0;
    const double* row = weights.raw() + r * in_dim;
    for (std::size_t c = 0; c < in_dim; ++c) acc += row[c] * input[c];
    out[r] = acc;
  }
  return out;
}

FullyConnectedGradients fully_connected_backward(const Tensor& input, const Tensor& weights,
                                                 const Tensor& grad_output) {
  const std::size_t out_dim = weights.extent(0);
  const std::size_t in_dim = weights.extent(1);
  require(grad_output.size() == out_dim, "fully_connected_backward: grad_output size mismatch");
  FullyConnectedGradients grads{Tensor(input.shape()), Tensor(weights.shape()),
                                Tensor(Shape{out_dim})};
  for (std::size_t r = 0; r < out_dim; ++r) {
    const double g = grad_output[r];
    grads.bias[r] = g;
    const double* row = weights.raw() + r * in_dim;
    double* grow = grads.weights.raw() + r * in_dim;
    for (std::size_t c = 0; c < in_dim; ++c) {
      grow[c] = g * input[c];
      grads.input[c] += g * row[c];
    }
  }
  return grads;
}

Tensor dropout_mask(const Shape& shape, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout rate must lie in [0,1), got " + std::to_string(rate));
  }
  Tensor mask(shape, 1.0);
  if (rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& v : mask.data()) v = rng.bernoulli(rate) ? 0.0 : keep_scale;
  return mask;
}

Tensor dropout_apply(const Tensor& input, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout rate must lie in [0,1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return input;
  return multiply(input, dropout_mask(input.shape(), rate, rng));
}

Tensor multiply(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "multiply: shapes " + to_string(a.shape()) + " and " +
                                      to_string(b.shape()) + " differ");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

}  // namespace setsum::ops
