#pragma once

#include <cstddef>

#include "setsum/rng.hpp"
#include "setsum/tensor.hpp"

// Forward and backward kernels of the layers the regressor is built from.
// All functions are pure; the autodiff graph composes them.
namespace setsum::ops {

struct ConvParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
  int dims = 2;  // 2 or 3 spatial dimensions
};

// Spatial extents of a convolution output, validating every shape involved.
Shape conv_output_shape(const Shape& input, const Shape& kernel, const ConvParams& params);

// Cross-correlation. input (C, spatial...), kernel (O, C, k...), bias (O) or null.
Tensor conv(const Tensor& input, const Tensor& kernel, const Tensor* bias, const ConvParams& params);

struct ConvGradients {
  Tensor input;
  Tensor kernel;
  Tensor bias;  // shape (O); meaningful only when the forward pass had a bias
};

ConvGradients conv_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_output,
                            const ConvParams& params);

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& grad_output);

// Channel-axis concatenation; a's channels come first.
Tensor concat_channels(const Tensor& a, const Tensor& b);
// Channels [begin, end) of a (C, spatial...) tensor.
Tensor slice_channels(const Tensor& input, std::size_t begin, std::size_t end);

// (C, spatial...) -> (C), mean over spatial positions.
Tensor global_avg_pool(const Tensor& input);
Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& grad_output);

// weights (out, in), input with `in` elements, bias (out) or null. Returns (out).
Tensor fully_connected(const Tensor& input, const Tensor& weights, const Tensor* bias);

struct FullyConnectedGradients {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

FullyConnectedGradients fully_connected_backward(const Tensor& input, const Tensor& weights,
                                                 const Tensor& grad_output);

// Inverted-dropout mask: each entry 0 with probability `rate`, else 1/(1-rate).
Tensor dropout_mask(const Shape& shape, double rate, Rng& rng);
// Applies dropout in training mode; identity otherwise. Rejects rate outside [0,1).
Tensor dropout_apply(const Tensor& input, double rate, bool training, Rng& rng);

Tensor multiply(const Tensor& a, const Tensor& b);

}  // namespace setsum::ops
