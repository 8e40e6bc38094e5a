#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "hfm/tensor.hpp"

namespace hfm {
inline namespace HFM_ABI_NAMESPACE {

// Argmax positions recorded by a 2x2/stride-2 max pooling. Each entry is the
// flat offset (row * input_width + col) of the selected element inside the
// input plane of the same batch item and channel.
struct PoolIndices {
  Shape input_shape;
  Shape output_shape;
  std::vector<std::int32_t> offsets;
};

struct PoolResult {
  Tensor output;
  std::shared_ptr<const PoolIndices> indices;
};

// Cross-correlation. weight is [Cout, Cin, k, k], bias is [Cout].
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride = 1,
              int padding = 0);

// Transposed convolution, the adjoint of conv2d. weight is [Cin, Cout, k, k].
// Output extent is (H - 1) * stride - 2 * padding + k + output_padding.
Tensor deconv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride = 1,
                int padding = 0, int output_padding = 0);

// 2x2 window, stride 2. Ties go to the first element in row-major window order.
PoolResult maxpool2d(const Tensor& input);

// Scatters every value to its recorded argmax; all other positions are zero.
Tensor unpool2d(const Tensor& input, const PoolIndices& indices);

// Downsamples a single-channel map with another tensor's pooling indices:
// each output pixel is the channel-average of the map sampled at the argmax
// positions recorded for that pixel.
Tensor pool_by_indices(const Tensor& map, const PoolIndices& indices);

// Channel concatenation; a's channels come first.
Tensor concat_channels(const Tensor& a, const Tensor& b);

// features [B,C,H,W] times a single-channel map [B,1,H,W], broadcast over C.
Tensor mul_broadcast(const Tensor& features, const Tensor& map);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// |x| with subgradient 0 at 0.
Tensor absolute(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, Scalar factor);

// Mean over non-overlapping factor x factor windows.
Tensor avgpool2d(const Tensor& x, int factor);

// Divides each pixel's 3-vector by sqrt(|v|^2 + epsilon).
Tensor normalize_channels(const Tensor& x, Scalar epsilon = Scalar(1e-8));

// Reductions to a scalar tensor of shape {}.
Tensor sum(const Tensor& x);
// sum_i weights[i] * x[i]; weights is a constant of the same shape.
Tensor weighted_sum(const Tensor& x, const Tensor& weights);

}  // namespace HFM_ABI_NAMESPACE
}  // namespace hfm
