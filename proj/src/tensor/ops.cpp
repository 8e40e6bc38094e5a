#include "hfm/ops.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

namespace hfm {
inline namespace HFM_ABI_NAMESPACE {
namespace {

using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using VectorMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;
using ConstVectorMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;

// Gradient buffer of an input, or an empty span when it takes no gradient.
std::span<Scalar> grad_of(const std::shared_ptr<TensorImpl>& impl) {
  if (!impl->requires_grad) return {};
  return impl->ensure_grad();
}

void require_rank4(const Tensor& t, const char* what) {
  require(t.defined() && t.rank() == 4,
          std::string(what) + " must be rank 4 (B,C,H,W), got " +
              (t.defined() ? to_string(t.shape()) : std::string("undefined")));
}

struct ConvGeometry {
  int channels, height, width;  // of the convolution input
  int kernel, stride, padding;
  int out_height, out_width;

  int rows() const { return channels * kernel * kernel; }
  int cols() const { return out_height * out_width; }
};

void im2col(const Scalar* image, const ConvGeometry& g, Scalar* col) {
  for (int c = 0; c < g.channels; ++c) {
    const Scalar* plane = image + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        Scalar* row = col + static_cast<std::size_t>((c * g.kernel + ki) * g.kernel + kj) * g.cols();
        for (int oh = 0; oh < g.out_height; ++oh) {
          const int ih = oh * g.stride - g.padding + ki;
          Scalar* dst = row + static_cast<std::size_t>(oh) * g.out_width;
          if (ih < 0 || ih >= g.height) {
            std::fill(dst, dst + g.out_width, Scalar(0));
            continue;
          }
          const Scalar* src = plane + static_cast<std::size_t>(ih) * g.width;
          for (int ow = 0; ow < g.out_width; ++ow) {
            const int iw = ow * g.stride - g.padding + kj;
            dst[ow] = (iw >= 0 && iw < g.width) ? src[iw] : Scalar(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates column entries back onto the image.
void col2im(const Scalar* col, const ConvGeometry& g, Scalar* image) {
  for (int c = 0; c < g.channels; ++c) {
    Scalar* plane = image + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        const Scalar* row =
            col + static_cast<std::size_t>((c * g.kernel + ki) * g.kernel + kj) * g.cols();
        for (int oh = 0; oh < g.out_height; ++oh) {
          const int ih = oh * g.stride - g.padding + ki;
          if (ih < 0 || ih >= g.height) continue;
          const Scalar* src = row + static_cast<std::size_t>(oh) * g.out_width;
          Scalar* dst = plane + static_cast<std::size_t>(ih) * g.width;
          for (int ow = 0; ow < g.out_width; ++ow) {
            const int iw = ow * g.stride - g.padding + kj;
            if (iw >= 0 && iw < g.width) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel == 1 && g.stride == 1 && g.padding == 0;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
  require_rank4(input, "conv2d input");
  require_rank4(weight, "conv2d weight");
  const int batch = input.dim(0);
  const int cin = input.dim(1);
  const int cout = weight.dim(0);
  const int k = weight.dim(2);
  require(weight.dim(1) == cin, "conv2d: input has " + std::to_string(cin) +
                                    " channels but weight expects " + std::to_string(weight.dim(1)));
  require(weight.dim(3) == k, "conv2d: kernel must be square");
  require(bias.defined() && bias.numel() == static_cast<std::size_t>(cout),
          "conv2d: bias must have Cout entries");
  require(stride >= 1 && padding >= 0, "conv2d: invalid stride/padding");

  ConvGeometry g{cin, input.dim(2), input.dim(3), k, stride, padding, 0, 0};
  require(g.height + 2 * padding >= k && g.width + 2 * padding >= k,
          "conv2d: kernel larger than padded input");
  g.out_height = (g.height + 2 * padding - k) / stride + 1;
  g.out_width = (g.width + 2 * padding - k) / stride + 1;

  const std::size_t in_plane = static_cast<std::size_t>(cin) * g.height * g.width;
  const std::size_t out_plane = static_cast<std::size_t>(cout) * g.cols();
  Buffer out(static_cast<std::size_t>(batch) * out_plane);
  Buffer col(is_pointwise(g) ? 0 : static_cast<std::size_t>(g.rows()) * g.cols());

  ConstMatrixMap w(weight.data().data(), cout, g.rows());
  ConstVectorMap b(bias.data().data(), cout);
  for (int n = 0; n < batch; ++n) {
    const Scalar* x = input.data().data() + n * in_plane;
    if (!is_pointwise(g)) im2col(x, g, col.data());
    ConstMatrixMap cols(is_pointwise(g) ? x : col.data(), g.rows(), g.cols());
    MatrixMap y(out.data() + n * out_plane, cout, g.cols());
    y.noalias() = w * cols;
    y.colwise() += b;
  }

  Shape shape{batch, cout, g.out_height, g.out_width};
  return make_result(
      std::move(shape), std::move(out), {input, weight, bias},
      [g, batch, cout, in_plane, out_plane](const TensorImpl& output) {
        const auto& in = output.node->inputs;
        const auto& x_impl = in[0];
        const auto& w_impl = in[1];
        auto dx = grad_of(x_impl);
        auto dw = grad_of(w_impl);
        auto db = grad_of(in[2]);
        ConstMatrixMap w(w_impl->data.data(), cout, g.rows());
        Buffer col(static_cast<std::size_t>(g.rows()) * g.cols());
        for (int n = 0; n < batch; ++n) {
          ConstMatrixMap gy(output.grad.data() + n * out_plane, cout, g.cols());
          if (!db.empty()) VectorMap(db.data(), cout) += gy.rowwise().sum();
          if (!dw.empty()) {
            const Scalar* x = x_impl->data.data() + n * in_plane;
            if (!is_pointwise(g)) im2col(x, g, col.data());
            ConstMatrixMap cols(is_pointwise(g) ? x : col.data(), g.rows(), g.cols());
            MatrixMap(dw.data(), cout, g.rows()).noalias() += gy * cols.transpose();
          }
          if (!dx.empty()) {
            if (is_pointwise(g)) {
              MatrixMap(dx.data() + n * in_plane, g.rows(), g.cols()).noalias() +=
                  w.transpose() * gy;
            } else {
              MatrixMap(col.data(), g.rows(), g.cols()).noalias() = w.transpose() * gy;
              col2im(col.data(), g, dx.data() + n * in_plane);
            }
          }
        }
      });
}

Tensor deconv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                int padding, int output_padding) {
  require_rank4(input, "deconv2d input");
  require_rank4(weight, "deconv2d weight");
  const int batch = input.dim(0);
  const int cin = input.dim(1);
  const int cout = weight.dim(1);
  const int k = weight.dim(2);
  require(weight.dim(0) == cin, "deconv2d: input has " + std::to_string(cin) +
                                    " channels but weight expects " + std::to_string(weight.dim(0)));
  require(weight.dim(3) == k, "deconv2d: kernel must be square");
  require(bias.defined() && bias.numel() == static_cast<std::size_t>(cout),
          "deconv2d: bias must have Cout entries");
  require(stride == 1 || stride == 2, "deconv2d: stride must be 1 or 2");
  require(padding >= 0 && output_padding >= 0 && output_padding < stride,
          "deconv2d: invalid padding");

  const int h = input.dim(2);
  const int w_in = input.dim(3);
  // The geometry of the convolution whose adjoint this is: it maps the
  // deconvolution output back to the deconvolution input.
  ConvGeometry g{cout, 0, 0, k, stride, padding, h, w_in};
  g.height = (h - 1) * stride - 2 * padding + k + output_padding;
  g.width = (w_in - 1) * stride - 2 * padding + k + output_padding;
  require(g.height > 0 && g.width > 0, "deconv2d: empty output");
  require((g.height + 2 * padding - k) / stride + 1 == h, "deconv2d: inconsistent geometry");

  const std::size_t in_plane = static_cast<std::size_t>(cin) * h * w_in;
  const std::size_t out_plane = static_cast<std::size_t>(cout) * g.height * g.width;
  const std::size_t spatial_out = static_cast<std::size_t>(g.height) * g.width;
  Buffer out(static_cast<std::size_t>(batch) * out_plane, Scalar(0));
  Buffer col(static_cast<std::size_t>(g.rows()) * g.cols());

  ConstMatrixMap wm(weight.data().data(), cin, g.rows());
  for (int n = 0; n < batch; ++n) {
    ConstMatrixMap x(input.data().data() + n * in_plane, cin, g.cols());
    Scalar* y = out.data() + n * out_plane;
    if (is_pointwise(g)) {
      MatrixMap(y, cout, g.cols()).noalias() = wm.transpose() * x;
    } else {
      MatrixMap(col.data(), g.rows(), g.cols()).noalias() = wm.transpose() * x;
      col2im(col.data(), g, y);
    }
    for (int c = 0; c < cout; ++c) {
      const Scalar bc = bias.data()[static_cast<std::size_t>(c)];
      Scalar* plane = y + c * spatial_out;
      for (std::size_t i = 0; i < spatial_out; ++i) plane[i] += bc;
    }
  }

  Shape shape{batch, cout, g.height, g.width};
  return make_result(
      std::move(shape), std::move(out), {input, weight, bias},
      [g, batch, cin, cout, in_plane, out_plane, spatial_out](const TensorImpl& output) {
        const auto& in = output.node->inputs;
        const auto& x_impl = in[0];
        auto dx = grad_of(x_impl);
        auto dw = grad_of(in[1]);
        auto db = grad_of(in[2]);
        ConstMatrixMap wm(in[1]->data.data(), cin, g.rows());
        Buffer col(static_cast<std::size_t>(g.rows()) * g.cols());
        for (int n = 0; n < batch; ++n) {
          const Scalar* gy = output.grad.data() + n * out_plane;
          if (!db.empty()) {
            for (int c = 0; c < cout; ++c) {
              const Scalar* plane = gy + c * spatial_out;
              double acc = 0;
              for (std::size_t i = 0; i < spatial_out; ++i) acc += plane[i];
              db[static_cast<std::size_t>(c)] += static_cast<Scalar>(acc);
            }
          }
          if (dx.empty() && dw.empty()) continue;
          if (!is_pointwise(g)) im2col(gy, g, col.data());
          ConstMatrixMap gcol(is_pointwise(g) ? gy : col.data(), g.rows(), g.cols());
          if (!dx.empty()) MatrixMap(dx.data() + n * in_plane, cin, g.cols()).noalias() += wm * gcol;
          if (!dw.empty()) {
            ConstMatrixMap x(x_impl->data.data() + n * in_plane, cin, g.cols());
            MatrixMap(dw.data(), cin, g.rows()).noalias() += x * gcol.transpose();
          }
        }
      });
}

PoolResult maxpool2d(const Tensor& input) {
  require_rank4(input, "maxpool2d input");
  const int batch = input.dim(0), channels = input.dim(1), h = input.dim(2), w = input.dim(3);
  require(h % 2 == 0 && w % 2 == 0,
          "maxpool2d: spatial extents must be even, got " + to_string(input.shape()));
  const int oh_n = h / 2, ow_n = w / 2;
  const std::size_t planes = static_cast<std::size_t>(batch) * channels;

  auto indices = std::make_shared<PoolIndices>();
  indices->input_shape = input.shape();
  indices->output_shape = {batch, channels, oh_n, ow_n};
  indices->offsets.resize(planes * oh_n * ow_n);
  Buffer out(indices->offsets.size());

  const Scalar* x = input.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    const Scalar* plane = x + p * h * w;
    for (int oh = 0; oh < oh_n; ++oh) {
      for (int ow = 0; ow < ow_n; ++ow) {
        int best = (2 * oh) * w + 2 * ow;
        const int candidates[3] = {best + 1, best + w, best + w + 1};
        for (int c : candidates) {
          if (plane[c] > plane[best]) best = c;
        }
        const std::size_t o = (p * oh_n + oh) * ow_n + ow;
        indices->offsets[o] = best;
        out[o] = plane[best];
      }
    }
  }

  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = static_cast<std::size_t>(oh_n) * ow_n;
  std::shared_ptr<const PoolIndices> shared = indices;
  Tensor result = make_result(indices->output_shape, std::move(out), {input},
                              [shared, planes, in_plane, out_plane](const TensorImpl& output) {
                                auto dx = grad_of(output.node->inputs[0]);
                                if (dx.empty()) return;
                                for (std::size_t p = 0; p < planes; ++p) {
                                  for (std::size_t o = 0; o < out_plane; ++o) {
                                    const std::size_t i = p * out_plane + o;
                                    dx[p * in_plane + shared->offsets[i]] += output.grad[i];
                                  }
                                }
                              });
  return {std::move(result), std::move(shared)};
}

Tensor unpool2d(const Tensor& input, const PoolIndices& indices) {
  require_rank4(input, "unpool2d input");
  require(input.shape() == indices.output_shape,
          "unpool2d: input shape " + to_string(input.shape()) + " does not match pooled shape " +
              to_string(indices.output_shape));
  const Shape& full = indices.input_shape;
  const std::size_t planes = static_cast<std::size_t>(full[0]) * full[1];
  const std::size_t in_plane = static_cast<std::size_t>(full[2]) * full[3];
  const std::size_t out_plane = indices.offsets.size() / planes;

  Buffer out(numel(full), Scalar(0));
  const Scalar* x = input.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t o = 0; o < out_plane; ++o) {
      const std::size_t i = p * out_plane + o;
      out[p * in_plane + indices.offsets[i]] = x[i];
    }
  }

  // The closure needs the offsets after the caller's PoolIndices may be gone.
  auto offsets = std::make_shared<const std::vector<std::int32_t>>(indices.offsets);
  return make_result(full, std::move(out), {input},
                     [offsets, planes, in_plane, out_plane](const TensorImpl& output) {
                       auto dx = grad_of(output.node->inputs[0]);
                       if (dx.empty()) return;
                       for (std::size_t p = 0; p < planes; ++p) {
                         for (std::size_t o = 0; o < out_plane; ++o) {
                           const std::size_t i = p * out_plane + o;
                           dx[i] += output.grad[p * in_plane + (*offsets)[i]];
                         }
                       }
                     });
}

Tensor pool_by_indices(const Tensor& map, const PoolIndices& indices) {
  require_rank4(map, "pool_by_indices map");
  const Shape& full = indices.input_shape;
  require(map.dim(1) == 1, "pool_by_indices: map must have one channel");
  require(map.dim(0) == full[0] && map.dim(2) == full[2] && map.dim(3) == full[3],
          "pool_by_indices: map " + to_string(map.shape()) + " does not match pooled input " +
              to_string(full));
  const int batch = full[0], channels = full[1];
  const std::size_t in_plane = static_cast<std::size_t>(full[2]) * full[3];
  const std::size_t out_plane =
      static_cast<std::size_t>(indices.output_shape[2]) * indices.output_shape[3];
  const Scalar inv = Scalar(1) / static_cast<Scalar>(channels);

  Buffer out(static_cast<std::size_t>(batch) * out_plane, Scalar(0));
  const Scalar* m = map.data().data();
  for (int n = 0; n < batch; ++n) {
    for (int c = 0; c < channels; ++c) {
      const std::int32_t* off = indices.offsets.data() + (static_cast<std::size_t>(n) * channels + c) * out_plane;
      for (std::size_t o = 0; o < out_plane; ++o) out[n * out_plane + o] += m[n * in_plane + off[o]];
    }
  }
  for (Scalar& v : out) v *= inv;

  auto offsets = std::make_shared<const std::vector<std::int32_t>>(indices.offsets);
  return make_result({batch, 1, indices.output_shape[2], indices.output_shape[3]}, std::move(out),
                     {map},
                     [offsets, batch, channels, in_plane, out_plane, inv](const TensorImpl& output) {
                       auto dm = grad_of(output.node->inputs[0]);
                       if (dm.empty()) return;
                       for (int n = 0; n < batch; ++n) {
                         for (int c = 0; c < channels; ++c) {
                           const std::int32_t* off =
                               offsets->data() + (static_cast<std::size_t>(n) * channels + c) * out_plane;
                           for (std::size_t o = 0; o < out_plane; ++o) {
                             dm[n * in_plane + off[o]] += inv * output.grad[n * out_plane + o];
                           }
                         }
                       }
                     });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank4(a, "concat_channels a");
  require_rank4(b, "concat_channels b");
  require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
          "concat_channels: " + to_string(a.shape()) + " and " + to_string(b.shape()) +
              " disagree on batch or spatial extents");
  const int batch = a.dim(0);
  const std::size_t a_block = numel(a.shape()) / batch;
  const std::size_t b_block = numel(b.shape()) / batch;

  Buffer out;
  out.reserve(batch * (a_block + b_block));
  for (int n = 0; n < batch; ++n) {
    auto a_span = a.data().subspan(n * a_block, a_block);
    auto b_span = b.data().subspan(n * b_block, b_block);
    out.insert(out.end(), a_span.begin(), a_span.end());
    out.insert(out.end(), b_span.begin(), b_span.end());
  }
  return make_result({batch, a.dim(1) + b.dim(1), a.dim(2), a.dim(3)}, std::move(out), {a, b},
                     [batch, a_block, b_block](const TensorImpl& output) {
                       auto da = grad_of(output.node->inputs[0]);
                       auto db = grad_of(output.node->inputs[1]);
                       for (int n = 0; n < batch; ++n) {
                         const Scalar* g = output.grad.data() + n * (a_block + b_block);
                         if (!da.empty()) {
                           for (std::size_t i = 0; i < a_block; ++i) da[n * a_block + i] += g[i];
                         }
                         if (!db.empty()) {
                           for (std::size_t i = 0; i < b_block; ++i) db[n * b_block + i] += g[a_block + i];
                         }
                       }
                     });
}

Tensor mul_broadcast(const Tensor& features, const Tensor& map) {
  require_rank4(features, "mul_broadcast features");
  require_rank4(map, "mul_broadcast map");
  require(map.dim(1) == 1, "mul_broadcast: map must have one channel");
  require(map.dim(0) == features.dim(0) && map.dim(2) == features.dim(2) &&
              map.dim(3) == features.dim(3),
          "mul_broadcast: map " + to_string(map.shape()) + " does not align with features " +
              to_string(features.shape()));
  const int batch = features.dim(0), channels = features.dim(1);
  const std::size_t spatial = static_cast<std::size_t>(features.dim(2)) * features.dim(3);

  Buffer out(features.numel());
  const Scalar* f = features.data().data();
  const Scalar* m = map.data().data();
  for (int n = 0; n < batch; ++n) {
    for (int c = 0; c < channels; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) out[base + i] = f[base + i] * m[n * spatial + i];
    }
  }
  return make_result(features.shape(), std::move(out), {features, map},
                     [batch, channels, spatial](const TensorImpl& output) {
                       const auto& fi = output.node->inputs[0];
                       const auto& mi = output.node->inputs[1];
                       auto df = grad_of(fi);
                       auto dm = grad_of(mi);
                       for (int n = 0; n < batch; ++n) {
                         for (int c = 0; c < channels; ++c) {
                           const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * spatial;
                           for (std::size_t i = 0; i < spatial; ++i) {
                             const Scalar g = output.grad[base + i];
                             if (!df.empty()) df[base + i] += g * mi->data[n * spatial + i];
                             if (!dm.empty()) dm[n * spatial + i] += g * fi->data[base + i];
                           }
                         }
                       }
                     });
}

Tensor relu(const Tensor& x) {
  Buffer out(x.numel());
  std::transform(x.data().begin(), x.data().end(), out.begin(),
                 [](Scalar v) { return v > Scalar(0) ? v : Scalar(0); });
  return make_result(x.shape(), std::move(out), {x}, [](const TensorImpl& output) {
    const auto& xi = output.node->inputs[0];
    auto dx = grad_of(xi);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (xi->data[i] > Scalar(0)) dx[i] += output.grad[i];
    }
  });
}

Tensor absolute(const Tensor& x) {
  Buffer out(x.numel());
  std::transform(x.data().begin(), x.data().end(), out.begin(), [](Scalar v) { return std::abs(v); });
  return make_result(x.shape(), std::move(out), {x}, [](const TensorImpl& output) {
    const auto& xi = output.node->inputs[0];
    auto dx = grad_of(xi);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const Scalar v = xi->data[i];
      if (v > Scalar(0)) dx[i] += output.grad[i];
      if (v < Scalar(0)) dx[i] -= output.grad[i];
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  Buffer out(x.numel());
  std::transform(x.data().begin(), x.data().end(), out.begin(),
                 [](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });
  return make_result(x.shape(), std::move(out), {x}, [](const TensorImpl& output) {
    auto dx = grad_of(output.node->inputs[0]);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const Scalar y = output.data[i];
      dx[i] += output.grad[i] * y * (Scalar(1) - y);
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          "add: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](const TensorImpl& output) {
    for (const auto& input : output.node->inputs) {
      auto d = grad_of(input);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += output.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          "mul: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](const TensorImpl& output) {
    const auto& ai = output.node->inputs[0];
    const auto& bi = output.node->inputs[1];
    auto da = grad_of(ai);
    auto db = grad_of(bi);
    for (std::size_t i = 0; i < output.grad.size(); ++i) {
      if (!da.empty()) da[i] += output.grad[i] * bi->data[i];
      if (!db.empty()) db[i] += output.grad[i] * ai->data[i];
    }
  });
}

Tensor scale(const Tensor& x, Scalar factor) {
  Buffer out(x.numel());
  std::transform(x.data().begin(), x.data().end(), out.begin(),
                 [factor](Scalar v) { return v * factor; });
  return make_result(x.shape(), std::move(out), {x}, [factor](const TensorImpl& output) {
    auto dx = grad_of(output.node->inputs[0]);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += factor * output.grad[i];
  });
}

Tensor avgpool2d(const Tensor& x, int factor) {
  require_rank4(x, "avgpool2d input");
  require(factor >= 1, "avgpool2d: factor must be positive");
  const int h = x.dim(2), w = x.dim(3);
  require(h % factor == 0 && w % factor == 0,
          "avgpool2d: extents " + to_string(x.shape()) + " not divisible by " + std::to_string(factor));
  const int oh_n = h / factor, ow_n = w / factor;
  const std::size_t planes = static_cast<std::size_t>(x.dim(0)) * x.dim(1);
  const Scalar inv = Scalar(1) / static_cast<Scalar>(factor * factor);

  Buffer out(planes * oh_n * ow_n, Scalar(0));
  for (std::size_t p = 0; p < planes; ++p) {
    const Scalar* plane = x.data().data() + p * h * w;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        out[(p * oh_n + i / factor) * ow_n + j / factor] += plane[i * w + j];
      }
    }
  }
  for (Scalar& v : out) v *= inv;

  return make_result({x.dim(0), x.dim(1), oh_n, ow_n}, std::move(out), {x},
                     [planes, h, w, oh_n, ow_n, factor, inv](const TensorImpl& output) {
                       auto dx = grad_of(output.node->inputs[0]);
                       if (dx.empty()) return;
                       for (std::size_t p = 0; p < planes; ++p) {
                         for (int i = 0; i < h; ++i) {
                           for (int j = 0; j < w; ++j) {
                             dx[(p * h + i) * w + j] +=
                                 inv * output.grad[(p * oh_n + i / factor) * ow_n + j / factor];
                           }
                         }
                       }
                     });
}

Tensor normalize_channels(const Tensor& x, Scalar epsilon) {
  require_rank4(x, "normalize_channels input");
  require(x.dim(1) == 3, "normalize_channels: expected 3 channels, got " + std::to_string(x.dim(1)));
  const int batch = x.dim(0);
  const std::size_t spatial = static_cast<std::size_t>(x.dim(2)) * x.dim(3);

  Buffer out(x.numel());
  Buffer inv_norm(static_cast<std::size_t>(batch) * spatial);
  const Scalar* v = x.data().data();
  for (int n = 0; n < batch; ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * 3 * spatial;
    for (std::size_t i = 0; i < spatial; ++i) {
      const Scalar a = v[base + i], b = v[base + spatial + i], c = v[base + 2 * spatial + i];
      const Scalar inv = Scalar(1) / std::sqrt(a * a + b * b + c * c + epsilon);
      inv_norm[n * spatial + i] = inv;
      out[base + i] = a * inv;
      out[base + spatial + i] = b * inv;
      out[base + 2 * spatial + i] = c * inv;
    }
  }
  return make_result(
      x.shape(), std::move(out), {x},
      [batch, spatial, inv_norm = std::move(inv_norm)](const TensorImpl& output) {
        auto dx = grad_of(output.node->inputs[0]);
        if (dx.empty()) return;
        // s = (|x|^2 + eps)^(-1/2), dx = s * g - s^3 * x * (x . g)
        const Scalar* xv = output.node->inputs[0]->data.data();
        for (int n = 0; n < batch; ++n) {
          const std::size_t base = static_cast<std::size_t>(n) * 3 * spatial;
          for (std::size_t i = 0; i < spatial; ++i) {
            const Scalar s = inv_norm[n * spatial + i];
            Scalar dot = 0;
            for (int c = 0; c < 3; ++c) dot += xv[base + c * spatial + i] * output.grad[base + c * spatial + i];
            const Scalar s3 = s * s * s;
            for (int c = 0; c < 3; ++c) {
              const std::size_t k = base + c * spatial + i;
              dx[k] += s * output.grad[k] - s3 * xv[k] * dot;
            }
          }
        }
      });
}

Tensor sum(const Tensor& x) {
  double acc = 0;
  for (Scalar v : x.data()) acc += v;
  return make_result({}, {static_cast<Scalar>(acc)}, {x}, [](const TensorImpl& output) {
    auto dx = grad_of(output.node->inputs[0]);
    const Scalar g = output.grad[0];
    for (Scalar& d : dx) d += g;
  });
}

Tensor weighted_sum(const Tensor& x, const Tensor& weights) {
  require(x.shape() == weights.shape(), "weighted_sum: shape mismatch " + to_string(x.shape()) +
                                            " vs " + to_string(weights.shape()));
  double acc = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    acc += static_cast<double>(x.data()[i]) * static_cast<double>(weights.data()[i]);
  }
  Tensor w = weights.detach();
  return make_result({}, {static_cast<Scalar>(acc)}, {x}, [w](const TensorImpl& output) {
    auto dx = grad_of(output.node->inputs[0]);
    const Scalar g = output.grad[0];
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g * w.data()[i];
  });
}

}  // namespace HFM_ABI_NAMESPACE
}  // namespace hfm
