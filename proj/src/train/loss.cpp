#include "hfm/loss.hpp"

#include <cmath>

#include "hfm/error.hpp"

namespace hfm {
inline namespace HFM_ABI_NAMESPACE {
namespace {

void check_loss_inputs(const Tensor& pred, const Tensor& gt, const Tensor& valid) {
  require(pred.defined() && gt.defined() && valid.defined(), "loss: undefined input");
  require(pred.rank() == 4 && pred.dim(1) == 3, "loss: predictions must be [B,3,h,w], got " + to_string(pred.shape()));
  require(gt.shape() == pred.shape(),
          "loss: target " + to_string(gt.shape()) + " does not match prediction " + to_string(pred.shape()));
  require(valid.shape() == Shape({pred.dim(0), 1, pred.dim(2), pred.dim(3)}),
          "loss: validity " + to_string(valid.shape()) + " does not match prediction " + to_string(pred.shape()));
}

// Per-element weights: validity broadcast over channels, divided by the
// valid pixel count.
Tensor channel_weights(const Tensor& valid, int channels, std::size_t* count) {
  const int batch = valid.dim(0);
  const std::size_t plane = static_cast<std::size_t>(valid.dim(2)) * valid.dim(3);
  std::size_t n = 0;
  for (Scalar v : valid.data()) n += v != Scalar(0) ? 1 : 0;
  *count = n;
  std::vector<Scalar> w(static_cast<std::size_t>(batch) * channels * plane, Scalar(0));
  if (n == 0) return Tensor::from({batch, channels, valid.dim(2), valid.dim(3)}, std::move(w));
  const Scalar share = static_cast<Scalar>(1.0 / static_cast<double>(n));
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < plane; ++i)
        if (valid.data()[static_cast<std::size_t>(b) * plane + i] != Scalar(0))
          w[(static_cast<std::size_t>(b) * channels + c) * plane + i] = share;
  return Tensor::from({batch, channels, valid.dim(2), valid.dim(3)}, std::move(w));
}

}  // namespace

LossValue pixel_loss(LossKind kind, const Tensor& pred, const Tensor& gt, const Tensor& valid) {
  check_loss_inputs(pred, gt, valid);
  LossValue out;
  const Tensor weights = channel_weights(valid, 3, &out.valid);
  if (out.valid == 0) {
    out.value = Tensor::scalar(0);
    return out;
  }
  const Tensor diff = add(pred, scale(gt, Scalar(-1)));
  out.value = weighted_sum(kind == LossKind::l2 ? mul(diff, diff) : absolute(diff), weights);
  return out;
}

LossValue l2_loss(const Tensor& pred, const Tensor& gt, const Tensor& valid) {
  return pixel_loss(LossKind::l2, pred, gt, valid);
}

LossValue l1_loss(const Tensor& pred, const Tensor& gt, const Tensor& valid) {
  return pixel_loss(LossKind::l1, pred, gt, valid);
}

void LossWeights::validate() const {
  for (double v : w) require(v >= 0 && std::isfinite(v), "loss weights must be finite and non-negative");
}

bool MultiScaleLoss::any_empty() const {
  for (std::size_t n : valid)
    if (n == 0) return true;
  return false;
}

MultiScaleLoss multi_scale_loss(const std::array<Tensor, kScales>& predictions, const TargetPyramid& targets,
                                const LossWeights& weights, const ScaleKinds& kinds) {
  weights.validate();
  MultiScaleLoss out;
  for (std::size_t s = 0; s < kScales; ++s) {
    require(predictions[s].defined() && targets.normals[s].defined() &&
                predictions[s].shape() == targets.normals[s].shape(),
            "multi-scale loss: target level " + std::to_string(s) + " does not align with output scale " +
                std::to_string(s + 1));
    const LossValue term = pixel_loss(kinds[s], predictions[s], targets.normals[s], targets.valid[s]);
    out.per_scale[s] = term.value.item();
    out.valid[s] = term.valid;
    const Tensor weighted = scale(term.value, static_cast<Scalar>(weights.w[s]));
    out.total = s == 0 ? weighted : add(out.total, weighted);
  }
  return out;
}

MultiScaleLoss hybrid_loss(const std::array<Tensor, kScales>& predictions, const TargetPyramid& targets,
                           const LossWeights& weights) {
  return multi_scale_loss(predictions, targets, weights, kHybridKinds);
}

}  // namespace HFM_ABI_NAMESPACE
}  // namespace hfm
