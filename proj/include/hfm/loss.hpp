#pragma once

#include <array>
#include <cstddef>

#include "hfm/network.hpp"

namespace hfm {
inline namespace HFM_ABI_NAMESPACE {

enum class LossKind { l1, l2 };

struct LossValue {
  Tensor value;           // scalar
  std::size_t valid = 0;  // pixels that contributed; 0 means the value is a constant 0
  bool empty() const { return valid == 0; }
};

// (1 / N_valid) * sum over valid pixels and the 3 channels of diff^2 (L2) or
// |diff| (L1). pred and gt are [B,3,h,w]; valid is [B,1,h,w] with 0/1 entries.
LossValue l2_loss(const Tensor& pred, const Tensor& gt, const Tensor& valid);
LossValue l1_loss(const Tensor& pred, const Tensor& gt, const Tensor& valid);
LossValue pixel_loss(LossKind kind, const Tensor& pred, const Tensor& gt, const Tensor& valid);

struct LossWeights {
  std::array<double, kScales> w{0.2, 0.4, 0.8, 1.0};  // coarse to fine
  void validate() const;
};

using ScaleKinds = std::array<LossKind, kScales>;
inline constexpr ScaleKinds kHybridKinds{LossKind::l2, LossKind::l2, LossKind::l1, LossKind::l1};
inline constexpr ScaleKinds kAllL2Kinds{LossKind::l2, LossKind::l2, LossKind::l2, LossKind::l2};

// Per-scale targets, coarse to fine: normals [B,3,h,w] and validity [B,1,h,w].
struct TargetPyramid {
  std::array<Tensor, kScales> normals;
  std::array<Tensor, kScales> valid;
};

struct MultiScaleLoss {
  Tensor total;
  std::array<double, kScales> per_scale{};  // unweighted scale losses
  std::array<std::size_t, kScales> valid{};
  bool any_empty() const;
};

MultiScaleLoss multi_scale_loss(const std::array<Tensor, kScales>& predictions, const TargetPyramid& targets,
                                const LossWeights& weights, const ScaleKinds& kinds);

// L2 at the two coarse scales, L1 at the two fine ones.
MultiScaleLoss hybrid_loss(const std::array<Tensor, kScales>& predictions, const TargetPyramid& targets,
                           const LossWeights& weights);

}  // namespace HFM_ABI_NAMESPACE
}  // namespace hfm
