#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "hfm/ops.hpp"

namespace hfm {
inline namespace HFM_ABI_NAMESPACE {

enum class FusionVariant { hierarchical, early, late };
enum class Reweighting { confidence_map, binary_mask, none };

std::string to_string(FusionVariant v);
std::string to_string(Reweighting r);
FusionVariant parse_fusion_variant(const std::string& s);
Reweighting parse_reweighting(const std::string& s);

// Desk-scale encoder-decoder widths. The RGB encoder has five VGG-style
// blocks (2, 2, 3, 3, 3 convolutions), the depth encoder the first four.
// Only the hierarchical variant reads `reweighting`; late fusion always
// re-weights by the binary mask and early fusion has nothing to re-weight.
struct NetworkConfig {
  int height = 64, width = 64;
  std::array<int, 5> rgb_channels{16, 32, 64, 64, 64};
  std::array<int, 4> depth_channels{16, 32, 64, 64};
  std::array<int, 5> confidence_channels{8, 8, 8, 8, 1};
  int fusion_scales = 4;
  FusionVariant variant = FusionVariant::hierarchical;
  Reweighting reweighting = Reweighting::confidence_map;

  void validate() const;
  // VGG-16 widths with the last two stages narrowed to 256.
  static NetworkConfig full_width();
};

inline constexpr std::array<int, 5> kRgbBlockConvs{2, 2, 3, 3, 3};
inline constexpr std::array<int, 4> kDepthBlockConvs{2, 2, 3, 3};
inline constexpr int kScales = 4;

// Named, insertion-ordered parameter set.
class Parameters {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
  };

  Tensor& add(const std::string& name, Tensor tensor);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::size_t scalar_count() const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// He-uniform weights (bound sqrt(6 / fan_in)) and zero biases, drawn in a
// fixed architecture order from mt19937_64(seed).
Parameters build(const NetworkConfig& config, std::uint64_t seed);

struct ForwardOutput {
  std::array<Tensor, kScales> normals;  // coarse to fine, unit length per pixel
  std::array<Tensor, kScales> raw;      // head outputs before normalization
  Tensor confidence;  // [B,1,H,W]; the mask for late fusion, undefined for early fusion

  // Pooling indices in the order they were produced by each encoder, and
  // the ones each decoder stage consumed when unpooling (stage l at l-1;
  // null where a stage does not unpool).
  std::vector<std::shared_ptr<const PoolIndices>> rgb_pooled, rgb_unpooled;
  std::vector<std::shared_ptr<const PoolIndices>> depth_pooled, depth_unpooled;
  // Confidence or mask at each fused scale, coarse to fine.
  std::array<Tensor, kScales> reweight;
};

// Five layers (3x3, 3x3, 1x1, 1x1, 1x1) on concat(depth, mask); ReLU between
// layers, sigmoid on the output.
Tensor confidence_forward(const Tensor& depth, const Tensor& mask, const Parameters& params,
                          const NetworkConfig& config);

// deconv3x3(concat(Fc, Fd * C)) followed by ReLU, using "fuse{scale}". With
// an undefined Fd only the RGB features pass through.
Tensor fusion_module(const Tensor& fc, const Tensor& fd, const Tensor& c, const Parameters& params, int scale);

// Dispatches on config.variant. `confidence_override`, when defined, replaces
// the computed confidence map of the hierarchical variant.
ForwardOutput forward(const Tensor& rgb, const Tensor& depth, const Tensor& mask, const Parameters& params,
                      const NetworkConfig& config, const Tensor& confidence_override = {});
ForwardOutput forward_early_fusion(const Tensor& rgbd, const Parameters& params, const NetworkConfig& config);
ForwardOutput forward_late_fusion(const Tensor& rgb, const Tensor& depth, const Tensor& mask,
                                  const Parameters& params, const NetworkConfig& config);

}  // namespace HFM_ABI_NAMESPACE
}  // namespace hfm
