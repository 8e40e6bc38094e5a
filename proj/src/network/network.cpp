#include "hfm/network.hpp"

#include <cmath>
#include <random>

#include "hfm/error.hpp"

namespace hfm {
inline namespace HFM_ABI_NAMESPACE {

std::string to_string(FusionVariant v) {
  switch (v) {
    case FusionVariant::hierarchical: return "hierarchical";
    case FusionVariant::early: return "early";
    case FusionVariant::late: return "late";
  }
  return "?";
}

std::string to_string(Reweighting r) {
  switch (r) {
    case Reweighting::confidence_map: return "confidence_map";
    case Reweighting::binary_mask: return "binary_mask";
    case Reweighting::none: return "none";
  }
  return "?";
}

FusionVariant parse_fusion_variant(const std::string& s) {
  for (auto v : {FusionVariant::hierarchical, FusionVariant::early, FusionVariant::late})
    if (to_string(v) == s) return v;
  throw DataError("unknown fusion variant '" + s + "' (hierarchical, early, late)");
}

Reweighting parse_reweighting(const std::string& s) {
  for (auto r : {Reweighting::confidence_map, Reweighting::binary_mask, Reweighting::none})
    if (to_string(r) == s) return r;
  throw DataError("unknown re-weighting '" + s + "' (confidence_map, binary_mask, none)");
}

void NetworkConfig::validate() const {
  require(fusion_scales == kScales, "network: fusion scales must be 4");
  require(height > 0 && width > 0 && height % 16 == 0 && width % 16 == 0,
          "network: input extents must be positive multiples of 16");
  for (int c : rgb_channels) require(c > 0, "network: channel widths must be positive");
  for (int c : depth_channels) require(c > 0, "network: channel widths must be positive");
  for (int c : confidence_channels) require(c > 0, "network: channel widths must be positive");
  require(rgb_channels[3] == rgb_channels[4],
          "network: the last two RGB stages must have equal widths (bottleneck unpools with stage 4 indices)");
  require(confidence_channels[4] == 1, "network: the confidence output has one channel");
}

NetworkConfig NetworkConfig::full_width() {
  NetworkConfig c;
  c.rgb_channels = {64, 128, 256, 256, 256};
  c.depth_channels = {64, 128, 256, 256};
  return c;
}

Tensor& Parameters::add(const std::string& name, Tensor tensor) {
  require(!contains(name), "duplicate parameter name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.push_back({name, std::move(tensor)});
  return entries_.back().tensor;
}

const Tensor& Parameters::at(const std::string& name) const {
  const auto it = index_.find(name);
  require(it != index_.end(), "unknown parameter '" + name + "'");
  return entries_[it->second].tensor;
}

Tensor& Parameters::at(const std::string& name) {
  const auto it = index_.find(name);
  require(it != index_.end(), "unknown parameter '" + name + "'");
  return entries_[it->second].tensor;
}

std::size_t Parameters::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

namespace {

// Channel plan shared by build() and the forward passes.
int rgb_decoder_out(const NetworkConfig& c, int k) { return c.rgb_channels[static_cast<std::size_t>(k)]; }
int fuse_out(const NetworkConfig& c, int k) { return c.rgb_channels[static_cast<std::size_t>(k > 0 ? k - 1 : 0)]; }
int depth_decoder_out(const NetworkConfig& c, int k) {
  return c.depth_channels[static_cast<std::size_t>(k > 0 ? k - 1 : 0)];
}

std::string key(const std::string& prefix, int i) { return prefix + "." + std::to_string(i); }

class Initializer {
 public:
  Initializer(Parameters& params, std::uint64_t seed) : params_(params), rng_(seed) {}

  void conv(const std::string& name, int cin, int cout, int k) {
    weights(name, {cout, cin, k, k}, cin * k * k);
    params_.add(name + ".b", Tensor::zeros({cout}, true));
  }
  void deconv(const std::string& name, int cin, int cout, int k) {
    weights(name, {cin, cout, k, k}, cin * k * k);
    params_.add(name + ".b", Tensor::zeros({cout}, true));
  }
  // Chain of `count` 3x3 convolutions: in -> mid -> ... -> mid -> out.
  void chain(const std::string& prefix, int count, int in, int mid, int out) {
    for (int i = 0; i < count; ++i) conv(key(prefix, i), i == 0 ? in : mid, i == count - 1 ? out : mid, 3);
  }

 private:
  void weights(const std::string& name, Shape shape, int fan_in) {
    const double bound = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<Scalar> values(numel(shape));
    for (Scalar& v : values) v = static_cast<Scalar>(dist(rng_));
    params_.add(name + ".w", Tensor::from(std::move(shape), std::move(values), true));
  }

  Parameters& params_;
  std::mt19937_64 rng_;
};

void build_rgb_branch(Initializer& init, const NetworkConfig& c, int in_channels) {
  const auto& ch = c.rgb_channels;
  int in = in_channels;
  for (int b = 0; b < 5; ++b) {
    init.chain(key("rgb.enc", b), kRgbBlockConvs[static_cast<std::size_t>(b)], in, ch[static_cast<std::size_t>(b)],
               ch[static_cast<std::size_t>(b)]);
    in = ch[static_cast<std::size_t>(b)];
  }
  for (int l = 1; l <= kScales; ++l) {
    const int k = kScales - l;
    const int width = rgb_decoder_out(c, k);
    init.chain(key("rgb.dec", l), kRgbBlockConvs[static_cast<std::size_t>(k)], 2 * width, width, width);
  }
}

void build_depth_branch(Initializer& init, const NetworkConfig& c) {
  const auto& ch = c.depth_channels;
  int in = 1;
  for (int j = 0; j < 4; ++j) {
    init.chain(key("depth.enc", j), kDepthBlockConvs[static_cast<std::size_t>(j)], in,
               ch[static_cast<std::size_t>(j)], ch[static_cast<std::size_t>(j)]);
    in = ch[static_cast<std::size_t>(j)];
  }
  for (int l = 1; l <= kScales; ++l) {
    const int k = kScales - l;
    const int width = ch[static_cast<std::size_t>(k)];
    init.chain(key("depth.dec", l), kDepthBlockConvs[static_cast<std::size_t>(k)], l == 1 ? width : 2 * width, width,
               depth_decoder_out(c, k));
  }
}

void build_heads(Initializer& init, const NetworkConfig& c) {
  for (int l = 1; l <= kScales; ++l) init.conv("head" + std::to_string(l), fuse_out(c, kScales - l), 3, 3);
}

Tensor conv_relu(const Tensor& x, const Parameters& p, const std::string& name) {
  return relu(conv2d(x, p.at(name + ".w"), p.at(name + ".b"), 1, 1));
}

Tensor run_chain(Tensor x, const Parameters& p, const std::string& prefix, int count) {
  for (int i = 0; i < count; ++i) x = conv_relu(x, p, key(prefix, i));
  return x;
}

void check_input(const Tensor& t, int channels, const char* what) {
  require(t.defined() && t.rank() == 4 && t.dim(1) == channels,
          std::string("forward: ") + what + " must be [B," + std::to_string(channels) + ",H,W]");
  require(t.dim(2) % 16 == 0 && t.dim(3) % 16 == 0 && t.dim(2) > 0 && t.dim(3) > 0,
          std::string("forward: ") + what + " extents " + std::to_string(t.dim(2)) + "x" +
              std::to_string(t.dim(3)) + " are not divisible by 16");
}

void check_same_grid(const Tensor& a, const Tensor& b, const char* what) {
  require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
          std::string("forward: ") + what + " is not aligned with the RGB input");
}

struct Encoded {
  std::vector<Tensor> skips;  // pre-pool block outputs
  std::vector<std::shared_ptr<const PoolIndices>> pools;
  Tensor bottom;
};

Encoded encode(Tensor x, const Parameters& p, const std::string& prefix, const int* convs, int blocks) {
  Encoded e;
  for (int b = 0; b < blocks; ++b) {
    x = run_chain(x, p, key(prefix, b), convs[b]);
    e.skips.push_back(x);
    if (b + 1 < blocks) {
      PoolResult pooled = maxpool2d(x);
      e.pools.push_back(pooled.indices);
      x = pooled.output;
    }
  }
  e.bottom = x;
  return e;
}

// Depth decoder features Fd^1..Fd^4, coarse to fine.
std::array<Tensor, kScales> decode_depth(const Encoded& enc, const Parameters& p, ForwardOutput& out) {
  std::array<Tensor, kScales> fd;
  Tensor y = enc.bottom;
  out.depth_unpooled.push_back(nullptr);
  for (int l = 1; l <= kScales; ++l) {
    const int k = kScales - l;
    if (l > 1) {
      const auto& idx = enc.pools[static_cast<std::size_t>(k)];
      out.depth_unpooled.push_back(idx);
      y = concat_channels(unpool2d(y, *idx), enc.skips[static_cast<std::size_t>(k)]);
    }
    y = run_chain(y, p, key("depth.dec", l), kDepthBlockConvs[static_cast<std::size_t>(k)]);
    fd[static_cast<std::size_t>(l - 1)] = y;
  }
  return fd;
}

// Follows a full-resolution single-channel map down the depth encoder's
// pooling indices: element 0 at 1/8, element 3 at full resolution.
std::array<Tensor, kScales> downsample_by_depth_pools(const Tensor& map, const Encoded& depth_enc) {
  std::array<Tensor, kScales> out;
  out[3] = map;
  for (int s = 2; s >= 0; --s)
    out[static_cast<std::size_t>(s)] =
        pool_by_indices(out[static_cast<std::size_t>(s + 1)], *depth_enc.pools[static_cast<std::size_t>(2 - s)]);
  return out;
}

// Shared RGB decoder. fd[l-1] and c[l-1] feed fusion at scale l; an
// undefined fd[l-1] fuses RGB features only.
void decode_rgb(const Encoded& enc, const Parameters& p, const std::array<Tensor, kScales>& fd,
                const std::array<Tensor, kScales>& c, ForwardOutput& out) {
  Tensor x = enc.bottom;
  for (int l = 1; l <= kScales; ++l) {
    const int k = kScales - l;
    const auto& idx = enc.pools[static_cast<std::size_t>(k)];
    out.rgb_unpooled.push_back(idx);
    Tensor v = concat_channels(unpool2d(x, *idx), enc.skips[static_cast<std::size_t>(k)]);
    const Tensor fc = run_chain(v, p, key("rgb.dec", l), kRgbBlockConvs[static_cast<std::size_t>(k)]);
    x = fusion_module(fc, fd[static_cast<std::size_t>(l - 1)], c[static_cast<std::size_t>(l - 1)], p, l);
    const std::string head = "head" + std::to_string(l);
    const Tensor raw = conv2d(x, p.at(head + ".w"), p.at(head + ".b"), 1, 1);
    out.raw[static_cast<std::size_t>(l - 1)] = raw;
    out.normals[static_cast<std::size_t>(l - 1)] = normalize_channels(raw);
  }
}

}  // namespace

Parameters build(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Parameters params;
  Initializer init(params, seed);
  const auto& rc = config.rgb_channels;
  const auto& dc = config.depth_channels;

  switch (config.variant) {
    case FusionVariant::hierarchical: {
      build_rgb_branch(init, config, 3);
      build_depth_branch(init, config);
      const auto& cc = config.confidence_channels;
      init.conv("conf.0", 2, cc[0], 3);
      init.conv("conf.1", cc[0], cc[1], 3);
      for (int i = 2; i < 5; ++i)
        init.conv(key("conf", i), cc[static_cast<std::size_t>(i - 1)], cc[static_cast<std::size_t>(i)], 1);
      for (int l = 1; l <= kScales; ++l) {
        const int k = kScales - l;
        init.deconv("fuse" + std::to_string(l), rc[static_cast<std::size_t>(k)] + depth_decoder_out(config, k),
                    fuse_out(config, k), 3);
      }
      break;
    }
    case FusionVariant::early:
      build_rgb_branch(init, config, 4);
      for (int l = 1; l <= kScales; ++l) {
        const int k = kScales - l;
        init.deconv("fuse" + std::to_string(l), rc[static_cast<std::size_t>(k)], fuse_out(config, k), 3);
      }
      break;
    case FusionVariant::late:
      build_rgb_branch(init, config, 3);
      build_depth_branch(init, config);
      for (int l = 1; l <= kScales; ++l) {
        const int k = kScales - l;
        const int in = rc[static_cast<std::size_t>(k)] + (l == kScales ? dc[0] : 0);
        init.deconv("fuse" + std::to_string(l), in, fuse_out(config, k), 3);
      }
      break;
  }
  build_heads(init, config);
  return params;
}

Tensor confidence_forward(const Tensor& depth, const Tensor& mask, const Parameters& params,
                          const NetworkConfig& config) {
  (void)config;
  check_input(depth, 1, "depth");
  check_input(mask, 1, "mask");
  check_same_grid(depth, mask, "mask");
  Tensor x = concat_channels(depth, mask);
  for (int i = 0; i < 5; ++i) {
    const std::string name = key("conf", i);
    x = conv2d(x, params.at(name + ".w"), params.at(name + ".b"), 1, i < 2 ? 1 : 0);
    x = i < 4 ? relu(x) : sigmoid(x);
  }
  return x;
}

Tensor fusion_module(const Tensor& fc, const Tensor& fd, const Tensor& c, const Parameters& params, int scale) {
  require(fc.defined() && fc.rank() == 4, "fusion: RGB features must be [B,C,H,W]");
  Tensor in = fc;
  if (fd.defined()) {
    require(fd.rank() == 4 && fd.dim(0) == fc.dim(0) && fd.dim(2) == fc.dim(2) && fd.dim(3) == fc.dim(3),
            "fusion: depth features " + to_string(fd.shape()) + " misaligned with RGB features " +
                to_string(fc.shape()));
    Tensor weighted = fd;
    if (c.defined()) {
      require(c.rank() == 4 && c.dim(1) == 1 && c.dim(0) == fc.dim(0) && c.dim(2) == fc.dim(2) &&
                  c.dim(3) == fc.dim(3),
              "fusion: confidence " + to_string(c.shape()) + " misaligned with features " + to_string(fc.shape()));
      weighted = mul_broadcast(fd, c);
    }
    in = concat_channels(fc, weighted);
  }
  const std::string name = "fuse" + std::to_string(scale);
  return relu(deconv2d(in, params.at(name + ".w"), params.at(name + ".b"), 1, 1));
}

ForwardOutput forward(const Tensor& rgb, const Tensor& depth, const Tensor& mask, const Parameters& params,
                      const NetworkConfig& config, const Tensor& confidence_override) {
  if (config.variant == FusionVariant::early) {
    check_input(depth, 1, "depth");
    return forward_early_fusion(concat_channels(rgb, depth), params, config);
  }
  if (config.variant == FusionVariant::late) return forward_late_fusion(rgb, depth, mask, params, config);

  check_input(rgb, 3, "rgb");
  check_input(depth, 1, "depth");
  check_input(mask, 1, "mask");
  check_same_grid(rgb, depth, "depth");
  check_same_grid(rgb, mask, "mask");

  ForwardOutput out;
  const Encoded rgb_enc = encode(rgb, params, "rgb.enc", kRgbBlockConvs.data(), 5);
  const Encoded depth_enc = encode(depth, params, "depth.enc", kDepthBlockConvs.data(), 4);
  out.rgb_pooled = rgb_enc.pools;
  out.depth_pooled = depth_enc.pools;
  const auto fd = decode_depth(depth_enc, params, out);

  switch (config.reweighting) {
    case Reweighting::confidence_map:
      out.confidence = confidence_override.defined() ? confidence_override
                                                     : confidence_forward(depth, mask, params, config);
      check_same_grid(rgb, out.confidence, "confidence");
      out.reweight = downsample_by_depth_pools(out.confidence, depth_enc);
      break;
    case Reweighting::binary_mask:
      out.confidence = mask;
      out.reweight = downsample_by_depth_pools(mask, depth_enc);
      break;
    case Reweighting::none:
      break;
  }
  decode_rgb(rgb_enc, params, fd, out.reweight, out);
  return out;
}

ForwardOutput forward_early_fusion(const Tensor& rgbd, const Parameters& params, const NetworkConfig& config) {
  check_input(rgbd, 4, "rgbd");
  (void)config;
  ForwardOutput out;
  const Encoded enc = encode(rgbd, params, "rgb.enc", kRgbBlockConvs.data(), 5);
  out.rgb_pooled = enc.pools;
  decode_rgb(enc, params, {}, {}, out);
  return out;
}

ForwardOutput forward_late_fusion(const Tensor& rgb, const Tensor& depth, const Tensor& mask,
                                  const Parameters& params, const NetworkConfig& config) {
  (void)config;
  check_input(rgb, 3, "rgb");
  check_input(depth, 1, "depth");
  check_input(mask, 1, "mask");
  check_same_grid(rgb, depth, "depth");
  check_same_grid(rgb, mask, "mask");

  ForwardOutput out;
  const Encoded rgb_enc = encode(rgb, params, "rgb.enc", kRgbBlockConvs.data(), 5);
  const Encoded depth_enc = encode(depth, params, "depth.enc", kDepthBlockConvs.data(), 4);
  out.rgb_pooled = rgb_enc.pools;
  out.depth_pooled = depth_enc.pools;
  const auto all_fd = decode_depth(depth_enc, params, out);

  std::array<Tensor, kScales> fd, c;
  fd[kScales - 1] = all_fd[kScales - 1];
  c[kScales - 1] = mask;
  out.confidence = mask;
  out.reweight = c;
  decode_rgb(rgb_enc, params, fd, c, out);
  return out;
}

}  // namespace HFM_ABI_NAMESPACE
}  // namespace hfm
