#include "hfm/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace hfm {
inline namespace HFM_ABI_NAMESPACE {
namespace {

using geometry::DepthMap;
using geometry::NormalMap;

Tensor normals_tensor(const std::vector<const NormalMap*>& maps, Tensor* valid) {
  const int batch = static_cast<int>(maps.size());
  const int w = maps[0]->width, h = maps[0]->height;
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  std::vector<Scalar> n(static_cast<std::size_t>(batch) * 3 * plane, Scalar(0));
  std::vector<Scalar> v(static_cast<std::size_t>(batch) * plane, Scalar(0));
  for (int b = 0; b < batch; ++b) {
    const NormalMap& m = *maps[static_cast<std::size_t>(b)];
    require(m.width == w && m.height == h, "batch: normal maps differ in size");
    for (std::size_t i = 0; i < plane; ++i) {
      if (!m.valid[i]) continue;
      v[static_cast<std::size_t>(b) * plane + i] = Scalar(1);
      for (int c = 0; c < 3; ++c) n[(static_cast<std::size_t>(b) * 3 + c) * plane + i] = m.normal[i](c);
    }
  }
  *valid = Tensor::from({batch, 1, h, w}, std::move(v));
  return Tensor::from({batch, 3, h, w}, std::move(n));
}

double gradient_norm(const Parameters& params) {
  double sq = 0;
  for (const auto& e : params.entries())
    if (e.tensor.has_grad())
      for (Scalar g : e.tensor.grad()) sq += static_cast<double>(g) * g;
  return std::sqrt(sq);
}

std::string seed_list(const std::vector<std::uint64_t>& seeds) {
  std::ostringstream out;
  for (std::size_t i = 0; i < seeds.size(); ++i) out << (i ? "," : "") << seeds[i];
  return out.str();
}

}  // namespace

NetworkInput make_input(const std::vector<const synth::RgbImage*>& rgb, const std::vector<const DepthMap*>& depth) {
  require(!rgb.empty() && rgb.size() == depth.size(), "make_input: need matching non-empty rgb and depth lists");
  const int batch = static_cast<int>(rgb.size());
  const int w = rgb[0]->width, h = rgb[0]->height;
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  std::vector<Scalar> r(static_cast<std::size_t>(batch) * 3 * plane), d(static_cast<std::size_t>(batch) * plane, 0),
      m(static_cast<std::size_t>(batch) * plane, 0);
  for (int b = 0; b < batch; ++b) {
    const auto& img = *rgb[static_cast<std::size_t>(b)];
    const auto& dep = *depth[static_cast<std::size_t>(b)];
    require(img.width == w && img.height == h && dep.width == w && dep.height == h,
            "make_input: images differ in size (expected " + std::to_string(w) + "x" + std::to_string(h) + ")");
    for (std::size_t i = 0; i < plane; ++i)
      for (int c = 0; c < 3; ++c)
        r[(static_cast<std::size_t>(b) * 3 + c) * plane + i] = static_cast<Scalar>((img.pixels[i](c) - 0.5) * 2.0);

    double mean = 0, sq = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < plane; ++i)
      if (dep.valid[i]) {
        mean += dep.depth[i];
        ++n;
      }
    if (n == 0) continue;  // all holes: zeros everywhere
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < plane; ++i)
      if (dep.valid[i]) sq += (dep.depth[i] - mean) * (dep.depth[i] - mean);
    const double sd = std::max(std::sqrt(sq / static_cast<double>(n)), 1e-6);
    for (std::size_t i = 0; i < plane; ++i)
      if (dep.valid[i]) {
        d[static_cast<std::size_t>(b) * plane + i] = static_cast<Scalar>((dep.depth[i] - mean) / sd);
        m[static_cast<std::size_t>(b) * plane + i] = Scalar(1);
      }
  }
  return {Tensor::from({batch, 3, h, w}, std::move(r)), Tensor::from({batch, 1, h, w}, std::move(d)),
          Tensor::from({batch, 1, h, w}, std::move(m))};
}

Batch make_batch(const std::vector<const synth::Sample*>& samples) {
  require(!samples.empty(), "make_batch: empty batch");
  Batch out;
  std::vector<const synth::RgbImage*> rgb;
  std::vector<const DepthMap*> depth;
  std::vector<std::vector<NormalMap>> pyramids;
  for (const auto* s : samples) {
    rgb.push_back(&s->rgb);
    depth.push_back(&s->depth);
    pyramids.push_back(synth::build_pyramid(s->target, kScales));
    out.seeds.push_back(s->seed);
  }
  out.input = make_input(rgb, depth);
  for (std::size_t l = 0; l < kScales; ++l) {
    std::vector<const NormalMap*> level;
    for (const auto& p : pyramids) level.push_back(&p[l]);
    out.targets.normals[l] = normals_tensor(level, &out.targets.valid[l]);
  }
  return out;
}

NormalMap to_normal_map(const Tensor& normals, int b) {
  require(normals.rank() == 4 && normals.dim(1) == 3 && b >= 0 && b < normals.dim(0),
          "to_normal_map: expected [B,3,H,W] and a batch index in range");
  const int h = normals.dim(2), w = normals.dim(3);
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  const auto data = normals.data();
  NormalMap m(w, h);
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c)
      m.normal[i](c) = static_cast<float>(data[(static_cast<std::size_t>(b) * 3 + c) * plane + i]);
    m.valid[i] = 1;
  }
  return m;
}

void TrainConfig::validate() const {
  network.validate();
  schedule.validate();
  weights.validate();
}

std::vector<EpochRecord> train(const std::vector<synth::Sample>& train_set,
                               const std::vector<synth::Sample>& validation_set, const TrainConfig& config,
                               Parameters& params, RMSprop& optimizer, int start_epoch, const TrainHooks& hooks) {
  config.validate();
  require(!train_set.empty(), "train: empty training set");
  require(start_epoch >= 0 && start_epoch <= config.schedule.epochs, "train: start epoch out of range");
  for (const auto& s : train_set)
    require(s.rgb.width == config.network.width && s.rgb.height == config.network.height,
            "train: sample " + std::to_string(s.seed) + " is " + std::to_string(s.rgb.width) + "x" +
                std::to_string(s.rgb.height) + " but the network expects " + std::to_string(config.network.width) +
                "x" + std::to_string(config.network.height));

  std::vector<EpochRecord> log;
  const auto batch_size = static_cast<std::size_t>(config.schedule.batch_size);
  for (int epoch = start_epoch; epoch < config.schedule.epochs; ++epoch) {
    optimizer.lr = lr_at_epoch(config.schedule, epoch);
    const ScaleKinds kinds = loss_for_epoch(epoch, config.schedule);

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(synth::derive_seed(config.schedule.seed, 0x5348554646ull + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      std::vector<const synth::Sample*> members;
      for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i)
        members.push_back(&train_set[order[i]]);
      const Batch batch = make_batch(members);
      const ForwardOutput out = forward(batch.input.rgb, batch.input.depth, batch.input.mask, params, config.network);
      const MultiScaleLoss loss = multi_scale_loss(config.normalize_before_loss ? out.normals : out.raw,
                                                   batch.targets, config.weights, kinds);
      StepRecord rec{epoch, steps, optimizer.lr, static_cast<double>(loss.total.item()), 0, loss.any_empty()};
      if (!std::isfinite(rec.loss))
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(steps) +
                             " (batch sample seeds " + seed_list(batch.seeds) + ")");
      if (loss.total.requires_grad()) {
        backward(loss.total);
        rec.grad_norm = gradient_norm(params);
        if (!std::isfinite(rec.grad_norm))
          throw NumericalError("non-finite gradient at epoch " + std::to_string(epoch) + " step " +
                               std::to_string(steps) + " (batch sample seeds " + seed_list(batch.seeds) + ")");
        optimizer.step(params);
      }
      if (hooks.on_step) hooks.on_step(rec);
      loss_sum += rec.loss;
      ++steps;
    }

    EpochRecord record{epoch, optimizer.lr, loss_sum / steps, std::nullopt};
    if (!validation_set.empty())
      record.validation = evaluate_model(params, config.network, validation_set, config.schedule.batch_size);
    if (hooks.on_epoch) hooks.on_epoch(record, params, optimizer);
    log.push_back(std::move(record));
  }
  return log;
}

std::vector<Prediction> predict(const Parameters& params, const NetworkConfig& config,
                                const std::vector<const synth::RgbImage*>& rgb,
                                const std::vector<const DepthMap*>& depth, int batch_size) {
  require(rgb.size() == depth.size(), "predict: rgb and depth counts differ");
  require(batch_size > 0, "predict: batch size must be positive");
  std::vector<Prediction> out;
  for (std::size_t start = 0; start < rgb.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(rgb.size(), start + static_cast<std::size_t>(batch_size));
    const NetworkInput in = make_input({rgb.begin() + static_cast<std::ptrdiff_t>(start),
                                        rgb.begin() + static_cast<std::ptrdiff_t>(end)},
                                       {depth.begin() + static_cast<std::ptrdiff_t>(start),
                                        depth.begin() + static_cast<std::ptrdiff_t>(end)});
    const ForwardOutput fwd = forward(in.rgb, in.depth, in.mask, params, config);
    const Tensor& finest = fwd.normals[kScales - 1];
    const std::size_t plane = static_cast<std::size_t>(finest.dim(2)) * finest.dim(3);
    for (int b = 0; b < static_cast<int>(end - start); ++b) {
      Prediction p{to_normal_map(finest, b), {}};
      if (fwd.confidence.defined()) {
        const auto c = fwd.confidence.data();
        p.confidence.reserve(plane);
        for (std::size_t i = 0; i < plane; ++i)
          p.confidence.push_back(static_cast<float>(c[static_cast<std::size_t>(b) * plane + i]));
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

eval::MetricsReport evaluate_model(const Parameters& params, const NetworkConfig& config,
                                   const std::vector<synth::Sample>& samples, int batch_size) {
  require(!samples.empty(), "evaluate_model: no samples");
  std::vector<const synth::RgbImage*> rgb;
  std::vector<const DepthMap*> depth;
  for (const auto& s : samples) {
    rgb.push_back(&s.rgb);
    depth.push_back(&s.depth);
  }
  const auto predictions = predict(params, config, rgb, depth, batch_size);
  std::vector<eval::MetricsReport> reports;
  for (std::size_t i = 0; i < samples.size(); ++i) reports.push_back(eval::evaluate(predictions[i].normals, samples[i].gt));
  return eval::aggregate(reports);
}

}  // namespace HFM_ABI_NAMESPACE
}  // namespace hfm
