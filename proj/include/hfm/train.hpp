#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "hfm/metrics.hpp"
#include "hfm/optim.hpp"
#include "hfm/synth.hpp"

namespace hfm {
inline namespace HFM_ABI_NAMESPACE {

// Network inputs for a batch: rgb scaled to [-1, 1], depth standardized per
// sample over its valid pixels with holes at 0, and a 0/1 validity mask.
struct NetworkInput {
  Tensor rgb;    // [B,3,H,W]
  Tensor depth;  // [B,1,H,W]
  Tensor mask;   // [B,1,H,W], 1 where depth is valid
};

NetworkInput make_input(const std::vector<const synth::RgbImage*>& rgb,
                        const std::vector<const geometry::DepthMap*>& depth);

struct Batch {
  NetworkInput input;
  TargetPyramid targets;
  std::vector<std::uint64_t> seeds;
};

Batch make_batch(const std::vector<const synth::Sample*>& samples);

// Sample b of a [B,3,H,W] tensor as a normal map; every pixel is valid.
geometry::NormalMap to_normal_map(const Tensor& normals, int b);

struct TrainConfig {
  NetworkConfig network;
  TrainSchedule schedule;
  LossWeights weights;
  bool normalize_before_loss = true;

  void validate() const;
};

struct StepRecord {
  int epoch = 0;
  int step = 0;  // within the epoch
  double lr = 0;
  double loss = 0;
  double grad_norm = 0;
  bool empty_scale = false;  // some scale had no valid target pixels
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double mean_loss = 0;
  std::optional<eval::MetricsReport> validation;
};

struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  // Called after every epoch with the state a checkpoint needs.
  std::function<void(const EpochRecord&, const Parameters&, const RMSprop&)> on_epoch;
};

// Runs epochs [start_epoch, schedule.epochs). Each epoch visits the training
// samples in an order shuffled from (schedule.seed, epoch), so resuming at an
// epoch boundary reproduces an uninterrupted run. Throws NumericalError when
// the loss or gradients stop being finite.
std::vector<EpochRecord> train(const std::vector<synth::Sample>& train_set,
                               const std::vector<synth::Sample>& validation_set, const TrainConfig& config,
                               Parameters& params, RMSprop& optimizer, int start_epoch = 0,
                               const TrainHooks& hooks = {});

struct Prediction {
  geometry::NormalMap normals;  // finest scale
  std::vector<float> confidence;  // H*W in [0, 1]; empty for early fusion
};

std::vector<Prediction> predict(const Parameters& params, const NetworkConfig& config,
                                const std::vector<const synth::RgbImage*>& rgb,
                                const std::vector<const geometry::DepthMap*>& depth, int batch_size = 4);

// Pooled metrics of the finest-scale prediction against each sample's clean
// ground truth.
eval::MetricsReport evaluate_model(const Parameters& params, const NetworkConfig& config,
                                   const std::vector<synth::Sample>& samples, int batch_size = 4);

}  // namespace HFM_ABI_NAMESPACE
}  // namespace hfm
