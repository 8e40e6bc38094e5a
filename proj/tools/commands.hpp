#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "hfm/config.hpp"

namespace hfm::cli {

namespace fs = std::filesystem;

struct SynthOptions {
  RunConfig config;
  std::string config_text;
  int count = 0;
  std::uint64_t seed = 0;
  fs::path out;
};

// Writes `count` samples seeded derive_seed(seed, i) plus a manifest.
void cmd_synth(const SynthOptions& options, std::ostream& log);

struct TrainOptions {
  RunConfig config;
  std::optional<fs::path> resume;  // checkpoint to continue from
  std::optional<fs::path> train_dir, val_dir;  // datasets; generated from [data] when absent
};

// Trains per the config and writes into output.dir:
//   train.log           lines "epoch,step,lr,loss,grad_norm" and
//                       "metrics,epoch,mean,median,f11.25,f22.5,f30,count"
//   epoch_NNN.ckpt      after each epoch, and latest.ckpt
//   report.txt          validation metrics of the final model
void cmd_train(const TrainOptions& options, std::ostream& log);

struct EvalOptions {
  std::optional<fs::path> checkpoint;
  fs::path data;
  bool depth_baseline = false;  // least-squares normals from the input depth
  bool ground_truth = false;    // score the labels against themselves
  std::optional<fs::path> report;
};

eval::MetricsReport cmd_eval(const EvalOptions& options, std::ostream& out);

struct PredictOptions {
  fs::path checkpoint;
  fs::path rgb, depth;
  fs::path normals_out;
  std::optional<fs::path> confidence_out;
  std::optional<fs::path> raw_out;
};

void cmd_predict(const PredictOptions& options, std::ostream& log);

struct Depth2NormalOptions {
  fs::path depth;  // 16-bit PNG in millimeters, or a .raw float raster in meters
  geometry::CameraIntrinsics intrinsics;
  int window = 5;
  fs::path normals_out;
  std::optional<fs::path> raw_out;
};

void cmd_depth2normal(const Depth2NormalOptions& options, std::ostream& log);

// Samples for training and validation drawn from the [data] section.
std::vector<synth::Sample> generate_split(const RunConfig& config, bool validation);

}  // namespace hfm::cli
