#include "commands.hpp"

#include <cstdio>
#include <fstream>

#include "hfm/checkpoint.hpp"
#include "hfm/image_io.hpp"

namespace hfm::cli {
namespace {

constexpr std::uint64_t kValidationStream = 1'000'000;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string metrics_line(int epoch, const eval::MetricsReport& r) {
  return "metrics," + std::to_string(epoch) + "," + num(r.mean) + "," + num(r.median) + "," + num(r.within[0]) + "," +
         num(r.within[1]) + "," + num(r.within[2]) + "," + std::to_string(r.count);
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file);
  out << text;
  if (!out) throw DataError("cannot write " + file.string());
}

std::string epoch_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d.ckpt", epoch);
  return buf;
}

struct LoadedModel {
  RunConfig config;
  Parameters params;
};

LoadedModel load_model(const fs::path& checkpoint) {
  Checkpoint c = load_checkpoint(checkpoint);
  LoadedModel m{parse_config(c.config_text), {}};
  m.params = build(m.config.train.network, m.config.train.schedule.seed);
  assign_parameters(m.params, c.params);
  return m;
}

geometry::DepthMap read_depth_any(const fs::path& file) {
  if (file.extension() == ".raw") return io::depth_from_raster(io::read_raster(file));
  return io::read_depth_png(file);
}

}  // namespace

std::vector<synth::Sample> generate_split(const RunConfig& config, bool validation) {
  const int count = validation ? config.val_samples : config.train_samples;
  std::vector<synth::Sample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const std::uint64_t index = static_cast<std::uint64_t>(i) + (validation ? kValidationStream : 0);
    out.push_back(synth::generate_sample(config.sample, synth::derive_seed(config.data_seed, index)));
  }
  return out;
}

void cmd_synth(const SynthOptions& o, std::ostream& log) {
  if (o.count < 0) throw DataError("synth: count must be non-negative");
  std::vector<synth::Sample> samples;
  for (int i = 0; i < o.count; ++i)
    samples.push_back(synth::generate_sample(o.config.sample, synth::derive_seed(o.seed, static_cast<std::uint64_t>(i))));
  io::write_dataset(o.out, samples, o.config_text);
  log << "wrote " << samples.size() << " samples to " << o.out.string() << "\n";
}

void cmd_train(const TrainOptions& o, std::ostream& log) {
  RunConfig config = o.config;
  const std::string config_text = to_text(config);
  Parameters params = build(config.train.network, config.train.schedule.seed);
  RMSprop optimizer;
  int start_epoch = 0;
  if (o.resume) {
    Checkpoint c = load_checkpoint(*o.resume);
    if (c.config_text != config_text)
      throw DataError("resume: checkpoint " + o.resume->string() + " was written with a different configuration");
    assign_parameters(params, c.params);
    optimizer.restore(std::move(c.optimizer_state), c.optimizer_steps);
    start_epoch = c.next_epoch;
    log << "resuming at epoch " << start_epoch << " from " << o.resume->string() << "\n";
  }

  const auto train_set = o.train_dir ? io::read_dataset(*o.train_dir) : generate_split(config, false);
  const auto val_set = o.val_dir ? io::read_dataset(*o.val_dir) : generate_split(config, true);
  if (train_set.empty()) throw DataError("train: no training samples");

  fs::create_directories(config.output_dir);
  std::ofstream train_log(config.output_dir / "train.log", std::ios::app);
  if (!train_log) throw DataError("cannot open " + (config.output_dir / "train.log").string());

  TrainHooks hooks;
  hooks.on_step = [&](const StepRecord& r) {
    train_log << r.epoch << "," << r.step << "," << num(r.lr) << "," << num(r.loss) << "," << num(r.grad_norm) << "\n";
  };
  hooks.on_epoch = [&](const EpochRecord& r, const Parameters& p, const RMSprop& opt) {
    if (r.validation) train_log << metrics_line(r.epoch, *r.validation) << "\n";
    train_log.flush();
    Checkpoint c;
    c.seed = config.train.schedule.seed;
    c.next_epoch = r.epoch + 1;
    c.config_text = config_text;
    for (const auto& e : p.entries()) c.params.add(e.name, e.tensor.detach());
    c.optimizer_state = opt.state();
    c.optimizer_steps = opt.steps();
    save_checkpoint(config.output_dir / epoch_name(r.epoch), c);
    save_checkpoint(config.output_dir / "latest.ckpt", c);
    log << "epoch " << r.epoch << " lr " << num(r.lr) << " loss " << num(r.mean_loss);
    if (r.validation) log << " val mean " << num(r.validation->mean) << " median " << num(r.validation->median);
    log << "\n";
  };
  train(train_set, val_set, config.train, params, optimizer, start_epoch, hooks);

  if (!val_set.empty()) {
    const auto report = evaluate_model(params, config.train.network, val_set, config.train.schedule.batch_size);
    write_text(config.output_dir / "report.txt", eval::format_report(report, "validation, " +
                                                                                 std::to_string(val_set.size()) +
                                                                                 " scenes"));
  }
}

eval::MetricsReport cmd_eval(const EvalOptions& o, std::ostream& out) {
  const int modes = (o.checkpoint ? 1 : 0) + (o.depth_baseline ? 1 : 0) + (o.ground_truth ? 1 : 0);
  if (modes != 1) throw DataError("eval: give exactly one of a checkpoint, --depth-baseline or --ground-truth");
  const auto samples = io::read_dataset(o.data);
  if (samples.empty()) throw DataError("eval: dataset " + o.data.string() + " is empty");

  eval::MetricsReport report;
  std::string title;
  if (o.checkpoint) {
    const LoadedModel m = load_model(*o.checkpoint);
    report = evaluate_model(m.params, m.config.train.network, samples, m.config.train.schedule.batch_size);
    title = "network " + std::string(to_string(m.config.train.network.variant)) + " on " + o.data.string();
  } else {
    std::vector<eval::MetricsReport> reports;
    for (const auto& s : samples) {
      const auto pred = o.depth_baseline ? geometry::normal_from_depth(s.depth, s.intrinsics) : s.gt;
      reports.push_back(eval::evaluate(pred, s.gt));
    }
    report = eval::aggregate(reports);
    title = (o.depth_baseline ? "depth baseline on " : "ground truth on ") + o.data.string();
  }
  const std::string table = eval::format_report(report, title);
  out << table;
  if (o.report) write_text(*o.report, table);
  return report;
}

void cmd_predict(const PredictOptions& o, std::ostream& log) {
  const LoadedModel m = load_model(o.checkpoint);
  const auto rgb = io::read_rgb_png(o.rgb);
  const auto depth = read_depth_any(o.depth);
  const auto& net = m.config.train.network;
  if (rgb.width != depth.width || rgb.height != depth.height)
    throw DataError("predict: rgb is " + std::to_string(rgb.width) + "x" + std::to_string(rgb.height) +
                    " but depth is " + std::to_string(depth.width) + "x" + std::to_string(depth.height));
  if (rgb.width != net.width || rgb.height != net.height)
    throw DataError("predict: the model expects " + std::to_string(net.width) + "x" + std::to_string(net.height) +
                    " images");
  const auto pred = predict(m.params, net, {&rgb}, {&depth}, 1).front();
  io::write_normal_png(o.normals_out, pred.normals);
  if (o.raw_out) io::write_raster(*o.raw_out, io::to_raster(pred.normals));
  if (o.confidence_out) {
    if (pred.confidence.empty()) throw DataError("predict: the " + std::string(to_string(net.variant)) +
                                                 " model has no confidence map");
    io::write_gray_png(*o.confidence_out, rgb.width, rgb.height, pred.confidence);
  }
  log << "wrote " << o.normals_out.string() << "\n";
}

void cmd_depth2normal(const Depth2NormalOptions& o, std::ostream& log) {
  o.intrinsics.validate();
  const auto depth = read_depth_any(o.depth);
  const auto normals = geometry::normal_from_depth(depth, o.intrinsics, o.window);
  io::write_normal_png(o.normals_out, normals);
  if (o.raw_out) io::write_raster(*o.raw_out, io::to_raster(normals));
  log << "wrote " << o.normals_out.string() << " (" << normals.valid_count() << " of "
      << static_cast<std::size_t>(normals.width) * normals.height << " pixels have a normal)\n";
}

}  // namespace hfm::cli
