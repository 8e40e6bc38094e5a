#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "hfm/image_io.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw hfm::DataError("cannot open config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace hfm;
  using namespace hfm::cli;

  CLI::App app{"Surface normals from RGB-D with hierarchical fusion"};
  app.require_subcommand(0, 1);
  bool help_config = false;
  app.add_flag("--help-config", help_config, "Print every configuration key with its default and exit");

  std::string config_file;
  std::uint64_t seed = 0;
  bool seed_given = false;

  auto* synth = app.add_subcommand("synth", "Render a synthetic RGB-D dataset");
  SynthOptions synth_opts;
  std::string synth_out;
  synth->add_option("--config", config_file, "Configuration file")->check(CLI::ExistingFile);
  synth->add_option("--count", synth_opts.count, "Number of samples")->required()->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", synth_opts.seed, "Dataset seed");
  synth->add_option("--out", synth_out, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  std::string resume, train_dir, val_dir;
  train_cmd->add_option("--config", config_file, "Configuration file")->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", seed, "Override train.seed")->each([&](const std::string&) { seed_given = true; });
  train_cmd->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--train-dir", train_dir, "Training dataset written by synth")->check(CLI::ExistingDirectory);
  train_cmd->add_option("--val-dir", val_dir, "Validation dataset written by synth")->check(CLI::ExistingDirectory);

  auto* eval_cmd = app.add_subcommand("eval", "Score normals on a dataset");
  EvalOptions eval_opts;
  std::string eval_ckpt, eval_data, eval_report;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Trained model")->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_flag("--depth-baseline", eval_opts.depth_baseline, "Score least-squares normals from the input depth");
  eval_cmd->add_flag("--ground-truth", eval_opts.ground_truth, "Score the labels against themselves");
  eval_cmd->add_option("--report", eval_report, "Also write the table to this file");

  auto* predict_cmd = app.add_subcommand("predict", "Predict normals for one RGB-D pair");
  PredictOptions pred_opts;
  std::string p_ckpt, p_rgb, p_depth, p_normals, p_conf, p_raw;
  predict_cmd->add_option("--checkpoint", p_ckpt, "Trained model")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--rgb", p_rgb, "8-bit RGB PNG")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--depth", p_depth, "16-bit depth PNG (mm) or .raw raster (m)")
      ->required()
      ->check(CLI::ExistingFile);
  predict_cmd->add_option("--normals", p_normals, "Output normal PNG")->required();
  predict_cmd->add_option("--confidence", p_conf, "Output confidence PNG");
  predict_cmd->add_option("--raw", p_raw, "Output float normal raster");

  auto* d2n = app.add_subcommand("depth2normal", "Least-squares normals from a depth map");
  Depth2NormalOptions d2n_opts;
  std::string d_depth, d_normals, d_raw;
  double focal = 0, fx = 0, fy = 0, cx = -1, cy = -1;
  d2n->add_option("--depth", d_depth, "16-bit depth PNG (mm) or .raw raster (m)")->required()->check(CLI::ExistingFile);
  d2n->add_option("--focal", focal, "Focal length in pixels, principal point at the center");
  d2n->add_option("--fx", fx, "Horizontal focal length in pixels");
  d2n->add_option("--fy", fy, "Vertical focal length in pixels");
  d2n->add_option("--cx", cx, "Principal point x");
  d2n->add_option("--cy", cy, "Principal point y");
  d2n->add_option("--window", d2n_opts.window, "Fitting window (odd)");
  d2n->add_option("--normals", d_normals, "Output normal PNG")->required();
  d2n->add_option("--raw", d_raw, "Output float normal raster");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (help_config) {
      std::cout << config_reference();
      return kOk;
    }
    const std::string config_text = config_file.empty() ? std::string() : read_file(config_file);
    RunConfig config = parse_config(config_text);

    if (*synth) {
      synth_opts.config = config;
      synth_opts.config_text = to_text(config);
      synth_opts.out = synth_out;
      cmd_synth(synth_opts, std::cout);
    } else if (*train_cmd) {
      if (seed_given) {
        config.train.schedule.seed = seed;
        config.finalize();
      }
      TrainOptions o{config, {}, {}, {}};
      if (!resume.empty()) o.resume = resume;
      if (!train_dir.empty()) o.train_dir = train_dir;
      if (!val_dir.empty()) o.val_dir = val_dir;
      cmd_train(o, std::cout);
    } else if (*eval_cmd) {
      if (!eval_ckpt.empty()) eval_opts.checkpoint = eval_ckpt;
      if (!eval_report.empty()) eval_opts.report = eval_report;
      eval_opts.data = eval_data;
      cmd_eval(eval_opts, std::cout);
    } else if (*predict_cmd) {
      pred_opts.checkpoint = p_ckpt;
      pred_opts.rgb = p_rgb;
      pred_opts.depth = p_depth;
      pred_opts.normals_out = p_normals;
      if (!p_conf.empty()) pred_opts.confidence_out = p_conf;
      if (!p_raw.empty()) pred_opts.raw_out = p_raw;
      cmd_predict(pred_opts, std::cout);
    } else if (*d2n) {
      const auto depth_size = [&] {
        // Only needed to center the principal point.
        if (std::filesystem::path(d_depth).extension() == ".raw") {
          const auto r = io::read_raster(d_depth);
          return std::pair{r.width, r.height};
        }
        const auto d = io::read_depth_png(d_depth);
        return std::pair{d.width, d.height};
      }();
      if (focal <= 0 && (fx <= 0 || fy <= 0)) {
        std::cerr << "depth2normal: give --focal or both --fx and --fy\n";
        return kUsage;
      }
      geometry::CameraIntrinsics k = geometry::CameraIntrinsics::centered(depth_size.first, depth_size.second,
                                                                          focal > 0 ? focal : fx);
      if (fx > 0) k.fx = fx;
      if (fy > 0) k.fy = fy;
      if (cx >= 0) k.cx = cx;
      if (cy >= 0) k.cy = cy;
      d2n_opts.intrinsics = k;
      d2n_opts.depth = d_depth;
      d2n_opts.normals_out = d_normals;
      if (!d_raw.empty()) d2n_opts.raw_out = d_raw;
      cmd_depth2normal(d2n_opts, std::cout);
    } else {
      std::cerr << app.help();
      return kUsage;
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
