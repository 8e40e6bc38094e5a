#include "hfm/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace hfm {
namespace {

namespace pt = boost::property_tree;

struct Key {
  const char* section;
  const char* name;
  const char* doc;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
  throw DataError("config: " + key + " = '" + value + "' is not " + expected);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  T out{};
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || end != v.data() + v.size()) bad_value(key, raw, "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, raw, "true or false");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& raw) {
  std::vector<T> out;
  std::stringstream in(raw);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(parse_number<T>(key, item));
  }
  return out;
}

// Shortest text that reads back to the same value.
std::string fmt(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>)
      out += fmt(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

template <typename T, typename Field>
Key number(const char* section, const char* name, const char* doc, Field field) {
  return {section, name, doc,
          [=](RunConfig& c, const std::string& v) { field(c) = parse_number<T>(std::string(section) + "." + name, v); },
          [=](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>)
              return fmt(field(const_cast<RunConfig&>(c)));
            else
              return std::to_string(field(const_cast<RunConfig&>(c)));
          }};
}

template <typename T, std::size_t N, typename Field>
Key fixed_list(const char* section, const char* name, const char* doc, Field field) {
  return {section, name, doc,
          [=](RunConfig& c, const std::string& v) {
            const std::string key = std::string(section) + "." + name;
            const auto items = parse_list<T>(key, v);
            if (items.size() != N) bad_value(key, v, "a list of " + std::to_string(N) + " values");
            std::copy(items.begin(), items.end(), field(c).begin());
          },
          [=](const RunConfig& c) {
            const auto& a = field(const_cast<RunConfig&>(c));
            return fmt_list(std::vector<T>(a.begin(), a.end()));
          }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      number<int>("scene", "width", "image width in pixels; must be divisible by 16",
                  [](RunConfig& c) -> int& { return c.sample.scene.width; }),
      number<int>("scene", "height", "image height in pixels; must be divisible by 16",
                  [](RunConfig& c) -> int& { return c.sample.scene.height; }),
      number<double>("scene", "focal", "focal length in pixels (principal point at the image center)",
                     [](RunConfig& c) -> double& { return c.sample.scene.focal; }),
      number<int>("scene", "max_boxes", "at most this many boxes per scene (at least one)",
                  [](RunConfig& c) -> int& { return c.sample.scene.max_boxes; }),
      number<int>("scene", "max_spheres", "at most this many spheres per scene",
                  [](RunConfig& c) -> int& { return c.sample.scene.max_spheres; }),
      number<double>("scene", "side_wall_probability", "chance of a slanted side wall",
                     [](RunConfig& c) -> double& { return c.sample.scene.side_wall_probability; }),
      number<double>("scene", "checker_probability", "chance that a surface carries a checker texture",
                     [](RunConfig& c) -> double& { return c.sample.scene.checker_probability; }),

      number<int>("corruption", "hole_count", "elliptical holes per depth map",
                  [](RunConfig& c) -> int& { return c.sample.corruption.hole_count; }),
      number<double>("corruption", "hole_radius_min", "smallest hole semi-axis, pixels",
                     [](RunConfig& c) -> double& { return c.sample.corruption.hole_radius_min; }),
      number<double>("corruption", "hole_radius_max", "largest hole semi-axis, pixels",
                     [](RunConfig& c) -> double& { return c.sample.corruption.hole_radius_max; }),
      number<double>("corruption", "glossy_probability", "dropout chance on bright pixels",
                     [](RunConfig& c) -> double& { return c.sample.corruption.glossy_probability; }),
      number<double>("corruption", "glossy_threshold", "luminance above which a pixel counts as glossy",
                     [](RunConfig& c) -> double& { return c.sample.corruption.glossy_threshold; }),
      number<double>("corruption", "max_depth", "depths beyond this (meters) are dropped; 0 disables",
                     [](RunConfig& c) -> double& { return c.sample.corruption.max_depth; }),
      number<int>("corruption", "edge_radius", "width of the jittered band around depth edges, pixels",
                  [](RunConfig& c) -> int& { return c.sample.corruption.edge_radius; }),
      number<double>("corruption", "edge_sigma", "depth jitter in the edge band, meters",
                     [](RunConfig& c) -> double& { return c.sample.corruption.edge_sigma; }),
      number<double>("corruption", "edge_gap", "neighbor depth gap that marks an edge, meters",
                     [](RunConfig& c) -> double& { return c.sample.corruption.edge_gap; }),
      number<double>("corruption", "quantization", "depth quantization step, meters; 0 disables",
                     [](RunConfig& c) -> double& { return c.sample.corruption.quantization; }),

      number<int>("gt_noise", "cell_size", "size of the piecewise-constant label cells, pixels; 1 disables",
                  [](RunConfig& c) -> int& { return c.sample.gt_noise.cell_size; }),
      number<int>("gt_noise", "misalignment", "largest shift of cell boundaries, pixels",
                  [](RunConfig& c) -> int& { return c.sample.gt_noise.misalignment; }),

      {"network", "variant", "hierarchical, early or late",
       [](RunConfig& c, const std::string& v) { c.train.network.variant = parse_fusion_variant(trim(v)); },
       [](const RunConfig& c) { return std::string(to_string(c.train.network.variant)); }},
      {"network", "reweighting", "confidence_map, binary_mask or none",
       [](RunConfig& c, const std::string& v) { c.train.network.reweighting = parse_reweighting(trim(v)); },
       [](const RunConfig& c) { return std::string(to_string(c.train.network.reweighting)); }},
      fixed_list<int, 5>("network", "rgb_channels", "feature widths of the five RGB encoder blocks",
                         [](RunConfig& c) -> auto& { return c.train.network.rgb_channels; }),
      fixed_list<int, 4>("network", "depth_channels", "feature widths of the four depth encoder blocks",
                         [](RunConfig& c) -> auto& { return c.train.network.depth_channels; }),
      fixed_list<int, 5>("network", "confidence_channels", "widths of the five confidence layers; the last is 1",
                         [](RunConfig& c) -> auto& { return c.train.network.confidence_channels; }),
      number<int>("network", "fusion_scales", "decoder scales that fuse depth features (hierarchical only)",
                  [](RunConfig& c) -> int& { return c.train.network.fusion_scales; }),

      number<int>("train", "epochs", "total epochs",
                  [](RunConfig& c) -> int& { return c.train.schedule.epochs; }),
      number<double>("train", "initial_lr", "RMSprop learning rate at epoch 0",
                     [](RunConfig& c) -> double& { return c.train.schedule.initial_lr; }),
      {"train", "decay_epochs", "epochs at which the learning rate is multiplied by decay_factor",
       [](RunConfig& c, const std::string& v) { c.train.schedule.decay_epochs = parse_list<int>("train.decay_epochs", v); },
       [](const RunConfig& c) { return fmt_list(c.train.schedule.decay_epochs); }},
      number<double>("train", "decay_factor", "learning-rate decay factor",
                     [](RunConfig& c) -> double& { return c.train.schedule.decay_factor; }),
      number<int>("train", "warmup_epochs", "epochs with L2 at every scale before the hybrid loss",
                  [](RunConfig& c) -> int& { return c.train.schedule.warmup_epochs; }),
      number<int>("train", "batch_size", "samples per optimizer step",
                  [](RunConfig& c) -> int& { return c.train.schedule.batch_size; }),
      number<std::uint64_t>("train", "seed", "seed for initialization and shuffling",
                            [](RunConfig& c) -> std::uint64_t& { return c.train.schedule.seed; }),
      fixed_list<double, 4>("train", "loss_weights", "per-scale loss weights, coarse to fine",
                            [](RunConfig& c) -> auto& { return c.train.weights.w; }),
      {"train", "normalize_before_loss", "compare unit-normalized outputs (true) or raw head outputs",
       [](RunConfig& c, const std::string& v) {
         c.train.normalize_before_loss = parse_bool("train.normalize_before_loss", v);
       },
       [](const RunConfig& c) { return std::string(c.train.normalize_before_loss ? "true" : "false"); }},

      number<int>("data", "train_samples", "synthetic training scenes",
                  [](RunConfig& c) -> int& { return c.train_samples; }),
      number<int>("data", "val_samples", "synthetic validation scenes",
                  [](RunConfig& c) -> int& { return c.val_samples; }),
      number<std::uint64_t>("data", "seed", "seed of the synthetic scenes",
                            [](RunConfig& c) -> std::uint64_t& { return c.data_seed; }),

      {"output", "dir", "directory for checkpoints, logs and reports",
       [](RunConfig& c, const std::string& v) { c.output_dir = trim(v); },
       [](const RunConfig& c) { return c.output_dir.string(); }},
  };
  return table;
}

const Key* find_key(const std::string& section, const std::string& name) {
  for (const Key& k : keys())
    if (section == k.section && name == k.name) return &k;
  return nullptr;
}

}  // namespace

RunConfig::RunConfig() { sample.corruption = synth::CorruptionSpec::heavy(); }

void RunConfig::finalize() {
  train.network.width = sample.scene.width;
  train.network.height = sample.scene.height;
  sample.scene.validate();
  sample.corruption.validate();
  sample.gt_noise.validate();
  try {
    train.validate();
  } catch (const ContractViolation& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  if (train_samples < 0 || val_samples < 0) throw DataError("config: sample counts must be non-negative");
  if (output_dir.empty()) throw DataError("config: output.dir must not be empty");
}

RunConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  RunConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw DataError("config: key '" + section + "' must be inside a [section]");
    for (const auto& [name, value] : body) {
      const Key* k = find_key(section, name);
      if (!k) throw DataError("config: unknown key " + section + "." + name + " (see --help-config)");
      k->set(c, value.data());
    }
  }
  try {
    c.finalize();
  } catch (const ContractViolation& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const RunConfig& config) {
  std::string out, section;
  for (const Key& k : keys()) {
    if (section != k.section) {
      if (!section.empty()) out += "\n";
      section = k.section;
      out += "[" + section + "]\n";
    }
    out += std::string(k.name) + " = " + k.get(config) + "\n";
  }
  return out;
}

std::string config_reference() {
  const RunConfig defaults;
  std::string out =
      "# Configuration reference. Files use INI syntax: [section] headers and\n"
      "# 'key = value' lines. Omitted keys keep the defaults shown; unknown\n"
      "# keys are an error. Lists are comma-separated.\n";
  std::string section;
  for (const Key& k : keys()) {
    if (section != k.section) {
      section = k.section;
      out += "\n[" + section + "]\n";
    }
    out += "# " + std::string(k.doc) + "\n";
    out += std::string(k.name) + " = " + k.get(defaults) + "\n";
  }
  return out;
}

}  // namespace hfm
