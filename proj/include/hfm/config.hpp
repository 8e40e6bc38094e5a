#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "hfm/synth.hpp"
#include "hfm/train.hpp"

namespace hfm {

// Everything a command needs, read from an INI-style file with sections
// [scene] [corruption] [gt_noise] [network] [train] [data] [output].
// Keys left out keep their documented defaults; unknown keys are rejected.
struct RunConfig {
  synth::SampleConfig sample;
  TrainConfig train;
  int train_samples = 64;
  int val_samples = 16;
  std::uint64_t data_seed = 1;
  std::filesystem::path output_dir = "run";

  RunConfig();
  // Copies scene extents into the network config and validates all parts.
  void finalize();
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& file);

// Canonical text of every key, in a fixed order; parse_config(to_text(c))
// reproduces c.
std::string to_text(const RunConfig& config);

// Reference of every section and key with its default and meaning.
std::string config_reference();

}  // namespace hfm
