#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hfm/synth.hpp"

namespace hfm::io {

using std::filesystem::path;

// Normal image: 8-bit RGB, channel = round((n + 1) / 2 * 255); (0, 0, 0)
// marks a pixel without a normal. Decoding inverts and renormalizes.
void write_normal_png(const path& file, const geometry::NormalMap& normals);
geometry::NormalMap read_normal_png(const path& file);

// Depth image: 16-bit gray in millimeters, 0 = hole. Depths that do not fit
// in 16 bits are a DataError.
void write_depth_png(const path& file, const geometry::DepthMap& depth);
geometry::DepthMap read_depth_png(const path& file);

// 8-bit RGB of linear intensities in [0, 1].
void write_rgb_png(const path& file, const synth::RgbImage& rgb);
synth::RgbImage read_rgb_png(const path& file);

// 8-bit gray of values in [0, 1], e.g. a confidence map.
void write_gray_png(const path& file, int width, int height, const std::vector<float>& values);
std::vector<float> read_gray_png(const path& file, int* width, int* height);

// Lossless float raster:
//   "HFMRAST1", u32 width, u32 height, u32 channels, then width*height*channels
//   f32 values in row-major HWC order; all integers and floats little-endian.
struct Raster {
  int width = 0, height = 0, channels = 0;
  std::vector<float> values;
};

void write_raster(const path& file, const Raster& raster);
Raster read_raster(const path& file);

// Normals as a 3-channel raster with invalid pixels stored as (0, 0, 0);
// depth as a 1-channel raster with holes stored as 0.
Raster to_raster(const geometry::NormalMap& normals);
Raster to_raster(const geometry::DepthMap& depth);
geometry::NormalMap normals_from_raster(const Raster& raster);
geometry::DepthMap depth_from_raster(const Raster& raster);

// A synthetic dataset directory: manifest.json plus, per sample,
// <name>_rgb.png, <name>_depth.png (corrupted input), and lossless rasters of
// the corrupted depth, clean depth, clean normals and training target.
struct DatasetEntry {
  std::string name;
  std::uint64_t seed = 0;
};

void write_dataset(const path& dir, const std::vector<synth::Sample>& samples, const std::string& config_text);
std::vector<synth::Sample> read_dataset(const path& dir);
std::vector<DatasetEntry> read_manifest(const path& dir);

}  // namespace hfm::io
