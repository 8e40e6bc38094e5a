#include "hfm/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "json.hpp"

#include "hfm/error.hpp"

namespace hfm::io {
namespace {

static_assert(std::endian::native == std::endian::little, "raster and checkpoint I/O assume a little-endian host");

struct PngPixels {
  int width = 0, height = 0, channels = 0, bit_depth = 0;
  std::vector<std::uint8_t> bytes;  // rows packed; 16-bit samples big-endian as stored
  std::vector<png_bytep> rows;
  char error[256] = {0};
};

void on_png_error(png_structp png, png_const_charp message) {
  auto* px = static_cast<PngPixels*>(png_get_error_ptr(png));
  std::snprintf(px->error, sizeof px->error, "%s", message);
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const path& file, const char* mode) {
  File f(std::fopen(file.c_str(), mode));
  if (!f) throw DataError("cannot open " + file.string() + (mode[0] == 'r' ? " for reading" : " for writing"));
  return f;
}

// No objects with destructors live in the frames between setjmp and the
// libpng calls that may longjmp back.
bool png_write_impl(std::FILE* f, PngPixels* px) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, px, on_png_error, on_png_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, f);
  png_set_compression_level(png, 6);
  const int color = px->channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, static_cast<png_uint_32>(px->width), static_cast<png_uint_32>(px->height), px->bit_depth,
               color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, px->rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

bool png_read_impl(std::FILE* f, PngPixels* px) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, px, on_png_error, on_png_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, f);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  px->width = static_cast<int>(png_get_image_width(png, info));
  px->height = static_cast<int>(png_get_image_height(png, info));
  px->channels = png_get_channels(png, info);
  px->bit_depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  px->bytes.resize(stride * static_cast<std::size_t>(px->height));
  px->rows.resize(static_cast<std::size_t>(px->height));
  for (int y = 0; y < px->height; ++y) px->rows[static_cast<std::size_t>(y)] = px->bytes.data() + stride * y;
  png_read_image(png, px->rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

void write_png(const path& file, PngPixels& px) {
  const std::size_t stride = static_cast<std::size_t>(px.width) * px.channels * (px.bit_depth / 8);
  px.rows.resize(static_cast<std::size_t>(px.height));
  for (int y = 0; y < px.height; ++y) px.rows[static_cast<std::size_t>(y)] = px.bytes.data() + stride * y;
  File f = open_file(file, "wb");
  if (!png_write_impl(f.get(), &px)) throw DataError("cannot write PNG " + file.string() + ": " + px.error);
  if (std::fflush(f.get()) != 0) throw DataError("cannot write PNG " + file.string());
}

PngPixels read_png(const path& file, int channels, int bit_depth) {
  File f = open_file(file, "rb");
  std::uint8_t sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw DataError(file.string() + " is not a PNG file");
  std::rewind(f.get());
  PngPixels px;
  if (!png_read_impl(f.get(), &px)) throw DataError("cannot read PNG " + file.string() + ": " + px.error);
  if (px.channels != channels || px.bit_depth != bit_depth)
    throw DataError(file.string() + ": expected " + std::to_string(channels) + " channel(s) at " +
                    std::to_string(bit_depth) + " bits, found " + std::to_string(px.channels) + " at " +
                    std::to_string(px.bit_depth));
  return px;
}

PngPixels blank(int width, int height, int channels, int bit_depth) {
  require(width > 0 && height > 0, "PNG: image must be non-empty");
  PngPixels px;
  px.width = width;
  px.height = height;
  px.channels = channels;
  px.bit_depth = bit_depth;
  px.bytes.assign(static_cast<std::size_t>(width) * height * channels * (bit_depth / 8), 0);
  return px;
}

std::uint8_t to_byte(double unit) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(unit, 0.0, 1.0) * 255.0));
}

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T get(std::istream& in, const path& file) {
  T value;
  if (!in.read(reinterpret_cast<char*>(&value), sizeof value)) throw DataError(file.string() + ": truncated raster");
  return value;
}

constexpr char kRasterMagic[8] = {'H', 'F', 'M', 'R', 'A', 'S', 'T', '1'};

}  // namespace

void write_normal_png(const path& file, const geometry::NormalMap& normals) {
  PngPixels px = blank(normals.width, normals.height, 3, 8);
  for (std::size_t i = 0; i < normals.normal.size(); ++i) {
    if (!normals.valid[i]) continue;
    for (int c = 0; c < 3; ++c) px.bytes[i * 3 + c] = to_byte((normals.normal[i](c) + 1.0) / 2.0);
  }
  write_png(file, px);
}

geometry::NormalMap read_normal_png(const path& file) {
  const PngPixels px = read_png(file, 3, 8);
  geometry::NormalMap m(px.width, px.height);
  for (std::size_t i = 0; i < m.normal.size(); ++i) {
    const std::uint8_t* p = px.bytes.data() + i * 3;
    if (p[0] == 0 && p[1] == 0 && p[2] == 0) continue;
    Eigen::Vector3f n;
    for (int c = 0; c < 3; ++c) n(c) = static_cast<float>(p[c] / 255.0 * 2.0 - 1.0);
    if (n.norm() == 0.0f) continue;
    m.normal[i] = n.normalized();
    m.valid[i] = 1;
  }
  return m;
}

void write_depth_png(const path& file, const geometry::DepthMap& depth) {
  PngPixels px = blank(depth.width, depth.height, 1, 16);
  for (std::size_t i = 0; i < depth.depth.size(); ++i) {
    if (!depth.valid[i]) continue;
    const long mm = std::lround(static_cast<double>(depth.depth[i]) * 1000.0);
    if (mm < 1 || mm > 65535)
      throw DataError("depth " + std::to_string(depth.depth[i]) + " m does not fit a 16-bit millimeter PNG");
    px.bytes[2 * i] = static_cast<std::uint8_t>(mm >> 8);
    px.bytes[2 * i + 1] = static_cast<std::uint8_t>(mm & 0xff);
  }
  write_png(file, px);
}

geometry::DepthMap read_depth_png(const path& file) {
  const PngPixels px = read_png(file, 1, 16);
  geometry::DepthMap d(px.width, px.height);
  for (std::size_t i = 0; i < d.depth.size(); ++i) {
    const unsigned mm = (static_cast<unsigned>(px.bytes[2 * i]) << 8) | px.bytes[2 * i + 1];
    if (mm == 0) continue;
    d.depth[i] = static_cast<float>(mm / 1000.0);
    d.valid[i] = 1;
  }
  return d;
}

void write_rgb_png(const path& file, const synth::RgbImage& rgb) {
  PngPixels px = blank(rgb.width, rgb.height, 3, 8);
  for (std::size_t i = 0; i < rgb.pixels.size(); ++i)
    for (int c = 0; c < 3; ++c) px.bytes[i * 3 + c] = to_byte(rgb.pixels[i](c));
  write_png(file, px);
}

synth::RgbImage read_rgb_png(const path& file) {
  const PngPixels px = read_png(file, 3, 8);
  synth::RgbImage img(px.width, px.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    for (int c = 0; c < 3; ++c) img.pixels[i](c) = static_cast<float>(px.bytes[i * 3 + c] / 255.0);
  return img;
}

void write_gray_png(const path& file, int width, int height, const std::vector<float>& values) {
  require(values.size() == static_cast<std::size_t>(width) * height, "gray PNG: value count does not match extents");
  PngPixels px = blank(width, height, 1, 8);
  for (std::size_t i = 0; i < values.size(); ++i) px.bytes[i] = to_byte(values[i]);
  write_png(file, px);
}

std::vector<float> read_gray_png(const path& file, int* width, int* height) {
  const PngPixels px = read_png(file, 1, 8);
  *width = px.width;
  *height = px.height;
  std::vector<float> out(px.bytes.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(px.bytes[i] / 255.0);
  return out;
}

void write_raster(const path& file, const Raster& r) {
  require(r.width > 0 && r.height > 0 && r.channels > 0 &&
              r.values.size() == static_cast<std::size_t>(r.width) * r.height * r.channels,
          "raster: extents do not match the value count");
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot open " + file.string() + " for writing");
  out.write(kRasterMagic, sizeof kRasterMagic);
  put(out, static_cast<std::uint32_t>(r.width));
  put(out, static_cast<std::uint32_t>(r.height));
  put(out, static_cast<std::uint32_t>(r.channels));
  out.write(reinterpret_cast<const char*>(r.values.data()), static_cast<std::streamsize>(r.values.size() * 4));
  if (!out) throw DataError("cannot write " + file.string());
}

Raster read_raster(const path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open " + file.string() + " for reading");
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kRasterMagic, 8) != 0)
    throw DataError(file.string() + ": not a float raster (bad magic)");
  Raster r;
  r.width = static_cast<int>(get<std::uint32_t>(in, file));
  r.height = static_cast<int>(get<std::uint32_t>(in, file));
  r.channels = static_cast<int>(get<std::uint32_t>(in, file));
  if (r.width <= 0 || r.height <= 0 || r.channels <= 0 || r.width > 1 << 16 || r.height > 1 << 16 || r.channels > 64)
    throw DataError(file.string() + ": implausible raster extents");
  r.values.resize(static_cast<std::size_t>(r.width) * r.height * r.channels);
  if (!in.read(reinterpret_cast<char*>(r.values.data()), static_cast<std::streamsize>(r.values.size() * 4)))
    throw DataError(file.string() + ": truncated raster");
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(file.string() + ": trailing bytes after raster");
  return r;
}

Raster to_raster(const geometry::NormalMap& normals) {
  Raster r{normals.width, normals.height, 3, std::vector<float>(normals.normal.size() * 3, 0.0f)};
  for (std::size_t i = 0; i < normals.normal.size(); ++i)
    if (normals.valid[i])
      for (int c = 0; c < 3; ++c) r.values[i * 3 + c] = normals.normal[i](c);
  return r;
}

Raster to_raster(const geometry::DepthMap& depth) {
  Raster r{depth.width, depth.height, 1, std::vector<float>(depth.depth.size(), 0.0f)};
  for (std::size_t i = 0; i < depth.depth.size(); ++i)
    if (depth.valid[i]) r.values[i] = depth.depth[i];
  return r;
}

geometry::NormalMap normals_from_raster(const Raster& r) {
  if (r.channels != 3) throw DataError("normal raster must have 3 channels");
  geometry::NormalMap m(r.width, r.height);
  for (std::size_t i = 0; i < m.normal.size(); ++i) {
    const Eigen::Vector3f n(r.values[i * 3], r.values[i * 3 + 1], r.values[i * 3 + 2]);
    if (n.isZero(0.0f)) continue;
    m.normal[i] = n;
    m.valid[i] = 1;
  }
  return m;
}

geometry::DepthMap depth_from_raster(const Raster& r) {
  if (r.channels != 1) throw DataError("depth raster must have 1 channel");
  geometry::DepthMap d(r.width, r.height);
  for (std::size_t i = 0; i < d.depth.size(); ++i) {
    if (!(r.values[i] > 0.0f)) continue;
    d.depth[i] = r.values[i];
    d.valid[i] = 1;
  }
  return d;
}

namespace {

using nlohmann::json;

std::string sample_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%05zu", index);
  return buf;
}

json read_manifest_json(const path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("no manifest.json in " + dir.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed manifest in " + dir.string() + ": " + e.what());
  }
}

}  // namespace

void write_dataset(const path& dir, const std::vector<synth::Sample>& samples, const std::string& config_text) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["format"] = "hfm-dataset-1";
  manifest["count"] = samples.size();
  manifest["config"] = config_text;
  manifest["samples"] = json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const synth::Sample& s = samples[i];
    const std::string name = sample_name(i);
    write_rgb_png(dir / (name + "_rgb.png"), s.rgb);
    write_depth_png(dir / (name + "_depth.png"), s.depth);
    write_normal_png(dir / (name + "_normals.png"), s.gt);
    write_raster(dir / (name + "_depth.raw"), to_raster(s.depth));
    write_raster(dir / (name + "_clean_depth.raw"), to_raster(s.clean_depth));
    write_raster(dir / (name + "_normals.raw"), to_raster(s.gt));
    write_raster(dir / (name + "_target.raw"), to_raster(s.target));
    const auto& k = s.intrinsics;
    manifest["samples"].push_back({{"name", name},
                                   {"seed", s.seed},
                                   {"width", s.rgb.width},
                                   {"height", s.rgb.height},
                                   {"intrinsics", {k.fx, k.fy, k.cx, k.cy}}});
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
  if (!out) throw DataError("cannot write manifest in " + dir.string());
}

std::vector<DatasetEntry> read_manifest(const path& dir) {
  const json m = read_manifest_json(dir);
  std::vector<DatasetEntry> out;
  try {
    for (const auto& s : m.at("samples")) out.push_back({s.at("name").get<std::string>(), s.at("seed").get<std::uint64_t>()});
    if (m.at("count").get<std::size_t>() != out.size()) throw DataError("manifest count does not match its sample list");
  } catch (const json::exception& e) {
    throw DataError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  return out;
}

std::vector<synth::Sample> read_dataset(const path& dir) {
  const json m = read_manifest_json(dir);
  std::vector<synth::Sample> out;
  try {
    for (const auto& e : m.at("samples")) {
      synth::Sample s;
      const std::string name = e.at("name").get<std::string>();
      s.seed = e.at("seed").get<std::uint64_t>();
      const auto k = e.at("intrinsics").get<std::vector<double>>();
      if (k.size() != 4) throw DataError("manifest entry " + name + ": intrinsics need 4 values");
      s.intrinsics = {k[0], k[1], k[2], k[3]};
      s.rgb = read_rgb_png(dir / (name + "_rgb.png"));
      s.depth = depth_from_raster(read_raster(dir / (name + "_depth.raw")));
      s.holes = geometry::HoleMask::of(s.depth);
      s.clean_depth = depth_from_raster(read_raster(dir / (name + "_clean_depth.raw")));
      s.gt = normals_from_raster(read_raster(dir / (name + "_normals.raw")));
      s.target = normals_from_raster(read_raster(dir / (name + "_target.raw")));
      if (s.depth.width != s.rgb.width || s.gt.width != s.rgb.width || s.target.width != s.rgb.width ||
          s.depth.height != s.rgb.height || s.gt.height != s.rgb.height || s.target.height != s.rgb.height)
        throw DataError("sample " + name + ": files disagree on image size");
      out.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw DataError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  return out;
}

}  // namespace hfm::io
