#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include "hfm/checkpoint.hpp"
#include "hfm/image_io.hpp"
#include "network_fixture.hpp"

using namespace hfm;
using namespace hfm::io;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path dir;
  explicit TempDir(const std::string& tag) {
    dir = fs::temp_directory_path() / ("hfm_io_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
  }
  ~TempDir() { fs::remove_all(dir); }
  fs::path operator/(const std::string& name) const { return dir / name; }
};

std::vector<char> slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& file, const std::vector<char>& bytes) {
  std::ofstream out(file, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

synth::SampleConfig small_config() {
  synth::SampleConfig cfg;
  cfg.scene.width = cfg.scene.height = 16;
  cfg.scene.focal = 15.0;
  cfg.corruption = synth::CorruptionSpec::heavy();
  cfg.corruption.hole_radius_min = 1;
  cfg.corruption.hole_radius_max = 3;
  cfg.gt_noise = {4, 1};
  return cfg;
}

}  // namespace

TEST_CASE("normal PNG round trip within 8-bit quantization") {
  TempDir tmp("normals");
  const auto s = synth::generate_sample(small_config(), 3);
  write_normal_png(tmp / "n.png", s.gt);
  const auto back = read_normal_png(tmp / "n.png");
  REQUIRE(back.width == s.gt.width);
  CHECK(back.valid == s.gt.valid);
  for (std::size_t i = 0; i < back.normal.size(); ++i) {
    if (!back.valid[i]) continue;
    CHECK(std::abs(back.normal[i].norm() - 1.0f) < 1e-5f);
    // Half a code step per channel is at most ~0.0039 in the unit vector.
    CHECK(geometry::angle_between_deg(back.normal[i], s.gt.normal[i]) < 0.5);
  }
  CHECK(slurp(tmp / "n.png") == (write_normal_png(tmp / "m.png", s.gt), slurp(tmp / "m.png")));
}

TEST_CASE("depth PNG stores millimeters with holes at zero") {
  TempDir tmp("depth");
  geometry::DepthMap d(3, 2);
  d.set(0, 0, 1.2344f);
  d.set(1, 0, 0.001f);
  d.set(2, 0, 65.535f);
  d.set(0, 1, 3.0f);
  write_depth_png(tmp / "d.png", d);
  const auto back = read_depth_png(tmp / "d.png");
  CHECK(back.valid == d.valid);
  CHECK(back.at(0, 0) == doctest::Approx(1.234).epsilon(1e-7));
  CHECK(back.at(1, 0) == doctest::Approx(0.001));
  CHECK(back.at(2, 0) == doctest::Approx(65.535));
  CHECK(back.at(0, 1) == 3.0f);

  geometry::DepthMap far(1, 1);
  far.set(0, 0, 70.0f);
  CHECK_THROWS_AS(write_depth_png(tmp / "far.png", far), DataError);
  CHECK_THROWS_AS(read_normal_png(tmp / "d.png"), DataError);
}

TEST_CASE("rgb and gray PNG round trips") {
  TempDir tmp("rgb");
  const auto s = synth::generate_sample(small_config(), 4);
  write_rgb_png(tmp / "c.png", s.rgb);
  const auto back = read_rgb_png(tmp / "c.png");
  for (std::size_t i = 0; i < back.pixels.size(); ++i)
    CHECK((back.pixels[i] - s.rgb.pixels[i]).cwiseAbs().maxCoeff() <= 0.5f / 255.0f + 1e-6f);

  std::vector<float> g = {0.0f, 0.25f, 0.5f, 1.0f, 0.1f, 0.9f};
  write_gray_png(tmp / "g.png", 3, 2, g);
  int w = 0, h = 0;
  const auto gb = read_gray_png(tmp / "g.png", &w, &h);
  CHECK(w == 3);
  CHECK(h == 2);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(gb[i] - g[i]) <= 0.5f / 255.0f + 1e-6f);
  CHECK_THROWS_AS(write_gray_png(tmp / "bad.png", 2, 2, g), ContractViolation);
}

TEST_CASE("float rasters are lossless and validated") {
  TempDir tmp("raster");
  Raster r{4, 3, 2, {}};
  std::mt19937 rng(1);
  std::normal_distribution<float> dist;
  for (int i = 0; i < 24; ++i) r.values.push_back(dist(rng));
  write_raster(tmp / "r.raw", r);
  const auto back = read_raster(tmp / "r.raw");
  CHECK(back.width == 4);
  CHECK(back.height == 3);
  CHECK(back.channels == 2);
  CHECK(back.values == r.values);
  CHECK(fs::file_size(tmp / "r.raw") == 8 + 12 + 24 * 4);

  auto bytes = slurp(tmp / "r.raw");
  bytes[0] = 'X';
  spit(tmp / "bad.raw", bytes);
  CHECK_THROWS_AS(read_raster(tmp / "bad.raw"), DataError);
  bytes = slurp(tmp / "r.raw");
  bytes.resize(bytes.size() - 3);
  spit(tmp / "short.raw", bytes);
  CHECK_THROWS_AS(read_raster(tmp / "short.raw"), DataError);
  CHECK_THROWS_AS(read_raster(tmp / "missing.raw"), DataError);
}

TEST_CASE("dataset directories round trip and are reproducible") {
  TempDir tmp("dataset");
  std::vector<synth::Sample> samples;
  for (std::uint64_t s = 0; s < 3; ++s) samples.push_back(synth::generate_sample(small_config(), 100 + s));
  write_dataset(tmp.dir / "a", samples, "[scene]\nwidth = 16\n");
  write_dataset(tmp.dir / "b", samples, "[scene]\nwidth = 16\n");

  const auto manifest = read_manifest(tmp.dir / "a");
  REQUIRE(manifest.size() == 3);
  CHECK(manifest[1].seed == 101);

  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(tmp.dir / "a")) {
    ++files;
    CHECK(slurp(entry.path()) == slurp(tmp.dir / "b" / entry.path().filename()));
  }
  CHECK(files == 1 + 7 * manifest.size());

  const auto back = read_dataset(tmp.dir / "a");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].seed == samples[i].seed);
    CHECK(back[i].depth.depth == samples[i].depth.depth);
    CHECK(back[i].depth.valid == samples[i].depth.valid);
    CHECK(back[i].gt.valid == samples[i].gt.valid);
    CHECK(back[i].target.valid == samples[i].target.valid);
    for (std::size_t p = 0; p < back[i].gt.normal.size(); ++p)
      if (back[i].gt.valid[p]) CHECK(back[i].gt.normal[p] == samples[i].gt.normal[p]);
    CHECK(back[i].intrinsics.fx == samples[i].intrinsics.fx);
    CHECK(back[i].holes.hole == samples[i].holes.hole);
  }

  write_dataset(tmp.dir / "empty", {}, "");
  CHECK(read_manifest(tmp.dir / "empty").empty());
  CHECK_THROWS_AS(read_dataset(tmp.dir / "nowhere"), DataError);
}

TEST_CASE("checkpoints round trip and detect corruption") {
  TempDir tmp("ckpt");
  const NetworkConfig cfg = testing::tiny_config();
  Checkpoint c;
  c.seed = 42;
  c.next_epoch = 3;
  c.config_text = "[train]\nepochs = 5\n";
  c.params = build(cfg, 9);
  c.optimizer_state["head4.w"] = std::vector<Scalar>(c.params.at("head4.w").numel(), Scalar(0.25));
  c.optimizer_steps = 17;
  save_checkpoint(tmp / "c.ckpt", c);
  CHECK_FALSE(fs::exists(tmp / "c.ckpt.tmp"));

  const Checkpoint back = load_checkpoint(tmp / "c.ckpt");
  CHECK(back.seed == 42);
  CHECK(back.next_epoch == 3);
  CHECK(back.config_text == c.config_text);
  CHECK(back.optimizer_steps == 17);
  CHECK(back.optimizer_state == c.optimizer_state);
  REQUIRE(back.params.entries().size() == c.params.entries().size());
  for (std::size_t i = 0; i < c.params.entries().size(); ++i) {
    CHECK(back.params.entries()[i].name == c.params.entries()[i].name);
    CHECK(back.params.entries()[i].tensor.shape() == c.params.entries()[i].tensor.shape());
    const auto a = back.params.entries()[i].tensor.data(), b = c.params.entries()[i].tensor.data();
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == static_cast<Scalar>(static_cast<float>(b[k])));
  }

  Parameters fresh = build(cfg, 1);
  assign_parameters(fresh, back.params);
  CHECK(fresh.at("conf.0.w").data()[3] == back.params.at("conf.0.w").data()[3]);
  Parameters other = build(testing::tiny_config(FusionVariant::early), 1);
  CHECK_THROWS_AS(assign_parameters(other, back.params), DataError);

  auto bytes = slurp(tmp / "c.ckpt");
  bytes[bytes.size() / 2] ^= 0x10;
  spit(tmp / "flip.ckpt", bytes);
  try {
    load_checkpoint(tmp / "flip.ckpt");
    FAIL("expected a checksum error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("checksum") != std::string::npos);
  }
  bytes = slurp(tmp / "c.ckpt");
  bytes.resize(bytes.size() - 10);
  spit(tmp / "short.ckpt", bytes);
  CHECK_THROWS_AS(load_checkpoint(tmp / "short.ckpt"), DataError);
  spit(tmp / "junk.ckpt", {'n', 'o', 'p', 'e'});
  CHECK_THROWS_AS(load_checkpoint(tmp / "junk.ckpt"), DataError);

  save_checkpoint(tmp / "d.ckpt", c);
  CHECK(slurp(tmp / "c.ckpt") == slurp(tmp / "d.ckpt"));
}
