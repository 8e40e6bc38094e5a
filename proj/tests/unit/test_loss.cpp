#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "fit_oracle.hpp"
#include "gradcheck.hpp"
#include "hfm/ops.hpp"
#include "hfm/train.hpp"
#include "network_fixture.hpp"

using namespace hfm;
using namespace hfm::testing;

namespace {

Tensor ones_mask(int b, int h, int w) { return Tensor::full({b, 1, h, w}, Scalar(1)); }

Tensor random_mask(int b, int h, int w, std::mt19937_64& rng, double p = 0.6) {
  std::bernoulli_distribution keep(p);
  std::vector<Scalar> m(static_cast<std::size_t>(b) * h * w);
  for (Scalar& v : m) v = keep(rng) ? 1 : 0;
  return Tensor::from({b, 1, h, w}, std::move(m));
}

// Direct summation: sum over valid pixels and channels, divided by the valid count.
double summed_loss(LossKind kind, const Tensor& p, const Tensor& g, const Tensor& valid) {
  const int B = p.dim(0), H = p.dim(2), W = p.dim(3);
  double total = 0;
  int n = 0;
  for (int b = 0; b < B; ++b)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        if (valid.at(b, 0, y, x) == 0) continue;
        ++n;
        for (int c = 0; c < 3; ++c) {
          const double d = static_cast<double>(p.at(b, c, y, x)) - g.at(b, c, y, x);
          total += kind == LossKind::l2 ? d * d : std::abs(d);
        }
      }
  return n ? total / n : 0.0;
}

TargetPyramid random_pyramid(int batch, int size, std::mt19937_64& rng) {
  TargetPyramid t;
  for (int l = 0; l < kScales; ++l) {
    const int s = size >> (kScales - 1 - l);
    t.normals[static_cast<std::size_t>(l)] = random_tensor({batch, 3, s, s}, rng);
    t.valid[static_cast<std::size_t>(l)] = random_mask(batch, s, s, rng);
  }
  return t;
}

std::array<Tensor, kScales> copy_targets(const TargetPyramid& t) {
  std::array<Tensor, kScales> out;
  for (std::size_t l = 0; l < kScales; ++l)
    out[l] = Tensor::from(t.normals[l].shape(), Buffer(t.normals[l].data().begin(), t.normals[l].data().end()), true);
  return out;
}

std::vector<synth::Sample> tiny_samples(int count, std::uint64_t seed, bool corrupt = true) {
  synth::SampleConfig cfg;
  cfg.scene.width = cfg.scene.height = 16;
  cfg.scene.focal = 15.0;
  if (corrupt) {
    cfg.corruption.hole_count = 1;
    cfg.corruption.hole_radius_min = 1;
    cfg.corruption.hole_radius_max = 3;
  }
  std::vector<synth::Sample> out;
  for (int i = 0; i < count; ++i) out.push_back(synth::generate_sample(cfg, synth::derive_seed(seed, i)));
  return out;
}

TrainConfig tiny_train_config(int epochs) {
  TrainConfig c;
  c.network = tiny_config();
  c.schedule.epochs = epochs;
  c.schedule.warmup_epochs = std::min(epochs - 1, 1);
  c.schedule.batch_size = 2;
  c.schedule.seed = 5;
  c.schedule.initial_lr = 3e-3;
  c.schedule.decay_epochs = {3};
  return c;
}

bool same_params(const Parameters& a, const Parameters& b) {
  if (a.entries().size() != b.entries().size()) return false;
  for (std::size_t i = 0; i < a.entries().size(); ++i) {
    const auto x = a.entries()[i].tensor.data(), y = b.entries()[i].tensor.data();
    if (!std::equal(x.begin(), x.end(), y.begin(), y.end())) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("pixel losses: closed forms") {
  std::mt19937_64 rng(1);
  const Tensor gt = random_tensor({2, 3, 4, 5}, rng);
  const Tensor valid = random_mask(2, 4, 5, rng);
  CHECK(l2_loss(gt, gt, valid).value.item() == 0);
  CHECK(l1_loss(gt, gt, valid).value.item() == 0);

  for (double delta : {0.25, -0.5, 0.125}) {
    std::vector<Scalar> shifted(gt.data().begin(), gt.data().end());
    for (Scalar& v : shifted) v = static_cast<Scalar>(v + delta);
    const Tensor pred = Tensor::from(gt.shape(), shifted);
    CHECK(l2_loss(pred, gt, valid).value.item() == doctest::Approx(3 * delta * delta).epsilon(1e-5));
    CHECK(l1_loss(pred, gt, valid).value.item() == doctest::Approx(3 * std::abs(delta)).epsilon(1e-5));
  }
}

TEST_CASE("pixel losses match direct summation") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor p = random_tensor({2, 3, 6, 7}, rng), g = random_tensor({2, 3, 6, 7}, rng);
    const Tensor valid = random_mask(2, 6, 7, rng);
    for (LossKind k : {LossKind::l1, LossKind::l2}) {
      const LossValue v = pixel_loss(k, p, g, valid);
      CHECK(v.value.item() == doctest::Approx(summed_loss(k, p, g, valid)).epsilon(1e-5));
    }
  }
}

TEST_CASE("pixel losses: empty validity and contracts") {
  std::mt19937_64 rng(3);
  const Tensor p = random_tensor({1, 3, 2, 2}, rng, true), g = random_tensor({1, 3, 2, 2}, rng);
  const LossValue v = l2_loss(p, g, Tensor::zeros({1, 1, 2, 2}));
  CHECK(v.empty());
  CHECK(v.value.item() == 0);
  CHECK_FALSE(v.value.requires_grad());
  CHECK_THROWS_AS(l1_loss(p, random_tensor({1, 3, 2, 3}, rng), ones_mask(1, 2, 2)), ContractViolation);
  CHECK_THROWS_AS(l1_loss(p, g, ones_mask(1, 2, 3)), ContractViolation);
}

TEST_CASE("pixel loss gradients") {
  std::mt19937_64 rng(4);
  Tensor p = random_tensor({2, 3, 3, 4}, rng, true);
  const Tensor g = random_tensor({2, 3, 3, 4}, rng);
  const Tensor valid = random_mask(2, 3, 4, rng);
  for (LossKind k : {LossKind::l1, LossKind::l2}) {
    const auto samples = check_gradients([&] { return pixel_loss(k, p, g, valid).value; }, {p}, kFdStep, 24, 9);
    CHECK(max_relative_error(samples) < kFdTolerance);
  }
  // Invalid pixels get no gradient.
  p.clear_grad();
  backward(l2_loss(p, g, valid).value);
  const auto grad = p.grad();
  for (int b = 0; b < 2; ++b)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 12; ++i)
        if (valid.data()[static_cast<std::size_t>(b * 12 + i)] == 0)
          CHECK(grad[static_cast<std::size_t>((b * 3 + c) * 12 + i)] == 0);
}

TEST_CASE("L1 subgradient at zero residual is zero") {
  const Tensor p = Tensor::from({1, 3, 1, 1}, {0.5, -0.25, 0.0}, true);
  const Tensor g = Tensor::from({1, 3, 1, 1}, {0.5, 0.0, 0.0});
  backward(l1_loss(p, g, ones_mask(1, 1, 1)).value);
  CHECK(p.grad()[0] == 0);
  CHECK(p.grad()[1] == -1);
  CHECK(p.grad()[2] == 0);
}

TEST_CASE("hybrid loss decomposes into weighted per-scale losses") {
  std::mt19937_64 rng(5);
  const TargetPyramid t = random_pyramid(2, 16, rng);
  std::array<Tensor, kScales> pred;
  for (std::size_t l = 0; l < kScales; ++l) pred[l] = random_tensor(t.normals[l].shape(), rng, true);
  const LossWeights w;
  const MultiScaleLoss h = hybrid_loss(pred, t, w);
  double expected = 0;
  for (std::size_t l = 0; l < kScales; ++l) {
    const LossKind k = l < 2 ? LossKind::l2 : LossKind::l1;
    const double term = pixel_loss(k, pred[l], t.normals[l], t.valid[l]).value.item();
    CHECK(h.per_scale[l] == term);
    expected += static_cast<double>(static_cast<Scalar>(w.w[l])) * term;
    CHECK(term == doctest::Approx(summed_loss(k, pred[l], t.normals[l], t.valid[l])).epsilon(1e-5));
  }
  CHECK(h.total.item() == doctest::Approx(expected).epsilon(1e-6));

  const auto samples = check_gradients([&] { return hybrid_loss(pred, t, w).total; },
                                       {pred[0], pred[1], pred[2], pred[3]}, kFdStep, 6, 10);
  CHECK(max_relative_error(samples) < kFdTolerance);
}

TEST_CASE("hybrid loss: identity and a scale-4-only offset") {
  std::mt19937_64 rng(6);
  TargetPyramid t = random_pyramid(1, 16, rng);
  for (auto& v : t.valid) v = Tensor::full(v.shape(), Scalar(1));
  auto pred = copy_targets(t);
  CHECK(hybrid_loss(pred, t, LossWeights{}).total.item() == 0);

  const double delta = 0.1;
  auto data = pred[3].mutable_data();
  for (Scalar& v : data) v = static_cast<Scalar>(v + delta);
  CHECK(hybrid_loss(pred, t, LossWeights{}).total.item() == doctest::Approx(1.0 * 3 * delta).epsilon(1e-5));
  // Under the warm-up selector the same offset costs 3 delta^2.
  CHECK(multi_scale_loss(pred, t, LossWeights{}, kAllL2Kinds).total.item() ==
        doctest::Approx(3 * delta * delta).epsilon(1e-4));
}

TEST_CASE("hybrid loss: misaligned levels and weights") {
  std::mt19937_64 rng(7);
  const TargetPyramid t = random_pyramid(1, 16, rng);
  auto pred = copy_targets(t);
  std::swap(pred[0], pred[1]);
  CHECK_THROWS_AS(hybrid_loss(pred, t, LossWeights{}), ContractViolation);
  LossWeights bad;
  bad.w[2] = -0.1;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
}

TEST_CASE("fitting one vector: L2 gives the mean, L1 the median") {
  const auto targets = fit_targets();
  const auto mean_fit = fit_vector(LossKind::l2, targets);
  const auto median_fit = fit_vector(LossKind::l1, targets);
  const auto [mean, median] = mean_and_median(targets);
  for (int c = 0; c < 3; ++c) {
    CHECK(std::abs(mean_fit[c] - mean[c]) < 1e-3);
    CHECK(std::abs(median_fit[c] - median[c]) < 1e-3);
  }
}

TEST_CASE("learning-rate schedule and loss selector") {
  const TrainSchedule s;
  CHECK(lr_at_epoch(s, 0) == 1e-3);
  CHECK(lr_at_epoch(s, 1) == 1e-3);
  CHECK(lr_at_epoch(s, 2) == 5e-4);
  CHECK(lr_at_epoch(s, 3) == 5e-4);
  CHECK(lr_at_epoch(s, 4) == 2.5e-4);
  CHECK(lr_at_epoch(s, 6) == 1.25e-4);
  CHECK(lr_at_epoch(s, 9) == 6.25e-5);
  CHECK(lr_at_epoch(s, 12) == 3.125e-5);
  CHECK(lr_at_epoch(s, 40) == 3.125e-5);
  CHECK_THROWS_AS(lr_at_epoch(s, -1), ContractViolation);

  int switches = 0;
  for (int e = 0; e < 20; ++e) {
    const ScaleKinds k = loss_for_epoch(e, s);
    CHECK(k == (e < 4 ? kAllL2Kinds : kHybridKinds));
    if (e > 0 && k != loss_for_epoch(e - 1, s)) ++switches;
  }
  CHECK(switches == 1);

  TrainSchedule bad = s;
  bad.decay_epochs = {2, 2};
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  bad = s;
  bad.warmup_epochs = bad.epochs;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
}

TEST_CASE("rmsprop: hand trace, limits and contracts") {
  Parameters params;
  params.add("p", Tensor::from({1}, {1.0}, true));
  RMSprop opt;
  opt.lr = 1e-3;

  // One step on (p - 3)^2 from p = 1: g = -4, v = 0.1 * 16.
  auto quad = [&] {
    const Tensor d = add(params.at("p"), Tensor::from({1}, {-3.0}));
    return sum(mul(d, d));
  };
  backward(quad());
  opt.step(params);
  const double expected = 1.0 + 1e-3 * 4.0 / (std::sqrt(1.6) + 1e-8);
  CHECK(params.at("p").data()[0] == doctest::Approx(expected).epsilon(1e-6));
  CHECK_FALSE(params.at("p").has_grad());
  CHECK(opt.state().at("p")[0] == doctest::Approx(1.6).epsilon(1e-6));
  CHECK(opt.steps() == 1);

  // Step without gradients.
  CHECK_THROWS_AS(opt.step(params), ContractViolation);

  // Zero gradient leaves the parameter where it is.
  const Scalar before = params.at("p").data()[0];
  params.at("p").mutable_grad()[0] = 0;
  opt.step(params);
  CHECK(params.at("p").data()[0] == before);

  // A constant gradient drives each update toward lr.
  Parameters q;
  q.add("q", Tensor::from({2}, {0.0, 0.0}, true));
  RMSprop steady;
  steady.lr = 1e-2;
  double last = 0;
  for (int i = 0; i < 300; ++i) {
    q.at("q").mutable_grad()[0] = Scalar(0.3);
    q.at("q").mutable_grad()[1] = Scalar(-2.0);
    const double was = q.at("q").data()[0];
    steady.step(q);
    last = was - q.at("q").data()[0];
  }
  CHECK(last == doctest::Approx(1e-2).epsilon(1e-4));
  for (Scalar v : steady.state().at("q")) CHECK(v >= 0);
}

TEST_CASE("rmsprop: identical gradient streams give identical trajectories") {
  auto run = [] {
    std::mt19937_64 rng(11);
    Parameters p;
    p.add("a", random_tensor({4, 3}, rng, true));
    p.add("b", random_tensor({5}, rng, true));
    RMSprop opt;
    for (int i = 0; i < 50; ++i) {
      opt.lr = 1e-3 * (1 + i % 3);
      for (auto& e : p.entries()) {
        auto g = e.tensor.mutable_grad();
        for (Scalar& v : g) v = static_cast<Scalar>(std::normal_distribution<double>()(rng));
      }
      opt.step(p);
    }
    return p;
  };
  CHECK(same_params(run(), run()));
}

TEST_CASE("batch preparation") {
  const auto samples = tiny_samples(2, 21);
  const Batch b = make_batch({&samples[0], &samples[1]});
  CHECK(b.seeds == std::vector<std::uint64_t>{samples[0].seed, samples[1].seed});
  CHECK(b.input.rgb.shape() == Shape{2, 3, 16, 16});
  for (Scalar v : b.input.rgb.data()) CHECK((v >= -1 && v <= 1));
  CHECK(b.input.rgb.at(1, 2, 5, 7) == doctest::Approx((samples[1].rgb.pixels[5 * 16 + 7](2) - 0.5) * 2));

  for (int s = 0; s < 2; ++s) {
    double mean = 0, sq = 0;
    int n = 0;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        const bool valid = samples[static_cast<std::size_t>(s)].depth.is_valid(x, y);
        CHECK(b.input.mask.at(s, 0, y, x) == (valid ? 1 : 0));
        if (!valid) {
          CHECK(b.input.depth.at(s, 0, y, x) == 0);
          continue;
        }
        mean += b.input.depth.at(s, 0, y, x);
        sq += std::pow(static_cast<double>(b.input.depth.at(s, 0, y, x)), 2);
        ++n;
      }
    REQUIRE(n > 0);
    CHECK(std::abs(mean / n) < 1e-4);
    CHECK(sq / n == doctest::Approx(1.0).epsilon(1e-3));
  }
  for (int l = 0; l < kScales; ++l) {
    const int size = 16 >> (kScales - 1 - l);
    CHECK(b.targets.normals[static_cast<std::size_t>(l)].shape() == Shape{2, 3, size, size});
    CHECK(b.targets.valid[static_cast<std::size_t>(l)].shape() == Shape{2, 1, size, size});
  }
  const auto back = to_normal_map(b.targets.normals[3], 1);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      if (samples[1].target.is_valid(x, y))
        CHECK((back.at(x, y) - samples[1].target.at(x, y)).norm() < 1e-6);

  const auto odd = tiny_samples(1, 3);
  synth::Sample wrong = odd[0];
  wrong.rgb = synth::RgbImage(8, 8);
  CHECK_THROWS_AS(make_batch({&samples[0], &wrong}), ContractViolation);
}

TEST_CASE("training lowers the loss and is deterministic") {
  const auto samples = tiny_samples(4, 31);
  const TrainConfig cfg = tiny_train_config(6);

  auto run = [&](std::vector<StepRecord>* steps) {
    Parameters p = build(cfg.network, 77);
    RMSprop opt;
    TrainHooks hooks;
    hooks.on_step = [&](const StepRecord& r) {
      if (steps) steps->push_back(r);
    };
    auto log = train(samples, samples, cfg, p, opt, 0, hooks);
    return std::make_pair(std::move(p), std::move(log));
  };
  std::vector<StepRecord> steps;
  auto [p1, log1] = run(&steps);
  auto [p2, log2] = run(nullptr);
  CHECK(same_params(p1, p2));
  REQUIRE(log1.size() == 6);
  CHECK(log1.back().mean_loss < log1.front().mean_loss);
  for (std::size_t e = 0; e < log1.size(); ++e) {
    CHECK(log1[e].mean_loss == log2[e].mean_loss);
    CHECK(log1[e].lr == lr_at_epoch(cfg.schedule, static_cast<int>(e)));
    REQUIRE(log1[e].validation.has_value());
    CHECK(log1[e].validation->count == 4u * 256u);
  }
  CHECK(steps.size() == 12);
  for (const auto& s : steps) CHECK(std::isfinite(s.grad_norm));
}

TEST_CASE("resuming at an epoch boundary reproduces the full run") {
  const auto samples = tiny_samples(3, 41);
  const TrainConfig cfg = tiny_train_config(4);
  Parameters full = build(cfg.network, 5);
  RMSprop full_opt;
  train(samples, {}, cfg, full, full_opt);

  Parameters part = build(cfg.network, 5);
  RMSprop part_opt;
  Parameters snapshot;
  std::map<std::string, std::vector<Scalar>> state;
  std::uint64_t steps = 0;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r, const Parameters& p, const RMSprop& o) {
    if (r.epoch != 1) return;
    for (const auto& e : p.entries())
      snapshot.add(e.name, Tensor::from(e.tensor.shape(), Buffer(e.tensor.data().begin(), e.tensor.data().end()), true));
    state = o.state();
    steps = o.steps();
  };
  train(samples, {}, cfg, part, part_opt, 0, hooks);

  RMSprop resumed_opt;
  resumed_opt.restore(state, steps);
  train(samples, {}, cfg, snapshot, resumed_opt, 2);
  CHECK(same_params(full, snapshot));
  CHECK(resumed_opt.state() == full_opt.state());
}

TEST_CASE("non-finite loss names the batch") {
  const auto samples = tiny_samples(2, 51);
  TrainConfig cfg = tiny_train_config(2);
  Parameters p = build(cfg.network, 1);
  p.at("head4.b").mutable_data()[0] = std::numeric_limits<Scalar>::quiet_NaN();
  RMSprop opt;
  try {
    train(samples, {}, cfg, p, opt);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    const std::string what = e.what();
    CHECK(what.find(std::to_string(samples[0].seed)) != std::string::npos);
    CHECK(what.find(std::to_string(samples[1].seed)) != std::string::npos);
  }
}

TEST_CASE("training rejects mismatched extents") {
  const auto samples = tiny_samples(1, 61);
  TrainConfig cfg = tiny_train_config(2);
  cfg.network.width = cfg.network.height = 32;
  Parameters p = build(cfg.network, 1);
  RMSprop opt;
  CHECK_THROWS_AS(train(samples, {}, cfg, p, opt), ContractViolation);
}
