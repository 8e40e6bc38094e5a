#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "hfm/metrics.hpp"

using namespace hfm;
using namespace hfm::eval;
using geometry::NormalMap;

namespace {

Eigen::Vector3f tilted(double degrees) {
  const double a = degrees * std::numbers::pi / 180.0;
  return Eigen::Vector3f(0.0f, static_cast<float>(std::sin(a)), static_cast<float>(-std::cos(a)));
}

NormalMap random_map(int w, int h, std::mt19937_64& rng, double keep_probability) {
  std::normal_distribution<float> g;
  std::bernoulli_distribution keep(keep_probability);
  NormalMap m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (keep(rng)) m.set(x, y, Eigen::Vector3f(g(rng), g(rng), g(rng)).normalized());
  return m;
}

}  // namespace

TEST_CASE("identical maps score zero error") {
  std::mt19937_64 rng(1);
  const NormalMap m = random_map(8, 8, rng, 0.8);
  const auto r = evaluate(m, m);
  CHECK(r.count == m.valid_count());
  CHECK(r.mean == 0);
  CHECK(r.median == 0);
  for (double f : r.within) CHECK(f == 1.0);
}

TEST_CASE("half at zero, half at twenty degrees") {
  const auto r = summarize({0, 0, 20, 20});
  CHECK(r.mean == 10.0);
  CHECK(r.median == 10.0);
  CHECK(r.within[0] == 0.5);
  CHECK(r.within[1] == 1.0);
  CHECK(r.within[2] == 1.0);

  // The same case built from normal maps.
  NormalMap pred(4, 1), gt(4, 1);
  for (int x = 0; x < 4; ++x) {
    gt.set(x, 0, tilted(0));
    pred.set(x, 0, tilted(x < 2 ? 0 : 20));
  }
  const auto m = evaluate(pred, gt);
  CHECK(m.mean == doctest::Approx(10.0).epsilon(1e-5));
  CHECK(m.median == doctest::Approx(10.0).epsilon(1e-5));
  CHECK(m.within[0] == 0.5);
  CHECK(m.within[1] == 1.0);
}

TEST_CASE("thresholds are strict and monotone") {
  const auto r = summarize({11.25, 22.5, 30.0, 5.0});
  CHECK(r.within[0] == 0.25);
  CHECK(r.within[1] == 0.5);
  CHECK(r.within[2] == 0.75);
  CHECK(r.median == doctest::Approx(16.875));

  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = evaluate(random_map(6, 6, rng, 0.9), random_map(6, 6, rng, 0.9));
    CHECK(m.within[0] <= m.within[1]);
    CHECK(m.within[1] <= m.within[2]);
    CHECK(m.within[2] <= 1.0);
    CHECK(m.within[0] >= 0.0);
  }
}

TEST_CASE("random pairs match a direct arccos recomputation") {
  std::mt19937_64 rng(3);
  const NormalMap a = random_map(16, 16, rng, 0.7), b = random_map(16, 16, rng, 0.7);
  std::vector<double> oracle;
  for (std::size_t i = 0; i < a.normal.size(); ++i) {
    if (!a.valid[i] || !b.valid[i]) continue;
    double dot = 0, na = 0, nb = 0;
    for (int c = 0; c < 3; ++c) {
      dot += static_cast<double>(a.normal[i](c)) * b.normal[i](c);
      na += static_cast<double>(a.normal[i](c)) * a.normal[i](c);
      nb += static_cast<double>(b.normal[i](c)) * b.normal[i](c);
    }
    dot /= std::sqrt(na * nb);
    oracle.push_back(std::acos(std::max(-1.0, std::min(1.0, dot))) * 180.0 / std::numbers::pi);
  }
  const auto r = evaluate(a, b);
  REQUIRE(r.count == oracle.size());
  double mean = 0;
  for (double e : oracle) mean += e;
  mean /= static_cast<double>(oracle.size());
  // acos loses up to ~1e-6 degrees near 0 and 180; the pooled statistics
  // agree far below that.
  CHECK(std::abs(r.mean - mean) < 1e-6);
  CHECK(std::abs(r.median - median_by_sort(oracle)) < 1e-6);
  // Mask intersection does not depend on argument order.
  const auto swapped = evaluate(b, a);
  CHECK(swapped.count == r.count);
  CHECK(swapped.mean == doctest::Approx(r.mean).epsilon(1e-12));
}

TEST_CASE("selection median equals full-sort median") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 90);
  for (std::size_t n = 1; n < 60; ++n) {
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    CHECK(summarize(v).median == median_by_sort(v));
  }
}

TEST_CASE("empty intersection is flagged") {
  NormalMap a(2, 2), b(2, 2);
  a.set(0, 0, tilted(0));
  b.set(1, 1, tilted(0));
  const auto r = evaluate(a, b);
  CHECK(r.count == 0);
  CHECK_FALSE(r.defined());
  CHECK(format_report(r, "empty").find("undefined") != std::string::npos);
}

TEST_CASE("aggregation pools pixels") {
  std::mt19937_64 rng(5);
  const NormalMap p1 = random_map(8, 8, rng, 0.9), g1 = random_map(8, 8, rng, 0.9);
  const NormalMap p2 = random_map(8, 4, rng, 0.5), g2 = random_map(8, 4, rng, 0.5);
  const auto r1 = evaluate(p1, g1), r2 = evaluate(p2, g2);

  const auto single = aggregate({r1});
  CHECK(single.mean == r1.mean);
  CHECK(single.median == r1.median);
  CHECK(single.count == r1.count);

  // Stack the two images into one taller image and evaluate it directly.
  NormalMap pu(8, 12), gu(8, 12);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 8; ++x) {
      const NormalMap& ps = y < 8 ? p1 : p2;
      const NormalMap& gs = y < 8 ? g1 : g2;
      const int yy = y < 8 ? y : y - 8;
      if (ps.is_valid(x, yy)) pu.set(x, y, ps.at(x, yy));
      if (gs.is_valid(x, yy)) gu.set(x, y, gs.at(x, yy));
    }
  const auto pooled = aggregate({r1, r2});
  const auto direct = evaluate(pu, gu);
  CHECK(pooled.count == direct.count);
  CHECK(pooled.mean == doctest::Approx(direct.mean).epsilon(1e-12));
  CHECK(pooled.median == direct.median);
  for (int t = 0; t < 3; ++t) CHECK(pooled.within[t] == direct.within[t]);
  // Not the mean of per-image means.
  CHECK(pooled.mean != doctest::Approx(0.5 * (r1.mean + r2.mean)).epsilon(1e-9));
  CHECK_THROWS_AS(aggregate({}), ContractViolation);
}

TEST_CASE("report table rows") {
  const std::string table = format_report(summarize({0, 0, 20, 20}), "demo");
  CHECK(table.find("mean") != std::string::npos);
  CHECK(table.find("median") != std::string::npos);
  CHECK(table.find("11.25") != std::string::npos);
  CHECK(table.find("22.5") != std::string::npos);
  CHECK(table.find("30") != std::string::npos);
  CHECK(table.find("10.000") != std::string::npos);
  CHECK(table.find("50.000") != std::string::npos);
}
