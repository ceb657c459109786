/*
 * test_grid.cpp — lattice geometry: metric validation, covector
 * classification, discrete cones, and the pointwise cone order.
 */
#include <cmath>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "fieldlab/grid.hpp"
#include "oracles.hpp"

using namespace fieldlab;

namespace {

CausalClass flip(CausalClass c) {
  switch (c) {
    case CausalClass::future_timelike: return CausalClass::past_timelike;
    case CausalClass::past_timelike: return CausalClass::future_timelike;
    case CausalClass::future_null: return CausalClass::past_null;
    case CausalClass::past_null: return CausalClass::future_null;
    case CausalClass::spacelike: return CausalClass::spacelike;
  }
  return CausalClass::spacelike;
}

/// Random Lorentzian metric with characteristic speeds in (-2.5, 2.5) and a
/// strictly positive gap, times a random positive scale.
Metric2 random_metric(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_real_distribution<double> gap(0.2, 1.0);
  std::uniform_real_distribution<double> sc(0.3, 3.0);
  double a = u(rng);
  double b = a + gap(rng);
  return oracles::metric_from_speeds(a, b, sc(rng));
}

NodeSet single_seed(int nt, int nx, int it, int ix) {
  NodeSet s(nt, nx);
  s.insert(it, ix);
  return s;
}

}  // namespace

TEST_SUITE("grid") {

TEST_CASE("construction rejects bad windows and non-Lorentzian metrics") {
  CHECK_THROWS_AS(GridSpacetime::minkowski(2, 8, 0.1, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(GridSpacetime::minkowski(8, 2, 0.1, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(GridSpacetime::minkowski(8, 8, -0.1, 0.1), std::invalid_argument);

  MetricField g(8 * 8, Metric2{-1.0, 0.0, 1.0});
  g[13] = Metric2{1.0, 0.0, 1.0};  // det > 0
  CHECK_THROWS_AS(GridSpacetime(8, 8, 0.1, 0.1, g), std::invalid_argument);
  g[13] = Metric2{-1.0, 0.0, -0.5};  // g_xx < 0
  CHECK_THROWS_AS(GridSpacetime(8, 8, 0.1, 0.1, g), std::invalid_argument);
}

TEST_CASE("flat-metric covector classification matches hand values") {
  auto st = GridSpacetime::minkowski(4, 4, 0.1, 0.1);
  CHECK(classify_covector(st, {0, 0, 1.0, 0.0}) == CausalClass::future_timelike);
  CHECK(classify_covector(st, {1, 2, -2.0, 0.0}) == CausalClass::past_timelike);
  CHECK(classify_covector(st, {2, 3, 0.0, 1.0}) == CausalClass::spacelike);
  CHECK(classify_covector(st, {0, 0, 1.0, 1.0}) == CausalClass::future_null);
  CHECK(classify_covector(st, {0, 0, 1.0, -1.0}) == CausalClass::future_null);
  CHECK(classify_covector(st, {0, 0, -1.0, 1.0}) == CausalClass::past_null);
  CHECK(classify_covector(st, {0, 0, 0.3, 0.1}) == CausalClass::future_timelike);
  CHECK_THROWS_AS(classify_covector(st, {0, 0, 0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("classification is near-null tolerant") {
  auto st = GridSpacetime::minkowski(4, 4, 0.1, 0.1);
  CHECK(classify_covector(st, {0, 0, 1.0, 1.0 + 1e-13}) == CausalClass::future_null);
  CHECK(classify_covector(st, {0, 0, -(1.0 + 1e-13), 1.0}) == CausalClass::past_null);
}

TEST_CASE("classification is homogeneous and flips under negation") {
  auto rng = oracles::rng(101);
  std::uniform_real_distribution<double> comp(-3.0, 3.0);
  std::uniform_real_distribution<double> lam(0.01, 50.0);
  for (int trial = 0; trial < 500; ++trial) {
    Metric2 m = random_metric(rng);
    double xt = comp(rng), xx = comp(rng);
    if (std::abs(xt) + std::abs(xx) < 1e-3) continue;
    auto c = classify_covector_metric(m, xt, xx);
    double s = lam(rng);
    CHECK(classify_covector_metric(m, s * xt, s * xx) == c);
    CHECK(classify_covector_metric(m, -xt, -xx) == flip(c));
  }
}

TEST_CASE("classification is conformally invariant") {
  auto rng = oracles::rng(102);
  std::uniform_real_distribution<double> comp(-3.0, 3.0);
  std::uniform_real_distribution<double> om(0.2, 5.0);
  for (int trial = 0; trial < 500; ++trial) {
    Metric2 m = random_metric(rng);
    double w2 = om(rng);
    Metric2 mc{w2 * m.tt, w2 * m.tx, w2 * m.xx};
    double xt = comp(rng), xx = comp(rng);
    if (std::abs(xt) + std::abs(xx) < 1e-3) continue;
    CHECK(classify_covector_metric(m, xt, xx) == classify_covector_metric(mc, xt, xx));
  }
}

TEST_CASE("flat-grid causal future matches the closed-form constant-metric cone") {
  const int nt = 12, nx = 16;
  for (double r : {1.0, 0.5, 0.75}) {
    auto st = GridSpacetime::minkowski(nt, nx, r * 0.1, 0.1);
    const int t0 = 2, x0 = 5;
    NodeSet j = causal_future(st, single_seed(nt, nx, t0, x0));
    for (int it = 0; it < nt; ++it)
      for (int ix = 0; ix < nx; ++ix)
        CHECK(j.contains(it, ix) ==
              oracles::const_metric_future_member(nt, nx, r, st.g[0], t0, x0, it, ix));
  }
}

TEST_CASE("tilted constant metrics give shifted cones that match the closed form") {
  const int nt = 10, nx = 24;
  // Characteristic speeds both negative: the cone drifts left.
  Metric2 m = oracles::metric_from_speeds(-1.6, -0.3, 1.0);
  MetricField g(static_cast<size_t>(nt) * nx, m);
  GridSpacetime st(nt, nx, 0.05, 0.1, g);
  const int t0 = 1, x0 = 12;
  NodeSet j = causal_future(st, single_seed(nt, nx, t0, x0));
  for (int it = 0; it < nt; ++it)
    for (int ix = 0; ix < nx; ++ix)
      CHECK(j.contains(it, ix) ==
            oracles::const_metric_future_member(nt, nx, 0.5, m, t0, x0, it, ix));
}

TEST_CASE("causal future is monotone in the seed and idempotent") {
  auto rng = oracles::rng(103);
  const int nt = 10, nx = 12;
  std::uniform_int_distribution<int> ut(0, nt - 1), ux(0, nx - 1);
  std::uniform_real_distribution<double> om(0.5, 2.0);
  std::vector<double> omega(static_cast<size_t>(nt) * nx);
  for (auto& w : omega) w = om(rng);
  auto st = GridSpacetime::conformal(nt, nx, 0.07, 0.1, omega);

  for (int trial = 0; trial < 30; ++trial) {
    NodeSet small(nt, nx), big(nt, nx);
    for (int k = 0; k < 4; ++k) {
      int it = ut(rng), ix = ux(rng);
      small.insert(it, ix);
      big.insert(it, ix);
    }
    for (int k = 0; k < 3; ++k) big.insert(ut(rng), ux(rng));

    NodeSet js = causal_future(st, small);
    NodeSet jb = causal_future(st, big);
    CHECK(js.subset_of(jb));
    CHECK(causal_future(st, js) == js);
    NodeSet ps = causal_past(st, small);
    CHECK(causal_past(st, ps) == ps);
    CHECK(small.subset_of(js));
    CHECK(small.subset_of(ps));
  }
}

TEST_CASE("causal past mirrors causal future on time-symmetric grids") {
  // The step relation anchors at the earlier node, so exact time-reversal
  // symmetry is stated for metrics constant in t (x-variation allowed).
  auto rng = oracles::rng(104);
  const int nt = 9, nx = 14;
  std::uniform_real_distribution<double> om(0.5, 2.0);
  std::vector<double> omega(static_cast<size_t>(nt) * nx);
  for (int it = 0; it < nt; ++it)
    for (int ix = 0; ix < nx; ++ix)
      omega[static_cast<size_t>(it) * nx + ix] = (it == 0) ? om(rng) : omega[static_cast<size_t>(ix)];
  auto st = GridSpacetime::conformal(nt, nx, 0.07, 0.1, omega);

  NodeSet seed = single_seed(nt, nx, 5, 3);
  seed.insert(6, 10);
  NodeSet past = causal_past(st, seed);

  NodeSet seed_ref(nt, nx);
  for (int it = 0; it < nt; ++it)
    for (int ix = 0; ix < nx; ++ix)
      if (seed.contains(it, ix)) seed_ref.insert(nt - 1 - it, ix);
  NodeSet fut_ref = causal_future(st, seed_ref);
  for (int it = 0; it < nt; ++it)
    for (int ix = 0; ix < nx; ++ix)
      CHECK(past.contains(it, ix) == fut_ref.contains(nt - 1 - it, ix));
}

TEST_CASE("cones are conformally invariant") {
  auto rng = oracles::rng(105);
  const int nt = 10, nx = 12;
  auto st = GridSpacetime::minkowski(nt, nx, 0.08, 0.1);
  std::uniform_real_distribution<double> om(0.3, 3.0);
  std::vector<double> omega(static_cast<size_t>(nt) * nx);
  for (auto& w : omega) w = om(rng);
  auto stc = GridSpacetime::conformal(nt, nx, 0.08, 0.1, omega);

  NodeSet seed = single_seed(nt, nx, 3, 7);
  seed.insert(2, 1);
  CHECK(causal_future(st, seed) == causal_future(stc, seed));
  CHECK(causal_past(st, seed) == causal_past(stc, seed));
}

TEST_CASE("metric order: reflexivity, conformal equivalence, and the sampler oracle") {
  auto rng = oracles::rng(106);
  const int nt = 4, nx = 5;
  std::uniform_real_distribution<double> om(0.2, 4.0);

  for (int trial = 0; trial < 60; ++trial) {
    MetricField g1(static_cast<size_t>(nt) * nx), g2(g1.size());
    for (size_t i = 0; i < g1.size(); ++i) {
      g1[i] = random_metric(rng);
      g2[i] = random_metric(rng);
    }
    GridSpacetime st(nt, nx, 0.1, 0.1, g1);

    CHECK(metric_order_leq(st, g1, g1));

    MetricField g1c = g1;
    for (auto& m : g1c) {
      double w2 = om(rng);
      m = Metric2{w2 * m.tt, w2 * m.tx, w2 * m.xx};
    }
    CHECK(metric_order_leq(st, g1, g1c));
    CHECK(metric_order_leq(st, g1c, g1));

    // Against the angular sampler, both directions.
    bool lib12 = metric_order_leq(st, g1, g2);
    bool lib21 = metric_order_leq(st, g2, g1);
    bool ora12 = true, ora21 = true;
    for (size_t i = 0; i < g1.size(); ++i) {
      ora12 = ora12 && oracles::cone_inclusion_sampled(g1[i], g2[i]);
      ora21 = ora21 && oracles::cone_inclusion_sampled(g2[i], g1[i]);
    }
    CHECK(lib12 == ora12);
    CHECK(lib21 == ora21);
  }
}

TEST_CASE("metric order is transitive on nested-speed triples") {
  auto rng = oracles::rng(107);
  const int nt = 4, nx = 4;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> w(0.05, 0.5);
  for (int trial = 0; trial < 40; ++trial) {
    MetricField g1, g2, g3;
    for (int i = 0; i < nt * nx; ++i) {
      double a = u(rng);
      double d1 = w(rng), d2 = w(rng), d3 = w(rng), d4 = w(rng);
      // speeds: [a-d1, a+d2] inside [a-d1-d3, a+d2+d4] inside a wider third.
      g1.push_back(oracles::metric_from_speeds(a - d1, a + d2));
      g2.push_back(oracles::metric_from_speeds(a - d1 - d3, a + d2 + d4));
      g3.push_back(oracles::metric_from_speeds(a - d1 - d3 - w(rng), a + d2 + d4 + w(rng)));
    }
    GridSpacetime st(nt, nx, 0.1, 0.1, g1);
    CHECK(metric_order_leq(st, g1, g2));
    CHECK(metric_order_leq(st, g2, g3));
    CHECK(metric_order_leq(st, g1, g3));
    CHECK_FALSE(metric_order_leq(st, g2, g1));
  }
}

TEST_CASE("narrower cones give smaller causal futures, node by node") {
  auto rng = oracles::rng(108);
  const int nt = 12, nx = 16;
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::uniform_real_distribution<double> w(0.3, 0.9);
  std::uniform_real_distribution<double> shrink(0.1, 0.45);

  MetricField gwide, gnarrow;
  for (int i = 0; i < nt * nx; ++i) {
    double a = u(rng);
    double lo = a - w(rng), hi = a + w(rng);
    double s1 = shrink(rng), s2 = shrink(rng);
    gwide.push_back(oracles::metric_from_speeds(lo, hi));
    gnarrow.push_back(oracles::metric_from_speeds(lo + s1 * (hi - lo), hi - s2 * (hi - lo)));
  }
  GridSpacetime st(nt, nx, 0.05, 0.1, gwide);
  REQUIRE(metric_order_leq(st, gnarrow, gwide));

  NodeSet seed = single_seed(nt, nx, 2, 8);
  CHECK(causal_future(st, gnarrow, seed).subset_of(causal_future(st, gwide, seed)));
  CHECK(causal_past(st, gnarrow, seed).subset_of(causal_past(st, gwide, seed)));
}

}  // TEST_SUITE
