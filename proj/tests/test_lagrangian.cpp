#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "fieldlab/fields.hpp"
#include "fieldlab/functional.hpp"
#include "fieldlab/grid.hpp"
#include "fieldlab/hyperbolic.hpp"
#include "fieldlab/lagrangian.hpp"
#include "fieldlab/smooth.hpp"
#include "oracles.hpp"

using namespace fieldlab;

namespace {

// ---------------------------------------------------------------------------
// Fixtures and independent oracles
// ---------------------------------------------------------------------------

GridSpacetime curved_grid(int nt, int nx, double dt, double dx) {
  std::vector<double> omega(static_cast<size_t>(nt) * nx);
  for (int it = 0; it < nt; ++it)
    for (int ix = 0; ix < nx; ++ix)
      omega[static_cast<size_t>(it) * nx + ix] =
          1.0 + 0.25 * std::sin(2.0 * M_PI * ix / nx) + 0.1 * it / nt;
  return GridSpacetime::conformal(nt, nx, dt, dx, omega);
}

FieldConfig random_field(const GridSpacetime& st, std::mt19937_64& rng, double amp = 1.0) {
  std::uniform_real_distribution<double> u(-amp, amp);
  FieldConfig phi = FieldConfig::zeros(st);
  for (auto& x : phi.v) x = u(rng);
  return phi;
}

/// Random direction supported strictly inside the time window (rows
/// [row0, row1]), so localized derivatives are defined.
FieldConfig interior_dir(const GridSpacetime& st, std::mt19937_64& rng, int row0, int row1,
                         double amp = 1.0) {
  FieldConfig v = random_field(st, rng, amp);
  for (int it = 0; it < st.nt; ++it)
    if (it < row0 || it > row1)
      for (int ix = 0; ix < st.nx; ++ix) v.at(it, ix) = 0.0;
  return v;
}

FieldConfig axpy(const FieldConfig& phi, double a, const FieldConfig& v) {
  FieldConfig out = phi;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += a * v.v[i];
  return out;
}

/// Hand-assembled first variation of the metric-family action with unit
/// window: Σ_cells −√|g|·[g⁻¹(dφ, dv) + m²·φv + ε-terms]·dt·dx, written
/// against the same centered cell jets but independent closed-form algebra.
double hand_first_variation(const GridSpacetime& st, const FieldConfig& phi,
                            const FieldConfig& v, double eps, double m2) {
  double acc = 0.0;
  for (int jt = 1; jt <= st.nt - 2; ++jt)
    for (int jx = 0; jx < st.nx; ++jx) {
      double gtt, gtx, gxx;
      st.ginv_at(jt, jx, gtt, gtx, gxx);
      const double u = phi.at(jt, jx);
      const double p = (phi.at(jt + 1, jx) - phi.at(jt - 1, jx)) / (2.0 * st.dt);
      const double q = (phi.at(jt, jx + 1) - phi.at(jt, jx - 1)) / (2.0 * st.dx);
      const double uv = v.at(jt, jx);
      const double pv = (v.at(jt + 1, jx) - v.at(jt - 1, jx)) / (2.0 * st.dt);
      const double qv = (v.at(jt, jx + 1) - v.at(jt, jx - 1)) / (2.0 * st.dx);
      const double G = gtt * p * p + 2.0 * gtx * p * q + gxx * q * q;
      const double dG = 2.0 * (gtt * p * pv + gtx * (p * qv + q * pv) + gxx * q * qv);
      double dlam = -0.5 * dG - 0.5 * m2 * 2.0 * u * uv;
      if (eps != 0.0)
        dlam -= 0.25 * eps * (2.0 * u * uv * G * G + (1.0 + u * u) * 2.0 * G * dG);
      acc += st.sqrt_abs_det(jt, jx) * dlam;
    }
  return acc * st.dt * st.dx;
}

/// Closed-form principal symbol of the metric family at given node jets:
/// ĝ⁻¹ = (1 + βG)·g⁻¹ + 2β·(g♯dφ)⊗(g♯dφ), β = ε(1 + φ²).
Metric2 hand_symbol(double gtt, double gtx, double gxx, double eps, double u, double p,
                    double q) {
  const double beta = eps * (1.0 + u * u);
  const double G = gtt * p * p + 2.0 * gtx * p * q + gxx * q * q;
  const double alpha = 1.0 + beta * G;
  const double yt = gtt * p + gtx * q;   // (g♯dφ)^t
  const double yx = gtx * p + gxx * q;   // (g♯dφ)^x
  return Metric2{alpha * gtt + 2.0 * beta * yt * yt, alpha * gtx + 2.0 * beta * yt * yx,
                 alpha * gxx + 2.0 * beta * yx * yx};
}

/// Symbol limit of an operator at a node: T(n)/(2√|g|) with
/// T = [P(r²) − 2r·P(r) + r²·P(1)](n) for the linear ramp r = ξ·(t, x).
/// Exact for cell-constant coefficients, O(h²) otherwise.  The probe node
/// must sit in rows [2, nt−3] and columns [2, nx−3] (the ramp must not
/// cross the x-seam within the stencil).
double symbol_probe(const LinearHypOp& H, int it, int ix, double xi_t, double xi_x) {
  const GridSpacetime& st = H.grid();
  REQUIRE(it >= 2);
  REQUIRE(it <= st.nt - 3);
  REQUIRE(ix >= 2);
  REQUIRE(ix <= st.nx - 3);
  FieldConfig r = FieldConfig::sample(st, [&](double t, double x) { return xi_t * t + xi_x * x; });
  FieldConfig r2 = FieldConfig::zeros(st);
  for (size_t i = 0; i < r.v.size(); ++i) r2.v[i] = r.v[i] * r.v[i];
  const FieldConfig ones = FieldConfig::constant(st, 1.0);
  const Density h1 = H.apply_density(ones);
  const Density hr = H.apply_density(r);
  const Density hrr = H.apply_density(r2);
  const double rn = r.at(it, ix);
  const double T = hrr.at(it, ix) - 2.0 * rn * hr.at(it, ix) + rn * rn * h1.at(it, ix);
  return T / (2.0 * st.sqrt_abs_det(it, ix));
}

double quad_form(const Metric2& m, double xi_t, double xi_x) {
  return m.tt * xi_t * xi_t + 2.0 * m.tx * xi_t * xi_x + m.xx * xi_x * xi_x;
}

void check_fd_ladder(const Functional& F, const FieldConfig& phi,
                     const std::vector<FieldConfig>& dirs, double tol) {
  const double h = 1e-5;
  REQUIRE(dirs.size() == 3);
  const FieldConfig *v1 = &dirs[0], *v2 = &dirs[1], *v3 = &dirs[2];

  double d1 = F.derivative(phi, {v1});
  double fd1 = (F.evaluate(axpy(phi, h, *v1)) - F.evaluate(axpy(phi, -h, *v1))) / (2 * h);
  CHECK(d1 == doctest::Approx(fd1).epsilon(tol));

  double d2 = F.derivative(phi, {v1, v2});
  double fd2 = (F.derivative(axpy(phi, h, *v2), {v1}) -
                F.derivative(axpy(phi, -h, *v2), {v1})) /
               (2 * h);
  CHECK(d2 == doctest::Approx(fd2).epsilon(tol));

  double d3 = F.derivative(phi, {v1, v2, v3});
  double fd3 = (F.derivative(axpy(phi, h, *v3), {v1, v2}) -
                F.derivative(axpy(phi, -h, *v3), {v1, v2})) /
               (2 * h);
  CHECK(d3 == doctest::Approx(fd3).epsilon(tol));
}

}  // namespace

TEST_SUITE("lagrangian") {

// ---------------------------------------------------------------------------
// Window families: support, additivity, locality
// ---------------------------------------------------------------------------

TEST_CASE("window functionals stay supported in the window and are additive") {
  GridSpacetime st = curved_grid(12, 16, 0.07, 0.09);
  auto rng = oracles::rng(501);

  std::vector<GeneralizedLagrangian> zoo;
  zoo.push_back(GeneralizedLagrangian::free_field(st, 0.2));
  zoo.push_back(GeneralizedLagrangian::example_epsilon(st, 0.25, 0.1));
  zoo.push_back(GeneralizedLagrangian::sobolev(st, 2));
  zoo.push_back(GeneralizedLagrangian::local_density(st, make_local_density("u^4")));
  zoo.push_back(GeneralizedLagrangian::divergence_current(st, make_local_density("u^2")));

  const TestFunction f = ramp_mask(st, 2, st.nt - 3, 1, st.nx - 4, 2);
  const auto probes = default_probes(st, 5, 777, 0.8);
  for (const auto& L : zoo) {
    CAPTURE(L.name());
    FuncPtr F = L(f);
    CHECK(check_additivity(*F, 40, rng(), 1e-10).pass);
    CHECK(check_locality(*F, 25, rng(), 1e-10).pass);
    // Stencil-dilated window support bounds the functional's support.
    CHECK(spacetime_support(*F, probes).subset_of(support_nodes(f).dilate(2)));
  }
}

TEST_CASE("windows add over pairs with disjoint outer supports") {
  GridSpacetime st = curved_grid(10, 16, 0.08, 0.09);
  std::vector<GeneralizedLagrangian> zoo;
  zoo.push_back(GeneralizedLagrangian::free_field(st, 0.3));
  zoo.push_back(GeneralizedLagrangian::example_epsilon(st, 0.4));
  zoo.push_back(GeneralizedLagrangian::sobolev(st, 1));
  zoo.push_back(GeneralizedLagrangian::divergence_current(st, make_local_density("u^3")));
  for (const auto& L : zoo) {
    CAPTURE(L.name());
    const auto rep = check_window_additivity(
        st, [&L](const TestFunction& f) { return L(f); }, 6, 510, 1e-10);
    CHECK(rep.pass);
    CHECK(rep.worst_residual <= 1e-10);
  }
}

TEST_CASE("relative window differences localize to the small window") {
  GridSpacetime st = curved_grid(12, 16, 0.07, 0.09);
  const TestFunction f0 = ramp_mask(st, 1, st.nt - 2, 0, st.nx - 1, 2);
  const TestFunction df = ramp_mask(st, 4, 8, 3, 8, 1);
  TestFunction f0p = f0;
  for (size_t i = 0; i < f0p.v.size(); ++i) f0p.v[i] += 0.6 * df.v[i];

  const auto probes = default_probes(st, 5, 778, 0.7);
  for (const auto& L : {GeneralizedLagrangian::free_field(st, 0.2),
                        GeneralizedLagrangian::sobolev(st, 2)}) {
    CAPTURE(L.name());
    FuncPtr rel = fsum({L(f0p), fscale(-1.0, L(f0))});
    CHECK(spacetime_support(*rel, probes).subset_of(support_nodes(df).dilate(4)));
  }
}

// ---------------------------------------------------------------------------
// Derivatives: finite-difference ladder and permutation symmetry
// ---------------------------------------------------------------------------

TEST_CASE("window derivatives match finite differences to third order") {
  GridSpacetime st = curved_grid(9, 12, 0.08, 0.11);
  auto rng = oracles::rng(502);
  const FieldConfig phi = random_field(st, rng, 0.6);
  std::vector<FieldConfig> dirs;
  for (int k = 0; k < 3; ++k) dirs.push_back(random_field(st, rng, 0.9));

  const TestFunction f = ramp_mask(st, 1, st.nt - 2, 0, st.nx - 1, 1);
  for (const auto& L : {GeneralizedLagrangian::example_epsilon(st, 0.3, 0.15),
                        GeneralizedLagrangian::local_density(st, make_local_density("u^4")),
                        GeneralizedLagrangian::divergence_current(st, make_local_density("pq"))}) {
    CAPTURE(L.name());
    check_fd_ladder(*L(f), phi, dirs, 5e-6);
  }
}

TEST_CASE("third derivatives are permutation symmetric") {
  GridSpacetime st = curved_grid(9, 12, 0.08, 0.11);
  auto rng = oracles::rng(503);
  const auto L = GeneralizedLagrangian::example_epsilon(st, 0.35, 0.1);
  FuncPtr F = L(TestFunction::constant(st, 1.0));
  const FieldConfig phi = random_field(st, rng, 0.7);
  const FieldConfig a = random_field(st, rng), b = random_field(st, rng),
                    c = random_field(st, rng);
  const double ref = F->derivative(phi, {&a, &b, &c});
  const double scale = std::max(1.0, std::abs(ref));
  for (const DirList& perm : {DirList{&a, &c, &b}, DirList{&b, &a, &c}, DirList{&b, &c, &a},
                              DirList{&c, &a, &b}, DirList{&c, &b, &a}}) {
    CHECK(std::abs(F->derivative(phi, perm) - ref) <= 1e-13 * scale);
  }
}

// ---------------------------------------------------------------------------
// Localized derivative: cutoff independence
// ---------------------------------------------------------------------------

TEST_CASE("localized derivative is window-independent and matches closed form") {
  GridSpacetime st = curved_grid(12, 16, 0.07, 0.09);
  auto rng = oracles::rng(504);
  const FieldConfig phi = random_field(st, rng, 0.8);
  const FieldConfig v = interior_dir(st, rng, 3, st.nt - 4);

  for (const double eps : {0.0, 0.3}) {
    CAPTURE(eps);
    const auto L = GeneralizedLagrangian::example_epsilon(st, eps, 0.2);
    const double got = el_derivative(L, phi, {&v});
    const double hand = hand_first_variation(st, phi, v, eps, 0.2);
    CHECK(got == doctest::Approx(hand).epsilon(1e-12));
    // The unit window gives the same value outright.
    CHECK(L(TestFunction::constant(st, 1.0))->derivative(phi, {&v}) ==
          doctest::Approx(hand).epsilon(1e-12));
  }
}

TEST_CASE("localized derivative ignores the window away from the direction") {
  GridSpacetime st = curved_grid(12, 18, 0.07, 0.09);
  auto rng = oracles::rng(505);
  const auto L = GeneralizedLagrangian::example_epsilon(st, 0.25, 0.1);
  const FieldConfig phi = random_field(st, rng, 0.8);

  // Direction confined to a small interior block.
  FieldConfig v = FieldConfig::zeros(st);
  for (int it = 4; it <= 6; ++it)
    for (int ix = 3; ix <= 6; ++ix) v.at(it, ix) = random_field(st, rng).at(it, ix);

  const NodeSet region = support_nodes(v).dilate(2);
  TestFunction f_tight = TestFunction::zeros(st);
  for (int it = 0; it < st.nt; ++it)
    for (int ix = 0; ix < st.nx; ++ix)
      if (region.contains(it, ix)) f_tight.at(it, ix) = 1.0;

  // Junk far from the direction must not change the value at all.
  TestFunction f_junk = f_tight;
  for (int it = 2; it < st.nt - 2; ++it)
    for (int ix = 12; ix <= 16; ++ix) f_junk.at(it, ix) = -0.7 + 0.1 * ix;

  const double d_tight = L(f_tight)->derivative(phi, {&v});
  const double d_junk = L(f_junk)->derivative(phi, {&v});
  const double d_unit = L(TestFunction::constant(st, 1.0))->derivative(phi, {&v});
  CHECK(d_tight == d_junk);
  CHECK(d_tight == doctest::Approx(d_unit).epsilon(1e-13));
  CHECK(el_derivative(L, phi, {&v}) == doctest::Approx(d_tight).epsilon(1e-13));

  // Second order with one boundary-touching direction still anchors on v.
  FieldConfig w = random_field(st, rng, 0.5);
  CHECK(el_derivative(L, phi, {&v, &w}) ==
        doctest::Approx(L(TestFunction::constant(st, 1.0))->derivative(phi, {&v, &w}))
            .epsilon(1e-12));
}

TEST_CASE("localized derivative rejects directions pinned to the time boundary") {
  GridSpacetime st = curved_grid(10, 12, 0.08, 0.1);
  auto rng = oracles::rng(506);
  const auto L = GeneralizedLagrangian::free_field(st);
  const FieldConfig phi = random_field(st, rng, 0.5);
  const FieldConfig all = FieldConfig::constant(st, 1.0);
  CHECK_THROWS_AS(el_derivative(L, phi, {&all}), std::invalid_argument);
  CHECK_THROWS_AS(el_derivative(L, phi, {}), std::invalid_argument);
  const FieldConfig zero = FieldConfig::zeros(st);
  CHECK(el_derivative(L, phi, {&zero}) == 0.0);

  // Sobolev windows weight node jets, which reach two rows; an interior
  // direction keeps its localized derivative window-independent, and the
  // value matches the polarization of the squared seminorm.
  const auto S = GeneralizedLagrangian::sobolev(st, 2);
  const FieldConfig v = interior_dir(st, rng, 3, st.nt - 4, 0.8);
  const NodeSet region = support_nodes(v).dilate(2);
  TestFunction f1 = TestFunction::zeros(st);
  for (int it = 0; it < st.nt; ++it)
    for (int ix = 0; ix < st.nx; ++ix)
      if (region.contains(it, ix)) f1.at(it, ix) = 1.0;
  const double got = el_derivative(S, phi, {&v});
  const double hand =
      (sobolev_sq(axpy(phi, 1.0, v), 2, f1) - sobolev_sq(axpy(phi, -1.0, v), 2, f1)) / 2.0;
  CHECK(got == doctest::Approx(hand).epsilon(1e-10));
}

// ---------------------------------------------------------------------------
// Euler–Lagrange density
// ---------------------------------------------------------------------------

TEST_CASE("equation density pairs to the localized derivative") {
  GridSpacetime st = curved_grid(12, 16, 0.07, 0.09);
  auto rng = oracles::rng(507);
  for (const auto& L : {GeneralizedLagrangian::free_field(st, 0.2),
                        GeneralizedLagrangian::example_epsilon(st, 0.3),
                        GeneralizedLagrangian::local_density(st, make_local_density("u^4"))}) {
    CAPTURE(L.name());
    const FieldConfig phi = random_field(st, rng, 0.7);
    const Density E = el_operator(L, phi);
    for (int trial = 0; trial < 6; ++trial) {
      const FieldConfig v = interior_dir(st, rng, 2, st.nt - 3);
      const double lhs = pair_density(E, v);
      const double rhs = el_derivative(L, phi, {&v});
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
  }
}

TEST_CASE("flat traveling wave solves the discrete wave equation exactly") {
  GridSpacetime st = GridSpacetime::minkowski(20, 24, 0.1, 0.1);
  FieldConfig phi = FieldConfig::zeros(st);
  for (int it = 0; it < st.nt; ++it)
    for (int ix = 0; ix < st.nx; ++ix) {
      const int k = ((ix - it) % st.nx + st.nx) % st.nx;
      phi.at(it, ix) = std::sin(2.0 * M_PI * k / st.nx);
    }
  const auto L = GeneralizedLagrangian::free_field(st);
  const Density E = el_operator(L, phi);
  for (int it = 2; it <= st.nt - 3; ++it)
    for (int ix = 0; ix < st.nx; ++ix) {
      CAPTURE(it);
      CAPTURE(ix);
      CHECK(std::abs(E.at(it, ix)) <= 1e-13);
    }
}

TEST_CASE("zero background is a critical point of the self-interacting family") {
  GridSpacetime st = curved_grid(10, 12, 0.08, 0.1);
  const auto L = GeneralizedLagrangian::example_epsilon(st, 0.4, 0.25);
  const Density E = el_operator(L, FieldConfig::zeros(st));
  for (double c : E.c) CHECK(c == 0.0);
}

// ---------------------------------------------------------------------------
// Exact linearization
// ---------------------------------------------------------------------------

TEST_CASE("linearization is the exact symmetric Hessian of the action") {
  GridSpacetime st = curved_grid(12, 16, 0.07, 0.09);
  auto rng = oracles::rng(508);
  const auto L = GeneralizedLagrangian::example_epsilon(st, 0.3, 0.1);
  const FieldConfig phi0 = random_field(st, rng, 0.6);
  const LinearHypOp H = linearize(L, phi0);
  CHECK(H.variational());
  FuncPtr F = L(TestFunction::constant(st, 1.0));

  for (int trial = 0; trial < 6; ++trial) {
    const FieldConfig a = random_field(st, rng), b = random_field(st, rng);
    const Density Hb = H.apply_density(b);
    // Stencil application equals the second-derivative kernel...
    const Density Kb = F->kernel2_apply(phi0, b);
    double scale = 0.0;
    for (double c : Hb.c) scale = std::max(scale, std::abs(c));
    for (size_t i = 0; i < Hb.c.size(); ++i)
      CHECK(std::abs(Hb.c[i] - Kb.c[i]) <= 1e-13 * std::max(1.0, scale));
    // ...pairs to the second variation...
    CHECK(pair_density(Hb, a) == doctest::Approx(F->derivative(phi0, {&a, &b})).epsilon(1e-12));
    // ...and is symmetric.
    const double ab = pair_density(Hb, a), ba = pair_density(H.apply_density(a), b);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
  }

  // Directional finite difference of the equation density.
  const FieldConfig v = random_field(st, rng, 0.8);
  const double h = 1e-4;
  const Density Ep = el_operator(L, axpy(phi0, h, v));
  const Density Em = el_operator(L, axpy(phi0, -h, v));
  const Density Hv = H.apply_density(v);
  double worst = 0.0, scale = 0.0;
  for (size_t i = 0; i < Hv.c.size(); ++i) {
    worst = std::max(worst, std::abs((Ep.c[i] - Em.c[i]) / (2.0 * h) - Hv.c[i]));
    scale = std::max(scale, std::abs(Hv.c[i]));
  }
  CHECK(worst <= 1e-6 * std::max(1.0, scale));
}

TEST_CASE("free-field linearization is background independent and flat-exact") {
  GridSpacetime st = curved_grid(10, 14, 0.08, 0.09);
  auto rng = oracles::rng(509);
  const auto L = GeneralizedLagrangian::free_field(st, 0.3);
  const FieldConfig phi0 = random_field(st, rng, 0.9);
  const LinearHypOp H = linearize(L, phi0);

  // Affine equations: E(φ0 + v) − E(φ0) = Hv up to roundoff.
  const FieldConfig v = random_field(st, rng, 0.7);
  const Density E1 = el_operator(L, axpy(phi0, 1.0, v));
  const Density E0 = el_operator(L, phi0);
  const Density Hv = H.apply_density(v);
  double scale = 0.0;
  for (double c : E1.c) scale = std::max(scale, std::abs(c));
  for (size_t i = 0; i < Hv.c.size(); ++i)
    CHECK(std::abs((E1.c[i] - E0.c[i]) - Hv.c[i]) <= 1e-12 * std::max(1.0, scale));

  // The symbol is the inverse background metric, node for node.
  for (int it = 0; it < st.nt; ++it)
    for (int ix = 0; ix < st.nx; ++ix) {
      double gtt, gtx, gxx;
      st.ginv_at(it, ix, gtt, gtx, gxx);
      const Metric2& m = H.symbol()[static_cast<size_t>(st.node(it, ix))];
      CHECK(m.tt == gtt);
      CHECK(m.tx == gtx);
      CHECK(m.xx == gxx);
    }
  CHECK(H.normally_hyperbolic());
  CHECK(H.principal().degenerate_count == 0);

  // Flat space: unit characteristic speed, exactly.
  GridSpacetime mink = GridSpacetime::minkowski(8, 8, 0.1, 0.1);
  const LinearHypOp Hm =
      linearize(GeneralizedLagrangian::free_field(mink), FieldConfig::zeros(mink));
  CHECK(Hm.max_char_speed() == 1.0);
  CHECK(LinearHypOp::stencil_reach == 2);

  // Field-valued application divides the density by the volume factor.
  const FieldConfig Hf = H.apply(v);
  for (int it = 3; it <= 4; ++it)
    for (int ix = 0; ix < st.nx; ++ix)
      CHECK(Hf.at(it, ix) ==
            doctest::Approx(Hv.at(it, ix) / st.sqrt_abs_det(it, ix)).epsilon(1e-14));
}

TEST_CASE("lower-order coefficients report mass and drift terms") {
  GridSpacetime st = GridSpacetime::minkowski(10, 12, 0.1, 0.1);
  const auto L = GeneralizedLagrangian::free_field(st, 0.3);
  const LinearHypOp H = linearize(L, FieldConfig::zeros(st));
  const LowerOrder lo = H.lower_order();
  for (int it = 2; it <= st.nt - 3; ++it)
    for (int ix = 0; ix < st.nx; ++ix) {
      const size_t i = static_cast<size_t>(st.node(it, ix));
      CHECK(lo.b[i] == -0.3);
      CHECK(lo.a_t[i] == 0.0);
      CHECK(lo.a_x[i] == 0.0);
    }
}

TEST_CASE("second linearization pairs to the third variation") {
  GridSpacetime st = curved_grid(10, 14, 0.08, 0.09);
  auto rng = oracles::rng(511);
  const auto L = GeneralizedLagrangian::example_epsilon(st, 0.35, 0.05);
  FuncPtr F = L(TestFunction::constant(st, 1.0));
  const FieldConfig phi = random_field(st, rng, 0.6);
  for (int trial = 0; trial < 5; ++trial) {
    const FieldConfig a = random_field(st, rng), b = random_field(st, rng),
                      c = random_field(st, rng);
    const Density u = second_linearization(L, phi, a, b);
    CHECK(pair_density(u, c) ==
          doctest::Approx(F->derivative(phi, {&c, &a, &b})).epsilon(1e-12));
  }
  // Quadratic families have vanishing third variation.
  const Density z =
      second_linearization(GeneralizedLagrangian::free_field(st, 0.4), phi, phi, phi);
  for (double x : z.c) CHECK(x == 0.0);
  const Density zs =
      second_linearization(GeneralizedLagrangian::sobolev(st, 1), phi, phi, phi);
  for (double x : zs.c) CHECK(x == 0.0);
}

TEST_CASE("operator interface bundles equations, linearization, and its derivative") {
  GridSpacetime st = curved_grid(9, 12, 0.08, 0.1);
  auto rng = oracles::rng(512);
  const ELOperator P(GeneralizedLagrangian::example_epsilon(st, 0.2, 0.1));
  const FieldConfig phi = random_field(st, rng, 0.5);
  const Density E = P(phi);
  const Density E2 = el_operator(P.lagrangian(), phi);
  for (size_t i = 0; i < E.c.size(); ++i) CHECK(E.c[i] == E2.c[i]);
  CHECK(P.linearize(phi).variational());
  const FieldConfig a = random_field(st, rng), b = random_field(st, rng);
  const Density u = P.second_linearization(phi, a, b);
  CHECK(u.c.size() == E.c.size());
}

// ---------------------------------------------------------------------------
// Principal symbol: closed form vs. operator limit
// ---------------------------------------------------------------------------

TEST_CASE("principal symbol matches the closed-form cone deformation") {
  GridSpacetime st = curved_grid(12, 16, 0.07, 0.09);
  auto rng = oracles::rng(513);
  const double eps = 0.3;
  const auto L = GeneralizedLagrangian::example_epsilon(st, eps, 0.2);
  const FieldConfig phi0 = random_field(st, rng, 0.5);
  const FieldConfig pt = diff_t(phi0), px = diff_x(phi0);
  const PrincipalMetricReport rep = principal_metric(L, phi0);
  for (int it = 0; it < st.nt; ++it)
    for (int ix = 0; ix < st.nx; ++ix) {
      const size_t i = static_cast<size_t>(st.node(it, ix));
      double gtt, gtx, gxx;
      st.ginv_at(it, ix, gtt, gtx, gxx);
      const Metric2 want =
          hand_symbol(gtt, gtx, gxx, eps, phi0.v[i], pt.v[i], px.v[i]);
      const double sc = std::abs(want.tt) + 2.0 * std::abs(want.tx) + std::abs(want.xx);
      CHECK(std::abs(rep.ginv[i].tt - want.tt) <= 1e-12 * sc);
      CHECK(std::abs(rep.ginv[i].tx - want.tx) <= 1e-12 * sc);
      CHECK(std::abs(rep.ginv[i].xx - want.xx) <= 1e-12 * sc);

      // Lowering both slots with the background collapses the sandwich to
      // α·g + 2β·dφ⊗dφ, because g·(g⁻¹ dφ) = dφ.
      const double p = pt.v[i], q = px.v[i];
      const double beta = eps * (1.0 + phi0.v[i] * phi0.v[i]);
      const double G = quad_form(Metric2{gtt, gtx, gxx}, p, q);
      const double alpha = 1.0 + beta * G;
      const Metric2& g = st.g[i];
      const Metric2 hwant{alpha * g.tt + 2.0 * beta * p * p,
                          alpha * g.tx + 2.0 * beta * p * q,
                          alpha * g.xx + 2.0 * beta * q * q};
      const double hsc = std::abs(hwant.tt) + 2.0 * std::abs(hwant.tx) + std::abs(hwant.xx);
      CHECK(std::abs(rep.lowered[i].tt - hwant.tt) <= 1e-11 * hsc);
      CHECK(std::abs(rep.lowered[i].tx - hwant.tx) <= 1e-11 * hsc);
      CHECK(std::abs(rep.lowered[i].xx - hwant.xx) <= 1e-11 * hsc);
    }

  // Mass never enters the symbol; at ε = 0 the symbol is the metric itself.
  const PrincipalMetricReport flat =
      principal_metric(GeneralizedLagrangian::free_field(st, 0.7), phi0);
  for (int it = 0; it < st.nt; ++it)
    for (int ix = 0; ix < st.nx; ++ix) {
      const size_t i = static_cast<size_t>(st.node(it, ix));
      double gtt, gtx, gxx;
      st.ginv_at(it, ix, gtt, gtx, gxx);
      CHECK(flat.ginv[i].tt == gtt);
      CHECK(flat.ginv[i].tx == gtx);
      CHECK(flat.ginv[i].xx == gxx);
    }
  CHECK(flat.inverse.degenerate_count == 0);
}

TEST_CASE("operator symbol limit reproduces the stored symbol exactly on flat cells") {
  // Backgrounds whose Hessian coefficients are cell-constant make the ramp
  // probe an exact algebraic identity, not an O(h²) approximation.
  GridSpacetime st = GridSpacetime::minkowski(12, 12, 0.125, 0.125);
  auto rng = oracles::rng(514);

  // Free field with mass on a random background.
  const LinearHypOp H1 = linearize(GeneralizedLagrangian::free_field(st, 0.49),
                                   random_field(st, rng, 0.8));
  // Self-interacting family on a constant background.
  const LinearHypOp H2 = linearize(GeneralizedLagrangian::example_epsilon(st, 0.5, 0.1),
                                   FieldConfig::constant(st, 2.0));

  const double xis[4][2] = {{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}, {0.5, -1.0}};
  for (const LinearHypOp* H : {&H1, &H2})
    for (const auto& xi : xis)
      for (const int it : {3, 5, 8})
        for (const int ix : {2, 6, 9}) {
          const double got = symbol_probe(*H, it, ix, xi[0], xi[1]);
          const double want =
              quad_form(H->symbol()[static_cast<size_t>(st.node(it, ix))], xi[0], xi[1]);
          CHECK(got == doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("operator symbol limit separates the cone deformation variants") {
  // A background with a time-dependent gradient: the probe measures the
  // operator itself, so it distinguishes the implemented symbol
  //   ĝ⁻¹ = αg⁻¹ + 2ε(1+φ²)(g♯dφ)⊗(g♯dφ)
  // from the variant without the (1+φ²) factor on the rank-one term.
  GridSpacetime st = GridSpacetime::minkowski(16, 12, 0.05, 0.05);
  const double eps = 0.1;
  const auto L = GeneralizedLagrangian::example_epsilon(st, eps);
  const FieldConfig phi0 =
      FieldConfig::sample(st, [](double t, double) { return 3.0 + 0.4 * t; });
  const LinearHypOp H = linearize(L, phi0);

  for (const int it : {5, 8, 10}) {
    for (const int ix : {3, 6}) {
      const size_t i = static_cast<size_t>(st.node(it, ix));
      const double got_tt = symbol_probe(H, it, ix, 1.0, 0.0);
      const double want_tt = H.symbol()[i].tt;
      CHECK(got_tt == doctest::Approx(want_tt).epsilon(2e-3));

      // The variant lacking the (1+φ²) factor is far outside the probe's
      // discretization error.
      const double u = phi0.v[i];
      const double beta = eps * (1.0 + u * u);
      const double alpha = 1.0 + beta * (-0.16);
      const double variant_tt = -alpha + 2.0 * eps * 0.16;
      CHECK(std::abs(variant_tt - want_tt) > 0.25);
      CHECK(std::abs(got_tt - variant_tt) > 0.1);

      const double got_xx = symbol_probe(H, it, ix, 0.0, 1.0);
      CHECK(got_xx == doctest::Approx(H.symbol()[i].xx).epsilon(2e-3));
    }
  }
}

// ---------------------------------------------------------------------------
// Hyperbolicity classification
// ---------------------------------------------------------------------------

TEST_CASE("gentle backgrounds are subluminal and normally hyperbolic") {
  GridSpacetime st = curved_grid(10, 14, 0.08, 0.09);
  auto rng = oracles::rng(515);
  const auto L = GeneralizedLagrangian::example_epsilon(st, 0.3, 0.1);
  const FieldConfig phi0 = random_field(st, rng, 0.01);
  const HyperbolicityReport rep = hyperbolicity_domain(L, phi0);
  CHECK(rep.nh_holds);
  CHECK(rep.n_subluminal == st.n_nodes());
  CHECK(rep.n_degenerate == 0);
  CHECK(rep.n_reversed == 0);
  const LinearHypOp H = linearize(L, phi0);
  CHECK(H.normally_hyperbolic());
  CHECK(metric_order_leq(st, H.lowered(), st.g));
  // Mirror statement: the characteristic cones widen, never narrow.
  CHECK(metric_order_leq(st, st.g, H.principal().ghat));
  CHECK(H.max_char_speed() <= 1.6);

  // Spacelike background gradient: cones deform inward but stay subluminal.
  const FieldConfig wave = FieldConfig::sample(
      st, [&](double, double x) { return 0.4 * std::sin(2.0 * M_PI * x / (st.nx * st.dx)); });
  const HyperbolicityReport rep2 = hyperbolicity_domain(L, wave);
  CHECK(rep2.nh_holds);
  const LinearHypOp H2 = linearize(L, wave);
  CHECK(H2.normally_hyperbolic());
  CHECK(metric_order_leq(st, H2.lowered(), st.g));

  // Classification agrees with an independent recomputation at every node.
  const FieldConfig pt = diff_t(phi0), px = diff_x(phi0);
  for (int it = 0; it < st.nt; ++it)
    for (int ix = 0; ix < st.nx; ++ix) {
      const size_t i = static_cast<size_t>(st.node(it, ix));
      double gtt, gtx, gxx;
      st.ginv_at(it, ix, gtt, gtx, gxx);
      const double G = gtt * pt.v[i] * pt.v[i] + 2.0 * gtx * pt.v[i] * px.v[i] +
                       gxx * px.v[i] * px.v[i];
      const double cls = G + 1.0 / (2.0 * 0.3 * (1.0 + phi0.v[i] * phi0.v[i]));
      CHECK(rep.classifier[i] == doctest::Approx(cls).epsilon(1e-14));
      CHECK(rep.node_class[i] ==
            (cls > 0 ? NodeHyperbolicity::subluminal
                     : (cls < 0 ? NodeHyperbolicity::reversed : NodeHyperbolicity::degenerate)));
    }

  // ε = 0: every background is subluminal with an infinite margin.
  const HyperbolicityReport free_rep =
      hyperbolicity_domain(GeneralizedLagrangian::free_field(st), random_field(st, rng, 2.0));
  CHECK(free_rep.nh_holds);
  CHECK(std::isinf(free_rep.classifier[0]));
}

TEST_CASE("steep timelike backgrounds reverse the cones") {
  // φ = τ with a strong coupling: every node is classified reversed.
  GridSpacetime st = GridSpacetime::minkowski(10, 8, 0.125, 0.125);
  const auto L = GeneralizedLagrangian::example_epsilon(st, 1.0);
  const FieldConfig tau = FieldConfig::sample(st, [](double t, double) { return t; });
  const HyperbolicityReport rep = hyperbolicity_domain(L, tau);
  CHECK(rep.n_reversed == st.n_nodes());
  CHECK_FALSE(rep.nh_holds);

  // Steeper background: the symbol stays Lorentzian but with the roles of
  // the axes exchanged, so the reversed metric is slower than the
  // background while the operator is rejected as normally hyperbolic.
  const auto L2 = GeneralizedLagrangian::example_epsilon(st, 0.2);
  const FieldConfig steep = FieldConfig::sample(st, [](double t, double) { return 3.0 * t; });
  const HyperbolicityReport rep2 = hyperbolicity_domain(L2, steep);
  CHECK(rep2.n_reversed == st.n_nodes());
  const LinearHypOp H = linearize(L2, steep);
  CHECK_FALSE(H.normally_hyperbolic());
  CHECK(H.hyperbolicity_note() != "");
  CHECK(H.principal().degenerate_count == 0);
  MetricField neg(H.principal().ghat.size());
  for (size_t i = 0; i < neg.size(); ++i) {
    const Metric2& g = H.principal().ghat[i];
    CHECK(g.det() < 0.0);
    neg[i] = Metric2{-g.tt, -g.tx, -g.xx};
  }
  CHECK(metric_order_leq(st, neg, st.g));

  // Exact values at the zero-background row: ĝ⁻¹ = diag(27ε−1, 1−9ε).
  const size_t i0 = static_cast<size_t>(st.node(0, 3));
  CHECK(H.symbol()[i0].tt == doctest::Approx(4.4).epsilon(1e-14));
  CHECK(H.symbol()[i0].xx == doctest::Approx(-0.8).epsilon(1e-14));
}

TEST_CASE("threshold backgrounds hit the degenerate classifier value exactly") {
  // dt = 1/8 and φ = 2t make every jet computation dyadic, so the
  // classifier value G + 1/(2ε(1+φ²)) is exactly 0 at the φ = 0 row.
  GridSpacetime st = GridSpacetime::minkowski(12, 8, 0.125, 0.125);
  const FieldConfig phi0 = FieldConfig::sample(st, [](double t, double) { return 2.0 * t; });

  const auto L = GeneralizedLagrangian::example_epsilon(st, 0.125);
  const HyperbolicityReport rep = hyperbolicity_domain(L, phi0);
  for (int ix = 0; ix < st.nx; ++ix) {
    const size_t i = static_cast<size_t>(st.node(0, ix));
    CHECK(rep.classifier[i] == 0.0);
    CHECK(rep.node_class[i] == NodeHyperbolicity::degenerate);
  }
  for (int it = 1; it < st.nt; ++it)
    for (int ix = 0; ix < st.nx; ++ix)
      CHECK(rep.node_class[static_cast<size_t>(st.node(it, ix))] ==
            NodeHyperbolicity::reversed);
  CHECK(rep.n_degenerate == st.nx);
  CHECK_FALSE(rep.nh_holds);

  // A stronger coupling degenerates the symbol itself on the same row:
  // det ĝ⁻¹ = 0 to the bit, and the inversion flags it.
  const auto L2 = GeneralizedLagrangian::example_epsilon(st, 0.25);
  const PrincipalMetricReport pm = principal_metric(L2, phi0);
  for (int ix = 0; ix < st.nx; ++ix) {
    const size_t i = static_cast<size_t>(st.node(0, ix));
    CHECK(pm.ginv[i].tt == 2.0);
    CHECK(pm.ginv[i].xx == 0.0);
    CHECK(pm.ginv[i].det() == 0.0);
    CHECK(pm.inverse.degenerate[i] == 1);
  }
  CHECK(pm.inverse.min_abs_det == 0.0);
  CHECK(pm.inverse.degenerate_count == st.nx);
  CHECK_FALSE(linearize(L2, phi0).normally_hyperbolic());
}

TEST_CASE("classifier optimism vs symbol ellipticity is visible and gated") {
  // Between the two degeneracy couplings the pinned classifier still calls
  // the φ = 0 row subluminal while the actual symbol is elliptic there;
  // the normal-hyperbolicity gate refuses such operators.
  GridSpacetime st = GridSpacetime::minkowski(12, 8, 0.125, 0.125);
  const FieldConfig phi0 = FieldConfig::sample(st, [](double t, double) { return 2.0 * t; });
  const auto L = GeneralizedLagrangian::example_epsilon(st, 0.1);
  const HyperbolicityReport rep = hyperbolicity_domain(L, phi0);
  const LinearHypOp H = linearize(L, phi0);
  for (int ix = 0; ix < st.nx; ++ix) {
    const size_t i = static_cast<size_t>(st.node(0, ix));
    CHECK(rep.node_class[i] == NodeHyperbolicity::subluminal);
    CHECK(H.symbol()[i].det() > 0.0);  // positive definite: elliptic
  }
  CHECK_FALSE(H.normally_hyperbolic());
}

TEST_CASE("tilted superluminal cones are rejected by the slice condition") {
  // A Lorentzian symbol whose cone has tipped past the t-axis: the lowered
  // symbol still orders below the background (and keeps a positive xx
  // entry), but the characteristic metric makes the x-axis timelike, so no
  // constant-t slice is spacelike and marching is ill posed.  Only the
  // per-node slice condition catches this.
  GridSpacetime st = GridSpacetime::minkowski(6, 6, 0.1, 0.1);
  const size_t n = static_cast<size_t>(st.n_nodes());
  CellForm w;
  for (auto& arr : w) arr.assign(n, 0.0);
  const Metric2 tilted{0.2, -3.394, 7.0};
  CHECK(tilted.det() < 0.0);  // genuinely Lorentzian
  const LinearHypOp H(st, w, MetricField(n, tilted), false, "tilted");
  CHECK(H.principal().degenerate_count == 0);
  CHECK(H.lowered()[0].xx > 0.0);
  CHECK(metric_order_leq(st, H.lowered(), st.g));  // order alone is blind to the tilt
  // The cone-interval comparator cannot even be evaluated on the
  // characteristic metric: its slices are not spacelike.
  CHECK_THROWS_AS(metric_order_leq(st, st.g, H.principal().ghat), std::invalid_argument);
  CHECK_FALSE(H.normally_hyperbolic());
  CHECK(H.hyperbolicity_note().find("not spacelike") != std::string::npos);
}

// ---------------------------------------------------------------------------
// Triviality and equivalence
// ---------------------------------------------------------------------------

TEST_CASE("divergence families are trivial, actions are not") {
  // Tall window: the mask plateau interior (rows 7–12) stays clear of the
  // dilated ramp regions, so a non-trivial family is caught there.
  GridSpacetime st = curved_grid(20, 16, 0.07, 0.09);
  const std::vector<TestFunction> fprobes = {
      ramp_mask(st, 1, st.nt - 2, 0, st.nx - 1, 2),
      ramp_mask(st, 2, st.nt - 3, 0, st.nx - 1, 1),
  };

  const auto div = GeneralizedLagrangian::divergence_current(st, make_local_density("u^2"));
  const TrivialityReport rep = is_trivial(div, fprobes, 4, 516);
  CHECK(rep.trivial);
  CHECK_FALSE(rep.observed.empty());

  const auto free = GeneralizedLagrangian::free_field(st, 0.2);
  CHECK_FALSE(is_trivial(free, fprobes, 4, 517).trivial);

  // Adding a trivial family changes no equations of motion: window map
  // difference of (L + trivial) and L is trivial, and the unit-window
  // gradients agree to the bit.
  const WindowMap shifted = [&](const TestFunction& f) { return fsum({free(f), div(f)}); };
  const WindowMap delta = [&](const TestFunction& f) {
    return fsum({free(f), div(f), fscale(-1.0, free(f))});
  };
  CHECK(is_trivial(st, delta, fprobes, 4, 518).trivial);
  const FieldConfig phi = default_probes(st, 1, 519, 0.8).front();
  const TestFunction ones = TestFunction::constant(st, 1.0);
  const Density Ea = free(ones)->gradient_density(phi);
  const Density Eb = shifted(ones)->gradient_density(phi);
  for (size_t i = 0; i < Ea.c.size(); ++i) CHECK(Ea.c[i] == Eb.c[i]);

  // Equivalence wrapper: a family is equivalent to itself, and the
  // self-interaction genuinely differs from the free field.
  CHECK(lagrangians_equivalent(free, GeneralizedLagrangian::free_field(st, 0.2), fprobes, 3, 520)
            .trivial);
  CHECK_FALSE(lagrangians_equivalent(free, GeneralizedLagrangian::example_epsilon(st, 0.3, 0.2),
                                     fprobes, 3, 521)
                  .trivial);
}

TEST_CASE("ramp masks have plateaus and cosine shoulders") {
  GridSpacetime st = GridSpacetime::minkowski(12, 16, 0.1, 0.1);
  const TestFunction f = ramp_mask(st, 2, 9, 3, 12, 2);
  CHECK(f.at(5, 7) == 1.0);
  CHECK(f.at(2, 7) == 0.0);   // ramp foot
  CHECK(f.at(3, 7) == doctest::Approx(0.5).epsilon(1e-15));  // cosine midpoint
  CHECK(f.at(4, 7) == 1.0);   // plateau edge
  CHECK(f.at(0, 7) == 0.0);
  CHECK(f.at(5, 3) == 0.0);
  CHECK(f.at(5, 4) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(f.at(5, 5) == 1.0);
  // Ramp nodes are exactly the non-constant neighborhoods.
  const NodeSet ramp = mask_ramp_nodes(f);
  CHECK(ramp.contains(3, 7));
  CHECK(ramp.contains(4, 7));   // plateau edge borders the ramp
  CHECK_FALSE(ramp.contains(6, 8));
  CHECK_FALSE(ramp.contains(0, 0));
  // Full-width window in x has no x-ramp.
  const TestFunction g = ramp_mask(st, 2, 9, 0, st.nx - 1, 2);
  CHECK(g.at(5, 0) == g.at(5, 8));
  CHECK_THROWS_AS(ramp_mask(st, -1, 5, 0, 3, 1), std::invalid_argument);
  CHECK_THROWS_AS(ramp_mask(st, 5, 3, 0, 3, 1), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Interface contracts
// ---------------------------------------------------------------------------

TEST_CASE("non-action families reject the action-only operations") {
  GridSpacetime st = GridSpacetime::minkowski(8, 8, 0.1, 0.1);
  const auto S = GeneralizedLagrangian::sobolev(st, 2);
  const FieldConfig phi = FieldConfig::zeros(st);
  CHECK_THROWS_AS(linearize(S, phi), std::invalid_argument);
  CHECK_THROWS_AS(principal_metric(S, phi), std::invalid_argument);
  CHECK_THROWS_AS(hyperbolicity_domain(S, phi), std::invalid_argument);
  const auto U = GeneralizedLagrangian::local_density(st, make_local_density("u^4"));
  CHECK_THROWS_AS(hyperbolicity_domain(U, phi), std::invalid_argument);
  CHECK_THROWS_AS(GeneralizedLagrangian::example_epsilon(st, -0.5), std::invalid_argument);
  CHECK_THROWS_AS(GeneralizedLagrangian::sobolev(st, 3), std::invalid_argument);
  CHECK_THROWS_AS(GeneralizedLagrangian::local_density(st, nullptr), std::invalid_argument);

  // Divergence families linearize to the zero operator: degenerate
  // everywhere and rejected by the gate, but harmless to apply.
  const auto div = GeneralizedLagrangian::divergence_current(st, make_local_density("u^2"));
  const LinearHypOp Z = linearize(div, phi);
  CHECK_FALSE(Z.normally_hyperbolic());
  CHECK(Z.principal().degenerate_count == st.n_nodes());
  const Density out = Z.apply_density(FieldConfig::constant(st, 1.0));
  for (double c : out.c) CHECK(c == 0.0);
}

TEST_CASE("stencil operators validate their coefficient arrays") {
  GridSpacetime st = GridSpacetime::minkowski(8, 8, 0.1, 0.1);
  const size_t n = static_cast<size_t>(st.n_nodes());
  CellForm W;
  for (auto& arr : W) arr.assign(n, 0.0);
  // A stray cell on the boundary row is rejected.
  CellForm bad = W;
  bad[4][static_cast<size_t>(st.node(0, 3))] = 1.0;
  CHECK_THROWS_AS(LinearHypOp(st, bad, st.g, false, "bad"), std::invalid_argument);
  // Wrong-size arrays are rejected.
  CellForm shrunk = W;
  shrunk[0].resize(n - 1);
  CHECK_THROWS_AS(LinearHypOp(st, shrunk, st.g, false, "short"), std::invalid_argument);
  CHECK_THROWS_AS(apply_cell_form(st, shrunk, std::vector<double>(n, 0.0)),
                  std::invalid_argument);

  // The all-zero operator is fine to build: flagged degenerate by symbol.
  const LinearHypOp Z(st, W, MetricField(n, Metric2{0, 0, 0}), false, "zero");
  CHECK_FALSE(Z.normally_hyperbolic());
  CHECK(Z.label() == "zero");
  CHECK_FALSE(Z.variational());
}

}  // TEST_SUITE
