#include "fieldlab/lagrangian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <utility>

namespace fieldlab {

namespace {

/// Cubic3 partial with component slots a, b, c in {0=u, 1=p, 2=q}; −1 = unused.
double part(const Cubic3& T, int a, int b, int c) {
  int cnt[3] = {0, 0, 0};
  for (int s : {a, b, c})
    if (s >= 0) ++cnt[s];
  return T.partial(cnt[0], cnt[1], cnt[2]);
}

/// λ = −½[G + (ε/2)(1 + u²)·G² + mass_sq·u²] with G = g⁻¹ at the node
/// applied to (p, q).  ε = 0 is the free field.
class MetricJetDensity final : public JetDensity {
 public:
  MetricJetDensity(const GridSpacetime& st, double eps, double mass_sq)
      : st_(&st), eps_(eps), m2_(mass_sq) {}

  Cubic3 taylor(int it, int ix, double u, double p, double q) const override {
    double gtt = 0.0, gtx = 0.0, gxx = 0.0;
    st_->ginv_at(it, ix, gtt, gtx, gxx);
    const Cubic3 P = Cubic3::variable(1, p), Q = Cubic3::variable(2, q);
    const Cubic3 G = gtt * (P * P) + (2.0 * gtx) * (P * Q) + gxx * (Q * Q);
    Cubic3 lam = -0.5 * G;
    if (eps_ != 0.0) {
      const Cubic3 U = Cubic3::variable(0, u);
      lam = lam - (0.25 * eps_) * ((U * U + 1.0) * (G * G));
    }
    if (m2_ != 0.0) {
      const Cubic3 U = Cubic3::variable(0, u);
      lam = lam - (0.5 * m2_) * (U * U);
    }
    return lam;
  }

  std::string name() const override { return "metric jet density"; }

 private:
  const GridSpacetime* st_;
  double eps_, m2_;
};

/// Node-independent density taken from the pointwise catalogue.
class TableJetDensity final : public JetDensity {
 public:
  explicit TableJetDensity(DensityPtr base) : base_(std::move(base)) {}

  Cubic3 taylor(int, int, double u, double p, double q) const override {
    static const double inv_fact[4] = {1.0, 1.0, 0.5, 1.0 / 6.0};
    Cubic3 T;
    for (int a = 0; a <= 3; ++a)
      for (int b = 0; a + b <= 3; ++b)
        for (int c = 0; a + b + c <= 3; ++c)
          T.c[a][b][c] = base_->partial(a, b, c, u, p, q) * (inv_fact[a] * inv_fact[b] * inv_fact[c]);
    return T;
  }

  std::string name() const override { return base_->name(); }

 private:
  DensityPtr base_;
};

/// Interior cell sum Σ dt·dx·w(cell)·λ(jets) with fully centered first
/// differences; w already carries the window and the metric volume.
class JetActionNode final : public Functional {
 public:
  JetActionNode(const GridSpacetime& st, std::vector<double> w_cells, JetDensityPtr lambda)
      : Functional(st), w_(std::move(w_cells)), lambda_(std::move(lambda)) {
    if (w_.size() != static_cast<size_t>(st.n_nodes()))
      throw std::invalid_argument("JetActionNode: weight array size");
    NodeSet cells(st.nt, st.nx);
    for (int jt = 1; jt <= st.nt - 2; ++jt)
      for (int jx = 0; jx < st.nx; ++jx)
        if (w_[static_cast<size_t>(st.node(jt, jx))] != 0.0) cells.insert(jt, jx);
    set_declared(cells.dilate(1));
  }

  Complex eval_c_impl(const FieldConfig& phi) const override {
    double acc = 0.0;
    for_cells([&](size_t, int jt, int jx, double wc, double u, double p, double q) {
      acc += wc * lambda_->taylor(jt, jx, u, p, q).value();
    }, phi);
    return acc * grid().dt * grid().dx;
  }

  double deriv_impl(const FieldConfig& phi, const DirList& dirs) const override {
    const int k = static_cast<int>(dirs.size());
    double acc = 0.0;
    for_cells([&](size_t i, int jt, int jx, double wc, double u, double p, double q) {
      const Cubic3 T = lambda_->taylor(jt, jx, u, p, q);
      double dj[3][3];
      for (int d = 0; d < k; ++d) cell_jet(dirs[static_cast<size_t>(d)]->v, i, dj[d]);
      double cell = 0.0;
      if (k == 1) {
        for (int a = 0; a < 3; ++a) cell += part(T, a, -1, -1) * dj[0][a];
      } else if (k == 2) {
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) cell += part(T, a, b, -1) * dj[0][a] * dj[1][b];
      } else {
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b)
            for (int c = 0; c < 3; ++c)
              cell += part(T, a, b, c) * dj[0][a] * dj[1][b] * dj[2][c];
      }
      acc += wc * cell;
    }, phi);
    return acc * grid().dt * grid().dx;
  }

  void add_gradient(const FieldConfig& phi, double scale,
                    std::vector<double>& accum) const override {
    for_cells([&](size_t i, int jt, int jx, double wc, double u, double p, double q) {
      const Cubic3 T = lambda_->taylor(jt, jx, u, p, q);
      scatter(accum, i, scale * wc * part(T, 0, -1, -1), scale * wc * part(T, 1, -1, -1),
              scale * wc * part(T, 2, -1, -1), jx);
    }, phi);
  }

  void add_kernel2(const FieldConfig& phi, const std::vector<double>& dir, double scale,
                   std::vector<double>& accum) const override {
    for_cells([&](size_t i, int jt, int jx, double wc, double u, double p, double q) {
      const Cubic3 T = lambda_->taylor(jt, jx, u, p, q);
      double dj[3];
      cell_jet(dir, i, dj);
      double r[3] = {0.0, 0.0, 0.0};
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) r[a] += part(T, a, b, -1) * dj[b];
      scatter(accum, i, scale * wc * r[0], scale * wc * r[1], scale * wc * r[2], jx);
    }, phi);
  }

  /// W[3α+β](cell) = w·λ_{αβ} at the background jets: the exact Hessian
  /// stencil of this action.
  CellForm hessian_cells(const FieldConfig& phi0) const {
    CellForm W;
    for (auto& arr : W) arr.assign(w_.size(), 0.0);
    for_cells([&](size_t i, int jt, int jx, double wc, double u, double p, double q) {
      const Cubic3 T = lambda_->taylor(jt, jx, u, p, q);
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) W[static_cast<size_t>(3 * a + b)][i] = wc * part(T, a, b, -1);
    }, phi0);
    return W;
  }

  /// Density coefficients of u with ⟨u, c⟩ = D³S[φ](c, a, b).
  std::vector<double> third_contract(const FieldConfig& phi, const FieldConfig& a,
                                     const FieldConfig& b) const {
    std::vector<double> accum(w_.size(), 0.0);
    for_cells([&](size_t i, int jt, int jx, double wc, double u, double p, double q) {
      const Cubic3 T = lambda_->taylor(jt, jx, u, p, q);
      double ja[3], jb[3];
      cell_jet(a.v, i, ja);
      cell_jet(b.v, i, jb);
      double r[3] = {0.0, 0.0, 0.0};
      for (int s = 0; s < 3; ++s)
        for (int m = 0; m < 3; ++m)
          for (int n = 0; n < 3; ++n) r[s] += part(T, s, m, n) * ja[m] * jb[n];
      scatter(accum, i, wc * r[0], wc * r[1], wc * r[2], jx);
    }, phi);
    return accum;
  }

 private:
  template <class Fn>
  void for_cells(const Fn& fn, const FieldConfig& phi) const {
    const GridSpacetime& st = grid();
    const double ht = 2.0 * st.dt, hx = 2.0 * st.dx;
    for (int jt = 1; jt <= st.nt - 2; ++jt)
      for (int jx = 0; jx < st.nx; ++jx) {
        const size_t i = static_cast<size_t>(st.node(jt, jx));
        const double wc = w_[i];
        if (wc == 0.0) continue;
        const double u = phi.v[i];
        const double p = (phi.v[i + static_cast<size_t>(st.nx)] -
                          phi.v[i - static_cast<size_t>(st.nx)]) / ht;
        const double q = (phi.v[static_cast<size_t>(st.node(jt, st.wrap_x(jx + 1)))] -
                          phi.v[static_cast<size_t>(st.node(jt, st.wrap_x(jx - 1)))]) / hx;
        fn(i, jt, jx, wc, u, p, q);
      }
  }

  /// Centered first jet of a node vector at cell i (interior time row).
  void cell_jet(const std::vector<double>& v, size_t i, double out[3]) const {
    const GridSpacetime& st = grid();
    const size_t nx = static_cast<size_t>(st.nx);
    const size_t row = i / nx, jx = i % nx;
    const size_t xp = row * nx + static_cast<size_t>(st.wrap_x(static_cast<int>(jx) + 1));
    const size_t xm = row * nx + static_cast<size_t>(st.wrap_x(static_cast<int>(jx) - 1));
    out[0] = v[i];
    out[1] = (v[i + nx] - v[i - nx]) / (2.0 * st.dt);
    out[2] = (v[xp] - v[xm]) / (2.0 * st.dx);
  }

  /// Transposed-stencil scatter of per-cell coefficients (r0, r1, r2) on
  /// the slots (value, ∂t, ∂x).
  void scatter(std::vector<double>& accum, size_t i, double r0, double r1, double r2,
               int jx) const {
    const GridSpacetime& st = grid();
    const size_t nx = static_cast<size_t>(st.nx);
    const size_t row = i / nx;
    const size_t xp = row * nx + static_cast<size_t>(st.wrap_x(jx + 1));
    const size_t xm = row * nx + static_cast<size_t>(st.wrap_x(jx - 1));
    accum[i] += r0;
    accum[i + nx] += r1 / (2.0 * st.dt);
    accum[i - nx] -= r1 / (2.0 * st.dt);
    accum[xp] += r2 / (2.0 * st.dx);
    accum[xm] -= r2 / (2.0 * st.dx);
  }

  std::vector<double> w_;
  JetDensityPtr lambda_;
};

/// Closed-form principal symbol ĝ⁻¹ = −(∂²λ/∂y²) at the node jets of the
/// background (zero for divergence-form families, whose unit-window
/// Hessian vanishes identically).
MetricField symbol_field(const GeneralizedLagrangian& L, const FieldConfig& phi0) {
  const GridSpacetime& st = L.grid();
  const FieldConfig pt = diff_t(phi0), px = diff_x(phi0);
  MetricField m(static_cast<size_t>(st.n_nodes()), Metric2{0.0, 0.0, 0.0});
  if (L.divergence_form()) return m;
  const JetDensity& lam = *L.density();
  for (int it = 0; it < st.nt; ++it)
    for (int ix = 0; ix < st.nx; ++ix) {
      const size_t i = static_cast<size_t>(st.node(it, ix));
      const Cubic3 T = lam.taylor(it, ix, phi0.v[i], pt.v[i], px.v[i]);
      m[i] = Metric2{-T.partial(0, 2, 0), -T.partial(0, 1, 1), -T.partial(0, 0, 2)};
    }
  return m;
}

void require_field(const GridSpacetime& st, const FieldConfig& f, const char* who) {
  if (!f.st || !same_grid(*f.st, st))
    throw std::invalid_argument(std::string(who) + ": field grid mismatch");
}

}  // namespace

// --- GeneralizedLagrangian ----------------------------------------------------

GeneralizedLagrangian::GeneralizedLagrangian(const GridSpacetime& st, std::string name)
    : st_(&st), name_(std::move(name)) {}

GeneralizedLagrangian GeneralizedLagrangian::free_field(const GridSpacetime& st, double mass_sq) {
  GeneralizedLagrangian L(st, "free_field");
  L.density_ = std::make_shared<MetricJetDensity>(st, 0.0, mass_sq);
  L.metric_family_ = true;
  L.mass_sq_ = mass_sq;
  return L;
}

GeneralizedLagrangian GeneralizedLagrangian::example_epsilon(const GridSpacetime& st,
                                                             double epsilon, double mass_sq) {
  if (!(epsilon >= 0.0))
    throw std::invalid_argument("example_epsilon: coupling must be non-negative");
  GeneralizedLagrangian L(st, "example_epsilon");
  L.density_ = std::make_shared<MetricJetDensity>(st, epsilon, mass_sq);
  L.metric_family_ = true;
  L.epsilon_ = epsilon;
  L.mass_sq_ = mass_sq;
  return L;
}

GeneralizedLagrangian GeneralizedLagrangian::sobolev(const GridSpacetime& st, int order) {
  if (order < 0 || order > 2) throw std::invalid_argument("sobolev: order must be 0, 1, or 2");
  GeneralizedLagrangian L(st, "sobolev");
  L.sobolev_order_ = order;
  return L;
}

GeneralizedLagrangian GeneralizedLagrangian::local_density(const GridSpacetime& st,
                                                           DensityPtr lambda) {
  if (!lambda) throw std::invalid_argument("local_density: null density");
  GeneralizedLagrangian L(st, "local_density(" + lambda->name() + ")");
  L.density_ = std::make_shared<TableJetDensity>(std::move(lambda));
  return L;
}

GeneralizedLagrangian GeneralizedLagrangian::divergence_current(const GridSpacetime& st,
                                                                DensityPtr current) {
  if (!current) throw std::invalid_argument("divergence_current: null current");
  GeneralizedLagrangian L(st, "divergence_current(" + current->name() + ")");
  L.density_ = std::make_shared<TableJetDensity>(std::move(current));
  L.divergence_ = true;
  return L;
}

std::vector<double> GeneralizedLagrangian::window_weight(const TestFunction& f) const {
  require_field(*st_, f, "window_weight");
  std::vector<double> w(static_cast<size_t>(st_->n_nodes()), 0.0);
  for (int jt = 1; jt <= st_->nt - 2; ++jt)
    for (int jx = 0; jx < st_->nx; ++jx) {
      const double base = divergence_ ? (f.at(jt + 1, jx) - f.at(jt - 1, jx)) / (2.0 * st_->dt)
                                      : f.at(jt, jx);
      if (base != 0.0)
        w[static_cast<size_t>(st_->node(jt, jx))] = base * st_->sqrt_abs_det(jt, jx);
    }
  return w;
}

FuncPtr GeneralizedLagrangian::operator()(const TestFunction& f) const {
  require_field(*st_, f, "GeneralizedLagrangian");
  if (!density_) return sobolev_functional(*st_, sobolev_order_, f);
  return std::make_shared<JetActionNode>(*st_, window_weight(f), density_);
}

// --- localized calculus --------------------------------------------------------

double el_derivative(const GeneralizedLagrangian& L, const FieldConfig& phi,
                     const DirList& dirs) {
  const GridSpacetime& st = L.grid();
  if (dirs.empty() || dirs.size() > 3)
    throw std::invalid_argument("el_derivative: order must be 1, 2, or 3");
  require_field(st, phi, "el_derivative");
  for (const FieldConfig* d : dirs) {
    if (!d) throw std::invalid_argument("el_derivative: null direction");
    require_field(st, *d, "el_derivative");
  }

  // A zero direction kills the multilinear derivative outright.
  std::vector<NodeSet> supports;
  for (const FieldConfig* d : dirs) supports.push_back(support_nodes(*d));
  for (const NodeSet& s : supports)
    if (s.empty()) return 0.0;

  // Anchor: a direction supported away from the time-window boundary, so a
  // window that is ≡ 1 on a stencil neighborhood of it exists.
  const int reach = 2;
  int anchor = -1;
  for (size_t j = 0; j < supports.size() && anchor < 0; ++j) {
    bool interior = true;
    for (int it : {0, 1, st.nt - 2, st.nt - 1})
      for (int ix = 0; ix < st.nx; ++ix)
        if (supports[j].contains(it, ix)) interior = false;
    if (interior) anchor = static_cast<int>(j);
  }
  if (anchor < 0)
    throw std::invalid_argument(
        "el_derivative: every direction touches the time-window boundary; "
        "no interior unit window closes around one");

  // Two admissible windows; the value must not depend on the choice.
  const NodeSet region = supports[static_cast<size_t>(anchor)].dilate(reach);
  TestFunction f1 = TestFunction::zeros(st);
  for (int it = 0; it < st.nt; ++it)
    for (int ix = 0; ix < st.nx; ++ix)
      if (region.contains(it, ix)) f1.at(it, ix) = 1.0;
  const TestFunction f2 = TestFunction::constant(st, 1.0);

  const double v1 = L(f1)->derivative(phi, dirs);
  const double v2 = L(f2)->derivative(phi, dirs);
  const double scale = std::max({1.0, std::abs(v1), std::abs(v2)});
  if (std::abs(v1 - v2) > 1e-12 * scale)
    throw std::logic_error("el_derivative: value depends on the unit window; family is not local");
  return v1;
}

Density el_operator(const GeneralizedLagrangian& L, const FieldConfig& phi) {
  require_field(L.grid(), phi, "el_operator");
  return L(TestFunction::constant(L.grid(), 1.0))->gradient_density(phi);
}

LinearHypOp linearize(const GeneralizedLagrangian& L, const FieldConfig& phi0) {
  const GridSpacetime& st = L.grid();
  if (!L.jet_action())
    throw std::invalid_argument("linearize: '" + L.name() + "' is not a jet action");
  require_field(st, phi0, "linearize");
  JetActionNode unit(st, L.window_weight(TestFunction::constant(st, 1.0)), L.density());
  return LinearHypOp(st, unit.hessian_cells(phi0), symbol_field(L, phi0),
                     /*variational=*/true, L.name());
}

Density second_linearization(const GeneralizedLagrangian& L, const FieldConfig& phi,
                             const FieldConfig& a, const FieldConfig& b) {
  const GridSpacetime& st = L.grid();
  require_field(st, phi, "second_linearization");
  require_field(st, a, "second_linearization");
  require_field(st, b, "second_linearization");
  Density out = Density::zeros(st);
  if (!L.jet_action()) return out;  // quadratic family: third variation vanishes
  JetActionNode unit(st, L.window_weight(TestFunction::constant(st, 1.0)), L.density());
  out.c = unit.third_contract(phi, a, b);
  return out;
}

// --- principal symbol and cones -------------------------------------------------

PrincipalMetricReport principal_metric(const GeneralizedLagrangian& L, const FieldConfig& phi0) {
  if (!L.jet_action())
    throw std::invalid_argument("principal_metric: '" + L.name() + "' is not a jet action");
  require_field(L.grid(), phi0, "principal_metric");
  PrincipalMetricReport r;
  r.ginv = symbol_field(L, phi0);
  r.inverse = invert_symbol(L.grid(), r.ginv);
  r.lowered = lower_symbol(L.grid(), r.ginv);
  return r;
}

HyperbolicityReport hyperbolicity_domain(const GeneralizedLagrangian& L,
                                         const FieldConfig& phi0) {
  const GridSpacetime& st = L.grid();
  if (!L.metric_family())
    throw std::invalid_argument(
        "hyperbolicity_domain: closed-form cone classification covers the metric "
        "families only (free_field, example_epsilon)");
  require_field(st, phi0, "hyperbolicity_domain");

  const double eps = L.epsilon();
  const FieldConfig pt = diff_t(phi0), px = diff_x(phi0);
  HyperbolicityReport r;
  const size_t n = static_cast<size_t>(st.n_nodes());
  r.node_class.resize(n, NodeHyperbolicity::subluminal);
  r.classifier.resize(n, 0.0);
  for (int it = 0; it < st.nt; ++it)
    for (int ix = 0; ix < st.nx; ++ix) {
      const size_t i = static_cast<size_t>(st.node(it, ix));
      double gtt = 0.0, gtx = 0.0, gxx = 0.0;
      st.ginv_at(it, ix, gtt, gtx, gxx);
      const double p = pt.v[i], q = px.v[i], u = phi0.v[i];
      const double G = gtt * p * p + 2.0 * gtx * p * q + gxx * q * q;
      const double cls = (eps == 0.0) ? std::numeric_limits<double>::infinity()
                                      : G + 1.0 / (2.0 * eps * (1.0 + u * u));
      r.classifier[i] = cls;
      if (cls > 0.0) {
        r.node_class[i] = NodeHyperbolicity::subluminal;
        ++r.n_subluminal;
      } else if (cls < 0.0) {
        r.node_class[i] = NodeHyperbolicity::reversed;
        ++r.n_reversed;
      } else {
        r.node_class[i] = NodeHyperbolicity::degenerate;
        ++r.n_degenerate;
      }
    }
  r.nh_holds = (r.n_subluminal == static_cast<int>(n));
  return r;
}

// --- triviality and equivalence --------------------------------------------------

NodeSet mask_ramp_nodes(const TestFunction& f) {
  if (!f.st) throw std::invalid_argument("mask_ramp_nodes: unbound test function");
  const GridSpacetime& st = *f.st;
  NodeSet s(st.nt, st.nx);
  for (int it = 0; it < st.nt; ++it)
    for (int ix = 0; ix < st.nx; ++ix) {
      const double v = f.at(it, ix);
      const bool edge = (it > 0 && f.at(it - 1, ix) != v) ||
                        (it < st.nt - 1 && f.at(it + 1, ix) != v) ||
                        f.at(it, ix + 1) != v || f.at(it, ix - 1) != v;
      if (edge) s.insert(it, ix);
    }
  return s;
}

TrivialityReport is_trivial(const GridSpacetime& st, const WindowMap& L,
                            const std::vector<TestFunction>& window_probes, int phi_trials,
                            std::uint64_t seed) {
  if (!L) throw std::invalid_argument("is_trivial: null window map");
  if (window_probes.empty()) throw std::invalid_argument("is_trivial: no window probes");
  if (phi_trials < 1) throw std::invalid_argument("is_trivial: trials must be positive");

  TrivialityReport r;
  r.observed = NodeSet(st.nt, st.nx);
  r.allowed = NodeSet(st.nt, st.nx);
  std::uint64_t k = 0;
  for (const TestFunction& f : window_probes) {
    require_field(st, f, "is_trivial");
    FuncPtr F = L(f);
    if (!F) throw std::invalid_argument("is_trivial: window map returned null");
    const auto probes = default_probes(st, phi_trials, seed + 0x9e3779b97f4a7c15ULL * ++k, 0.8);
    r.observed = r.observed.unite(spacetime_support(*F, probes));
    r.allowed = r.allowed.unite(mask_ramp_nodes(f).dilate(2));
  }
  r.trivial = r.observed.subset_of(r.allowed);
  r.note = r.trivial ? "window support confined to the f-ramps"
                     : "window support reaches f-plateau nodes";
  return r;
}

TrivialityReport is_trivial(const GeneralizedLagrangian& L,
                            const std::vector<TestFunction>& window_probes, int phi_trials,
                            std::uint64_t seed) {
  return is_trivial(L.grid(), [&L](const TestFunction& f) { return L(f); }, window_probes,
                    phi_trials, seed);
}

TrivialityReport lagrangians_equivalent(const GeneralizedLagrangian& A,
                                        const GeneralizedLagrangian& B,
                                        const std::vector<TestFunction>& window_probes,
                                        int phi_trials, std::uint64_t seed) {
  if (!same_grid(A.grid(), B.grid()))
    throw std::invalid_argument("lagrangians_equivalent: grid mismatch");
  const WindowMap diff = [&A, &B](const TestFunction& f) {
    return fsum({A(f), fscale(-1.0, B(f))});
  };
  TrivialityReport r = is_trivial(A.grid(), diff, window_probes, phi_trials, seed);
  r.note = r.trivial ? "difference family is trivial: equal equations of motion"
                     : "difference family moves equations of motion";
  return r;
}

TestFunction ramp_mask(const GridSpacetime& st, int t0, int t1, int x0, int x1, int ramp) {
  if (ramp < 0) throw std::invalid_argument("ramp_mask: negative ramp width");
  if (t0 > t1 || t0 < 0 || t1 > st.nt - 1)
    throw std::invalid_argument("ramp_mask: time box out of range");
  const bool full_x = (x1 - x0 + 1 >= st.nx);
  if (!full_x && (x0 > x1 || x0 < 0 || x1 > st.nx - 1))
    throw std::invalid_argument("ramp_mask: space box out of range");

  const auto profile = [ramp](int i, int lo, int hi) {
    if (i < lo || i > hi) return 0.0;
    if (ramp == 0) return 1.0;
    double w = 1.0;
    const double pi = 3.14159265358979323846;
    if (i < lo + ramp) w = std::min(w, 0.5 * (1.0 - std::cos(pi * (i - lo) / ramp)));
    if (i > hi - ramp) w = std::min(w, 0.5 * (1.0 - std::cos(pi * (hi - i) / ramp)));
    return w;
  };

  TestFunction f = TestFunction::zeros(st);
  for (int it = 0; it < st.nt; ++it) {
    const double wt = profile(it, t0, t1);
    if (wt == 0.0) continue;
    for (int ix = 0; ix < st.nx; ++ix) {
      const double wx = full_x ? 1.0 : profile(ix, x0, x1);
      if (wx != 0.0) f.at(it, ix) = wt * wx;
    }
  }
  return f;
}

CheckReport check_window_additivity(const GridSpacetime& st, const WindowMap& L, int trials,
                                    std::uint64_t seed, double tol) {
  if (!L) throw std::invalid_argument("check_window_additivity: null window map");
  if (trials < 1) throw std::invalid_argument("check_window_additivity: trials must be positive");
  if (st.nx < 8)
    throw std::invalid_argument("check_window_additivity: grid too narrow for disjoint windows");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> amp(0.3, 1.5);
  CheckReport rep;
  rep.pass = true;
  rep.trials = trials;
  rep.note = "L(f1+f2+f3) = L(f1+f2) - L(f2) + L(f2+f3) on disjoint outer windows";

  const int half = st.nx / 2;
  for (int trial = 0; trial < trials; ++trial) {
    // Outer windows in disjoint x-blocks separated by at least one column.
    const int a0 = static_cast<int>(rng() % static_cast<std::uint64_t>(half - 2));
    const int a1 = a0 + 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(half - 1 - a0));
    const int b0 = half + static_cast<int>(rng() % static_cast<std::uint64_t>(st.nx - half - 2));
    const int b1 = b0 + 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(st.nx - 1 - b0));
    const int rt = 1 + static_cast<int>(rng() % 2);

    TestFunction f1 = ramp_mask(st, 0, st.nt - 1, a0, a1, 1);
    TestFunction f3 = ramp_mask(st, 0, st.nt - 1, b0, b1, 1);
    TestFunction f2 = ramp_mask(st, 0, st.nt - 1, 0, st.nx - 1, rt);
    const double s1 = amp(rng), s2 = amp(rng), s3 = amp(rng);
    TestFunction f12 = TestFunction::zeros(st), f23 = f12, f123 = f12;
    for (size_t i = 0; i < f12.v.size(); ++i) {
      const double v1 = s1 * f1.v[i], v2 = s2 * f2.v[i], v3 = s3 * f3.v[i];
      f12.v[i] = v1 + v2;
      f23.v[i] = v2 + v3;
      f123.v[i] = v1 + v2 + v3;
      f2.v[i] = v2;
    }

    const FieldConfig phi =
        default_probes(st, 1, seed ^ (0xd1b54a32d192ed03ULL + static_cast<std::uint64_t>(trial)),
                       0.8)
            .front();
    const double lhs = L(f123)->evaluate(phi);
    const double rhs = L(f12)->evaluate(phi) - L(f2)->evaluate(phi) + L(f23)->evaluate(phi);
    const double resid = std::abs(lhs - rhs) / std::max({1.0, std::abs(lhs), std::abs(rhs)});
    rep.worst_residual = std::max(rep.worst_residual, resid);
    if (resid > tol) rep.pass = false;
  }
  return rep;
}

ELOperator::ELOperator(GeneralizedLagrangian L) : L_(std::move(L)) {}

}  // namespace fieldlab
