/*
 * grid.cpp — lattice spacetime geometry: metric validation, covector
 * classification, discrete causal cones, and the pointwise cone order.
 */
#include "fieldlab/grid.hpp"

#include <cmath>
#include <stdexcept>

#include <algorithm>

namespace fieldlab {

namespace {

/// Snap x to the nearest integer when it is within 1e-9 (relative); keeps the
/// step relation exact under conformal rescaling, where the characteristic
/// speeds are reproduced only up to round-off.
double snap_to_int(double x) {
  double r = std::nearbyint(x);
  if (std::abs(x - r) <= 1e-9 * std::max(1.0, std::abs(x))) return r;
  return x;
}

int ifloor_snapped(double x) { return static_cast<int>(std::floor(snap_to_int(x))); }
int iceil_snapped(double x) { return static_cast<int>(std::ceil(snap_to_int(x))); }

void validate_metric_field(int nt, int nx, const MetricField& g) {
  if (g.size() != static_cast<size_t>(nt) * nx)
    throw std::invalid_argument("GridSpacetime: metric field size " + std::to_string(g.size()) +
                                " does not match nt*nx = " + std::to_string(nt * nx));
  for (int it = 0; it < nt; ++it) {
    for (int ix = 0; ix < nx; ++ix) {
      const Metric2& m = g[static_cast<size_t>(it) * nx + ix];
      if (!(m.det() < 0.0))
        throw std::invalid_argument("GridSpacetime: metric at node (" + std::to_string(it) + "," +
                                    std::to_string(ix) + ") is not Lorentzian (det >= 0)");
      if (!(m.xx > 0.0))
        throw std::invalid_argument("GridSpacetime: metric at node (" + std::to_string(it) + "," +
                                    std::to_string(ix) + ") has g_xx <= 0 (t slices not spacelike)");
    }
  }
}

}  // namespace

long NodeSet::count() const {
  long c = 0;
  for (std::uint8_t b : mask) c += b;
  return c;
}

bool NodeSet::subset_of(const NodeSet& other) const {
  if (nt != other.nt || nx != other.nx) return false;
  for (size_t i = 0; i < mask.size(); ++i)
    if (mask[i] && !other.mask[i]) return false;
  return true;
}

NodeSet NodeSet::unite(const NodeSet& other) const {
  NodeSet out(nt, nx);
  for (size_t i = 0; i < mask.size(); ++i) out.mask[i] = (mask[i] || other.mask[i]) ? 1 : 0;
  return out;
}

NodeSet NodeSet::intersect(const NodeSet& other) const {
  NodeSet out(nt, nx);
  for (size_t i = 0; i < mask.size(); ++i) out.mask[i] = (mask[i] && other.mask[i]) ? 1 : 0;
  return out;
}

NodeSet NodeSet::dilate(int cells) const {
  NodeSet out(nt, nx);
  for (int it = 0; it < nt; ++it) {
    for (int ix = 0; ix < nx; ++ix) {
      if (!contains(it, ix)) continue;
      for (int jt = std::max(0, it - cells); jt <= std::min(nt - 1, it + cells); ++jt) {
        for (int jx = ix - cells; jx <= ix + cells; ++jx) {
          int w = jx % nx;
          if (w < 0) w += nx;
          out.insert(jt, w);
        }
      }
    }
  }
  return out;
}

GridSpacetime::GridSpacetime(int nt_, int nx_, double dt_, double dx_, MetricField g_)
    : nt(nt_), nx(nx_), dt(dt_), dx(dx_), g(std::move(g_)) {
  if (nt < 3 || nx < 3)
    throw std::invalid_argument("GridSpacetime: need nt >= 3 and nx >= 3, got nt=" +
                                std::to_string(nt) + " nx=" + std::to_string(nx));
  if (!(dt > 0.0) || !(dx > 0.0)) throw std::invalid_argument("GridSpacetime: need dt > 0 and dx > 0");
  validate_metric_field(nt, nx, g);
}

GridSpacetime GridSpacetime::minkowski(int nt, int nx, double dt, double dx) {
  MetricField g(static_cast<size_t>(nt) * nx, Metric2{-1.0, 0.0, 1.0});
  return GridSpacetime(nt, nx, dt, dx, std::move(g));
}

GridSpacetime GridSpacetime::conformal(int nt, int nx, double dt, double dx,
                                       const std::vector<double>& omega) {
  if (omega.size() != static_cast<size_t>(nt) * nx)
    throw std::invalid_argument("GridSpacetime::conformal: omega field has wrong size");
  MetricField g(omega.size());
  for (size_t i = 0; i < omega.size(); ++i) {
    if (!(omega[i] > 0.0))
      throw std::invalid_argument("GridSpacetime::conformal: omega must be positive everywhere");
    double w2 = omega[i] * omega[i];
    g[i] = Metric2{-w2, 0.0, w2};
  }
  return GridSpacetime(nt, nx, dt, dx, std::move(g));
}

int GridSpacetime::node(int it, int ix) const {
  if (it < 0 || it >= nt) throw std::invalid_argument("GridSpacetime::node: time index out of range");
  return it * nx + wrap_x(ix);
}

double GridSpacetime::sqrt_abs_det(int it, int ix) const {
  return std::sqrt(-metric_at(it, ix).det());
}

void GridSpacetime::ginv_at(int it, int ix, double& gitt, double& gitx, double& gixx) const {
  const Metric2& m = metric_at(it, ix);
  double d = m.det();
  gitt = m.xx / d;
  gitx = -m.tx / d;
  gixx = m.tt / d;
}

void char_speeds(const Metric2& m, double& v_minus, double& v_plus) {
  // Null vectors (1, v): g_tt + 2 g_tx v + g_xx v^2 = 0.
  double s = std::sqrt(-m.det());
  v_minus = (-m.tx - s) / m.xx;
  v_plus = (-m.tx + s) / m.xx;
}

const char* to_string(CausalClass c) {
  switch (c) {
    case CausalClass::future_timelike: return "future-timelike";
    case CausalClass::past_timelike: return "past-timelike";
    case CausalClass::future_null: return "future-null";
    case CausalClass::past_null: return "past-null";
    case CausalClass::spacelike: return "spacelike";
  }
  return "?";
}

CausalClass classify_covector_metric(const Metric2& m, double xi_t, double xi_x,
                                     double null_tol_scale) {
  double norm2 = xi_t * xi_t + xi_x * xi_x;
  if (norm2 == 0.0) throw std::invalid_argument("classify_covector: zero covector");
  double d = m.det();
  // g^{-1}(xi, xi) = (g_xx xi_t^2 - 2 g_tx xi_t xi_x + g_tt xi_x^2) / det g.
  double q = (m.xx * xi_t * xi_t - 2.0 * m.tx * xi_t * xi_x + m.tt * xi_x * xi_x) / d;
  // Orientation: xi is future-directed iff g^{-1}(xi, dt) < 0; for Minkowski
  // this is -xi_t < 0, i.e. xi_t > 0.
  double orient = (m.xx * xi_t - m.tx * xi_x) / d;
  bool future = orient < 0.0;
  if (std::abs(q) <= null_tol_scale * norm2) return future ? CausalClass::future_null : CausalClass::past_null;
  if (q < 0.0) return future ? CausalClass::future_timelike : CausalClass::past_timelike;
  return CausalClass::spacelike;
}

CausalClass classify_covector(const GridSpacetime& st, const Covector& xi) {
  if (xi.it < 0 || xi.it >= st.nt) throw std::invalid_argument("classify_covector: node out of range");
  return classify_covector_metric(st.metric_at(xi.it, xi.ix), xi.t, xi.x);
}

namespace {

/// Integer step interval on the next slice, relative to the current column:
/// cover of [v_minus * dt/dx, v_plus * dt/dx], dilated one cell outward.
void step_interval(const Metric2& m, double r, int& lo, int& hi) {
  double v_minus, v_plus;
  char_speeds(m, v_minus, v_plus);
  lo = ifloor_snapped(v_minus * r) - 1;
  hi = iceil_snapped(v_plus * r) + 1;
}

NodeSet cone_sweep(const GridSpacetime& st, const MetricField& metric, const NodeSet& seed,
                   bool future) {
  if (seed.nt != st.nt || seed.nx != st.nx)
    throw std::invalid_argument("causal cone: seed shape does not match the grid");
  if (metric.size() != static_cast<size_t>(st.nt) * st.nx)
    throw std::invalid_argument("causal cone: metric field has wrong size");
  validate_metric_field(st.nt, st.nx, metric);

  NodeSet out = seed;
  double r = st.dt / st.dx;
  if (future) {
    // March forward: everything reachable on slice it+1 from slice it.
    for (int it = 0; it + 1 < st.nt; ++it) {
      for (int ix = 0; ix < st.nx; ++ix) {
        if (!out.contains(it, ix)) continue;
        int lo, hi;
        step_interval(metric[static_cast<size_t>(it) * st.nx + ix], r, lo, hi);
        if (hi - lo + 1 >= st.nx) {
          for (int jx = 0; jx < st.nx; ++jx) out.insert(it + 1, jx);
        } else {
          for (int jx = ix + lo; jx <= ix + hi; ++jx) out.insert(it + 1, st.wrap_x(jx));
        }
      }
    }
  } else {
    // March backward with the exact adjoint relation: (it,ix) is in J^- iff a
    // forward step from (it,ix) meets the set on slice it+1.
    for (int it = st.nt - 2; it >= 0; --it) {
      for (int ix = 0; ix < st.nx; ++ix) {
        if (out.contains(it, ix)) continue;
        int lo, hi;
        step_interval(metric[static_cast<size_t>(it) * st.nx + ix], r, lo, hi);
        bool hit = false;
        if (hi - lo + 1 >= st.nx) {
          for (int jx = 0; jx < st.nx && !hit; ++jx) hit = out.contains(it + 1, jx);
        } else {
          for (int jx = ix + lo; jx <= ix + hi && !hit; ++jx) hit = out.contains(it + 1, st.wrap_x(jx));
        }
        if (hit) out.insert(it, ix);
      }
    }
  }
  return out;
}

}  // namespace

NodeSet causal_future(const GridSpacetime& st, const MetricField& metric, const NodeSet& seed) {
  return cone_sweep(st, metric, seed, true);
}

NodeSet causal_future(const GridSpacetime& st, const NodeSet& seed) {
  return cone_sweep(st, st.g, seed, true);
}

NodeSet causal_past(const GridSpacetime& st, const MetricField& metric, const NodeSet& seed) {
  return cone_sweep(st, metric, seed, false);
}

NodeSet causal_past(const GridSpacetime& st, const NodeSet& seed) {
  return cone_sweep(st, st.g, seed, false);
}

bool metric_order_leq(const GridSpacetime& st, const MetricField& g1, const MetricField& g2) {
  if (g1.size() != static_cast<size_t>(st.nt) * st.nx || g1.size() != g2.size())
    throw std::invalid_argument("metric_order_leq: metric field size mismatch");
  validate_metric_field(st.nt, st.nx, g1);
  validate_metric_field(st.nt, st.nx, g2);
  for (size_t i = 0; i < g1.size(); ++i) {
    double a_lo, a_hi, b_lo, b_hi;
    char_speeds(g1[i], a_lo, a_hi);
    char_speeds(g2[i], b_lo, b_hi);
    // Timelike-vector slope interval of g1 must sit inside that of g2.
    double tol = 1e-12 * (1.0 + std::abs(a_lo) + std::abs(a_hi) + std::abs(b_lo) + std::abs(b_hi));
    if (b_lo > a_lo + tol || a_hi > b_hi + tol) return false;
  }
  return true;
}

}  // namespace fieldlab
