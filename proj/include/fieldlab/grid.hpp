/*
 * grid.hpp — discretized 1+1D globally hyperbolic spacetimes.
 *
 * A GridSpacetime is a rectangular lattice of nt time slices times nx spatial
 * nodes (periodic in x), carrying a per-node symmetric Lorentzian metric
 *     g = [[g_tt, g_tx], [g_tx, g_xx]],   det g < 0,  g_xx > 0,
 * so constant-t slices are spacelike and t is a Cauchy time function; the
 * future is the direction of increasing t.  This header provides covector
 * classification, discrete causal cones J+/J- (breadth-first closure with a
 * one-cell dilation so the discrete cone contains the continuum cone), and
 * the pointwise cone-order comparison g1 <= g2 ("every g1-timelike vector is
 * g2-timelike").
 */
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fieldlab {

/// Symmetric 2x2 spacetime metric at one node, coordinates (t, x).
struct Metric2 {
  double tt = -1.0;
  double tx = 0.0;
  double xx = 1.0;

  double det() const { return tt * xx - tx * tx; }
};

/// Per-node metric data, row-major: index = it * nx + ix.
using MetricField = std::vector<Metric2>;

/// Subset of grid nodes stored as a dense 0/1 mask (row-major, like fields).
struct NodeSet {
  int nt = 0;
  int nx = 0;
  std::vector<std::uint8_t> mask;

  NodeSet() = default;
  NodeSet(int nt_, int nx_) : nt(nt_), nx(nx_), mask(static_cast<size_t>(nt_) * nx_, 0) {}

  bool contains(int it, int ix) const { return mask[static_cast<size_t>(it) * nx + ix] != 0; }
  void insert(int it, int ix) { mask[static_cast<size_t>(it) * nx + ix] = 1; }
  void erase(int it, int ix) { mask[static_cast<size_t>(it) * nx + ix] = 0; }

  long count() const;
  bool empty() const { return count() == 0; }
  bool subset_of(const NodeSet& other) const;
  bool operator==(const NodeSet& other) const { return nt == other.nt && nx == other.nx && mask == other.mask; }

  NodeSet unite(const NodeSet& other) const;
  NodeSet intersect(const NodeSet& other) const;
  /// Dilate by `cells` in every grid direction (periodic in x, clamped in t).
  NodeSet dilate(int cells) const;
};

/// Discretized spacetime window: lattice geometry plus the metric field.
struct GridSpacetime {
  int nt = 0;
  int nx = 0;
  double dt = 0.0;
  double dx = 0.0;
  MetricField g;

  /// Validates nt,nx >= 3, dt,dx > 0, and per node det g < 0, g_xx > 0;
  /// throws std::invalid_argument naming the first offending node.
  GridSpacetime(int nt_, int nx_, double dt_, double dx_, MetricField g_);

  /// Flat metric diag(-1, +1) at every node.
  static GridSpacetime minkowski(int nt, int nx, double dt, double dx);
  /// Conformally flat metric omega^2 * diag(-1, +1); omega per node, > 0.
  static GridSpacetime conformal(int nt, int nx, double dt, double dx,
                                 const std::vector<double>& omega);

  int n_nodes() const { return nt * nx; }
  int wrap_x(int ix) const {
    int m = ix % nx;
    return m < 0 ? m + nx : m;
  }
  /// Row-major node index; ix is wrapped periodically, it must be in range.
  int node(int it, int ix) const;
  const Metric2& metric_at(int it, int ix) const { return g[static_cast<size_t>(it) * nx + wrap_x(ix)]; }

  double sqrt_abs_det(int it, int ix) const;
  /// Inverse-metric components g^tt, g^tx, g^xx at a node.
  void ginv_at(int it, int ix, double& gitt, double& gitx, double& gixx) const;
};

/// Characteristic slopes dx/dt of the two null directions of m, v_minus < v_plus.
void char_speeds(const Metric2& m, double& v_minus, double& v_plus);

/// A covector (xi_t, xi_x) attached to grid node (it, ix).
struct Covector {
  int it = 0;
  int ix = 0;
  double t = 0.0;
  double x = 0.0;
};

enum class CausalClass {
  future_timelike,
  past_timelike,
  future_null,
  past_null,
  spacelike,
};

const char* to_string(CausalClass c);

/// Classify xi at its node: sign of g^{-1}(xi,xi) with null tolerance
/// 1e-12 * |xi|^2 (Euclidean norm), time orientation from g^{-1}(xi, dt) < 0
/// meaning future-directed.  Zero covectors are rejected.
CausalClass classify_covector(const GridSpacetime& st, const Covector& xi);

/// Same classification against an explicit node metric (used for cone families).
CausalClass classify_covector_metric(const Metric2& m, double xi_t, double xi_x,
                                     double null_tol_scale = 1e-12);

/// Discrete causal future of `seed`: closure under the forward step relation.
/// One step from (it,ix) reaches, on slice it+1, the integer cover of the
/// characteristic interval [v_minus*dt/dx, v_plus*dt/dx] dilated outward by
/// one cell.  Monotone in the seed, idempotent, conformally invariant, and
/// pointwise monotone in the metric's cone order.
NodeSet causal_future(const GridSpacetime& st, const NodeSet& seed);
NodeSet causal_future(const GridSpacetime& st, const MetricField& metric, const NodeSet& seed);

/// Discrete causal past: exact adjoint of the causal_future step relation.
NodeSet causal_past(const GridSpacetime& st, const NodeSet& seed);
NodeSet causal_past(const GridSpacetime& st, const MetricField& metric, const NodeSet& seed);

/// Pointwise cone order g1 <= g2: at every node, every g1-timelike vector is
/// g2-timelike (characteristic-interval inclusion with 1e-12 tolerance).
bool metric_order_leq(const GridSpacetime& st, const MetricField& g1, const MetricField& g2);

}  // namespace fieldlab
