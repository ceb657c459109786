/*
 * fields.hpp — field configurations, densities, dual pairings, volume
 * weightings, lattice jets, and the sup/Sobolev seminorm families.
 *
 * Conventions
 *   - A FieldConfig stores one real value per node, row-major (it*nx + ix),
 *     and a non-owning pointer to its grid; grids outlive every field built
 *     on them.
 *   - A Density stores coefficients of the coordinate volume element
 *     dt∧dx.  This is the single canonical representation: metric volume
 *     factors enter only through times_volume / hodge_star, so pairings are
 *     never double-weighted.
 *   - The dual pairing is the node-sum quadrature  ⟨u, φ⟩ = Σ u·φ·dt·dx
 *     over all nt·nx nodes (x periodic, t a finite window).
 *   - Lattice derivatives are centered single-step differences, periodic in
 *     x; in t they are centered at interior slices and one-sided at the two
 *     window ends (second-order for first derivatives, three-point for
 *     second derivatives).  The auxiliary Riemannian metric weighting the
 *     jet norms is the flat coordinate metric.
 */
#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "fieldlab/grid.hpp"

namespace fieldlab {

/// Real scalar lattice field: one value per node, row-major it*nx + ix.
struct FieldConfig {
  const GridSpacetime* st = nullptr;
  std::vector<double> v;

  double at(int it, int ix) const { return v[static_cast<size_t>(it) * st->nx + st->wrap_x(ix)]; }
  double& at(int it, int ix) { return v[static_cast<size_t>(it) * st->nx + st->wrap_x(ix)]; }

  static FieldConfig zeros(const GridSpacetime& st);
  static FieldConfig constant(const GridSpacetime& st, double c);
  /// Sample a function of the node coordinates t = it·dt, x = ix·dx.
  static FieldConfig sample(const GridSpacetime& st,
                            const std::function<double(double, double)>& fn);
};

/// Test functions (compactly supported weights) share the lattice-field
/// representation; their support is read off with support_nodes().
using TestFunction = FieldConfig;

/// Coefficient field of the coordinate volume element dt∧dx.
struct Density {
  const GridSpacetime* st = nullptr;
  std::vector<double> c;

  double at(int it, int ix) const { return c[static_cast<size_t>(it) * st->nx + st->wrap_x(ix)]; }
  double& at(int it, int ix) { return c[static_cast<size_t>(it) * st->nx + st->wrap_x(ix)]; }

  static Density zeros(const GridSpacetime& st);
};

/// True when both live on windows of identical shape and spacing.
bool same_grid(const GridSpacetime& a, const GridSpacetime& b);

/// Nodes where the field is nonzero.
NodeSet support_nodes(const FieldConfig& f);

/// Dual pairing ⟨u, φ⟩ = Σ_nodes u·φ·dt·dx.  Throws on grid mismatch.
double pair_density(const Density& u, const FieldConfig& phi);

/// φ ↦ φ·dμ_g: coefficients φ·√|det g| of the coordinate volume element.
Density times_volume(const GridSpacetime& st, const FieldConfig& phi);

/// Inverse weighting: coefficients divided by √|det g| (so that
/// hodge_star(times_volume(φ)) recovers φ).
FieldConfig hodge_star(const GridSpacetime& st, const Density& u);

/// Lattice jet of a field: the value and its centered-difference
/// derivatives up to second order, with the t-window conventions above.
struct Jet {
  FieldConfig dt, dx;            ///< first derivatives
  FieldConfig dtt, dtx, dxx;     ///< second derivatives
};

FieldConfig diff_t(const FieldConfig& phi);
FieldConfig diff_x(const FieldConfig& phi);
Jet lattice_jet(const FieldConfig& phi, int order);

/// Squared flat-metric jet norm Σ_{j≤k} |∇ʲφ|² per node, with
/// |∇¹φ|² = φ_t² + φ_x² and |∇²φ|² = φ_tt² + 2φ_tx² + φ_xx².
FieldConfig jet_norm_sq(const FieldConfig& phi, int k);

/// sup over K of √(Σ_{j≤k} |∇ʲφ|²).  K must be nonempty; k ≤ 2.
double sup_seminorm(const FieldConfig& phi, int k, const NodeSet& K);

/// sup over all nodes of |f|·√(Σ_{j≤k} |∇ʲφ|²).
double sup_seminorm_weighted(const FieldConfig& phi, int k, const TestFunction& f);

/// Squared local Sobolev seminorm Σ_{j≤k} Σ_nodes f²·|∇ʲφ|²·dt·dx.
double sobolev_sq(const FieldConfig& phi, int k, const TestFunction& f);

/// CSV serialization: one row per time slice, columns along x.
void write_csv(std::ostream& os, const GridSpacetime& st, const std::vector<double>& values);
std::vector<double> read_csv(std::istream& is, const GridSpacetime& st);

}  // namespace fieldlab
