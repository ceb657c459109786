/*
 * solver.hpp — Cauchy problems and fundamental solutions for LinearHypOp.
 *
 * The operator's equations live on node rows 0..nt−3: the stencil row at
 * `it` is the only one that reads row it+2, through the time-flux of the
 * cell row it+1, with coefficient −w4/ht² (nonzero wherever the operator
 * passed its hyperbolicity gate).  Everything here exploits that triangular
 * structure:
 *
 *   - delta_ret marches forward from two zero rows at the window bottom.
 *     Values outside the dependency cone are exact zeros, never just small,
 *     so support statements can be checked bitwise.
 *   - delta_adv is the transpose of delta_ret in the coefficient pairing
 *     Σ φ_i c_i dt·dx, computed by running the marching recurrence through
 *     backward substitution.  It inverts the operator exactly on densities
 *     clear of the bottom rows, vanishes on the top two rows, and makes the
 *     causal form antisymmetric to round-off.  delta_adv_marched solves the
 *     time-reversed problem instead and is kept as an independent cross-check
 *     of that definition; the two differ by the window-edge equations each
 *     satisfies, an O(h²) bulk discrepancy.
 *   - solve_cauchy poses data on an interior slice.  The wide stencil cannot
 *     restart a march mid-window (each step needs four known rows), so the
 *     solve superposes the 2·nx forward-marched basis solutions and matches
 *     them to the data rows through a dense factorization (SigmaSolver caches
 *     both).  Every equation row still holds to round-off.
 *
 * Cauchy data convention: φ₀ is the field on slice s, φ₁ the component of
 * the gradient along the future unit normal n, read at the half-step
 * between rows s and s+1.  A surrogate centered across rows s±1 would be
 * blind to the two-level computational mode of the update (adding the mode
 * changes no centered difference), so restriction with that convention is
 * not invertible; the half-step reading makes data ↔ (row s, row s+1) an
 * exact bijection and keeps restriction ∘ solve = identity.
 *
 * Solves are pure and deterministic; independent solves may run concurrently.
 */
#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "fieldlab/fields.hpp"
#include "fieldlab/grid.hpp"
#include "fieldlab/hyperbolic.hpp"

namespace fieldlab {

/// Rows this close to a window end are entangled with the cut: the bottom
/// two rows carry solve data, the top two lie outside every equation's
/// reach, and one more stencil reach keeps identities clear of both.
inline constexpr int window_margin = 2 + LinearHypOp::stencil_reach;

/// Field value and future-normal derivative on one slice (arrays length nx).
/// φ₁ is read at the half-step above row `slice`; see the header comment.
struct CauchyData {
  int slice = 0;
  std::vector<double> phi0, phi1;

  static CauchyData zeros(const GridSpacetime& st, int slice);
};

/// Future-directed unit normal of the constant-t slices at (it, ix):
/// n = −g♯dt / √(−g⁻¹(dt,dt)), components (n_t, n_x) with n_t > 0.
void future_unit_normal(const GridSpacetime& st, int it, int ix, double& n_t, double& n_x);

/// Read Cauchy data off a field: φ₀ = φ|row s, φ₁ = n_t·(φ[s+1]−φ[s])/dt +
/// n_x·∂xφ[s].  Exact inverse of the row reconstruction used by the solves.
CauchyData restrict_data(const GridSpacetime& st, const FieldConfig& phi, int slice);

/// Throws std::invalid_argument if P failed its hyperbolicity gate, or names
/// the first node whose characteristic slope exceeds the grid slope dx/dt.
void require_solvable(const LinearHypOp& P);

/// True when every node of `support` is at least `margin` rows away from
/// both window ends (the x direction is periodic and unconstrained).
bool clears_window_margin(const GridSpacetime& st, const NodeSet& support, int margin);

/// Shared machinery for solves anchored at one slice: the 2·nx forward
/// basis solutions and the factored matching system, built once per (P, Σ).
class SigmaSolver {
 public:
  SigmaSolver(const LinearHypOp& P, int slice);

  const LinearHypOp& op() const { return *P_; }
  int slice() const { return slice_; }

  /// Solve P φ = source with the given data on the anchor slice.  The
  /// residual on every equation row and the data reproduction are exact up
  /// to round-off.  data.slice must equal slice().
  FieldConfig solve(const CauchyData& data, const Density& source) const;

 private:
  const LinearHypOp* P_;
  int slice_;
  std::vector<std::vector<double>> basis_;  ///< 2·nx homogeneous marches
  std::vector<double> lu_;                  ///< factored matching matrix
  std::vector<int> piv_;
};

/// Solve P φ = source with prescribed data on data.slice.
FieldConfig solve_cauchy(const LinearHypOp& P, const CauchyData& data, const Density& source);

/// Homogeneous solve with a single datum: j = 0 poses `values` as φ₀ (φ₁ = 0),
/// j = 1 poses them as φ₁ (φ₀ = 0).
FieldConfig k_propagator(const LinearHypOp& P, int slice, int j,
                         const std::vector<double>& values);

/// Inhomogeneous solve with zero data on `slice`.  For sources supported
/// strictly above the data rows this reproduces delta_ret(source).
FieldConfig delta_sigma(const LinearHypOp& P, int slice, const Density& source);

/// Retarded solution: forward march with zero data on the bottom two rows.
/// Source coefficients on the top two rows lie outside every equation's
/// reach and are ignored; keep sources clear of the window ends (see
/// window_margin) wherever inversion identities matter.  Outside the
/// dependency cone of supp(source) the output is exactly zero.
FieldConfig delta_ret(const LinearHypOp& P, const Density& source);

/// Advanced solution: the exact transpose of delta_ret in the coefficient
/// pairing.  Vanishes on the top two rows; ignores source coefficients on
/// the bottom two.
FieldConfig delta_adv(const LinearHypOp& P, const Density& source);

/// Advanced solution computed the second way: retarded march on the
/// time-reversed operator, flipped back.  Cross-check only — see header.
FieldConfig delta_adv_marched(const LinearHypOp& P, const Density& source);

/// Causal propagator Δ = delta_ret − delta_adv.  P(Δv) vanishes on interior
/// equation rows; (u, v) ↦ pair(u, Δv) is antisymmetric to round-off.
FieldConfig causal_propagator(const LinearHypOp& P, const Density& source);

/// Turn a homogeneous solution u (P u ≈ 0) into a density v with Δv = u,
/// supported in the four rows [slice−2, slice+1]: v = −P(χ·u) for the sharp
/// past cutoff χ = 1{row < slice}, truncated to the collar.  The past-side
/// cutoff is the one the transpose-defined delta_adv inverts exactly;
/// requires window_margin ≤ slice ≤ nt−1−window_margin.
Density reconstruct_solution(const LinearHypOp& P, const FieldConfig& u, int slice);

enum class PropKind { ret, adv, sigma, k0, k1 };
const char* to_string(PropKind k);

/// Dense n×n matrix of the chosen propagator in the coefficient pairing
/// (column j = solve of the unit density at node j), row-major.  Guarded to
/// grids of at most 64×64 nodes.  `slice` is required for sigma/k kinds.
std::vector<double> propagator_matrix(const LinearHypOp& P, PropKind kind, int slice = -1);

/// Comma-separated rows, full double precision round trip.
void write_matrix_csv(std::ostream& os, const std::vector<double>& m, int rows, int cols);

/// Smooth one-parameter operator family.
using PFamily = std::function<LinearHypOp(double)>;

/// Probe inputs for resolvent_derivative_check: `source` feeds the ret /
/// adv / sigma kinds, `values` the k kinds; `slice` anchors sigma and k.
struct ResolventProbe {
  int slice = 0;
  Density source;
  std::vector<double> values;
};

struct ResolventReport {
  double lhs_norm = 0.0;   ///< ‖Richardson-extrapolated ∂λ(propagator probe)‖₂
  double rhs_norm = 0.0;   ///< ‖composed right-hand side‖₂
  double residual = 0.0;   ///< ‖difference‖₂
  double base_norm = 0.0;  ///< ‖propagator probe at λ₀‖₂ (scale anchor)
  double relative = 0.0;   ///< residual / max(rhs_norm, 1e−9·base_norm)
};

/// Verify the derivative-of-the-inverse identity for a smooth family:
/// the λ-derivative of each solution operator equals minus itself composed
/// with Ṗ composed with itself (with the zero-data solve taking the outer
/// slot for the k kinds).  The left side is a central difference in λ with
/// steps `step` and `step`/2, Richardson-extrapolated; Ṗ is formed the same
/// way from apply_density differences.
ResolventReport resolvent_derivative_check(const PFamily& family, double lambda0, double step,
                                           PropKind which, const ResolventProbe& probe);

}  // namespace fieldlab
