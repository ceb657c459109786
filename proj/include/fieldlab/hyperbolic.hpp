/*
 * hyperbolic.hpp — linear second-order lattice operators in cell-divergence
 * form.  A LinearHypOp is the exact Hessian of a first-jet action sum
 *
 *   S(φ) = Σ_cells dt·dx · w(cell) · λ(φ, ∂tφ, ∂xφ)      (centered stencils)
 *
 * evaluated at a background: nine per-cell coefficient arrays W[3α+β]
 * (slots 0 = value, 1 = ∂t, 2 = ∂x) applied as Σ_{α,β} Cα^T W_{αβ} Cβ.
 *
 * The class carries the closed-form principal symbol ĝ⁻¹ per node in two
 * guises whose causal cones mirror each other across the background light
 * cone (reciprocal characteristic speeds in 1+1):
 *   - ghat = (ĝ⁻¹)⁻¹, the characteristic metric — its null vectors are the
 *     rays signals actually follow, so it governs CFL bounds and support
 *     propagation;
 *   - lowered = g·ĝ⁻¹·g, the symbol with both slots lowered by the
 *     background metric — the object whose cone comparison with g expresses
 *     normal hyperbolicity (lowered ≲ g  ⇔  g ≲ ghat).
 * Normal hyperbolicity is gated on the lowered symbol; the lower-order
 * coefficient fields are reported separately.
 */
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fieldlab/fields.hpp"
#include "fieldlab/grid.hpp"

namespace fieldlab {

/// Per-cell stencil coefficients W[3α+β], node-indexed; rows 1..nt−2 carry
/// cells, rows 0 and nt−1 must stay zero.
using CellForm = std::array<std::vector<double>, 9>;

/// (Σ_{α,β} Cα^T W_{αβ} Cβ) v with centered C_t, C_x on interior cell rows.
/// Output is a density coefficient vector (pair_density supplies dt·dx).
std::vector<double> apply_cell_form(const GridSpacetime& st, const CellForm& w,
                                    const std::vector<double>& v);

/// Node-wise inversion of a symbol field m = ĝ⁻¹.  Nodes where |det m| ≤
/// 1e−10·scale² (scale = |m_tt| + 2|m_tx| + |m_xx|) are flagged degenerate
/// and left zero in ghat.
struct SymbolInverse {
  MetricField ghat;                     ///< ĝ per node (zero where degenerate)
  std::vector<std::uint8_t> degenerate; ///< 1 where the symbol does not invert
  int degenerate_count = 0;
  double min_abs_det = 0.0;
};
SymbolInverse invert_symbol(const GridSpacetime& st, const MetricField& ginv);

/// Sandwich g·m·g per node: lowers both contravariant slots of a symbol
/// field with the background metric.  In 1+1 the result's null directions
/// mirror those of m⁻¹ across the background light cone.
MetricField lower_symbol(const GridSpacetime& st, const MetricField& ginv);

/// Lower-order coefficient fields of the operator, recovered from the cell
/// form on interior rows 2..nt−3 by centered differences (zero elsewhere);
/// accurate to O(dt² + dx²):  P v ≈ ĝ⁻¹(∂,∂)v + a·∂v + b·v  after dividing
/// by the metric volume factor.
struct LowerOrder {
  std::vector<double> a_t, a_x, b;
};

class LinearHypOp {
 public:
  /// The symbol field is the closed-form ĝ⁻¹ the cell form discretizes;
  /// `variational` records that W came from a symmetric Hessian.
  LinearHypOp(const GridSpacetime& st, CellForm w, MetricField symbol,
              bool variational, std::string label);

  const GridSpacetime& grid() const { return *st_; }
  const CellForm& cells() const { return w_; }
  const std::string& label() const { return label_; }
  bool variational() const { return variational_; }
  /// Nodes a single application reads around a target node.
  static constexpr int stencil_reach = 2;

  /// P v as a density (dt·dx weighted, rows 1..nt−2 scatter to rows 0..nt−1).
  Density apply_density(const FieldConfig& v) const;
  /// P v as a field: apply_density divided by the metric volume √|g|.
  FieldConfig apply(const FieldConfig& v) const;

  /// Principal symbol ĝ⁻¹ per node and its inverse metric where defined.
  const MetricField& symbol() const { return symbol_; }
  const SymbolInverse& principal() const { return principal_; }
  /// The symbol with both slots lowered by the background metric, g·ĝ⁻¹·g.
  const MetricField& lowered() const { return lowered_; }

  /// True when every node has a Lorentzian symbol (det ĝ⁻¹ < 0, constant-t
  /// slices spacelike for the characteristic metric ĝ) and the lowered
  /// symbol's cones embed in the background metric's across the grid.
  bool normally_hyperbolic() const { return hyperbolic_; }
  const std::string& hyperbolicity_note() const { return why_; }

  /// Largest characteristic speed of ĝ over the grid, skipping degenerate
  /// or non-Lorentzian nodes; bounds the domain-of-dependence slope.
  double max_char_speed() const { return max_speed_; }

  LowerOrder lower_order() const;

 private:
  const GridSpacetime* st_;
  CellForm w_;
  MetricField symbol_;
  SymbolInverse principal_;
  MetricField lowered_;
  bool variational_;
  std::string label_;
  bool hyperbolic_ = false;
  std::string why_;
  double max_speed_ = 0.0;
};

}  // namespace fieldlab
