/*
 * lagrangian.hpp — generalized Lagrangians on lattice spacetimes: window
 * families f ↦ L(f) of functionals, their localized directional
 * derivatives, Euler–Lagrange densities, exact Hessians as LinearHypOp,
 * principal metrics, hyperbolicity classification, and triviality /
 * equivalence probes.
 *
 * The jet-density entries discretize the action as the interior cell sum
 *
 *   L(f)(φ) = Σ_{1 ≤ it ≤ nt−2, ix} dt·dx · f·√|g| · λ(φ, ∂tφ, ∂xφ)
 *
 * with fully centered differences, so the equations of motion, their
 * linearization, and the third variation are exact derivatives of one and
 * the same finite sum.
 */
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fieldlab/fields.hpp"
#include "fieldlab/functional.hpp"
#include "fieldlab/grid.hpp"
#include "fieldlab/hyperbolic.hpp"
#include "fieldlab/smooth.hpp"

namespace fieldlab {

/// Per-node first-jet density with exact partials to order 3, delivered as
/// a truncated Taylor expansion at the evaluation jet.
class JetDensity {
 public:
  virtual ~JetDensity() = default;
  virtual Cubic3 taylor(int it, int ix, double u, double p, double q) const = 0;
  virtual std::string name() const = 0;
};

using JetDensityPtr = std::shared_ptr<const JetDensity>;

/// A window family f ↦ L(f).  Catalogue entries share two invariants,
/// probed by the analysis routines below: supp L(f) stays inside a stencil
/// dilation of supp f, and windows add over f-disjoint supports.
class GeneralizedLagrangian {
 public:
  /// λ = −½[g⁻¹(dφ, dφ) + mass_sq·φ²].
  static GeneralizedLagrangian free_field(const GridSpacetime& st, double mass_sq = 0.0);

  /// λ = −½[G + (ε/2)(1 + φ²)·G² + mass_sq·φ²],  G = g⁻¹(dφ, dφ), ε ≥ 0.
  /// The self-interaction deforms the light cones of the linearized
  /// dynamics as a function of the background jet.
  static GeneralizedLagrangian example_epsilon(const GridSpacetime& st, double epsilon,
                                               double mass_sq = 0.0);

  /// L(f)(φ) = ‖φ‖²_{2,order,f} (squared windowed Sobolev seminorm).  A
  /// window family that is not an action: it has no density, no
  /// Euler–Lagrange operator beyond its gradient, and no Hessian stencil.
  static GeneralizedLagrangian sobolev(const GridSpacetime& st, int order);

  /// Jet action with a user catalogue density λ(u, p, q).
  static GeneralizedLagrangian local_density(const GridSpacetime& st, DensityPtr lambda);

  /// Total-divergence family L(f)(φ) = Σ dt·dx·(∂t f)·√|g|·j(φ, ∂tφ, ∂xφ):
  /// each window only sees f through its ramp, so the family moves no
  /// equations of motion (it is trivial).
  static GeneralizedLagrangian divergence_current(const GridSpacetime& st, DensityPtr current);

  /// The window functional L(f).
  FuncPtr operator()(const TestFunction& f) const;

  const GridSpacetime& grid() const { return *st_; }
  const std::string& name() const { return name_; }
  double epsilon() const { return epsilon_; }
  double mass_sq() const { return mass_sq_; }
  /// True for the first-jet action entries (everything except sobolev):
  /// those support el_operator / linearize / principal_metric.
  bool jet_action() const { return density_ != nullptr; }
  /// True for the metric entries free_field / example_epsilon, whose
  /// symbol has the closed-form cone classification.
  bool metric_family() const { return metric_family_; }
  /// True for divergence_current: windows enter through ∂t f only.
  bool divergence_form() const { return divergence_; }
  const JetDensityPtr& density() const { return density_; }
  /// Weight per cell multiplying √|g|·λ for a window f: f itself for the
  /// action entries, the centered ∂t f for divergence_current.
  std::vector<double> window_weight(const TestFunction& f) const;

 private:
  GeneralizedLagrangian(const GridSpacetime& st, std::string name);

  const GridSpacetime* st_;
  std::string name_;
  JetDensityPtr density_;              // null for sobolev
  bool divergence_ = false;            // weight = ∂t f instead of f
  bool metric_family_ = false;
  int sobolev_order_ = 0;
  double epsilon_ = 0.0;
  double mass_sq_ = 0.0;
};

// --- localized calculus -----------------------------------------------------

/// D^k L(f)[φ](dirs) for any window f ≡ 1 on a stencil neighborhood of a
/// compactly supported direction — the value is cutoff-independent, and is
/// computed with two different windows and cross-checked exactly.  Requires
/// 1 ≤ dirs.size() ≤ 3 and at least one direction supported in time rows
/// [2, nt−3]; throws std::invalid_argument when every direction touches
/// the time-window boundary.
double el_derivative(const GeneralizedLagrangian& L, const FieldConfig& phi, const DirList& dirs);

/// Euler–Lagrange density E(φ): the exact gradient of the unit-window
/// action, satisfying ⟨E(φ), v⟩ = el_derivative(L, φ, {v}) for interior v.
/// Carries the metric volume factor (it is a density, not a field).
Density el_operator(const GeneralizedLagrangian& L, const FieldConfig& phi);

/// Exact Hessian of the unit-window action at φ₀, as a divergence-form
/// stencil operator carrying the closed-form principal symbol
///   ĝ⁻¹ = α·g⁻¹ + 2ε(1+φ₀²)·(g♯dφ₀)⊗(g♯dφ₀),  α = 1 + ε(1+φ₀²)G.
/// Throws for entries that are not jet actions.
LinearHypOp linearize(const GeneralizedLagrangian& L, const FieldConfig& phi0);

/// Density u with ⟨u, c⟩ = D³L(1)[φ](c, a, b): the third variation with
/// two slots filled — the derivative of the Hessian along a background
/// motion.  Zero for quadratic families.
Density second_linearization(const GeneralizedLagrangian& L, const FieldConfig& phi,
                             const FieldConfig& a, const FieldConfig& b);

// --- principal symbol and cones ----------------------------------------------

struct PrincipalMetricReport {
  MetricField ginv;        ///< ĝ⁻¹ per node (closed form at node jets)
  SymbolInverse inverse;   ///< ĝ where it exists + degeneracy flags
  MetricField lowered;     ///< g·ĝ⁻¹·g, the symbol lowered by the background
};

/// Closed-form principal metric of the linearized dynamics at φ₀.
/// Degenerate nodes are reported, not fatal.
PrincipalMetricReport principal_metric(const GeneralizedLagrangian& L, const FieldConfig& phi0);

enum class NodeHyperbolicity : int { reversed = -1, degenerate = 0, subluminal = 1 };

struct HyperbolicityReport {
  std::vector<NodeHyperbolicity> node_class;
  /// Classifier value G + 1/(2ε(1+φ₀²)) per node (+∞ when ε = 0).
  std::vector<double> classifier;
  int n_subluminal = 0, n_degenerate = 0, n_reversed = 0;
  /// Normally hyperbolic relative to g iff every node is subluminal.
  bool nh_holds = false;
};

/// Background classification for the metric families: the sign of
/// G + 1/(2ε(1+φ₀²)) at each node (G = g⁻¹(dφ₀, dφ₀)) splits backgrounds
/// into subluminal (+), degenerate (0), and reversed (−) cones.  Throws
/// for non-metric entries.
HyperbolicityReport hyperbolicity_domain(const GeneralizedLagrangian& L, const FieldConfig& phi0);

// --- triviality and equivalence ----------------------------------------------

/// Any window family, catalogue or composite (sums, differences).
using WindowMap = std::function<FuncPtr(const TestFunction&)>;

struct TrivialityReport {
  bool trivial = false;
  NodeSet observed;  ///< union over probes of estimated supp L(f)
  NodeSet allowed;   ///< union of stencil-dilated ramp regions of the f's
  std::string note;
};

/// A family is trivial when each window only depends on f through its
/// ramp: probed supp L(f) must stay inside the dilated region where f is
/// non-constant.  Probes should include windows with interior plateaus.
TrivialityReport is_trivial(const GridSpacetime& st, const WindowMap& L,
                            const std::vector<TestFunction>& window_probes, int phi_trials,
                            std::uint64_t seed);
TrivialityReport is_trivial(const GeneralizedLagrangian& L,
                            const std::vector<TestFunction>& window_probes, int phi_trials,
                            std::uint64_t seed);

/// Two families are equivalent when their difference is trivial: they then
/// generate identical equations of motion.
TrivialityReport lagrangians_equivalent(const GeneralizedLagrangian& A,
                                        const GeneralizedLagrangian& B,
                                        const std::vector<TestFunction>& window_probes,
                                        int phi_trials, std::uint64_t seed);

/// Additivity of windows, L(f₁+f₂+f₃) = L(f₁+f₂) − L(f₂) + L(f₂+f₃), on
/// random triples whose outer windows f₁, f₃ have disjoint supports.
CheckReport check_window_additivity(const GridSpacetime& st, const WindowMap& L, int trials,
                                    std::uint64_t seed, double tol = 1e-10);

/// Raised-cosine plateau window: 1 on the inner box, cosine ramps of the
/// given width down to 0 at the box [t0, t1]×[x0, x1] (plain x interval,
/// no wrap; the full x range when x1 − x0 + 1 ≥ nx).
TestFunction ramp_mask(const GridSpacetime& st, int t0, int t1, int x0, int x1, int ramp);

/// Nodes where f differs from one of its 4-neighbors (the discrete ramp).
NodeSet mask_ramp_nodes(const TestFunction& f);

// --- equations-of-motion interface --------------------------------------------

/// The Euler–Lagrange operator of a fixed family: evaluation, exact
/// linearization, and the second linearization in one object.
class ELOperator {
 public:
  explicit ELOperator(GeneralizedLagrangian L);

  const GeneralizedLagrangian& lagrangian() const { return L_; }
  Density operator()(const FieldConfig& phi) const { return el_operator(L_, phi); }
  LinearHypOp linearize(const FieldConfig& phi0) const { return fieldlab::linearize(L_, phi0); }
  Density second_linearization(const FieldConfig& phi, const FieldConfig& a,
                               const FieldConfig& b) const {
    return fieldlab::second_linearization(L_, phi, a, b);
  }

 private:
  GeneralizedLagrangian L_;
};

}  // namespace fieldlab
