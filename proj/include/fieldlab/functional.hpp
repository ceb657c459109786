/*
 * functional.hpp — the algebra of functionals with space-time support:
 * expression trees over lattice fields with evaluation, directional
 * derivatives to order 3, Riesz gradient densities, second-derivative
 * kernels, support estimation, additivity/locality checks, smooth
 * functional calculus, and decomposition into small-support pieces.
 *
 * Scalars: evaluation is complex-valued so the *-algebra involution has
 * somewhere to act; the derivative calculus is real, and any tree whose
 * scalars have nonzero imaginary part rejects derivative calls.
 */
#pragma once

#include <complex>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fieldlab/fields.hpp"
#include "fieldlab/grid.hpp"
#include "fieldlab/smooth.hpp"

namespace fieldlab {

using Complex = std::complex<double>;

class Functional;
using FuncPtr = std::shared_ptr<const Functional>;

/// Directions for a directional derivative; size 1 to 3.
using DirList = std::vector<const FieldConfig*>;

class Functional {
 public:
  virtual ~Functional() = default;

  const GridSpacetime& grid() const { return *st_; }
  /// True when every scalar in the tree is real.
  bool is_real() const { return real_; }
  /// False for non-differentiable nodes (sup-seminorm functionals).
  bool differentiable() const { return differentiable_; }
  /// Upper bound for the space-time support, when one is known.
  const std::optional<NodeSet>& declared_support() const { return declared_; }

  Complex evaluate_c(const FieldConfig& phi) const;
  /// Real evaluation; rejects trees with complex scalars.
  double evaluate(const FieldConfig& phi) const;
  /// k-th directional derivative, k = dirs.size() ∈ {1, 2, 3}.
  double derivative(const FieldConfig& phi, const DirList& dirs) const;
  /// Density g with ⟨g, v⟩ equal to the first derivative along v, for all v.
  Density gradient_density(const FieldConfig& phi) const;
  /// Density u with ⟨u, v⟩ equal to the second derivative along (v, w).
  Density kernel2_apply(const FieldConfig& phi, const FieldConfig& w) const;

 protected:
  explicit Functional(const GridSpacetime& st) : st_(&st) {}

  virtual Complex eval_c_impl(const FieldConfig& phi) const = 0;
  virtual double deriv_impl(const FieldConfig& phi, const DirList& dirs) const = 0;
  /// accum += scale · (gradient density coefficients).
  virtual void add_gradient(const FieldConfig& phi, double scale,
                            std::vector<double>& accum) const = 0;
  /// accum += scale · (kernel-applied density coefficients along w).
  virtual void add_kernel2(const FieldConfig& phi, const std::vector<double>& w, double scale,
                           std::vector<double>& accum) const = 0;

  void set_real(bool r) { real_ = r; }
  void set_differentiable(bool d) { differentiable_ = d; }
  void set_declared(NodeSet s) { declared_ = std::move(s); }

  void require_phi(const FieldConfig& phi) const;

  // Node implementations live in one translation unit and cooperate through
  // the protected interface.
  friend class SumNode;
  friend class ScalarMulNode;
  friend class ProductNode;
  friend class SmoothComposeNode;
  friend class StarNode;
  friend class MaskedNode;
  friend class DomainNode;

 private:
  const GridSpacetime* st_;
  bool real_ = true;
  bool differentiable_ = true;
  std::optional<NodeSet> declared_;
};

// ---------------------------------------------------------------------------
// Constructors
// ---------------------------------------------------------------------------

FuncPtr constant_functional(const GridSpacetime& st, Complex z);

/// F(φ) = ⟨ω, φ⟩ (coordinate-measure pairing with a fixed density).
FuncPtr linear_functional(const GridSpacetime& st, Density omega);

/// F(φ) = Σ_p f(p)·λ(ψ, ∂_tψ, ∂_xψ)(p)·dt·dx with ψ = φ − shift.
FuncPtr local_term(const GridSpacetime& st, TestFunction f, DensityPtr lambda,
                   std::optional<FieldConfig> shift = {});

/// F(φ) = ‖φ‖_{∞,k,K}.  Evaluation only: not differentiable.
FuncPtr sup_functional(const GridSpacetime& st, int k, NodeSet K);

/// F(φ) = squared local Sobolev seminorm of φ − shift with weight f.
FuncPtr sobolev_functional(const GridSpacetime& st, int k, TestFunction f,
                           std::optional<FieldConfig> shift = {});

/// F(φ) = c0 + ⟨ω, φ⟩ + ½·⟨φ, W φ⟩ with W a dense symmetric kernel
/// (row-major n×n, symmetrized on input, weighted by coordinate measure).
FuncPtr regular_kernel(const GridSpacetime& st, Complex c0, Density omega,
                       std::vector<double> kernel);

FuncPtr fsum(std::vector<FuncPtr> terms);
FuncPtr fscale(Complex a, FuncPtr f);
FuncPtr fproduct(FuncPtr f, FuncPtr g);
/// ψ∘(F₁, …, F_n); the children must be real trees.
FuncPtr smooth_compose(OuterPtr psi, std::vector<FuncPtr> children);
/// Involution F*(φ) = conj(F(φ)).
FuncPtr star(FuncPtr f);
/// F(φ·m) — precomposition with a pointwise mask.
FuncPtr masked(FuncPtr f, FieldConfig mask);
/// Restricts the domain: every entry point throws std::domain_error when
/// the predicate rejects φ.
FuncPtr restrict_domain(FuncPtr f, std::function<bool(const FieldConfig&)> pred,
                        std::string what);

/// Bump χ(R⁻²·‖φ−center‖²_{2,k,f}): equals 1 on the seminorm ball of
/// radius R, vanishes where the seminorm exceeds √2·R.
FuncPtr bump_functional(const GridSpacetime& st, int k, TestFunction f, FieldConfig center,
                        double radius);

/// exp(1 − χ(G(φ)/R)) with G(φ) = ∫fφ dμ_g; f must be nonnegative and
/// normalized to ∫f dμ_g = 1 so sup-norm balls control G.
FuncPtr exp_cutoff_functional(const GridSpacetime& st, TestFunction f, double radius);

// ---------------------------------------------------------------------------
// Analysis
// ---------------------------------------------------------------------------

struct CheckReport {
  bool pass = false;
  double worst_residual = 0.0;
  int trials = 0;
  std::string note;
};

/// Randomized additivity test: F(φ₁+φ₂+φ₃) = F(φ₁+φ₂) − F(φ₂) + F(φ₂+φ₃)
/// for disjointly supported φ₁, φ₃ (with a stencil-width gap).
CheckReport check_additivity(const Functional& F, int trials, uint64_t seed,
                             double tol = 1e-10);

/// Randomized locality test: the second derivative vanishes on direction
/// pairs with stencil-separated supports.
CheckReport check_locality(const Functional& F, int trials, uint64_t seed,
                           double tol = 1e-10);

/// Seeded pseudorandom probe configurations of the given amplitude.
std::vector<FieldConfig> default_probes(const GridSpacetime& st, int count, uint64_t seed,
                                        double amplitude);

/// Estimated support: union over probes of the nodes where the gradient
/// density exceeds rel_tol times its grid maximum.  Checked against the
/// declared support when one exists.
NodeSet spacetime_support(const Functional& F, const std::vector<FieldConfig>& probes,
                          double rel_tol = 1e-12);

/// Coordinate ball on the lattice (x-distance wraps around the circle).
struct Ball {
  int it, ix;
  double radius;
};

NodeSet ball_nodes(const GridSpacetime& st, const Ball& b);

struct SignedTerm {
  /// Net inclusion–exclusion coefficient; ±1 for the pieces supported on
  /// the cover (the constant F(0) term can carry larger multiplicity).
  double sign;
  std::vector<int> members;     ///< cover indices I defining the mask Σ_{i∈I} χ_i
  FuncPtr term;                 ///< F(φ·Σ_{i∈I}χ_i)
};

/// Decomposes an additive functional into signed pieces supported near the
/// cover's balls: Σ sign·term = F, each term supported in the union of the
/// pairwise-intersecting balls its mask draws from.  stencil_radius is the
/// reach of the functional's lattice stencils (2 for first-jet local terms,
/// 3 for second-order Sobolev forms): balls whose stencil dilations meet
/// are treated as intersecting.
std::vector<SignedTerm> decompose_small_support(const FuncPtr& F, const std::vector<Ball>& cover,
                                                int stencil_radius, int additivity_trials,
                                                uint64_t seed);

}  // namespace fieldlab
