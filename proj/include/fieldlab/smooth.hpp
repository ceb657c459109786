/*
 * smooth.hpp — scalar calculus building blocks for the functional algebra:
 * third-order univariate jets, outer maps ψ: ℝⁿ → ℝ with closed-form
 * partials to order 3, and pointwise first-jet densities λ(u, p, q) with
 * partials to order 3.
 */
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace fieldlab {

/// Value and first three derivatives of a scalar function along one curve
/// parameter; arithmetic propagates them exactly (truncated Taylor algebra).
struct Jet3 {
  double f = 0.0, d1 = 0.0, d2 = 0.0, d3 = 0.0;

  static Jet3 variable(double x) { return {x, 1.0, 0.0, 0.0}; }
  static Jet3 constant(double c) { return {c, 0.0, 0.0, 0.0}; }
};

Jet3 operator+(const Jet3& a, const Jet3& b);
Jet3 operator-(const Jet3& a, const Jet3& b);
Jet3 operator-(const Jet3& a);
Jet3 operator*(const Jet3& a, const Jet3& b);
Jet3 operator*(double s, const Jet3& a);
Jet3 operator/(const Jet3& a, const Jet3& b);
Jet3 operator+(const Jet3& a, double c);
Jet3 operator-(double c, const Jet3& a);

/// (h∘v) for h given by its derivatives at v.f (univariate chain rule).
Jet3 compose1(double h0, double h1, double h2, double h3, const Jet3& v);

Jet3 exp(const Jet3& v);
Jet3 sin(const Jet3& v);
Jet3 cos(const Jet3& v);
Jet3 tanh(const Jet3& v);
Jet3 pow_int(const Jet3& v, int n);

/// Smooth transition equal to 0 for x ≤ 0 and 1 for x ≥ 1, with all
/// derivatives vanishing at both ends: e^{-1/x} / (e^{-1/x} + e^{-1/(1-x)}).
Jet3 smoothstep01(const Jet3& x);

/// Smooth even plateau cutoff: 1 for |t| ≤ 1, 0 for |t| ≥ 2, built from
/// smoothstep01 on the shell 1 < |t| < 2.
Jet3 plateau_cutoff(const Jet3& t);

/// Truncated trivariate Taylor polynomial of total degree ≤ 3 around an
/// expansion point: c[i][j][k] multiplies δu^i δp^j δq^k for i+j+k ≤ 3.
/// Products drop every term of total degree > 3, so the retained
/// coefficients — and hence all partial derivatives up to order three at
/// the expansion point — stay exact through +, −, *.
struct Cubic3 {
  double c[4][4][4] = {};

  static Cubic3 constant(double a);
  /// The coordinate function of one slot (0 = u, 1 = p, 2 = q) expanded at x0.
  static Cubic3 variable(int slot, double x0);

  double value() const { return c[0][0][0]; }
  /// ∂^{a+b+c} / ∂u^a ∂p^b ∂q^c at the expansion point, a+b+c ≤ 3.
  double partial(int a, int b, int k) const;
};

Cubic3 operator+(const Cubic3& a, const Cubic3& b);
Cubic3 operator-(const Cubic3& a, const Cubic3& b);
Cubic3 operator*(const Cubic3& a, const Cubic3& b);
Cubic3 operator*(double s, const Cubic3& a);
Cubic3 operator+(const Cubic3& a, double s);

/// Outer map ψ: ℝⁿ → ℝ with partial derivatives available to total order 3.
class OuterMap {
 public:
  virtual ~OuterMap() = default;
  virtual int arity() const = 0;
  virtual double value(const std::vector<double>& y) const = 0;
  /// ∂_{idx₁}…∂_{idx_k} ψ at y, with k = idx.size() ≤ 3.
  virtual double partial(const std::vector<int>& idx, const std::vector<double>& y) const = 0;
  virtual std::string name() const = 0;
};

using OuterPtr = std::shared_ptr<const OuterMap>;

/// Univariate map defined by a Jet3-valued body (closed-form derivatives).
OuterPtr univariate_map(std::string name, std::function<Jet3(const Jet3&)> body);

OuterPtr identity_map();
OuterPtr exp_map();
OuterPtr tanh_map();
/// t ↦ plateau_cutoff(t / radius).
OuterPtr plateau_map(double radius);
/// t ↦ exp(1 − plateau_cutoff(t / radius)).
OuterPtr exp_shell_map(double radius);

/// Multivariate polynomial Σ c·y₁^{e₁}…y_n^{e_n}.
struct Monomial {
  double coeff;
  std::vector<int> exponents;
};
OuterPtr polynomial_map(int arity, std::vector<Monomial> terms, std::string name = "polynomial");

/// Pointwise density λ(u, p, q) of the first jet (u = φ, p = ∂_t φ,
/// q = ∂_x φ) with closed-form partials to total order 3.
class LocalDensity {
 public:
  virtual ~LocalDensity() = default;
  virtual double value(double u, double p, double q) const = 0;
  /// ∂^{a+b+c} λ / ∂u^a ∂p^b ∂q^c with a+b+c ≤ 3.
  virtual double partial(int a, int b, int c, double u, double p, double q) const = 0;
  virtual std::string name() const = 0;
};

using DensityPtr = std::shared_ptr<const LocalDensity>;

/// Fixed catalogue: "u", "u^2", "u^3", "u^4", "jet^2" (u²+p²+q²),
/// "pq" (p·q), "sin_u".  Throws on unknown names.
DensityPtr make_local_density(const std::string& name);

}  // namespace fieldlab
