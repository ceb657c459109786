#include "fieldlab/smooth.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace fieldlab {

Jet3 operator+(const Jet3& a, const Jet3& b) {
  return {a.f + b.f, a.d1 + b.d1, a.d2 + b.d2, a.d3 + b.d3};
}

Jet3 operator-(const Jet3& a, const Jet3& b) {
  return {a.f - b.f, a.d1 - b.d1, a.d2 - b.d2, a.d3 - b.d3};
}

Jet3 operator-(const Jet3& a) { return {-a.f, -a.d1, -a.d2, -a.d3}; }

Jet3 operator*(const Jet3& a, const Jet3& b) {
  return {a.f * b.f,
          a.d1 * b.f + a.f * b.d1,
          a.d2 * b.f + 2.0 * a.d1 * b.d1 + a.f * b.d2,
          a.d3 * b.f + 3.0 * a.d2 * b.d1 + 3.0 * a.d1 * b.d2 + a.f * b.d3};
}

Jet3 operator*(double s, const Jet3& a) { return {s * a.f, s * a.d1, s * a.d2, s * a.d3}; }

Jet3 operator+(const Jet3& a, double c) { return {a.f + c, a.d1, a.d2, a.d3}; }

Jet3 operator-(double c, const Jet3& a) { return {c - a.f, -a.d1, -a.d2, -a.d3}; }

Jet3 compose1(double h0, double h1, double h2, double h3, const Jet3& v) {
  return {h0,
          h1 * v.d1,
          h2 * v.d1 * v.d1 + h1 * v.d2,
          h3 * v.d1 * v.d1 * v.d1 + 3.0 * h2 * v.d1 * v.d2 + h1 * v.d3};
}

namespace {
Jet3 recip(const Jet3& v) {
  const double r = 1.0 / v.f;
  return compose1(r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r, v);
}
}  // namespace

Jet3 operator/(const Jet3& a, const Jet3& b) { return a * recip(b); }

Jet3 exp(const Jet3& v) {
  const double e = std::exp(v.f);
  return compose1(e, e, e, e, v);
}

Jet3 sin(const Jet3& v) {
  const double s = std::sin(v.f), c = std::cos(v.f);
  return compose1(s, c, -s, -c, v);
}

Jet3 cos(const Jet3& v) {
  const double s = std::sin(v.f), c = std::cos(v.f);
  return compose1(c, -s, -c, s, v);
}

Jet3 tanh(const Jet3& v) {
  const double th = std::tanh(v.f);
  const double h1 = 1.0 - th * th;
  const double h2 = -2.0 * th * h1;
  const double h3 = h1 * (6.0 * th * th - 2.0);
  return compose1(th, h1, h2, h3, v);
}

Jet3 pow_int(const Jet3& v, int n) {
  if (n < 0) throw std::invalid_argument("pow_int: negative exponent");
  Jet3 acc = Jet3::constant(1.0);
  for (int i = 0; i < n; ++i) acc = acc * v;
  return acc;
}

Jet3 smoothstep01(const Jet3& x) {
  // The transition has all derivatives flushed to zero (below double
  // precision) this close to the ends, so constant jets are exact there.
  if (x.f <= 1e-30) return Jet3::constant(0.0);
  if (x.f >= 1.0 - 1e-16) return Jet3::constant(1.0);
  Jet3 a = exp(-recip(x));
  Jet3 b = exp(-recip(1.0 - x));
  return a / (a + b);
}

Jet3 plateau_cutoff(const Jet3& t) {
  Jet3 s = t.f < 0.0 ? -t : t;
  if (s.f <= 1.0) return Jet3::constant(1.0);
  if (s.f >= 2.0) return Jet3::constant(0.0);
  return smoothstep01(2.0 - s);
}

// ---------------------------------------------------------------------------
// Trivariate truncated Taylor algebra
// ---------------------------------------------------------------------------

Cubic3 Cubic3::constant(double a) {
  Cubic3 r;
  r.c[0][0][0] = a;
  return r;
}

Cubic3 Cubic3::variable(int slot, double x0) {
  if (slot < 0 || slot > 2) throw std::invalid_argument("Cubic3::variable: slot must be 0, 1, or 2");
  Cubic3 r;
  r.c[0][0][0] = x0;
  r.c[slot == 0][slot == 1][slot == 2] = 1.0;
  return r;
}

double Cubic3::partial(int a, int b, int k) const {
  if (a < 0 || b < 0 || k < 0 || a + b + k > 3)
    throw std::invalid_argument("Cubic3::partial: order must be between 0 and 3");
  static const double fact[4] = {1.0, 1.0, 2.0, 6.0};
  return c[a][b][k] * (fact[a] * fact[b] * fact[k]);
}

Cubic3 operator+(const Cubic3& a, const Cubic3& b) {
  Cubic3 r;
  for (int i = 0; i <= 3; ++i)
    for (int j = 0; i + j <= 3; ++j)
      for (int k = 0; i + j + k <= 3; ++k) r.c[i][j][k] = a.c[i][j][k] + b.c[i][j][k];
  return r;
}

Cubic3 operator-(const Cubic3& a, const Cubic3& b) {
  Cubic3 r;
  for (int i = 0; i <= 3; ++i)
    for (int j = 0; i + j <= 3; ++j)
      for (int k = 0; i + j + k <= 3; ++k) r.c[i][j][k] = a.c[i][j][k] - b.c[i][j][k];
  return r;
}

Cubic3 operator*(const Cubic3& a, const Cubic3& b) {
  Cubic3 r;
  for (int i = 0; i <= 3; ++i)
    for (int j = 0; i + j <= 3; ++j)
      for (int k = 0; i + j + k <= 3; ++k) {
        if (a.c[i][j][k] == 0.0) continue;
        for (int l = 0; i + j + k + l <= 3; ++l)
          for (int m = 0; i + j + k + l + m <= 3; ++m)
            for (int n = 0; i + j + k + l + m + n <= 3; ++n)
              r.c[i + l][j + m][k + n] += a.c[i][j][k] * b.c[l][m][n];
      }
  return r;
}

Cubic3 operator*(double s, const Cubic3& a) {
  Cubic3 r;
  for (int i = 0; i <= 3; ++i)
    for (int j = 0; i + j <= 3; ++j)
      for (int k = 0; i + j + k <= 3; ++k) r.c[i][j][k] = s * a.c[i][j][k];
  return r;
}

Cubic3 operator+(const Cubic3& a, double s) {
  Cubic3 r = a;
  r.c[0][0][0] += s;
  return r;
}

// ---------------------------------------------------------------------------
// Outer maps
// ---------------------------------------------------------------------------

namespace {

class UnivariateMap final : public OuterMap {
 public:
  UnivariateMap(std::string name, std::function<Jet3(const Jet3&)> body)
      : name_(std::move(name)), body_(std::move(body)) {}

  int arity() const override { return 1; }

  double value(const std::vector<double>& y) const override {
    return body_(Jet3::variable(y.at(0))).f;
  }

  double partial(const std::vector<int>& idx, const std::vector<double>& y) const override {
    if (idx.size() > 3) throw std::invalid_argument("OuterMap: order above 3");
    for (int i : idx)
      if (i != 0) throw std::invalid_argument("UnivariateMap: component index out of range");
    Jet3 j = body_(Jet3::variable(y.at(0)));
    switch (idx.size()) {
      case 0: return j.f;
      case 1: return j.d1;
      case 2: return j.d2;
      default: return j.d3;
    }
  }

  std::string name() const override { return name_; }

 private:
  std::string name_;
  std::function<Jet3(const Jet3&)> body_;
};

class PolynomialMap final : public OuterMap {
 public:
  PolynomialMap(int arity, std::vector<Monomial> terms, std::string name)
      : arity_(arity), terms_(std::move(terms)), name_(std::move(name)) {
    for (const auto& m : terms_)
      if (static_cast<int>(m.exponents.size()) != arity_)
        throw std::invalid_argument("polynomial_map: exponent arity mismatch");
  }

  int arity() const override { return arity_; }

  double value(const std::vector<double>& y) const override { return partial({}, y); }

  double partial(const std::vector<int>& idx, const std::vector<double>& y) const override {
    if (idx.size() > 3) throw std::invalid_argument("OuterMap: order above 3");
    std::vector<int> m(static_cast<size_t>(arity_), 0);
    for (int i : idx) {
      if (i < 0 || i >= arity_)
        throw std::invalid_argument("PolynomialMap: component index out of range");
      ++m[i];
    }
    double acc = 0.0;
    for (const auto& term : terms_) {
      double t = term.coeff;
      for (int j = 0; j < arity_ && t != 0.0; ++j) {
        int e = term.exponents[j];
        if (m[j] > e) {
          t = 0.0;
          break;
        }
        for (int l = 0; l < m[j]; ++l) t *= static_cast<double>(e - l);
        int rem = e - m[j];
        for (int l = 0; l < rem; ++l) t *= y.at(j);
      }
      acc += t;
    }
    return acc;
  }

  std::string name() const override { return name_; }

 private:
  int arity_;
  std::vector<Monomial> terms_;
  std::string name_;
};

}  // namespace

OuterPtr univariate_map(std::string name, std::function<Jet3(const Jet3&)> body) {
  return std::make_shared<UnivariateMap>(std::move(name), std::move(body));
}

OuterPtr identity_map() {
  return univariate_map("identity", [](const Jet3& t) { return t; });
}

OuterPtr exp_map() {
  return univariate_map("exp", [](const Jet3& t) { return exp(t); });
}

OuterPtr tanh_map() {
  return univariate_map("tanh", [](const Jet3& t) { return tanh(t); });
}

OuterPtr plateau_map(double radius) {
  return univariate_map("plateau", [radius](const Jet3& t) {
    return plateau_cutoff((1.0 / radius) * t);
  });
}

OuterPtr exp_shell_map(double radius) {
  return univariate_map("exp-shell", [radius](const Jet3& t) {
    return exp(1.0 - plateau_cutoff((1.0 / radius) * t));
  });
}

OuterPtr polynomial_map(int arity, std::vector<Monomial> terms, std::string name) {
  return std::make_shared<PolynomialMap>(arity, std::move(terms), std::move(name));
}

// ---------------------------------------------------------------------------
// Local densities
// ---------------------------------------------------------------------------

namespace {

/// Density defined by a table-free closed-form switch on the multi-index.
class SwitchDensity final : public LocalDensity {
 public:
  using Fn = std::function<double(int, int, int, double, double, double)>;
  SwitchDensity(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) {}

  double value(double u, double p, double q) const override { return fn_(0, 0, 0, u, p, q); }

  double partial(int a, int b, int c, double u, double p, double q) const override {
    if (a < 0 || b < 0 || c < 0 || a + b + c > 3)
      throw std::invalid_argument("LocalDensity: order above 3");
    return fn_(a, b, c, u, p, q);
  }

  std::string name() const override { return name_; }

 private:
  std::string name_;
  Fn fn_;
};

}  // namespace

DensityPtr make_local_density(const std::string& name) {
  if (name == "u")
    return std::make_shared<SwitchDensity>(name, [](int a, int b, int c, double u, double, double) {
      if (b || c) return 0.0;
      if (a == 0) return u;
      return a == 1 ? 1.0 : 0.0;
    });
  if (name == "u^2")
    return std::make_shared<SwitchDensity>(name, [](int a, int b, int c, double u, double, double) {
      if (b || c) return 0.0;
      switch (a) {
        case 0: return u * u;
        case 1: return 2.0 * u;
        case 2: return 2.0;
        default: return 0.0;
      }
    });
  if (name == "u^3")
    return std::make_shared<SwitchDensity>(name, [](int a, int b, int c, double u, double, double) {
      if (b || c) return 0.0;
      switch (a) {
        case 0: return u * u * u;
        case 1: return 3.0 * u * u;
        case 2: return 6.0 * u;
        default: return 6.0;
      }
    });
  if (name == "u^4")
    return std::make_shared<SwitchDensity>(name, [](int a, int b, int c, double u, double, double) {
      if (b || c) return 0.0;
      switch (a) {
        case 0: return u * u * u * u;
        case 1: return 4.0 * u * u * u;
        case 2: return 12.0 * u * u;
        default: return 24.0 * u;
      }
    });
  if (name == "jet^2")
    return std::make_shared<SwitchDensity>(
        name, [](int a, int b, int c, double u, double p, double q) {
          int total = a + b + c;
          if (total == 0) return u * u + p * p + q * q;
          if (total == 1) return 2.0 * (a ? u : b ? p : q);
          if (total == 2) return (a == 2 || b == 2 || c == 2) ? 2.0 : 0.0;
          return 0.0;
        });
  if (name == "pq")
    return std::make_shared<SwitchDensity>(
        name, [](int a, int b, int c, double, double p, double q) {
          if (a) return 0.0;
          if (b == 0 && c == 0) return p * q;
          if (b == 1 && c == 0) return q;
          if (b == 0 && c == 1) return p;
          if (b == 1 && c == 1) return 1.0;
          return 0.0;
        });
  if (name == "sin_u")
    return std::make_shared<SwitchDensity>(name, [](int a, int b, int c, double u, double, double) {
      if (b || c) return 0.0;
      switch (a) {
        case 0: return std::sin(u);
        case 1: return std::cos(u);
        case 2: return -std::sin(u);
        default: return -std::cos(u);
      }
    });
  throw std::invalid_argument("make_local_density: unknown density '" + name + "'");
}

}  // namespace fieldlab
