#include "fieldlab/functional.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <stdexcept>

#include "fieldlab/sparse.hpp"

namespace fieldlab {

// ---------------------------------------------------------------------------
// Base-class entry points
// ---------------------------------------------------------------------------

void Functional::require_phi(const FieldConfig& phi) const {
  if (phi.st == nullptr || !same_grid(*phi.st, *st_))
    throw std::invalid_argument("functional: configuration lives on a different grid");
}

Complex Functional::evaluate_c(const FieldConfig& phi) const {
  require_phi(phi);
  return eval_c_impl(phi);
}

double Functional::evaluate(const FieldConfig& phi) const {
  if (!real_) throw std::logic_error("evaluate: tree has complex scalars; use evaluate_c");
  require_phi(phi);
  return eval_c_impl(phi).real();
}

double Functional::derivative(const FieldConfig& phi, const DirList& dirs) const {
  if (dirs.empty() || dirs.size() > 3)
    throw std::invalid_argument("derivative: order must be 1, 2, or 3");
  if (!differentiable_) throw std::logic_error("derivative: functional is not differentiable");
  if (!real_) throw std::logic_error("derivative: calculus requires a real tree");
  require_phi(phi);
  for (const FieldConfig* d : dirs) require_phi(*d);
  return deriv_impl(phi, dirs);
}

Density Functional::gradient_density(const FieldConfig& phi) const {
  if (!differentiable_)
    throw std::logic_error("gradient_density: functional is not differentiable");
  if (!real_) throw std::logic_error("gradient_density: calculus requires a real tree");
  require_phi(phi);
  Density out = Density::zeros(*st_);
  add_gradient(phi, 1.0, out.c);
  return out;
}

Density Functional::kernel2_apply(const FieldConfig& phi, const FieldConfig& w) const {
  if (!differentiable_) throw std::logic_error("kernel2_apply: functional is not differentiable");
  if (!real_) throw std::logic_error("kernel2_apply: calculus requires a real tree");
  require_phi(phi);
  require_phi(w);
  Density out = Density::zeros(*st_);
  add_kernel2(phi, w.v, 1.0, out.c);
  return out;
}

namespace {

std::vector<double> sub_fields(const std::vector<double>& a, const FieldConfig* shift) {
  if (!shift) return a;
  std::vector<double> out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] - shift->v[i];
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// -------------------------------------------------------------------------
// Leaf nodes
// -------------------------------------------------------------------------

class ConstantNode final : public Functional {
 public:
  ConstantNode(const GridSpacetime& st, Complex z) : Functional(st), z_(z) {
    set_real(z.imag() == 0.0);
    set_declared(NodeSet(st.nt, st.nx));
  }

  Complex eval_c_impl(const FieldConfig&) const override { return z_; }
  double deriv_impl(const FieldConfig&, const DirList&) const override { return 0.0; }
  void add_gradient(const FieldConfig&, double, std::vector<double>&) const override {}
  void add_kernel2(const FieldConfig&, const std::vector<double>&, double,
                   std::vector<double>&) const override {}

 private:
  Complex z_;
};

class LinearNode final : public Functional {
 public:
  LinearNode(const GridSpacetime& st, Density omega) : Functional(st), w_(std::move(omega)) {
    NodeSet s(st.nt, st.nx);
    for (int it = 0; it < st.nt; ++it)
      for (int ix = 0; ix < st.nx; ++ix)
        if (w_.at(it, ix) != 0.0) s.insert(it, ix);
    set_declared(std::move(s));
  }

  Complex eval_c_impl(const FieldConfig& phi) const override {
    return dot(w_.c, phi.v) * grid().dt * grid().dx;
  }

  double deriv_impl(const FieldConfig&, const DirList& dirs) const override {
    if (dirs.size() == 1) return dot(w_.c, dirs[0]->v) * grid().dt * grid().dx;
    return 0.0;
  }

  void add_gradient(const FieldConfig&, double scale, std::vector<double>& accum) const override {
    for (size_t i = 0; i < accum.size(); ++i) accum[i] += scale * w_.c[i];
  }

  void add_kernel2(const FieldConfig&, const std::vector<double>&, double,
                   std::vector<double>&) const override {}

 private:
  Density w_;
};

/// Σ_p f(p)·λ(u, p, q)(p)·dt·dx on ψ = φ − shift; first-jet stencils.
class LocalTermNode final : public Functional {
 public:
  LocalTermNode(const GridSpacetime& st, TestFunction f, DensityPtr lam,
                std::optional<FieldConfig> shift)
      : Functional(st),
        f_(std::move(f)),
        lam_(std::move(lam)),
        shift_(std::move(shift)),
        dt_op_(make_diff_t(st)),
        dx_op_(make_diff_x(st)) {
    set_declared(support_nodes(f_).dilate(2));
  }

  Complex eval_c_impl(const FieldConfig& phi) const override {
    auto [u, p, q] = jets(phi);
    double acc = 0.0;
    for (size_t i = 0; i < u.size(); ++i)
      if (f_.v[i] != 0.0) acc += f_.v[i] * lam_->value(u[i], p[i], q[i]);
    return acc * grid().dt * grid().dx;
  }

  double deriv_impl(const FieldConfig& phi, const DirList& dirs) const override {
    auto [u, p, q] = jets(phi);
    std::vector<std::array<std::vector<double>, 3>> dj;
    for (const FieldConfig* d : dirs)
      dj.push_back({d->v, dt_op_.apply(d->v), dx_op_.apply(d->v)});
    double acc = 0.0;
    const int k = static_cast<int>(dirs.size());
    for (size_t i = 0; i < u.size(); ++i) {
      if (f_.v[i] == 0.0) continue;
      double cell = 0.0;
      if (k == 1) {
        for (int a = 0; a < 3; ++a)
          cell += part(a, -1, -1, u[i], p[i], q[i]) * dj[0][a][i];
      } else if (k == 2) {
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b)
            cell += part(a, b, -1, u[i], p[i], q[i]) * dj[0][a][i] * dj[1][b][i];
      } else {
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b)
            for (int c = 0; c < 3; ++c)
              cell += part(a, b, c, u[i], p[i], q[i]) * dj[0][a][i] * dj[1][b][i] * dj[2][c][i];
      }
      acc += f_.v[i] * cell;
    }
    return acc * grid().dt * grid().dx;
  }

  void add_gradient(const FieldConfig& phi, double scale,
                    std::vector<double>& accum) const override {
    auto [u, p, q] = jets(phi);
    const size_t n = u.size();
    std::vector<double> gu(n, 0.0), gp(n, 0.0), gq(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
      if (f_.v[i] == 0.0) continue;
      gu[i] = f_.v[i] * part(0, -1, -1, u[i], p[i], q[i]);
      gp[i] = f_.v[i] * part(1, -1, -1, u[i], p[i], q[i]);
      gq[i] = f_.v[i] * part(2, -1, -1, u[i], p[i], q[i]);
    }
    std::vector<double> tp = dt_op_.apply_transpose(gp);
    std::vector<double> tq = dx_op_.apply_transpose(gq);
    for (size_t i = 0; i < n; ++i) accum[i] += scale * (gu[i] + tp[i] + tq[i]);
  }

  void add_kernel2(const FieldConfig& phi, const std::vector<double>& w, double scale,
                   std::vector<double>& accum) const override {
    auto [u, p, q] = jets(phi);
    const size_t n = u.size();
    std::array<std::vector<double>, 3> wj = {w, dt_op_.apply(w), dx_op_.apply(w)};
    std::vector<double> au(n, 0.0), ap(n, 0.0), aq(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
      if (f_.v[i] == 0.0) continue;
      double row[3] = {0.0, 0.0, 0.0};
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) row[a] += part(a, b, -1, u[i], p[i], q[i]) * wj[b][i];
      au[i] = f_.v[i] * row[0];
      ap[i] = f_.v[i] * row[1];
      aq[i] = f_.v[i] * row[2];
    }
    std::vector<double> tp = dt_op_.apply_transpose(ap);
    std::vector<double> tq = dx_op_.apply_transpose(aq);
    for (size_t i = 0; i < n; ++i) accum[i] += scale * (au[i] + tp[i] + tq[i]);
  }

 private:
  std::tuple<std::vector<double>, std::vector<double>, std::vector<double>> jets(
      const FieldConfig& phi) const {
    std::vector<double> psi = sub_fields(phi.v, shift_ ? &*shift_ : nullptr);
    return {psi, dt_op_.apply(psi), dx_op_.apply(psi)};
  }

  /// λ-partial with component slots a, b, c in {0=u, 1=p, 2=q}; −1 = unused.
  double part(int a, int b, int c, double u, double p, double q) const {
    int cnt[3] = {0, 0, 0};
    for (int s : {a, b, c})
      if (s >= 0) ++cnt[s];
    return lam_->partial(cnt[0], cnt[1], cnt[2], u, p, q);
  }

  TestFunction f_;
  DensityPtr lam_;
  std::optional<FieldConfig> shift_;
  SparseOp dt_op_, dx_op_;
};

class SupNode final : public Functional {
 public:
  SupNode(const GridSpacetime& st, int k, NodeSet K) : Functional(st), k_(k), K_(std::move(K)) {
    set_differentiable(false);
    set_declared(K_);
  }

  Complex eval_c_impl(const FieldConfig& phi) const override {
    return sup_seminorm(phi, k_, K_);
  }
  double deriv_impl(const FieldConfig&, const DirList&) const override {
    throw std::logic_error("sup functional is not differentiable");
  }
  void add_gradient(const FieldConfig&, double, std::vector<double>&) const override {
    throw std::logic_error("sup functional is not differentiable");
  }
  void add_kernel2(const FieldConfig&, const std::vector<double>&, double,
                   std::vector<double>&) const override {
    throw std::logic_error("sup functional is not differentiable");
  }

 private:
  int k_;
  NodeSet K_;
};

/// Quadratic form Q(ψ, ψ), ψ = φ − shift, with
/// Q(a, b) = Σ_j w_j ⟨D_j a, f²·D_j b⟩·dt·dx over the jet stencils to
/// order k (w = 2 on the mixed second derivative).
class SobolevNode final : public Functional {
 public:
  SobolevNode(const GridSpacetime& st, int k, TestFunction f, std::optional<FieldConfig> shift)
      : Functional(st),
        k_(k),
        f_(std::move(f)),
        shift_(std::move(shift)),
        dt_op_(make_diff_t(st)),
        dx_op_(make_diff_x(st)),
        dtt_op_(make_diff_tt(st)),
        dxx_op_(make_diff_xx(st)) {
    if (k < 0 || k > 2) throw std::invalid_argument("sobolev_functional: order must be ≤ 2");
    f2_.resize(f_.v.size());
    for (size_t i = 0; i < f2_.size(); ++i) f2_[i] = f_.v[i] * f_.v[i];
    set_declared(support_nodes(f_).dilate(4));
  }

  Complex eval_c_impl(const FieldConfig& phi) const override {
    std::vector<double> psi = sub_fields(phi.v, shift_ ? &*shift_ : nullptr);
    return q_form(psi, psi);
  }

  double deriv_impl(const FieldConfig& phi, const DirList& dirs) const override {
    if (dirs.size() == 3) return 0.0;
    std::vector<double> psi = sub_fields(phi.v, shift_ ? &*shift_ : nullptr);
    if (dirs.size() == 1) return 2.0 * q_form(psi, dirs[0]->v);
    return 2.0 * q_form(dirs[0]->v, dirs[1]->v);
  }

  void add_gradient(const FieldConfig& phi, double scale,
                    std::vector<double>& accum) const override {
    std::vector<double> psi = sub_fields(phi.v, shift_ ? &*shift_ : nullptr);
    add_q_apply(psi, 2.0 * scale, accum);
  }

  void add_kernel2(const FieldConfig&, const std::vector<double>& w, double scale,
                   std::vector<double>& accum) const override {
    add_q_apply(w, 2.0 * scale, accum);
  }

 private:
  /// Jet components with their norm weights, up to order k.
  template <typename Fn>
  void for_each_component(const std::vector<double>& x, Fn&& fn) const {
    fn(x, 1.0, 0);  // identity
    if (k_ >= 1) {
      fn(dt_op_.apply(x), 1.0, 1);
      fn(dx_op_.apply(x), 1.0, 2);
    }
    if (k_ >= 2) {
      fn(dtt_op_.apply(x), 1.0, 3);
      fn(dt_op_.apply(dx_op_.apply(x)), 2.0, 4);
      fn(dxx_op_.apply(x), 1.0, 5);
    }
  }

  double q_form(const std::vector<double>& a, const std::vector<double>& b) const {
    // Assemble D_j b once and contract against D_j a.
    double acc = 0.0;
    std::array<std::vector<double>, 6> bj;
    for_each_component(b, [&](std::vector<double> comp, double, int id) {
      bj[id] = std::move(comp);
    });
    for_each_component(a, [&](const std::vector<double>& comp, double wgt, int id) {
      double term = 0.0;
      for (size_t i = 0; i < comp.size(); ++i) term += f2_[i] * comp[i] * bj[id][i];
      acc += wgt * term;
    });
    return acc * grid().dt * grid().dx;
  }

  /// accum += scale · Σ_j w_j D_jᵀ (f²·D_j x)   (density coefficients).
  void add_q_apply(const std::vector<double>& x, double scale,
                   std::vector<double>& accum) const {
    for_each_component(x, [&](const std::vector<double>& comp, double wgt, int id) {
      std::vector<double> weighted(comp.size());
      for (size_t i = 0; i < comp.size(); ++i) weighted[i] = f2_[i] * comp[i];
      std::vector<double> back;
      switch (id) {
        case 0: back = std::move(weighted); break;
        case 1: back = dt_op_.apply_transpose(weighted); break;
        case 2: back = dx_op_.apply_transpose(weighted); break;
        case 3: back = dtt_op_.apply_transpose(weighted); break;
        case 4: back = dx_op_.apply_transpose(dt_op_.apply_transpose(weighted)); break;
        default: back = dxx_op_.apply_transpose(weighted); break;
      }
      for (size_t i = 0; i < back.size(); ++i) accum[i] += scale * wgt * back[i];
    });
  }

  int k_;
  TestFunction f_;
  std::optional<FieldConfig> shift_;
  std::vector<double> f2_;
  SparseOp dt_op_, dx_op_, dtt_op_, dxx_op_;
};

class RegularKernelNode final : public Functional {
 public:
  RegularKernelNode(const GridSpacetime& st, Complex c0, Density omega,
                    std::vector<double> kernel)
      : Functional(st), c0_(c0), w_(std::move(omega)), K_(std::move(kernel)) {
    const size_t n = static_cast<size_t>(st.n_nodes());
    if (K_.size() != n * n)
      throw std::invalid_argument("regular_kernel: kernel must be n_nodes × n_nodes");
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < i; ++j) {
        double s = 0.5 * (K_[i * n + j] + K_[j * n + i]);
        K_[i * n + j] = K_[j * n + i] = s;
      }
    set_real(c0.imag() == 0.0);
    NodeSet supp(st.nt, st.nx);
    for (size_t i = 0; i < n; ++i) {
      bool live = w_.c[i] != 0.0;
      for (size_t j = 0; j < n && !live; ++j) live = K_[i * n + j] != 0.0;
      if (live) supp.insert(static_cast<int>(i) / st.nx, static_cast<int>(i) % st.nx);
    }
    set_declared(std::move(supp));
  }

  Complex eval_c_impl(const FieldConfig& phi) const override {
    const double m = grid().dt * grid().dx;
    return c0_ + m * dot(w_.c, phi.v) + 0.5 * m * m * dot(phi.v, mat_apply(phi.v));
  }

  double deriv_impl(const FieldConfig& phi, const DirList& dirs) const override {
    const double m = grid().dt * grid().dx;
    if (dirs.size() == 1)
      return m * dot(w_.c, dirs[0]->v) + m * m * dot(dirs[0]->v, mat_apply(phi.v));
    if (dirs.size() == 2) return m * m * dot(dirs[0]->v, mat_apply(dirs[1]->v));
    return 0.0;
  }

  void add_gradient(const FieldConfig& phi, double scale,
                    std::vector<double>& accum) const override {
    const double m = grid().dt * grid().dx;
    std::vector<double> kphi = mat_apply(phi.v);
    for (size_t i = 0; i < accum.size(); ++i) accum[i] += scale * (w_.c[i] + m * kphi[i]);
  }

  void add_kernel2(const FieldConfig&, const std::vector<double>& w, double scale,
                   std::vector<double>& accum) const override {
    const double m = grid().dt * grid().dx;
    std::vector<double> kw = mat_apply(w);
    for (size_t i = 0; i < accum.size(); ++i) accum[i] += scale * m * kw[i];
  }

 private:
  std::vector<double> mat_apply(const std::vector<double>& x) const {
    const size_t n = x.size();
    std::vector<double> y(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (size_t j = 0; j < n; ++j) acc += K_[i * n + j] * x[j];
      y[i] = acc;
    }
    return y;
  }

  Complex c0_;
  Density w_;
  std::vector<double> K_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Composite nodes (befriended by the base class: they reach the protected
// interface of their children directly).
// ---------------------------------------------------------------------------

class SumNode final : public Functional {
 public:
  SumNode(const GridSpacetime& st, std::vector<FuncPtr> terms)
      : Functional(st), terms_(std::move(terms)) {
    bool real = true, diff = true, have = true;
    NodeSet u(st.nt, st.nx);
    for (const auto& t : terms_) {
      real = real && t->is_real();
      diff = diff && t->differentiable();
      if (t->declared_support())
        u = u.unite(*t->declared_support());
      else
        have = false;
    }
    set_real(real);
    set_differentiable(diff);
    if (have) set_declared(std::move(u));
  }

  Complex eval_c_impl(const FieldConfig& phi) const override {
    Complex acc = 0.0;
    for (const auto& t : terms_) acc += t->eval_c_impl(phi);
    return acc;
  }

  double deriv_impl(const FieldConfig& phi, const DirList& dirs) const override {
    double acc = 0.0;
    for (const auto& t : terms_) acc += t->deriv_impl(phi, dirs);
    return acc;
  }

  // Each term is materialized on its own before folding into the running
  // total: terms whose contributions are bitwise negations of each other
  // (e.g. F and fscale(-1, F)) then cancel to exact zeros node by node,
  // which support estimation relies on.
  void add_gradient(const FieldConfig& phi, double scale,
                    std::vector<double>& accum) const override {
    std::vector<double> buf(accum.size());
    for (const auto& t : terms_) {
      std::fill(buf.begin(), buf.end(), 0.0);
      t->add_gradient(phi, 1.0, buf);
      for (size_t i = 0; i < accum.size(); ++i) accum[i] += scale * buf[i];
    }
  }

  void add_kernel2(const FieldConfig& phi, const std::vector<double>& w, double scale,
                   std::vector<double>& accum) const override {
    std::vector<double> buf(accum.size());
    for (const auto& t : terms_) {
      std::fill(buf.begin(), buf.end(), 0.0);
      t->add_kernel2(phi, w, 1.0, buf);
      for (size_t i = 0; i < accum.size(); ++i) accum[i] += scale * buf[i];
    }
  }

 private:
  std::vector<FuncPtr> terms_;
};

class ScalarMulNode final : public Functional {
 public:
  ScalarMulNode(const GridSpacetime& st, Complex a, FuncPtr child)
      : Functional(st), a_(a), child_(std::move(child)) {
    set_real(a.imag() == 0.0 && child_->is_real());
    set_differentiable(child_->differentiable());
    if (a == 0.0)
      set_declared(NodeSet(st.nt, st.nx));
    else if (child_->declared_support())
      set_declared(*child_->declared_support());
  }

  Complex eval_c_impl(const FieldConfig& phi) const override {
    return a_ * child_->eval_c_impl(phi);
  }

  double deriv_impl(const FieldConfig& phi, const DirList& dirs) const override {
    return a_.real() * child_->deriv_impl(phi, dirs);
  }

  void add_gradient(const FieldConfig& phi, double scale,
                    std::vector<double>& accum) const override {
    child_->add_gradient(phi, scale * a_.real(), accum);
  }

  void add_kernel2(const FieldConfig& phi, const std::vector<double>& w, double scale,
                   std::vector<double>& accum) const override {
    child_->add_kernel2(phi, w, scale * a_.real(), accum);
  }

 private:
  Complex a_;
  FuncPtr child_;
};

class ProductNode final : public Functional {
 public:
  ProductNode(const GridSpacetime& st, FuncPtr f, FuncPtr g)
      : Functional(st), f_(std::move(f)), g_(std::move(g)) {
    set_real(f_->is_real() && g_->is_real());
    set_differentiable(f_->differentiable() && g_->differentiable());
    if (f_->declared_support() && g_->declared_support())
      set_declared(f_->declared_support()->unite(*g_->declared_support()));
  }

  Complex eval_c_impl(const FieldConfig& phi) const override {
    return f_->eval_c_impl(phi) * g_->eval_c_impl(phi);
  }

  double deriv_impl(const FieldConfig& phi, const DirList& dirs) const override {
    // Leibniz: sum over direction subsets routed to the first factor.
    const int k = static_cast<int>(dirs.size());
    double acc = 0.0;
    for (int mask = 0; mask < (1 << k); ++mask) {
      DirList df, dg;
      for (int j = 0; j < k; ++j) (mask >> j & 1 ? df : dg).push_back(dirs[j]);
      double lhs = df.empty() ? f_->eval_c_impl(phi).real() : f_->deriv_impl(phi, df);
      if (lhs == 0.0) continue;
      double rhs = dg.empty() ? g_->eval_c_impl(phi).real() : g_->deriv_impl(phi, dg);
      acc += lhs * rhs;
    }
    return acc;
  }

  void add_gradient(const FieldConfig& phi, double scale,
                    std::vector<double>& accum) const override {
    f_->add_gradient(phi, scale * g_->eval_c_impl(phi).real(), accum);
    g_->add_gradient(phi, scale * f_->eval_c_impl(phi).real(), accum);
  }

  void add_kernel2(const FieldConfig& phi, const std::vector<double>& w, double scale,
                   std::vector<double>& accum) const override {
    FieldConfig wf{&grid(), w};
    const DirList dw = {&wf};
    f_->add_kernel2(phi, w, scale * g_->eval_c_impl(phi).real(), accum);
    g_->add_kernel2(phi, w, scale * f_->eval_c_impl(phi).real(), accum);
    f_->add_gradient(phi, scale * g_->deriv_impl(phi, dw), accum);
    g_->add_gradient(phi, scale * f_->deriv_impl(phi, dw), accum);
  }

 private:
  FuncPtr f_, g_;
};

class SmoothComposeNode final : public Functional {
 public:
  SmoothComposeNode(const GridSpacetime& st, OuterPtr psi, std::vector<FuncPtr> children)
      : Functional(st), psi_(std::move(psi)), kids_(std::move(children)) {
    bool diff = true, have = true;
    NodeSet u(st.nt, st.nx);
    for (const auto& c : kids_) {
      if (!c->is_real())
        throw std::invalid_argument("smooth_compose: children must be real trees");
      diff = diff && c->differentiable();
      if (c->declared_support())
        u = u.unite(*c->declared_support());
      else
        have = false;
    }
    set_differentiable(diff);
    if (have) set_declared(std::move(u));
  }

  Complex eval_c_impl(const FieldConfig& phi) const override {
    return psi_->value(inner(phi));
  }

  double deriv_impl(const FieldConfig& phi, const DirList& dirs) const override {
    const int n = static_cast<int>(kids_.size());
    const int k = static_cast<int>(dirs.size());
    std::vector<double> y = inner(phi);

    // Cache first derivatives of every child along every direction.
    std::vector<std::vector<double>> d1(static_cast<size_t>(n), std::vector<double>(k));
    for (int j = 0; j < n; ++j)
      for (int a = 0; a < k; ++a) d1[j][a] = kids_[j]->deriv_impl(phi, {dirs[a]});

    double acc = 0.0;
    if (k == 1) {
      for (int j = 0; j < n; ++j) acc += psi_->partial({j}, y) * d1[j][0];
      return acc;
    }
    if (k == 2) {
      for (int j = 0; j < n; ++j) {
        acc += psi_->partial({j}, y) * kids_[j]->deriv_impl(phi, dirs);
        for (int l = 0; l < n; ++l)
          acc += psi_->partial({j, l}, y) * d1[j][0] * d1[l][1];
      }
      return acc;
    }
    // k = 3: partitions {123}, {12|3}, {13|2}, {23|1}, {1|2|3}.
    std::vector<std::vector<double>> d2(static_cast<size_t>(n), std::vector<double>(3));
    for (int j = 0; j < n; ++j) {
      d2[j][0] = kids_[j]->deriv_impl(phi, {dirs[0], dirs[1]});  // {12}
      d2[j][1] = kids_[j]->deriv_impl(phi, {dirs[0], dirs[2]});  // {13}
      d2[j][2] = kids_[j]->deriv_impl(phi, {dirs[1], dirs[2]});  // {23}
    }
    for (int j = 0; j < n; ++j) {
      acc += psi_->partial({j}, y) * kids_[j]->deriv_impl(phi, dirs);
      for (int l = 0; l < n; ++l) {
        acc += psi_->partial({j, l}, y) *
               (d2[j][0] * d1[l][2] + d2[j][1] * d1[l][1] + d2[j][2] * d1[l][0]);
        for (int m = 0; m < n; ++m)
          acc += psi_->partial({j, l, m}, y) * d1[j][0] * d1[l][1] * d1[m][2];
      }
    }
    return acc;
  }

  void add_gradient(const FieldConfig& phi, double scale,
                    std::vector<double>& accum) const override {
    std::vector<double> y = inner(phi);
    for (int j = 0; j < static_cast<int>(kids_.size()); ++j)
      kids_[j]->add_gradient(phi, scale * psi_->partial({j}, y), accum);
  }

  void add_kernel2(const FieldConfig& phi, const std::vector<double>& w, double scale,
                   std::vector<double>& accum) const override {
    const int n = static_cast<int>(kids_.size());
    std::vector<double> y = inner(phi);
    FieldConfig wf{&grid(), w};
    std::vector<double> dw(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) dw[j] = kids_[j]->deriv_impl(phi, {&wf});
    for (int j = 0; j < n; ++j) {
      kids_[j]->add_kernel2(phi, w, scale * psi_->partial({j}, y), accum);
      double c = 0.0;
      for (int l = 0; l < n; ++l) c += psi_->partial({j, l}, y) * dw[l];
      kids_[j]->add_gradient(phi, scale * c, accum);
    }
  }

 private:
  std::vector<double> inner(const FieldConfig& phi) const {
    std::vector<double> y(kids_.size());
    for (size_t j = 0; j < kids_.size(); ++j) y[j] = kids_[j]->eval_c_impl(phi).real();
    return y;
  }

  OuterPtr psi_;
  std::vector<FuncPtr> kids_;
};

class StarNode final : public Functional {
 public:
  StarNode(const GridSpacetime& st, FuncPtr child) : Functional(st), child_(std::move(child)) {
    set_real(child_->is_real());
    set_differentiable(child_->differentiable());
    if (child_->declared_support()) set_declared(*child_->declared_support());
  }

  Complex eval_c_impl(const FieldConfig& phi) const override {
    return std::conj(child_->eval_c_impl(phi));
  }

  double deriv_impl(const FieldConfig& phi, const DirList& dirs) const override {
    return child_->deriv_impl(phi, dirs);
  }

  void add_gradient(const FieldConfig& phi, double scale,
                    std::vector<double>& accum) const override {
    child_->add_gradient(phi, scale, accum);
  }

  void add_kernel2(const FieldConfig& phi, const std::vector<double>& w, double scale,
                   std::vector<double>& accum) const override {
    child_->add_kernel2(phi, w, scale, accum);
  }

 private:
  FuncPtr child_;
};

class MaskedNode final : public Functional {
 public:
  MaskedNode(const GridSpacetime& st, FuncPtr child, FieldConfig mask)
      : Functional(st), child_(std::move(child)), m_(std::move(mask)) {
    set_real(child_->is_real());
    set_differentiable(child_->differentiable());
    NodeSet s = support_nodes(m_);
    if (child_->declared_support()) s = s.intersect(*child_->declared_support());
    set_declared(std::move(s));
  }

  Complex eval_c_impl(const FieldConfig& phi) const override {
    return child_->eval_c_impl(apply_mask(phi));
  }

  double deriv_impl(const FieldConfig& phi, const DirList& dirs) const override {
    FieldConfig mphi = apply_mask(phi);
    std::vector<FieldConfig> md;
    md.reserve(dirs.size());
    for (const FieldConfig* d : dirs) md.push_back(apply_mask(*d));
    DirList mdirs;
    for (const auto& d : md) mdirs.push_back(&d);
    return child_->deriv_impl(mphi, mdirs);
  }

  void add_gradient(const FieldConfig& phi, double scale,
                    std::vector<double>& accum) const override {
    FieldConfig mphi = apply_mask(phi);
    std::vector<double> tmp(accum.size(), 0.0);
    child_->add_gradient(mphi, scale, tmp);
    for (size_t i = 0; i < accum.size(); ++i) accum[i] += m_.v[i] * tmp[i];
  }

  void add_kernel2(const FieldConfig& phi, const std::vector<double>& w, double scale,
                   std::vector<double>& accum) const override {
    FieldConfig mphi = apply_mask(phi);
    std::vector<double> mw(w.size());
    for (size_t i = 0; i < w.size(); ++i) mw[i] = m_.v[i] * w[i];
    std::vector<double> tmp(accum.size(), 0.0);
    child_->add_kernel2(mphi, mw, scale, tmp);
    for (size_t i = 0; i < accum.size(); ++i) accum[i] += m_.v[i] * tmp[i];
  }

 private:
  FieldConfig apply_mask(const FieldConfig& phi) const {
    FieldConfig out = phi;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= m_.v[i];
    return out;
  }

  FuncPtr child_;
  FieldConfig m_;
};

class DomainNode final : public Functional {
 public:
  DomainNode(const GridSpacetime& st, FuncPtr child,
             std::function<bool(const FieldConfig&)> pred, std::string what)
      : Functional(st), child_(std::move(child)), pred_(std::move(pred)), what_(std::move(what)) {
    set_real(child_->is_real());
    set_differentiable(child_->differentiable());
    if (child_->declared_support()) set_declared(*child_->declared_support());
  }

  Complex eval_c_impl(const FieldConfig& phi) const override {
    check(phi);
    return child_->eval_c_impl(phi);
  }

  double deriv_impl(const FieldConfig& phi, const DirList& dirs) const override {
    check(phi);
    return child_->deriv_impl(phi, dirs);
  }

  void add_gradient(const FieldConfig& phi, double scale,
                    std::vector<double>& accum) const override {
    check(phi);
    child_->add_gradient(phi, scale, accum);
  }

  void add_kernel2(const FieldConfig& phi, const std::vector<double>& w, double scale,
                   std::vector<double>& accum) const override {
    check(phi);
    child_->add_kernel2(phi, w, scale, accum);
  }

 private:
  void check(const FieldConfig& phi) const {
    if (!pred_(phi))
      throw std::domain_error("configuration outside the functional's domain: " + what_);
  }

  FuncPtr child_;
  std::function<bool(const FieldConfig&)> pred_;
  std::string what_;
};

// ---------------------------------------------------------------------------
// Factories
// ---------------------------------------------------------------------------

namespace {
void require_tf(const GridSpacetime& st, const FieldConfig& f, const char* who) {
  if (f.st == nullptr || !same_grid(*f.st, st))
    throw std::invalid_argument(std::string(who) + ": field lives on a different grid");
}
void require_density(const GridSpacetime& st, const Density& u, const char* who) {
  if (u.st == nullptr || !same_grid(*u.st, st))
    throw std::invalid_argument(std::string(who) + ": density lives on a different grid");
}
}  // namespace

FuncPtr constant_functional(const GridSpacetime& st, Complex z) {
  return std::make_shared<ConstantNode>(st, z);
}

FuncPtr linear_functional(const GridSpacetime& st, Density omega) {
  require_density(st, omega, "linear_functional");
  return std::make_shared<LinearNode>(st, std::move(omega));
}

FuncPtr local_term(const GridSpacetime& st, TestFunction f, DensityPtr lambda,
                   std::optional<FieldConfig> shift) {
  require_tf(st, f, "local_term");
  if (shift) require_tf(st, *shift, "local_term");
  if (!lambda) throw std::invalid_argument("local_term: null density");
  return std::make_shared<LocalTermNode>(st, std::move(f), std::move(lambda), std::move(shift));
}

FuncPtr sup_functional(const GridSpacetime& st, int k, NodeSet K) {
  if (K.nt != st.nt || K.nx != st.nx)
    throw std::invalid_argument("sup_functional: node set shape mismatch");
  if (K.empty()) throw std::invalid_argument("sup_functional: empty node set");
  if (k < 0 || k > 2) throw std::invalid_argument("sup_functional: order must be ≤ 2");
  return std::make_shared<SupNode>(st, k, std::move(K));
}

FuncPtr sobolev_functional(const GridSpacetime& st, int k, TestFunction f,
                           std::optional<FieldConfig> shift) {
  require_tf(st, f, "sobolev_functional");
  if (shift) require_tf(st, *shift, "sobolev_functional");
  return std::make_shared<SobolevNode>(st, k, std::move(f), std::move(shift));
}

FuncPtr regular_kernel(const GridSpacetime& st, Complex c0, Density omega,
                       std::vector<double> kernel) {
  require_density(st, omega, "regular_kernel");
  return std::make_shared<RegularKernelNode>(st, c0, std::move(omega), std::move(kernel));
}

FuncPtr fsum(std::vector<FuncPtr> terms) {
  if (terms.empty()) throw std::invalid_argument("fsum: no terms");
  const GridSpacetime& st = terms.front()->grid();
  for (const auto& t : terms)
    if (!same_grid(t->grid(), st)) throw std::invalid_argument("fsum: grid mismatch");
  return std::make_shared<SumNode>(st, std::move(terms));
}

FuncPtr fscale(Complex a, FuncPtr f) {
  if (!f) throw std::invalid_argument("fscale: null functional");
  const GridSpacetime& st = f->grid();
  return std::make_shared<ScalarMulNode>(st, a, std::move(f));
}

FuncPtr fproduct(FuncPtr f, FuncPtr g) {
  if (!f || !g) throw std::invalid_argument("fproduct: null functional");
  if (!same_grid(f->grid(), g->grid())) throw std::invalid_argument("fproduct: grid mismatch");
  const GridSpacetime& st = f->grid();
  return std::make_shared<ProductNode>(st, std::move(f), std::move(g));
}

FuncPtr smooth_compose(OuterPtr psi, std::vector<FuncPtr> children) {
  if (!psi) throw std::invalid_argument("smooth_compose: null outer map");
  if (children.empty()) throw std::invalid_argument("smooth_compose: no children");
  if (psi->arity() != static_cast<int>(children.size()))
    throw std::invalid_argument("smooth_compose: arity mismatch");
  const GridSpacetime& st = children.front()->grid();
  for (const auto& c : children)
    if (!same_grid(c->grid(), st)) throw std::invalid_argument("smooth_compose: grid mismatch");
  return std::make_shared<SmoothComposeNode>(st, std::move(psi), std::move(children));
}

FuncPtr star(FuncPtr f) {
  if (!f) throw std::invalid_argument("star: null functional");
  const GridSpacetime& st = f->grid();
  return std::make_shared<StarNode>(st, std::move(f));
}

FuncPtr masked(FuncPtr f, FieldConfig mask) {
  if (!f) throw std::invalid_argument("masked: null functional");
  const GridSpacetime& st = f->grid();
  require_tf(st, mask, "masked");
  return std::make_shared<MaskedNode>(st, std::move(f), std::move(mask));
}

FuncPtr restrict_domain(FuncPtr f, std::function<bool(const FieldConfig&)> pred,
                        std::string what) {
  if (!f) throw std::invalid_argument("restrict_domain: null functional");
  const GridSpacetime& st = f->grid();
  return std::make_shared<DomainNode>(st, std::move(f), std::move(pred), std::move(what));
}

FuncPtr bump_functional(const GridSpacetime& st, int k, TestFunction f, FieldConfig center,
                        double radius) {
  if (radius <= 0.0) throw std::invalid_argument("bump_functional: radius must be positive");
  FuncPtr s = sobolev_functional(st, k, std::move(f), std::move(center));
  return smooth_compose(plateau_map(radius * radius), {std::move(s)});
}

FuncPtr exp_cutoff_functional(const GridSpacetime& st, TestFunction f, double radius) {
  require_tf(st, f, "exp_cutoff_functional");
  double mass = 0.0;
  for (int it = 0; it < st.nt; ++it)
    for (int ix = 0; ix < st.nx; ++ix) {
      if (f.at(it, ix) < 0.0)
        throw std::invalid_argument("exp_cutoff_functional: weight must be nonnegative");
      mass += f.at(it, ix) * st.sqrt_abs_det(it, ix);
    }
  mass *= st.dt * st.dx;
  if (std::abs(mass - 1.0) > 1e-12)
    throw std::invalid_argument("exp_cutoff_functional: weight must integrate to 1 against dμ_g");
  FuncPtr lin = linear_functional(st, times_volume(st, f));
  return smooth_compose(exp_shell_map(radius), {std::move(lin)});
}

// ---------------------------------------------------------------------------
// Analysis
// ---------------------------------------------------------------------------

namespace {

/// Two random fields whose supports are x-separated by at least `gap`
/// columns on the periodic circle (all time slices used).
std::pair<FieldConfig, FieldConfig> separated_pair(const GridSpacetime& st, std::mt19937_64& rng,
                                                   int gap, double amp) {
  const int usable = st.nx - 2 * gap;
  if (usable < 2)
    throw std::invalid_argument("separated supports need a wider grid in x");
  const int wa = usable / 2, wb = usable - wa;
  std::uniform_int_distribution<int> rot(0, st.nx - 1);
  const int base = rot(rng);
  std::uniform_real_distribution<double> u(-amp, amp);
  FieldConfig a = FieldConfig::zeros(st), b = FieldConfig::zeros(st);
  for (int it = 0; it < st.nt; ++it) {
    for (int j = 0; j < wa; ++j) a.at(it, base + j) = u(rng);
    for (int j = 0; j < wb; ++j) b.at(it, base + wa + gap + j) = u(rng);
  }
  return {std::move(a), std::move(b)};
}

}  // namespace

CheckReport check_additivity(const Functional& F, int trials, uint64_t seed, double tol) {
  if (trials < 1) throw std::invalid_argument("check_additivity: trials must be positive");
  const GridSpacetime& st = F.grid();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  CheckReport rep;
  rep.trials = trials;
  rep.pass = true;
  for (int trial = 0; trial < trials; ++trial) {
    auto [p1, p3] = separated_pair(st, rng, 5, 1.0);
    FieldConfig p2 = FieldConfig::zeros(st);
    for (auto& x : p2.v) x = u(rng);

    FieldConfig s123 = p2, s12 = p2, s23 = p2;
    for (size_t i = 0; i < p2.v.size(); ++i) {
      s123.v[i] += p1.v[i] + p3.v[i];
      s12.v[i] += p1.v[i];
      s23.v[i] += p3.v[i];
    }
    Complex lhs = F.evaluate_c(s123);
    Complex rhs = F.evaluate_c(s12) - F.evaluate_c(p2) + F.evaluate_c(s23);
    double scale = std::max({1.0, std::abs(lhs), std::abs(rhs)});
    double res = std::abs(lhs - rhs) / scale;
    rep.worst_residual = std::max(rep.worst_residual, res);
    if (res > tol) rep.pass = false;
  }
  rep.note = rep.pass ? "additive on all probes" : "additivity violated";
  return rep;
}

CheckReport check_locality(const Functional& F, int trials, uint64_t seed, double tol) {
  if (trials < 1) throw std::invalid_argument("check_locality: trials must be positive");
  if (!F.differentiable())
    throw std::logic_error("check_locality: functional is not differentiable");
  const GridSpacetime& st = F.grid();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  CheckReport rep;
  rep.trials = trials;
  rep.pass = true;
  for (int trial = 0; trial < trials; ++trial) {
    auto [v1, v2] = separated_pair(st, rng, 5, 1.0);
    FieldConfig phi = FieldConfig::zeros(st);
    for (auto& x : phi.v) x = u(rng);
    double cross = F.derivative(phi, {&v1, &v2});
    double d11 = F.derivative(phi, {&v1, &v1});
    double d22 = F.derivative(phi, {&v2, &v2});
    double denom = std::abs(d11) + std::abs(d22) + std::abs(cross) + 1e-300;
    double res = std::abs(cross) / denom;
    rep.worst_residual = std::max(rep.worst_residual, res);
    if (res > tol) rep.pass = false;
  }
  rep.note = rep.pass ? "second derivative concentrated on the diagonal"
                      : "off-diagonal second derivative detected";
  return rep;
}

std::vector<FieldConfig> default_probes(const GridSpacetime& st, int count, uint64_t seed,
                                        double amplitude) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  std::vector<FieldConfig> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    FieldConfig phi = FieldConfig::zeros(st);
    for (auto& x : phi.v) x = u(rng);
    out.push_back(std::move(phi));
  }
  return out;
}

NodeSet spacetime_support(const Functional& F, const std::vector<FieldConfig>& probes,
                          double rel_tol) {
  const GridSpacetime& st = F.grid();
  NodeSet acc(st.nt, st.nx);
  for (const FieldConfig& phi : probes) {
    Density g = F.gradient_density(phi);
    double m = 0.0;
    for (double c : g.c) m = std::max(m, std::abs(c));
    if (m == 0.0) continue;
    const double thr = rel_tol * m;
    for (int it = 0; it < st.nt; ++it)
      for (int ix = 0; ix < st.nx; ++ix)
        if (std::abs(g.at(it, ix)) > thr) acc.insert(it, ix);
  }
  if (F.declared_support() && !acc.subset_of(*F.declared_support()))
    throw std::logic_error("spacetime_support: estimate escapes the declared bound");
  return acc;
}

NodeSet ball_nodes(const GridSpacetime& st, const Ball& b) {
  NodeSet s(st.nt, st.nx);
  for (int it = 0; it < st.nt; ++it)
    for (int ix = 0; ix < st.nx; ++ix) {
      double dtc = (it - b.it) * st.dt;
      int raw = std::abs(ix - b.ix);
      int wrapped = std::min(raw, st.nx - raw);
      double dxc = wrapped * st.dx;
      if (std::hypot(dtc, dxc) < b.radius) s.insert(it, ix);
    }
  return s;
}

std::vector<SignedTerm> decompose_small_support(const FuncPtr& F, const std::vector<Ball>& cover,
                                                int stencil_radius, int additivity_trials,
                                                uint64_t seed) {
  if (!F) throw std::invalid_argument("decompose_small_support: null functional");
  if (cover.empty()) throw std::invalid_argument("decompose_small_support: empty cover");
  const GridSpacetime& st = F->grid();

  CheckReport add = check_additivity(*F, additivity_trials, seed);
  if (!add.pass)
    throw std::invalid_argument("decompose_small_support: functional is not additive");

  const int n = static_cast<int>(cover.size());
  std::vector<NodeSet> balls;
  balls.reserve(static_cast<size_t>(n));
  for (const Ball& b : cover) balls.push_back(ball_nodes(st, b));

  // Lattice partition of unity subordinate to the cover: each covered node
  // is assigned to the nearest ball center (lowest index on ties), making
  // the masks indicator fields that sum to exactly 1 on the covered set.
  std::vector<FieldConfig> chi(static_cast<size_t>(n));
  for (auto& c : chi) c = FieldConfig::zeros(st);
  NodeSet covered(st.nt, st.nx);
  for (int it = 0; it < st.nt; ++it)
    for (int ix = 0; ix < st.nx; ++ix) {
      int best = -1;
      double best_d = 0.0;
      for (int i = 0; i < n; ++i) {
        if (!balls[static_cast<size_t>(i)].contains(it, ix)) continue;
        double dtc = (it - cover[static_cast<size_t>(i)].it) * st.dt;
        int raw = std::abs(ix - cover[static_cast<size_t>(i)].ix);
        double dxc = std::min(raw, st.nx - raw) * st.dx;
        double d = std::hypot(dtc, dxc);
        if (best < 0 || d < best_d) {
          best = i;
          best_d = d;
        }
      }
      if (best >= 0) {
        chi[static_cast<size_t>(best)].at(it, ix) = 1.0;
        covered.insert(it, ix);
      }
    }

  // The masks must act as the identity on the functional's sensitivity
  // region, which the declared support bounds.
  NodeSet region = F->declared_support()
                       ? *F->declared_support()
                       : spacetime_support(*F, default_probes(st, 6, seed ^ 0x9e3779b9ULL, 1.0));
  if (!region.subset_of(covered))
    throw std::invalid_argument("decompose_small_support: cover misses the support region");

  // Balls whose stencil dilations meet cannot be split apart.
  std::vector<std::vector<bool>> adj(static_cast<size_t>(n), std::vector<bool>(n, false));
  std::vector<NodeSet> dilated;
  dilated.reserve(static_cast<size_t>(n));
  for (const NodeSet& b : balls) dilated.push_back(b.dilate(stencil_radius));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      adj[i][j] = (i == j) || !dilated[static_cast<size_t>(i)]
                                   .intersect(dilated[static_cast<size_t>(j)])
                                   .empty();

  // Repeated additivity: split any non-clique index set along a pair of
  // separated balls until only pairwise-intersecting sets remain.
  std::map<std::vector<int>, double> terms;
  std::vector<std::pair<double, std::vector<int>>> work;
  std::vector<int> all(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
  work.emplace_back(1.0, all);
  while (!work.empty()) {
    auto [sign, S] = work.back();
    work.pop_back();
    int split_a = -1, split_b = -1;
    for (size_t x = 0; x < S.size() && split_a < 0; ++x)
      for (size_t y = x + 1; y < S.size() && split_a < 0; ++y)
        if (!adj[S[x]][S[y]]) {
          split_a = S[x];
          split_b = S[y];
        }
    if (split_a < 0) {
      terms[S] += sign;
      continue;
    }
    std::vector<int> wo_b, wo_a, wo_ab;
    for (int i : S) {
      if (i != split_b) wo_b.push_back(i);
      if (i != split_a) wo_a.push_back(i);
      if (i != split_a && i != split_b) wo_ab.push_back(i);
    }
    work.emplace_back(sign, std::move(wo_b));
    work.emplace_back(sign, std::move(wo_a));
    work.emplace_back(-sign, std::move(wo_ab));
  }

  const double f_zero = std::abs(F->evaluate_c(FieldConfig::zeros(st)));
  std::vector<SignedTerm> out;
  for (auto& [S, sign] : terms) {
    if (sign == 0.0) continue;
    if (S.empty() && f_zero == 0.0) continue;
    FieldConfig mask = FieldConfig::zeros(st);
    for (int i : S)
      for (size_t p = 0; p < mask.v.size(); ++p) mask.v[p] += chi[static_cast<size_t>(i)].v[p];
    out.push_back(SignedTerm{sign, S, masked(F, std::move(mask))});
  }
  return out;
}

}  // namespace fieldlab
