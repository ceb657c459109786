#include "fieldlab/hyperbolic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <utility>

namespace fieldlab {

std::vector<double> apply_cell_form(const GridSpacetime& st, const CellForm& w,
                                    const std::vector<double>& v) {
  const size_t n = static_cast<size_t>(st.n_nodes());
  for (const auto& arr : w)
    if (arr.size() != n) throw std::invalid_argument("apply_cell_form: coefficient array size");
  if (v.size() != n) throw std::invalid_argument("apply_cell_form: field size");

  std::vector<double> out(n, 0.0);
  const double ht = 2.0 * st.dt, hx = 2.0 * st.dx;
  for (int jt = 1; jt <= st.nt - 2; ++jt)
    for (int jx = 0; jx < st.nx; ++jx) {
      const size_t i = static_cast<size_t>(st.node(jt, jx));
      const size_t up = i + static_cast<size_t>(st.nx), dn = i - static_cast<size_t>(st.nx);
      const size_t xp = static_cast<size_t>(st.node(jt, st.wrap_x(jx + 1)));
      const size_t xm = static_cast<size_t>(st.node(jt, st.wrap_x(jx - 1)));
      const double c0 = v[i];
      const double c1 = (v[up] - v[dn]) / ht;
      const double c2 = (v[xp] - v[xm]) / hx;
      const double r0 = w[0][i] * c0 + w[1][i] * c1 + w[2][i] * c2;
      const double r1 = w[3][i] * c0 + w[4][i] * c1 + w[5][i] * c2;
      const double r2 = w[6][i] * c0 + w[7][i] * c1 + w[8][i] * c2;
      out[i] += r0;
      out[up] += r1 / ht;
      out[dn] -= r1 / ht;
      out[xp] += r2 / hx;
      out[xm] -= r2 / hx;
    }
  return out;
}

SymbolInverse invert_symbol(const GridSpacetime& st, const MetricField& ginv) {
  if (ginv.size() != static_cast<size_t>(st.n_nodes()))
    throw std::invalid_argument("invert_symbol: field size");
  SymbolInverse r;
  r.ghat.assign(ginv.size(), Metric2{0.0, 0.0, 0.0});
  r.degenerate.assign(ginv.size(), 0);
  r.min_abs_det = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < ginv.size(); ++i) {
    const Metric2& m = ginv[i];
    const double det = m.det();
    const double scale = std::abs(m.tt) + 2.0 * std::abs(m.tx) + std::abs(m.xx);
    r.min_abs_det = std::min(r.min_abs_det, std::abs(det));
    if (std::abs(det) <= 1e-10 * scale * scale) {
      r.degenerate[i] = 1;
      ++r.degenerate_count;
      continue;
    }
    r.ghat[i] = Metric2{m.xx / det, -m.tx / det, m.tt / det};
  }
  return r;
}

MetricField lower_symbol(const GridSpacetime& st, const MetricField& ginv) {
  if (ginv.size() != static_cast<size_t>(st.n_nodes()))
    throw std::invalid_argument("lower_symbol: field size");
  MetricField out(ginv.size());
  for (size_t i = 0; i < ginv.size(); ++i) {
    const Metric2& g = st.g[i];
    const Metric2& m = ginv[i];
    const double att = g.tt * m.tt + g.tx * m.tx, atx = g.tt * m.tx + g.tx * m.xx;
    const double axt = g.tx * m.tt + g.xx * m.tx, axx = g.tx * m.tx + g.xx * m.xx;
    out[i] = Metric2{att * g.tt + atx * g.tx, att * g.tx + atx * g.xx,
                     axt * g.tx + axx * g.xx};
  }
  return out;
}

LinearHypOp::LinearHypOp(const GridSpacetime& st, CellForm w, MetricField symbol,
                         bool variational, std::string label)
    : st_(&st),
      w_(std::move(w)),
      symbol_(std::move(symbol)),
      variational_(variational),
      label_(std::move(label)) {
  const size_t n = static_cast<size_t>(st.n_nodes());
  for (const auto& arr : w_)
    if (arr.size() != n) throw std::invalid_argument("LinearHypOp: coefficient array size");
  if (symbol_.size() != n) throw std::invalid_argument("LinearHypOp: symbol field size");
  for (int jx = 0; jx < st.nx; ++jx)
    for (int jt : {0, st.nt - 1})
      for (const auto& arr : w_)
        if (arr[static_cast<size_t>(st.node(jt, jx))] != 0.0)
          throw std::invalid_argument("LinearHypOp: boundary rows must carry no cells");

  principal_ = invert_symbol(st, symbol_);
  lowered_ = lower_symbol(st, symbol_);

  hyperbolic_ = true;
  for (int it = 0; it < st.nt && hyperbolic_; ++it)
    for (int ix = 0; ix < st.nx; ++ix) {
      const size_t i = static_cast<size_t>(st.node(it, ix));
      const char* bad = nullptr;
      if (principal_.degenerate[i])
        bad = "degenerate symbol";
      else if (symbol_[i].det() >= 0.0)
        bad = "symbol is not Lorentzian";
      else if (principal_.ghat[i].xx <= 0.0)
        // ĝ-spacelike x-axis ⇔ the symbol's tt entry is negative: slices are
        // non-characteristic and time marching is well posed.  The lowered
        // symbol cannot stand in here — its xx entry stays positive for
        // tilted cones whose characteristic speeds are unbounded.
        bad = "constant-t direction is not spacelike for the characteristic metric";
      if (bad) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "node (%d,%d): %s", it, ix, bad);
        why_ = buf;
        hyperbolic_ = false;
        break;
      }
    }
  if (hyperbolic_ && !metric_order_leq(st, lowered_, st.g)) {
    hyperbolic_ = false;
    why_ = "lowered symbol cones are not contained in the background metric's cones";
  }
  // Characteristic speeds stay meaningful (for CFL bounds) wherever the
  // symbol inverts to a Lorentzian metric, hyperbolic verdict or not.
  for (size_t i = 0; i < principal_.ghat.size(); ++i) {
    if (principal_.degenerate[i]) continue;
    const Metric2& m = principal_.ghat[i];
    if (m.det() >= 0.0 || m.xx == 0.0) continue;
    double vm = 0.0, vp = 0.0;
    char_speeds(m, vm, vp);
    max_speed_ = std::max({max_speed_, std::abs(vm), std::abs(vp)});
  }
}

Density LinearHypOp::apply_density(const FieldConfig& v) const {
  if (!same_grid(*v.st, *st_)) throw std::invalid_argument("LinearHypOp: grid mismatch");
  Density d = Density::zeros(*st_);
  d.c = apply_cell_form(*st_, w_, v.v);
  return d;
}

FieldConfig LinearHypOp::apply(const FieldConfig& v) const {
  return hodge_star(*st_, apply_density(v));
}

LowerOrder LinearHypOp::lower_order() const {
  const GridSpacetime& st = *st_;
  const size_t n = static_cast<size_t>(st.n_nodes());
  LowerOrder lo;
  lo.a_t.assign(n, 0.0);
  lo.a_x.assign(n, 0.0);
  lo.b.assign(n, 0.0);
  const double ht = 2.0 * st.dt, hx = 2.0 * st.dx;
  for (int it = 2; it <= st.nt - 3; ++it)
    for (int ix = 0; ix < st.nx; ++ix) {
      const size_t i = static_cast<size_t>(st.node(it, ix));
      const size_t up = i + static_cast<size_t>(st.nx), dn = i - static_cast<size_t>(st.nx);
      const size_t xp = static_cast<size_t>(st.node(it, st.wrap_x(ix + 1)));
      const size_t xm = static_cast<size_t>(st.node(it, st.wrap_x(ix - 1)));
      const double s = st.sqrt_abs_det(it, ix);
      auto dtc = [&](int k) { return (w_[k][up] - w_[k][dn]) / ht; };
      auto dxc = [&](int k) { return (w_[k][xp] - w_[k][xm]) / hx; };
      lo.b[i] = (w_[0][i] - dtc(3) - dxc(6)) / s;
      lo.a_t[i] = (w_[1][i] - w_[3][i] - dtc(4) - dxc(7)) / s;
      lo.a_x[i] = (w_[2][i] - w_[6][i] - dtc(5) - dxc(8)) / s;
    }
  return lo;
}

}  // namespace fieldlab
