#include "fieldlab/fields.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace fieldlab {

FieldConfig FieldConfig::zeros(const GridSpacetime& st) {
  return FieldConfig{&st, std::vector<double>(st.n_nodes(), 0.0)};
}

FieldConfig FieldConfig::constant(const GridSpacetime& st, double c) {
  return FieldConfig{&st, std::vector<double>(st.n_nodes(), c)};
}

FieldConfig FieldConfig::sample(const GridSpacetime& st,
                                const std::function<double(double, double)>& fn) {
  FieldConfig out = zeros(st);
  for (int it = 0; it < st.nt; ++it)
    for (int ix = 0; ix < st.nx; ++ix)
      out.at(it, ix) = fn(it * st.dt, ix * st.dx);
  return out;
}

Density Density::zeros(const GridSpacetime& st) {
  return Density{&st, std::vector<double>(st.n_nodes(), 0.0)};
}

bool same_grid(const GridSpacetime& a, const GridSpacetime& b) {
  return a.nt == b.nt && a.nx == b.nx && a.dt == b.dt && a.dx == b.dx;
}

NodeSet support_nodes(const FieldConfig& f) {
  NodeSet s(f.st->nt, f.st->nx);
  for (int it = 0; it < f.st->nt; ++it)
    for (int ix = 0; ix < f.st->nx; ++ix)
      if (f.at(it, ix) != 0.0) s.insert(it, ix);
  return s;
}

double pair_density(const Density& u, const FieldConfig& phi) {
  if (u.st == nullptr || phi.st == nullptr || !same_grid(*u.st, *phi.st))
    throw std::invalid_argument("pair_density: operands live on different grids");
  double acc = 0.0;
  for (size_t i = 0; i < u.c.size(); ++i) acc += u.c[i] * phi.v[i];
  return acc * u.st->dt * u.st->dx;
}

Density times_volume(const GridSpacetime& st, const FieldConfig& phi) {
  Density out = Density::zeros(st);
  for (int it = 0; it < st.nt; ++it)
    for (int ix = 0; ix < st.nx; ++ix)
      out.at(it, ix) = phi.at(it, ix) * st.sqrt_abs_det(it, ix);
  return out;
}

FieldConfig hodge_star(const GridSpacetime& st, const Density& u) {
  FieldConfig out = FieldConfig::zeros(st);
  for (int it = 0; it < st.nt; ++it)
    for (int ix = 0; ix < st.nx; ++ix)
      out.at(it, ix) = u.at(it, ix) / st.sqrt_abs_det(it, ix);
  return out;
}

FieldConfig diff_x(const FieldConfig& phi) {
  const GridSpacetime& st = *phi.st;
  FieldConfig out = FieldConfig::zeros(st);
  const double inv2dx = 1.0 / (2.0 * st.dx);
  for (int it = 0; it < st.nt; ++it)
    for (int ix = 0; ix < st.nx; ++ix)
      out.at(it, ix) = (phi.at(it, ix + 1) - phi.at(it, ix - 1)) * inv2dx;
  return out;
}

FieldConfig diff_t(const FieldConfig& phi) {
  const GridSpacetime& st = *phi.st;
  FieldConfig out = FieldConfig::zeros(st);
  const double inv2dt = 1.0 / (2.0 * st.dt);
  for (int ix = 0; ix < st.nx; ++ix) {
    out.at(0, ix) = (-3.0 * phi.at(0, ix) + 4.0 * phi.at(1, ix) - phi.at(2, ix)) * inv2dt;
    for (int it = 1; it < st.nt - 1; ++it)
      out.at(it, ix) = (phi.at(it + 1, ix) - phi.at(it - 1, ix)) * inv2dt;
    out.at(st.nt - 1, ix) = (3.0 * phi.at(st.nt - 1, ix) - 4.0 * phi.at(st.nt - 2, ix) +
                             phi.at(st.nt - 3, ix)) * inv2dt;
  }
  return out;
}

namespace {

/// Three-point second difference in t; the end slices reuse the adjacent
/// interior stencil so every node carries a finite value.
FieldConfig diff_tt(const FieldConfig& phi) {
  const GridSpacetime& st = *phi.st;
  FieldConfig out = FieldConfig::zeros(st);
  const double invdt2 = 1.0 / (st.dt * st.dt);
  for (int ix = 0; ix < st.nx; ++ix) {
    out.at(0, ix) = (phi.at(0, ix) - 2.0 * phi.at(1, ix) + phi.at(2, ix)) * invdt2;
    for (int it = 1; it < st.nt - 1; ++it)
      out.at(it, ix) = (phi.at(it + 1, ix) - 2.0 * phi.at(it, ix) + phi.at(it - 1, ix)) * invdt2;
    out.at(st.nt - 1, ix) = (phi.at(st.nt - 1, ix) - 2.0 * phi.at(st.nt - 2, ix) +
                             phi.at(st.nt - 3, ix)) * invdt2;
  }
  return out;
}

FieldConfig diff_xx(const FieldConfig& phi) {
  const GridSpacetime& st = *phi.st;
  FieldConfig out = FieldConfig::zeros(st);
  const double invdx2 = 1.0 / (st.dx * st.dx);
  for (int it = 0; it < st.nt; ++it)
    for (int ix = 0; ix < st.nx; ++ix)
      out.at(it, ix) =
          (phi.at(it, ix + 1) - 2.0 * phi.at(it, ix) + phi.at(it, ix - 1)) * invdx2;
  return out;
}

void require_order(int k) {
  if (k < 0 || k > 2) throw std::invalid_argument("seminorm order must be 0, 1, or 2");
}

}  // namespace

Jet lattice_jet(const FieldConfig& phi, int order) {
  require_order(order);
  Jet j;
  if (order >= 1) {
    j.dt = diff_t(phi);
    j.dx = diff_x(phi);
  }
  if (order >= 2) {
    j.dtt = diff_tt(phi);
    j.dtx = diff_t(j.dx);
    j.dxx = diff_xx(phi);
  }
  return j;
}

FieldConfig jet_norm_sq(const FieldConfig& phi, int k) {
  require_order(k);
  const GridSpacetime& st = *phi.st;
  Jet j = lattice_jet(phi, k);
  FieldConfig out = FieldConfig::zeros(st);
  for (size_t i = 0; i < out.v.size(); ++i) {
    double s = phi.v[i] * phi.v[i];
    if (k >= 1) s += j.dt.v[i] * j.dt.v[i] + j.dx.v[i] * j.dx.v[i];
    if (k >= 2)
      s += j.dtt.v[i] * j.dtt.v[i] + 2.0 * j.dtx.v[i] * j.dtx.v[i] + j.dxx.v[i] * j.dxx.v[i];
    out.v[i] = s;
  }
  return out;
}

double sup_seminorm(const FieldConfig& phi, int k, const NodeSet& K) {
  if (K.empty()) throw std::invalid_argument("sup_seminorm: empty node set");
  if (K.nt != phi.st->nt || K.nx != phi.st->nx)
    throw std::invalid_argument("sup_seminorm: node set shape mismatch");
  FieldConfig q = jet_norm_sq(phi, k);
  double m = 0.0;
  for (int it = 0; it < K.nt; ++it)
    for (int ix = 0; ix < K.nx; ++ix)
      if (K.contains(it, ix)) m = std::max(m, q.at(it, ix));
  return std::sqrt(m);
}

double sup_seminorm_weighted(const FieldConfig& phi, int k, const TestFunction& f) {
  if (f.st == nullptr || phi.st == nullptr || !same_grid(*f.st, *phi.st))
    throw std::invalid_argument("sup_seminorm_weighted: operands live on different grids");
  FieldConfig q = jet_norm_sq(phi, k);
  double m = 0.0;
  for (size_t i = 0; i < q.v.size(); ++i) m = std::max(m, f.v[i] * f.v[i] * q.v[i]);
  return std::sqrt(m);
}

double sobolev_sq(const FieldConfig& phi, int k, const TestFunction& f) {
  if (f.st == nullptr || phi.st == nullptr || !same_grid(*f.st, *phi.st))
    throw std::invalid_argument("sobolev_sq: operands live on different grids");
  FieldConfig q = jet_norm_sq(phi, k);
  double acc = 0.0;
  for (size_t i = 0; i < q.v.size(); ++i) acc += f.v[i] * f.v[i] * q.v[i];
  return acc * phi.st->dt * phi.st->dx;
}

void write_csv(std::ostream& os, const GridSpacetime& st, const std::vector<double>& values) {
  if (values.size() != static_cast<size_t>(st.n_nodes()))
    throw std::invalid_argument("write_csv: value count does not match grid");
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (int it = 0; it < st.nt; ++it) {
    for (int ix = 0; ix < st.nx; ++ix) {
      if (ix) os << ',';
      os << values[static_cast<size_t>(it) * st.nx + ix];
    }
    os << '\n';
  }
}

std::vector<double> read_csv(std::istream& is, const GridSpacetime& st) {
  std::vector<double> out;
  out.reserve(st.n_nodes());
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) out.push_back(std::stod(cell));
  }
  if (out.size() != static_cast<size_t>(st.n_nodes()))
    throw std::invalid_argument("read_csv: value count does not match grid");
  return out;
}

}  // namespace fieldlab
