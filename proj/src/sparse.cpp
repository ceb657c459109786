#include "fieldlab/sparse.hpp"

#include <algorithm>
#include <stdexcept>

namespace fieldlab {

SparseOp::SparseOp(int rows, int cols, std::vector<Triplet> entries)
    : rows_(rows), cols_(cols) {
  std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  rowptr_.assign(static_cast<size_t>(rows) + 1, 0);
  for (const auto& e : entries) {
    if (e.row < 0 || e.row >= rows || e.col < 0 || e.col >= cols)
      throw std::invalid_argument("SparseOp: entry out of range");
  }
  // Merge duplicates while counting.
  colidx_.reserve(entries.size());
  val_.reserve(entries.size());
  for (size_t i = 0; i < entries.size();) {
    size_t j = i;
    double acc = 0.0;
    while (j < entries.size() && entries[j].row == entries[i].row &&
           entries[j].col == entries[i].col) {
      acc += entries[j].value;
      ++j;
    }
    colidx_.push_back(entries[i].col);
    val_.push_back(acc);
    ++rowptr_[static_cast<size_t>(entries[i].row) + 1];
    i = j;
  }
  for (int r = 0; r < rows; ++r) rowptr_[static_cast<size_t>(r) + 1] += rowptr_[r];
}

std::vector<double> SparseOp::apply(const std::vector<double>& x) const {
  if (x.size() != static_cast<size_t>(cols_))
    throw std::invalid_argument("SparseOp::apply: size mismatch");
  std::vector<double> y(static_cast<size_t>(rows_), 0.0);
  for (int r = 0; r < rows_; ++r) {
    double acc = 0.0;
    for (int k = rowptr_[r]; k < rowptr_[static_cast<size_t>(r) + 1]; ++k)
      acc += val_[k] * x[colidx_[k]];
    y[r] = acc;
  }
  return y;
}

std::vector<double> SparseOp::apply_transpose(const std::vector<double>& x) const {
  if (x.size() != static_cast<size_t>(rows_))
    throw std::invalid_argument("SparseOp::apply_transpose: size mismatch");
  std::vector<double> y(static_cast<size_t>(cols_), 0.0);
  for (int r = 0; r < rows_; ++r)
    for (int k = rowptr_[r]; k < rowptr_[static_cast<size_t>(r) + 1]; ++k)
      y[colidx_[k]] += val_[k] * x[r];
  return y;
}

SparseOp SparseOp::transposed() const {
  std::vector<Triplet> t;
  t.reserve(val_.size());
  for (int r = 0; r < rows_; ++r)
    for (int k = rowptr_[r]; k < rowptr_[static_cast<size_t>(r) + 1]; ++k)
      t.push_back({colidx_[k], r, val_[k]});
  return SparseOp(cols_, rows_, std::move(t));
}

std::vector<double> SparseOp::to_dense() const {
  std::vector<double> d(static_cast<size_t>(rows_) * cols_, 0.0);
  for (int r = 0; r < rows_; ++r)
    for (int k = rowptr_[r]; k < rowptr_[static_cast<size_t>(r) + 1]; ++k)
      d[static_cast<size_t>(r) * cols_ + colidx_[k]] = val_[k];
  return d;
}

SparseOp SparseOp::identity(int n) {
  std::vector<Triplet> t;
  t.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) t.push_back({i, i, 1.0});
  return SparseOp(n, n, std::move(t));
}

namespace {
int node_of(const GridSpacetime& st, int it, int ix) {
  return it * st.nx + st.wrap_x(ix);
}
}  // namespace

SparseOp make_diff_x(const GridSpacetime& st) {
  std::vector<Triplet> t;
  const double c = 1.0 / (2.0 * st.dx);
  for (int it = 0; it < st.nt; ++it)
    for (int ix = 0; ix < st.nx; ++ix) {
      int r = node_of(st, it, ix);
      t.push_back({r, node_of(st, it, ix + 1), c});
      t.push_back({r, node_of(st, it, ix - 1), -c});
    }
  return SparseOp(st.n_nodes(), st.n_nodes(), std::move(t));
}

SparseOp make_diff_t(const GridSpacetime& st) {
  std::vector<Triplet> t;
  const double c = 1.0 / (2.0 * st.dt);
  for (int ix = 0; ix < st.nx; ++ix) {
    int r0 = node_of(st, 0, ix);
    t.push_back({r0, node_of(st, 0, ix), -3.0 * c});
    t.push_back({r0, node_of(st, 1, ix), 4.0 * c});
    t.push_back({r0, node_of(st, 2, ix), -c});
    for (int it = 1; it < st.nt - 1; ++it) {
      int r = node_of(st, it, ix);
      t.push_back({r, node_of(st, it + 1, ix), c});
      t.push_back({r, node_of(st, it - 1, ix), -c});
    }
    int r1 = node_of(st, st.nt - 1, ix);
    t.push_back({r1, node_of(st, st.nt - 1, ix), 3.0 * c});
    t.push_back({r1, node_of(st, st.nt - 2, ix), -4.0 * c});
    t.push_back({r1, node_of(st, st.nt - 3, ix), c});
  }
  return SparseOp(st.n_nodes(), st.n_nodes(), std::move(t));
}

SparseOp make_diff_xx(const GridSpacetime& st) {
  std::vector<Triplet> t;
  const double c = 1.0 / (st.dx * st.dx);
  for (int it = 0; it < st.nt; ++it)
    for (int ix = 0; ix < st.nx; ++ix) {
      int r = node_of(st, it, ix);
      t.push_back({r, node_of(st, it, ix + 1), c});
      t.push_back({r, node_of(st, it, ix), -2.0 * c});
      t.push_back({r, node_of(st, it, ix - 1), c});
    }
  return SparseOp(st.n_nodes(), st.n_nodes(), std::move(t));
}

SparseOp make_diff_tt(const GridSpacetime& st) {
  std::vector<Triplet> t;
  const double c = 1.0 / (st.dt * st.dt);
  for (int ix = 0; ix < st.nx; ++ix) {
    int r0 = node_of(st, 0, ix);
    t.push_back({r0, node_of(st, 0, ix), c});
    t.push_back({r0, node_of(st, 1, ix), -2.0 * c});
    t.push_back({r0, node_of(st, 2, ix), c});
    for (int it = 1; it < st.nt - 1; ++it) {
      int r = node_of(st, it, ix);
      t.push_back({r, node_of(st, it + 1, ix), c});
      t.push_back({r, node_of(st, it, ix), -2.0 * c});
      t.push_back({r, node_of(st, it - 1, ix), c});
    }
    int r1 = node_of(st, st.nt - 1, ix);
    t.push_back({r1, node_of(st, st.nt - 1, ix), c});
    t.push_back({r1, node_of(st, st.nt - 2, ix), -2.0 * c});
    t.push_back({r1, node_of(st, st.nt - 3, ix), c});
  }
  return SparseOp(st.n_nodes(), st.n_nodes(), std::move(t));
}

}  // namespace fieldlab
