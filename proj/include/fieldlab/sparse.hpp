/*
 * sparse.hpp — compressed-sparse-row linear operators on lattice fields,
 * with exact transposes.
 *
 * Every lattice difference operator used by functionals is materialized
 * as one of these, so adjoints in gradient and Hessian assembly are the
 * literal matrix transposes rather than hand-derived stencils.
 */
#pragma once

#include <vector>

#include "fieldlab/grid.hpp"

namespace fieldlab {

struct Triplet {
  int row, col;
  double value;
};

class SparseOp {
 public:
  SparseOp() = default;
  SparseOp(int rows, int cols, std::vector<Triplet> entries);

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  /// y = A x
  std::vector<double> apply(const std::vector<double>& x) const;
  /// y = Aᵀ x
  std::vector<double> apply_transpose(const std::vector<double>& x) const;

  SparseOp transposed() const;

  /// Row-major dense copy (tests and small composites only).
  std::vector<double> to_dense() const;

  static SparseOp identity(int n);

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<int> rowptr_, colidx_;
  std::vector<double> val_;
};

/// Centered single-step x-derivative (periodic).
SparseOp make_diff_x(const GridSpacetime& st);
/// t-derivative: centered at interior slices, second-order one-sided at the
/// two window ends.  Matches diff_t in fields.hpp entry for entry.
SparseOp make_diff_t(const GridSpacetime& st);
/// Three-point second differences (end slices reuse the adjacent stencil).
SparseOp make_diff_xx(const GridSpacetime& st);
SparseOp make_diff_tt(const GridSpacetime& st);

}  // namespace fieldlab
