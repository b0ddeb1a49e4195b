#ifndef POROFEM_SPARSE_LINALG_HPP
#define POROFEM_SPARSE_LINALG_HPP

#include <algorithm>
#include <memory>
#include <numeric>
#include <vector>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "porofem/common.hpp"

namespace porofem {

/// Coordinate-format accumulator for finite element assembly.
/// Duplicate (row, col) entries are summed on conversion to CSR.
/// Per-thread accumulators can be combined with merge().
struct CooAccumulator {
  struct Triplet {
    int row, col;
    double value;
  };

  int rows = 0;
  int cols = 0;
  std::vector<Triplet> triplets;

  CooAccumulator() = default;
  CooAccumulator(int r, int c) : rows(r), cols(c) {}

  void add(int r, int c, double v) {
    if (r < 0 || r >= rows || c < 0 || c >= cols)
      throw UsageError("CooAccumulator::add: index out of bounds");
    triplets.push_back({r, c, v});
  }

  void merge(const CooAccumulator& other) {
    if (other.rows != rows || other.cols != cols)
      throw UsageError("CooAccumulator::merge: dimension mismatch");
    triplets.insert(triplets.end(), other.triplets.begin(), other.triplets.end());
  }
};

/// Compressed sparse row matrix. Column indices are strictly increasing
/// within each row.
struct CsrMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int> row_offsets;  // size rows+1
  std::vector<int> col_indices;
  std::vector<double> values;

  int nnz() const { return static_cast<int>(values.size()); }

  double at(int r, int c) const {
    for (int k = row_offsets[static_cast<std::size_t>(r)]; k < row_offsets[static_cast<std::size_t>(r) + 1]; ++k)
      if (col_indices[static_cast<std::size_t>(k)] == c) return values[static_cast<std::size_t>(k)];
    return 0.0;
  }

  std::vector<double> multiply(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != cols) throw UsageError("CsrMatrix::multiply: size mismatch");
    std::vector<double> y(static_cast<std::size_t>(rows), 0.0);
    for (int r = 0; r < rows; ++r) {
      double s = 0.0;
      for (int k = row_offsets[static_cast<std::size_t>(r)]; k < row_offsets[static_cast<std::size_t>(r) + 1]; ++k)
        s += values[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(col_indices[static_cast<std::size_t>(k)])];
      y[static_cast<std::size_t>(r)] = s;
    }
    return y;
  }

  /// y += s * A * x
  void multiply_add(const std::vector<double>& x, std::vector<double>& y, double s = 1.0) const {
    for (int r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (int k = row_offsets[static_cast<std::size_t>(r)]; k < row_offsets[static_cast<std::size_t>(r) + 1]; ++k)
        acc += values[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(col_indices[static_cast<std::size_t>(k)])];
      y[static_cast<std::size_t>(r)] += s * acc;
    }
  }

  CsrMatrix transpose() const {
    CsrMatrix t;
    t.rows = cols;
    t.cols = rows;
    t.row_offsets.assign(static_cast<std::size_t>(cols) + 1, 0);
    for (int c : col_indices) ++t.row_offsets[static_cast<std::size_t>(c) + 1];
    for (int r = 0; r < t.rows; ++r)
      t.row_offsets[static_cast<std::size_t>(r) + 1] += t.row_offsets[static_cast<std::size_t>(r)];
    t.col_indices.resize(values.size());
    t.values.resize(values.size());
    std::vector<int> next(t.row_offsets.begin(), t.row_offsets.end() - 1);
    for (int r = 0; r < rows; ++r)
      for (int k = row_offsets[static_cast<std::size_t>(r)]; k < row_offsets[static_cast<std::size_t>(r) + 1]; ++k) {
        int c = col_indices[static_cast<std::size_t>(k)];
        int pos = next[static_cast<std::size_t>(c)]++;
        t.col_indices[static_cast<std::size_t>(pos)] = r;
        t.values[static_cast<std::size_t>(pos)] = values[static_cast<std::size_t>(k)];
      }
    return t;
  }
};

/// Convert a COO accumulator to canonical CSR, summing duplicates.
inline CsrMatrix coo_to_csr(const CooAccumulator& acc) {
  CsrMatrix m;
  m.rows = acc.rows;
  m.cols = acc.cols;
  m.row_offsets.assign(static_cast<std::size_t>(acc.rows) + 1, 0);

  std::vector<std::size_t> order(acc.triplets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ta = acc.triplets[a];
    const auto& tb = acc.triplets[b];
    if (ta.row != tb.row) return ta.row < tb.row;
    if (ta.col != tb.col) return ta.col < tb.col;
    return a < b;  // stable within duplicates, deterministic summation order
  });

  for (std::size_t k = 0; k < order.size();) {
    const auto& first = acc.triplets[order[k]];
    double sum = 0.0;
    std::size_t j = k;
    while (j < order.size() && acc.triplets[order[j]].row == first.row &&
           acc.triplets[order[j]].col == first.col) {
      sum += acc.triplets[order[j]].value;
      ++j;
    }
    m.col_indices.push_back(first.col);
    m.values.push_back(sum);
    ++m.row_offsets[static_cast<std::size_t>(first.row) + 1];
    k = j;
  }
  for (int r = 0; r < m.rows; ++r)
    m.row_offsets[static_cast<std::size_t>(r) + 1] += m.row_offsets[static_cast<std::size_t>(r)];
  return m;
}

/// Reusable sparse LU factorization of a square CSR matrix.
///
/// Rows and columns are equilibrated before factorization so that the block
/// system's wildly different row scales (elasticity vs. mass-scaled rows) do
/// not degrade the pivoting. Immutable after construction.
class LinearSolver {
 public:
  explicit LinearSolver(const CsrMatrix& a) : n_(a.rows) {
    if (a.rows != a.cols) throw UsageError("LinearSolver: matrix must be square");
    row_scale_.assign(static_cast<std::size_t>(n_), 1.0);
    col_scale_.assign(static_cast<std::size_t>(n_), 1.0);
    for (int r = 0; r < n_; ++r) {
      double m = 0.0;
      for (int k = a.row_offsets[static_cast<std::size_t>(r)]; k < a.row_offsets[static_cast<std::size_t>(r) + 1]; ++k)
        m = std::max(m, std::abs(a.values[static_cast<std::size_t>(k)]));
      if (m == 0.0) throw SolverError("LinearSolver: structurally singular (empty row)", r);
      row_scale_[static_cast<std::size_t>(r)] = 1.0 / m;
    }
    std::vector<double> colmax(static_cast<std::size_t>(n_), 0.0);
    for (int r = 0; r < n_; ++r)
      for (int k = a.row_offsets[static_cast<std::size_t>(r)]; k < a.row_offsets[static_cast<std::size_t>(r) + 1]; ++k) {
        int c = a.col_indices[static_cast<std::size_t>(k)];
        colmax[static_cast<std::size_t>(c)] = std::max(
            colmax[static_cast<std::size_t>(c)],
            std::abs(a.values[static_cast<std::size_t>(k)]) * row_scale_[static_cast<std::size_t>(r)]);
      }
    for (int c = 0; c < n_; ++c) {
      if (colmax[static_cast<std::size_t>(c)] == 0.0)
        throw SolverError("LinearSolver: structurally singular (empty column)", c);
      col_scale_[static_cast<std::size_t>(c)] = 1.0 / colmax[static_cast<std::size_t>(c)];
    }

    Eigen::SparseMatrix<double> mat(n_, n_);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(a.values.size());
    for (int r = 0; r < n_; ++r)
      for (int k = a.row_offsets[static_cast<std::size_t>(r)]; k < a.row_offsets[static_cast<std::size_t>(r) + 1]; ++k) {
        int c = a.col_indices[static_cast<std::size_t>(k)];
        trips.emplace_back(r, c,
                           a.values[static_cast<std::size_t>(k)] *
                               row_scale_[static_cast<std::size_t>(r)] *
                               col_scale_[static_cast<std::size_t>(c)]);
      }
    mat.setFromTriplets(trips.begin(), trips.end());
    mat.makeCompressed();
    lu_ = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
    lu_->compute(mat);
    if (lu_->info() != Eigen::Success)
      throw SolverError("LinearSolver: factorization failed: " + lu_->lastErrorMessage());
  }

  int dimension() const { return n_; }

  std::vector<double> solve(const std::vector<double>& b) const {
    if (static_cast<int>(b.size()) != n_) throw UsageError("LinearSolver::solve: dimension mismatch");
    Eigen::VectorXd rhs(n_);
    for (int i = 0; i < n_; ++i) rhs[i] = b[static_cast<std::size_t>(i)] * row_scale_[static_cast<std::size_t>(i)];
    Eigen::VectorXd x = lu_->solve(rhs);
    if (lu_->info() != Eigen::Success) throw SolverError("LinearSolver::solve failed");
    std::vector<double> out(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) out[static_cast<std::size_t>(i)] = x[i] * col_scale_[static_cast<std::size_t>(i)];
    return out;
  }

 private:
  int n_;
  std::vector<double> row_scale_, col_scale_;
  std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
};

inline LinearSolver factorize(const CsrMatrix& a) { return LinearSolver(a); }

inline std::vector<double> solve(const LinearSolver& s, const std::vector<double>& b) {
  return s.solve(b);
}

}  // namespace porofem

#endif
