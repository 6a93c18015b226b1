#pragma once

// Sparse Boolean vectors, matrices and 3-way tensors.
//
// Every structure stores its nonzeros as a sorted, duplicate-free coordinate
// list (row-major for matrices, lexicographic (i, j, k) for tensors). All
// values are immutable after construction and safe to share across threads.
//
// Block numbering of Kronecker and Khatri-Rao outputs is row-major over
// (left index, right index): row i1 of the left operand and row i2 of the
// right operand land on row i1 * right.rows() + i2.

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tensorql {

using Index = std::uint64_t;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DimensionOverflow : public Error {
 public:
  using Error::Error;
};

class IndexOutOfRange : public Error {
 public:
  using Error::Error;
};

// a * b, throwing DimensionOverflow instead of wrapping.
Index checked_mul(Index a, Index b);

enum class Axis : std::uint8_t { Mode1 = 0, Mode2 = 1, Mode3 = 2 };

constexpr std::size_t axis_index(Axis a) { return static_cast<std::size_t>(a); }
constexpr Axis axis_from_index(std::size_t i) { return static_cast<Axis>(i); }
std::string_view axis_name(Axis a);

struct Coord2 {
  Index row = 0;
  Index col = 0;
  auto operator<=>(const Coord2&) const = default;
};

struct Coord3 {
  Index i = 0;
  Index j = 0;
  Index k = 0;
  auto operator<=>(const Coord3&) const = default;
  Index operator[](std::size_t mode) const { return mode == 0 ? i : (mode == 1 ? j : k); }
};

class BoolVector {
 public:
  BoolVector() = default;
  explicit BoolVector(Index dim) : dim_(dim) {}
  // Sorts and deduplicates; throws IndexOutOfRange on an index >= dim.
  BoolVector(Index dim, std::vector<Index> nonzeros);

  static BoolVector ones(Index dim);

  Index dim() const { return dim_; }
  std::span<const Index> nonzeros() const { return idx_; }
  std::size_t nnz() const { return idx_.size(); }
  bool empty() const { return idx_.empty(); }
  bool test(Index i) const;

  bool operator==(const BoolVector&) const = default;

 private:
  Index dim_ = 0;
  std::vector<Index> idx_;
};

class BoolMatrix {
 public:
  BoolMatrix() = default;
  BoolMatrix(Index rows, Index cols) : rows_(rows), cols_(cols) {}
  // Sorts and deduplicates; throws IndexOutOfRange on out-of-range coordinates.
  BoolMatrix(Index rows, Index cols, std::vector<Coord2> nonzeros);

  static BoolMatrix identity(Index n);
  // Dense 0/1 rows, mostly for tests and small literals.
  static BoolMatrix from_rows(const std::vector<std::vector<int>>& rows);
  // n x 1 matrix holding v as its single column.
  static BoolMatrix column(const BoolVector& v);
  // 1 x n matrix holding v as its single row.
  static BoolMatrix row(const BoolVector& v);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  std::span<const Coord2> nonzeros() const { return nz_; }
  std::size_t nnz() const { return nz_.size(); }
  bool empty() const { return nz_.empty(); }
  bool test(Index r, Index c) const;

  // Column marginals sigma_c = sum_r m_rc.
  std::vector<Index> column_sums() const;
  std::vector<Index> row_sums() const;
  // OR over rows: 1 where the column has any nonzero.
  BoolVector column_support() const;
  // OR over columns: 1 where the row has any nonzero.
  BoolVector row_support() const;

  bool operator==(const BoolMatrix&) const = default;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Coord2> nz_;
};

class BoolTensor3 {
 public:
  BoolTensor3() = default;
  explicit BoolTensor3(std::array<Index, 3> dims) : dims_(dims) {}
  BoolTensor3(std::array<Index, 3> dims, std::vector<Coord3> nonzeros);

  const std::array<Index, 3>& dims() const { return dims_; }
  Index dim(Axis a) const { return dims_[axis_index(a)]; }
  std::span<const Coord3> nonzeros() const { return nz_; }
  std::size_t nnz() const { return nz_.size(); }
  bool empty() const { return nz_.empty(); }
  bool test(Index i, Index j, Index k) const;

  // Value-style updates, O(nnz). `with` is a no-op for a present coordinate,
  // `without` for an absent one. `resized` only allows growing.
  BoolTensor3 with(Coord3 c) const;
  BoolTensor3 without(Coord3 c) const;
  BoolTensor3 resized(std::array<Index, 3> dims) const;

  bool operator==(const BoolTensor3&) const = default;

 private:
  std::array<Index, 3> dims_{0, 0, 0};
  std::vector<Coord3> nz_;
};

enum class LogicOp { And, Or, AndNot };

BoolMatrix kronecker(const BoolMatrix& a, const BoolMatrix& b);
// Column-wise Kronecker product. Requires a.cols() == b.cols().
BoolMatrix khatri_rao(const BoolMatrix& a, const BoolMatrix& b);
// (a o b)_ij = OR_k a_ik AND b_kj. Requires a.cols() == b.rows().
BoolMatrix boolean_matmul(const BoolMatrix& a, const BoolMatrix& b);
BoolMatrix transpose(const BoolMatrix& a);

BoolVector elementwise(LogicOp op, const BoolVector& x, const BoolVector& y);
BoolMatrix elementwise(LogicOp op, const BoolMatrix& x, const BoolMatrix& y);
BoolTensor3 elementwise(LogicOp op, const BoolTensor3& x, const BoolTensor3& y);

// a b^T as an a.dim() x b.dim() matrix.
BoolMatrix outer(const BoolVector& a, const BoolVector& b);
// x_ijk = a_i b_j c_k.
BoolTensor3 outer3(const BoolVector& a, const BoolVector& b, const BoolVector& c);

// Fixes one mode. The two remaining modes keep their order: slicing mode 2
// gives rows = mode 1, cols = mode 3.
BoolMatrix slice(const BoolTensor3& t, Axis axis, Index index);

struct FixedIndex {
  Axis axis;
  Index index;
};

// Fixes two distinct modes and returns the fibre along the third.
BoolVector fibre(const BoolTensor3& t, FixedIndex first, FixedIndex second);

// Maps a matricization column back to the two free-mode indices.
// The later-numbered free mode varies slowest: col = later * dim(earlier) + earlier.
struct ColumnDecoder {
  Axis mode = Axis::Mode1;
  Axis earlier = Axis::Mode2;
  Axis later = Axis::Mode3;
  Index earlier_dim = 0;
  Index later_dim = 0;

  // Returns {index on `earlier`, index on `later`}.
  std::pair<Index, Index> decode(Index col) const;
  Index encode(Index earlier_index, Index later_index) const;
};

struct Matricization {
  BoolMatrix matrix;
  ColumnDecoder decoder;
};

// Mode-n unfolding: the mode-n fibres become the columns, so the result has
// dims[mode] rows.
Matricization matricize(const BoolTensor3& t, Axis mode);

enum class VecOrder { RowMajor, ColumnMajor };
// Stacks the matrix entries into a (rows * cols)-long vector.
BoolVector vectorize(const BoolMatrix& m, VecOrder order);

inline std::size_t nnz(const BoolVector& v) { return v.nnz(); }
inline std::size_t nnz(const BoolMatrix& m) { return m.nnz(); }
inline std::size_t nnz(const BoolTensor3& t) { return t.nnz(); }

// s(X) = 1 - nnz / (product of dims); an empty shape counts as fully sparse.
double sparsity(const BoolVector& v);
double sparsity(const BoolMatrix& m);
double sparsity(const BoolTensor3& t);
inline double density(const BoolVector& v) { return 1.0 - sparsity(v); }
inline double density(const BoolMatrix& m) { return 1.0 - sparsity(m); }
inline double density(const BoolTensor3& t) { return 1.0 - sparsity(t); }

}  // namespace tensorql
