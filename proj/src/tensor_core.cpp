#include "tensorql/tensor_core.hpp"

#include <algorithm>
#include <iterator>
#include <limits>
#include <unordered_map>

namespace tensorql {

namespace {

template <typename T>
void sort_unique(std::vector<T>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

std::string shape_str(Index r, Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

std::string shape_str(const std::array<Index, 3>& d) {
  return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
}

// Set algebra over two sorted ranges.
template <typename T>
std::vector<T> merge_sorted(LogicOp op, std::span<const T> x, std::span<const T> y) {
  std::vector<T> out;
  switch (op) {
    case LogicOp::And:
      std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(out));
      break;
    case LogicOp::Or:
      std::set_union(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(out));
      break;
    case LogicOp::AndNot:
      std::set_difference(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(out));
      break;
  }
  return out;
}

double sparsity_of(std::size_t nz, long double cells) {
  if (cells == 0) return 1.0;
  return static_cast<double>(1.0L - static_cast<long double>(nz) / cells);
}

}  // namespace

Index checked_mul(Index a, Index b) {
  Index out = 0;
  if (__builtin_mul_overflow(a, b, &out)) {
    throw DimensionOverflow("dimension product " + std::to_string(a) + " * " + std::to_string(b) +
                            " overflows 64 bits");
  }
  return out;
}

std::string_view axis_name(Axis a) {
  switch (a) {
    case Axis::Mode1: return "mode1";
    case Axis::Mode2: return "mode2";
    case Axis::Mode3: return "mode3";
  }
  return "?";
}

// ---------------------------------------------------------------- BoolVector

BoolVector::BoolVector(Index dim, std::vector<Index> nonzeros) : dim_(dim), idx_(std::move(nonzeros)) {
  sort_unique(idx_);
  if (!idx_.empty() && idx_.back() >= dim_) {
    throw IndexOutOfRange("vector index " + std::to_string(idx_.back()) + " >= dim " + std::to_string(dim_));
  }
}

BoolVector BoolVector::ones(Index dim) {
  std::vector<Index> idx(dim);
  for (Index i = 0; i < dim; ++i) idx[i] = i;
  return BoolVector(dim, std::move(idx));
}

bool BoolVector::test(Index i) const { return std::binary_search(idx_.begin(), idx_.end(), i); }

// ---------------------------------------------------------------- BoolMatrix

BoolMatrix::BoolMatrix(Index rows, Index cols, std::vector<Coord2> nonzeros)
    : rows_(rows), cols_(cols), nz_(std::move(nonzeros)) {
  sort_unique(nz_);
  for (const auto& c : nz_) {
    if (c.row >= rows_ || c.col >= cols_) {
      throw IndexOutOfRange("matrix coordinate (" + std::to_string(c.row) + "," + std::to_string(c.col) +
                            ") outside " + shape_str(rows_, cols_));
    }
  }
}

BoolMatrix BoolMatrix::identity(Index n) {
  std::vector<Coord2> nz(n);
  for (Index i = 0; i < n; ++i) nz[i] = {i, i};
  return BoolMatrix(n, n, std::move(nz));
}

BoolMatrix BoolMatrix::from_rows(const std::vector<std::vector<int>>& rows) {
  const Index r = rows.size();
  const Index c = rows.empty() ? 0 : rows.front().size();
  std::vector<Coord2> nz;
  for (Index i = 0; i < r; ++i) {
    if (rows[i].size() != c) throw ShapeError("ragged dense matrix literal");
    for (Index j = 0; j < c; ++j) {
      if (rows[i][j] != 0) nz.push_back({i, j});
    }
  }
  return BoolMatrix(r, c, std::move(nz));
}

BoolMatrix BoolMatrix::column(const BoolVector& v) {
  std::vector<Coord2> nz;
  nz.reserve(v.nnz());
  for (Index i : v.nonzeros()) nz.push_back({i, 0});
  return BoolMatrix(v.dim(), 1, std::move(nz));
}

BoolMatrix BoolMatrix::row(const BoolVector& v) {
  std::vector<Coord2> nz;
  nz.reserve(v.nnz());
  for (Index i : v.nonzeros()) nz.push_back({0, i});
  return BoolMatrix(1, v.dim(), std::move(nz));
}

bool BoolMatrix::test(Index r, Index c) const { return std::binary_search(nz_.begin(), nz_.end(), Coord2{r, c}); }

std::vector<Index> BoolMatrix::column_sums() const {
  std::vector<Index> s(cols_, 0);
  for (const auto& c : nz_) ++s[c.col];
  return s;
}

std::vector<Index> BoolMatrix::row_sums() const {
  std::vector<Index> s(rows_, 0);
  for (const auto& c : nz_) ++s[c.row];
  return s;
}

BoolVector BoolMatrix::column_support() const {
  std::vector<Index> idx;
  idx.reserve(nz_.size());
  for (const auto& c : nz_) idx.push_back(c.col);
  return BoolVector(cols_, std::move(idx));
}

BoolVector BoolMatrix::row_support() const {
  std::vector<Index> idx;
  for (const auto& c : nz_) {
    if (idx.empty() || idx.back() != c.row) idx.push_back(c.row);
  }
  return BoolVector(rows_, std::move(idx));
}

// ---------------------------------------------------------------- BoolTensor3

BoolTensor3::BoolTensor3(std::array<Index, 3> dims, std::vector<Coord3> nonzeros)
    : dims_(dims), nz_(std::move(nonzeros)) {
  sort_unique(nz_);
  for (const auto& c : nz_) {
    if (c.i >= dims_[0] || c.j >= dims_[1] || c.k >= dims_[2]) {
      throw IndexOutOfRange("tensor coordinate (" + std::to_string(c.i) + "," + std::to_string(c.j) + "," +
                            std::to_string(c.k) + ") outside " + shape_str(dims_));
    }
  }
}

bool BoolTensor3::test(Index i, Index j, Index k) const {
  return std::binary_search(nz_.begin(), nz_.end(), Coord3{i, j, k});
}

BoolTensor3 BoolTensor3::with(Coord3 c) const {
  if (c.i >= dims_[0] || c.j >= dims_[1] || c.k >= dims_[2]) {
    throw IndexOutOfRange("tensor coordinate outside " + shape_str(dims_));
  }
  BoolTensor3 out = *this;
  auto it = std::lower_bound(out.nz_.begin(), out.nz_.end(), c);
  if (it == out.nz_.end() || *it != c) out.nz_.insert(it, c);
  return out;
}

BoolTensor3 BoolTensor3::without(Coord3 c) const {
  BoolTensor3 out = *this;
  auto it = std::lower_bound(out.nz_.begin(), out.nz_.end(), c);
  if (it != out.nz_.end() && *it == c) out.nz_.erase(it);
  return out;
}

BoolTensor3 BoolTensor3::resized(std::array<Index, 3> dims) const {
  for (std::size_t m = 0; m < 3; ++m) {
    if (dims[m] < dims_[m]) throw ShapeError("BoolTensor3::resized cannot shrink " + shape_str(dims_));
  }
  BoolTensor3 out = *this;
  out.dims_ = dims;
  return out;
}

// ---------------------------------------------------------------- products

BoolMatrix kronecker(const BoolMatrix& a, const BoolMatrix& b) {
  const Index rows = checked_mul(a.rows(), b.rows());
  const Index cols = checked_mul(a.cols(), b.cols());
  checked_mul(a.nnz(), b.nnz());
  std::vector<Coord2> nz;
  nz.reserve(a.nnz() * b.nnz());
  // a and b are row-major sorted, so iterating a-rows, then b-rows keeps the
  // output rows sorted; columns within a row need a local sort.
  auto a_nz = a.nonzeros();
  auto b_nz = b.nonzeros();
  std::size_t ai = 0;
  while (ai < a_nz.size()) {
    std::size_t ae = ai;
    while (ae < a_nz.size() && a_nz[ae].row == a_nz[ai].row) ++ae;
    std::size_t bi = 0;
    while (bi < b_nz.size()) {
      std::size_t be = bi;
      while (be < b_nz.size() && b_nz[be].row == b_nz[bi].row) ++be;
      const Index row = a_nz[ai].row * b.rows() + b_nz[bi].row;
      for (std::size_t x = ai; x < ae; ++x) {
        for (std::size_t y = bi; y < be; ++y) {
          nz.push_back({row, a_nz[x].col * b.cols() + b_nz[y].col});
        }
      }
      bi = be;
    }
    ai = ae;
  }
  return BoolMatrix(rows, cols, std::move(nz));
}

BoolMatrix khatri_rao(const BoolMatrix& a, const BoolMatrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("khatri_rao: column counts differ (" + shape_str(a.rows(), a.cols()) + " vs " +
                     shape_str(b.rows(), b.cols()) + ")");
  }
  const Index rows = checked_mul(a.rows(), b.rows());
  // Rows of b grouped by column.
  std::unordered_map<Index, std::vector<Index>> b_by_col;
  for (const auto& c : b.nonzeros()) b_by_col[c.col].push_back(c.row);
  std::vector<Coord2> nz;
  for (const auto& ca : a.nonzeros()) {
    auto it = b_by_col.find(ca.col);
    if (it == b_by_col.end()) continue;
    for (Index rb : it->second) nz.push_back({ca.row * b.rows() + rb, ca.col});
  }
  return BoolMatrix(rows, a.cols(), std::move(nz));
}

BoolMatrix boolean_matmul(const BoolMatrix& a, const BoolMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("boolean_matmul: inner dimensions differ (" + shape_str(a.rows(), a.cols()) + " vs " +
                     shape_str(b.rows(), b.cols()) + ")");
  }
  // Row-start offsets into b's row-major list.
  std::unordered_map<Index, std::pair<std::size_t, std::size_t>> b_rows;
  auto b_nz = b.nonzeros();
  for (std::size_t x = 0; x < b_nz.size();) {
    std::size_t e = x;
    while (e < b_nz.size() && b_nz[e].row == b_nz[x].row) ++e;
    b_rows[b_nz[x].row] = {x, e};
    x = e;
  }
  std::vector<Coord2> nz;
  auto a_nz = a.nonzeros();
  std::vector<Index> row_cols;
  for (std::size_t x = 0; x < a_nz.size();) {
    std::size_t e = x;
    while (e < a_nz.size() && a_nz[e].row == a_nz[x].row) ++e;
    row_cols.clear();
    for (std::size_t y = x; y < e; ++y) {
      auto it = b_rows.find(a_nz[y].col);
      if (it == b_rows.end()) continue;
      for (std::size_t z = it->second.first; z < it->second.second; ++z) row_cols.push_back(b_nz[z].col);
    }
    sort_unique(row_cols);
    for (Index c : row_cols) nz.push_back({a_nz[x].row, c});
    x = e;
  }
  return BoolMatrix(a.rows(), b.cols(), std::move(nz));
}

BoolMatrix transpose(const BoolMatrix& a) {
  std::vector<Coord2> nz;
  nz.reserve(a.nnz());
  for (const auto& c : a.nonzeros()) nz.push_back({c.col, c.row});
  return BoolMatrix(a.cols(), a.rows(), std::move(nz));
}

BoolVector elementwise(LogicOp op, const BoolVector& x, const BoolVector& y) {
  if (x.dim() != y.dim()) throw ShapeError("elementwise: vector dims differ");
  return BoolVector(x.dim(), merge_sorted<Index>(op, x.nonzeros(), y.nonzeros()));
}

BoolMatrix elementwise(LogicOp op, const BoolMatrix& x, const BoolMatrix& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw ShapeError("elementwise: " + shape_str(x.rows(), x.cols()) + " vs " + shape_str(y.rows(), y.cols()));
  }
  return BoolMatrix(x.rows(), x.cols(), merge_sorted<Coord2>(op, x.nonzeros(), y.nonzeros()));
}

BoolTensor3 elementwise(LogicOp op, const BoolTensor3& x, const BoolTensor3& y) {
  if (x.dims() != y.dims()) throw ShapeError("elementwise: " + shape_str(x.dims()) + " vs " + shape_str(y.dims()));
  return BoolTensor3(x.dims(), merge_sorted<Coord3>(op, x.nonzeros(), y.nonzeros()));
}

BoolMatrix outer(const BoolVector& a, const BoolVector& b) {
  std::vector<Coord2> nz;
  nz.reserve(a.nnz() * b.nnz());
  for (Index i : a.nonzeros()) {
    for (Index j : b.nonzeros()) nz.push_back({i, j});
  }
  return BoolMatrix(a.dim(), b.dim(), std::move(nz));
}

BoolTensor3 outer3(const BoolVector& a, const BoolVector& b, const BoolVector& c) {
  std::vector<Coord3> nz;
  nz.reserve(a.nnz() * b.nnz() * c.nnz());
  for (Index i : a.nonzeros()) {
    for (Index j : b.nonzeros()) {
      for (Index k : c.nonzeros()) nz.push_back({i, j, k});
    }
  }
  return BoolTensor3({a.dim(), b.dim(), c.dim()}, std::move(nz));
}

// ---------------------------------------------------------------- restrictions

BoolMatrix slice(const BoolTensor3& t, Axis axis, Index index) {
  const std::size_t m = axis_index(axis);
  if (index >= t.dims()[m]) {
    throw IndexOutOfRange("slice index " + std::to_string(index) + " >= " + std::to_string(t.dims()[m]) + " on " +
                          std::string(axis_name(axis)));
  }
  const std::size_t r = m == 0 ? 1 : 0;
  const std::size_t c = m == 2 ? 1 : 2;
  std::vector<Coord2> nz;
  if (m == 0) {
    auto nzs = t.nonzeros();
    auto lo = std::lower_bound(nzs.begin(), nzs.end(), Coord3{index, 0, 0});
    for (auto it = lo; it != nzs.end() && it->i == index; ++it) nz.push_back({it->j, it->k});
  } else {
    for (const auto& x : t.nonzeros()) {
      if (x[m] == index) nz.push_back({x[r], x[c]});
    }
  }
  return BoolMatrix(t.dims()[r], t.dims()[c], std::move(nz));
}

BoolVector fibre(const BoolTensor3& t, FixedIndex first, FixedIndex second) {
  const std::size_t a = axis_index(first.axis);
  const std::size_t b = axis_index(second.axis);
  if (a == b) throw ShapeError("fibre: both fixed indices use " + std::string(axis_name(first.axis)));
  if (first.index >= t.dims()[a] || second.index >= t.dims()[b]) {
    throw IndexOutOfRange("fibre index outside " + shape_str(t.dims()));
  }
  const std::size_t free = 3 - a - b;
  std::vector<Index> idx;
  for (const auto& x : t.nonzeros()) {
    if (x[a] == first.index && x[b] == second.index) idx.push_back(x[free]);
  }
  return BoolVector(t.dims()[free], std::move(idx));
}

std::pair<Index, Index> ColumnDecoder::decode(Index col) const {
  if (earlier_dim == 0) throw IndexOutOfRange("column decode on empty mode");
  return {col % earlier_dim, col / earlier_dim};
}

Index ColumnDecoder::encode(Index earlier_index, Index later_index) const {
  return later_index * earlier_dim + earlier_index;
}

Matricization matricize(const BoolTensor3& t, Axis mode) {
  const std::size_t m = axis_index(mode);
  const std::size_t e = m == 0 ? 1 : 0;
  const std::size_t l = m == 2 ? 1 : 2;
  ColumnDecoder dec{mode, axis_from_index(e), axis_from_index(l), t.dims()[e], t.dims()[l]};
  const Index cols = checked_mul(t.dims()[e], t.dims()[l]);
  std::vector<Coord2> nz;
  nz.reserve(t.nnz());
  for (const auto& x : t.nonzeros()) nz.push_back({x[m], dec.encode(x[e], x[l])});
  return {BoolMatrix(t.dims()[m], cols, std::move(nz)), dec};
}

BoolVector vectorize(const BoolMatrix& m, VecOrder order) {
  const Index n = checked_mul(m.rows(), m.cols());
  std::vector<Index> idx;
  idx.reserve(m.nnz());
  for (const auto& c : m.nonzeros()) {
    idx.push_back(order == VecOrder::RowMajor ? c.row * m.cols() + c.col : c.col * m.rows() + c.row);
  }
  return BoolVector(n, std::move(idx));
}

double sparsity(const BoolVector& v) { return sparsity_of(v.nnz(), static_cast<long double>(v.dim())); }

double sparsity(const BoolMatrix& m) {
  return sparsity_of(m.nnz(), static_cast<long double>(m.rows()) * static_cast<long double>(m.cols()));
}

double sparsity(const BoolTensor3& t) {
  const auto& d = t.dims();
  return sparsity_of(t.nnz(), static_cast<long double>(d[0]) * static_cast<long double>(d[1]) *
                                  static_cast<long double>(d[2]));
}

}  // namespace tensorql
