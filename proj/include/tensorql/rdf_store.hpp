#pragma once

// Dictionary-encoded RDF graphs stored as a |S| x |P| x |O| Boolean tensor,
// N-Triples ingestion and serialization, cross-graph label alignment and the
// per-mode marginal count matrices used by the cardinality estimators.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tensorql/tensor_core.hpp"

namespace tensorql {

class ParseError : public Error {
 public:
  ParseError(std::string message, std::size_t line, std::size_t column);
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

inline bool is_blank_term(std::string_view term) { return term.starts_with("_:"); }

// Bijection between terms and [0, size()) in insertion order.
//
// Blank nodes carry the scope of the file they were read from, so `_:b` from
// two different files occupies two entries. Non-blank terms always have
// scope 0.
class Dictionary {
 public:
  struct Entry {
    std::string text;
    std::uint32_t scope = 0;
  };

  Index size() const { return entries_.size(); }
  const std::string& term(Index i) const;
  const Entry& entry(Index i) const;
  std::span<const Entry> entries() const { return entries_; }

  // `blank_scope` is only consulted when `text` is a blank node.
  std::optional<Index> find(std::string_view text, std::uint32_t blank_scope) const;
  std::optional<Index> find(const Entry& e) const;
  // Returns the existing index or appends a new entry.
  Index intern(std::string_view text, std::uint32_t blank_scope);
  Index intern(const Entry& e);

 private:
  static std::string key(std::string_view text, std::uint32_t scope);

  std::vector<Entry> entries_;
  std::unordered_map<std::string, Index> index_;
};

// Left entries in order, then the right entries the left does not contain.
struct DictionaryUnion {
  std::shared_ptr<const Dictionary> dict;
  std::vector<Index> left_map;
  std::vector<Index> right_map;
};
DictionaryUnion unite(const Dictionary& left, const Dictionary& right);

// Sparse nonnegative integer matrix with exact per-row and per-column sums of
// squares, so l2 norms never drift from the counts.
class CountMatrix {
 public:
  CountMatrix() = default;
  CountMatrix(Index rows, Index cols);

  Index rows() const { return rows_.size(); }
  Index cols() const { return cols_.size(); }
  Index get(Index r, Index c) const;
  // Adds +1 or -1; throws if a count would go negative.
  void add(Index r, Index c, int delta);
  void grow(Index rows, Index cols);

  const std::map<Index, Index>& row(Index r) const { return rows_.at(r); }
  const std::map<Index, Index>& col(Index c) const { return cols_.at(c); }
  std::uint64_t row_sum_squares(Index r) const { return row_sq_.at(r); }
  std::uint64_t col_sum_squares(Index c) const { return col_sq_.at(c); }
  double row_norm(Index r) const;
  double col_norm(Index c) const;

  Index total() const { return total_; }
  std::size_t nnz() const { return nnz_; }

  struct Cell {
    Index row;
    Index col;
    Index count;
    bool operator==(const Cell&) const = default;
  };
  // Row-major list of nonzero cells.
  std::vector<Cell> cells() const;

 private:
  std::vector<std::map<Index, Index>> rows_;
  std::vector<std::map<Index, Index>> cols_;
  std::vector<std::uint64_t> row_sq_;
  std::vector<std::uint64_t> col_sq_;
  Index total_ = 0;
  std::size_t nnz_ = 0;
};

// Marginal sums of T along each mode:
//   by_subject   (|P| x |O|): p_jk = sum_i t_ijk
//   by_predicate (|S| x |O|): q_ik = sum_j t_ijk
//   by_object    (|S| x |P|): r_ij = sum_k t_ijk
struct MarginalStats {
  CountMatrix by_subject;
  CountMatrix by_predicate;
  CountMatrix by_object;

  // Count matrix obtained by summing out `mode`.
  const CountMatrix& summed_over(Axis mode) const;
  void grow(const std::array<Index, 3>& dims);
  void apply(Coord3 c, int delta);
};

MarginalStats marginals(const BoolTensor3& t);

struct TermTriple {
  std::string s;
  std::string p;
  std::string o;
  auto operator<=>(const TermTriple&) const = default;
};

struct Alignment {
  Axis mode = Axis::Mode1;
  std::shared_ptr<const Dictionary> shared;
  std::vector<Index> left_map;
  std::vector<Index> right_map;
};

class Graph {
 public:
  // Each graph gets a fresh blank-node scope.
  Graph();

  const Dictionary& subjects() const { return *dicts_[0]; }
  const Dictionary& predicates() const { return *dicts_[1]; }
  const Dictionary& objects() const { return *dicts_[2]; }
  const Dictionary& dictionary(Axis mode) const { return *dicts_[axis_index(mode)]; }
  // Snapshot handle; later updates to this graph never mutate it.
  std::shared_ptr<const Dictionary> dictionary_handle(Axis mode) const { return dicts_[axis_index(mode)]; }

  const BoolTensor3& tensor() const { return tensor_; }
  const MarginalStats& stats() const { return stats_; }
  std::uint32_t blank_scope() const { return scope_; }
  std::size_t size() const { return tensor_.nnz(); }

  // Returns false (and changes nothing) when the triple is already present.
  bool add_triple(const TermTriple& t);
  // Returns false when the triple is absent. Dictionaries never shrink.
  bool remove_triple(const TermTriple& t);

  std::optional<Coord3> encode(const TermTriple& t) const;
  TermTriple decode(Coord3 c) const;
  std::vector<TermTriple> decode(std::span<const Coord3> coords) const;
  std::vector<TermTriple> triples() const { return decode(tensor_.nonzeros()); }

  // Builds a graph from already-encoded parts; recomputes the marginals.
  static Graph from_parts(std::array<std::shared_ptr<const Dictionary>, 3> dicts, BoolTensor3 tensor,
                          std::uint32_t scope);

 private:
  Dictionary& mutable_dictionary(std::size_t mode);

  std::array<std::shared_ptr<Dictionary>, 3> dicts_;
  BoolTensor3 tensor_;
  MarginalStats stats_;
  std::uint32_t scope_;
};

std::uint32_t next_blank_scope();

// N-Triples subset: `<iri>` or `_:label` subjects, `<iri>` predicates,
// `<iri>`, `_:label` or `"literal"` (optionally `@lang` / `^^<iri>`) objects,
// `.` terminator, `#` comments, blank lines.
Graph load_ntriples(std::istream& in);
Graph load_ntriples_file(const std::string& path);
void serialize_ntriples(const Graph& g, std::ostream& out);

struct AlignedPair {
  Graph left;
  Graph right;
  std::vector<Alignment> alignments;
};

// Gives both graphs the union dictionary on each requested mode (left order,
// then unseen right terms) and pads the tensors with structural zeros.
AlignedPair align(const Graph& left, const Graph& right, std::span<const Axis> modes);

}  // namespace tensorql
