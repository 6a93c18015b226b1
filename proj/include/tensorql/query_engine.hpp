#pragma once

// Evaluation of the SPARQL subset as Boolean tensor algebra.
//
// Every intermediate result is an AlgebraicResult: a Boolean vector, matrix
// or 3-way tensor whose axes are each a row-major product of *factors*. A
// factor is one variable together with the dictionary its indices refer to.
// A nonzero therefore decodes to one complete solution, e.g. the Khatri-Rao
// join of T_{:i:} and U_{:j:} on ?b has rows (?a, ?c) and columns (?b): row
// a * |S(U)| + c is "block a, row c within the block".
//
// A factor may be nullable, in which case its extra last index stands for
// UNBOUND. Hidden factors (names starting with '#') keep otherwise identical
// solutions apart (UNION branches, OPTIONAL's no-value marker) and are never
// projected.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tensorql/query.hpp"
#include "tensorql/rdf_store.hpp"
#include "tensorql/tensor_core.hpp"

namespace tensorql {

struct Factor {
  std::string var;
  std::shared_ptr<const Dictionary> dict;  // null for hidden factors
  Index size = 0;
  bool nullable = false;

  Index extent() const { return size + (nullable ? 1 : 0); }
  Index unbound() const { return size; }
  bool hidden() const { return !var.empty() && var.front() == '#'; }
};

using Payload = std::variant<BoolVector, BoolMatrix, BoolTensor3>;

struct AlgebraicResult {
  Payload payload;
  // One factor list per payload axis (1 for vectors, 2 for matrices, 3 for
  // tensors). The first factor of an axis varies slowest.
  std::vector<std::vector<Factor>> axes;

  std::size_t nnz() const;
  bool empty() const { return nnz() == 0; }
  // All factors, axis by axis.
  std::vector<Factor> factors() const;
  const Factor* find(const std::string& var) const;
  std::string shape() const;
};

// Row-major stride of each factor within its axis.
std::vector<Index> strides(const std::vector<Factor>& axis);

class GraphSet {
 public:
  void add(std::string alias, std::shared_ptr<const Graph> g);
  // Empty alias resolves to the first graph.
  const Graph& resolve(const std::string& alias) const;
  bool empty() const { return graphs_.empty(); }
  const std::vector<std::pair<std::string, std::shared_ptr<const Graph>>>& entries() const { return graphs_; }

 private:
  std::vector<std::pair<std::string, std::shared_ptr<const Graph>>> graphs_;
};

// Classification of a pairwise join.
struct JoinCase {
  enum class Shape { Scalar, Vector, Matrix, Tensor, Intermediate };
  enum class Rule {
    KhatriRao,             // one side per key column, both sides matrices/vectors
    KhatriRaoMatricized,   // one side a full tensor, unfolded on the shared mode
    Kronecker,             // nothing shared
    Outer,                 // nothing shared, two vectors
    ElementwiseAnd,        // two tensors sharing all three modes
    TubeOuter,             // two tensors sharing two modes
    SliceKronecker,        // two tensors sharing one mode
    NullableSplit,         // a shared variable may be UNBOUND on one side
  };

  Shape left = Shape::Intermediate;
  Shape right = Shape::Intermediate;
  std::vector<std::string> shared;
  Rule rule = Rule::KhatriRao;
  // e.g. "T^T (.) U^T, transposed" for a join on the row variable of both.
  std::string orientation;

  std::string describe() const;
};

std::string_view to_string(JoinCase::Rule r);
std::string_view to_string(JoinCase::Shape s);

struct Solution {
  std::vector<std::optional<std::string>> values;
  auto operator<=>(const Solution&) const = default;
};

struct SolutionSequence {
  std::vector<std::string> vars;
  std::vector<Solution> rows;
};

// ------------------------------------------------------------ operators

AlgebraicResult eval_pattern(const TriplePattern& tp, const Graph& g);
AlgebraicResult eval_join(const AlgebraicResult& left, const AlgebraicResult& right, JoinCase* used = nullptr);
// Left outer join: every left solution survives, paired with UNBOUND
// right-only variables when nothing matches.
AlgebraicResult eval_optional(const AlgebraicResult& left, const AlgebraicResult& right);
// Left solutions then right solutions, each padded with UNBOUND.
AlgebraicResult eval_union(const AlgebraicResult& left, const AlgebraicResult& right);
// ORs out every factor not in `vars`; the result is a vector over `vars`.
AlgebraicResult project_distinct(const AlgebraicResult& res, const std::vector<std::string>& vars);

// Nonzeros in payload order, projected onto `vars` (UNBOUND as nullopt).
SolutionSequence decode_solutions(const AlgebraicResult& res, const std::vector<std::string>& vars);

// Rearranges `res` into a matrix with `key` on the columns (in that order) and
// every other factor on the rows.
AlgebraicResult to_matrix(const AlgebraicResult& res, const std::vector<std::string>& key);

// ------------------------------------------------------------ plans

struct PlanStep {
  enum class Op { Scan, Join, LeftJoin, Union, DistinctBound, DistinctMask, DistinctProduct };

  Op op = Op::Scan;
  std::vector<std::size_t> inputs;  // indices of earlier steps
  GraphTriple triple;               // Scan and Distinct* (first pattern)
  GraphTriple second;               // Distinct* (second pattern)
  JoinCase join_case;               // Join, LeftJoin
  std::vector<std::string> projection;  // Distinct*
  std::vector<std::string> vars;        // variables the step's output binds

  std::string label() const;
};

// Steps in evaluation order; the last step is the root. BGPs and groups are
// folded left to right; nested braces override.
struct JoinPlan {
  std::vector<PlanStep> steps;
  std::size_t root() const { return steps.size() - 1; }
};

JoinPlan plan(const Query& q, const GraphSet& graphs);
JoinPlan plan_pattern(const PatternNode& node, const GraphSet& graphs);

// Evaluates every step; element i is the output of step i. Join cases
// discovered at run time (nullable keys) are written back into `plan`.
std::vector<AlgebraicResult> execute(JoinPlan& plan, const GraphSet& graphs);

// ------------------------------------------------------------ query forms

// DISTINCT over a two-slice BGP uses the column-OR, column-mask or Boolean
// product shortcut; anything else evaluates the WHERE clause and ORs out the
// unprojected factors.
AlgebraicResult eval_distinct(const Query& q, const GraphSet& graphs);
bool eval_ask(const Query& q, const GraphSet& graphs);
// Instantiates the template over the distinct solutions. Solutions leaving a
// template variable UNBOUND, or producing a literal subject or a non-IRI
// predicate, are skipped.
Graph eval_construct(const Query& q, const GraphSet& graphs);

struct QueryResult {
  std::variant<SolutionSequence, bool, Graph> value;
};

QueryResult run_query(const Query& q, const GraphSet& graphs);

}  // namespace tensorql
