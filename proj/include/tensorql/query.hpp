#pragma once

// SPARQL subset: AST and parser.
//
//   Query   := (SELECT (DISTINCT|REDUCED)? (Var+ | '*') | ASK | CONSTRUCT '{' Template '}')
//              WHERE? Group
//   Group   := '{' Pattern ('.'? Pattern)* '.'? '}'
//   Pattern := Primary (OPTIONAL Group | UNION Group)*
//   Primary := Triple | Group
//   Triple  := (FROM alias)? Slot Slot Slot
//   Slot    := ?name | <iri> | "literal" | _:label
//
// OPTIONAL and UNION take the immediately preceding Pattern as their left
// operand. FILTER, ORDER BY, LIMIT and friends are rejected with
// UnsupportedFeature.

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "tensorql/rdf_store.hpp"

namespace tensorql {

class UnsupportedFeature : public Error {
 public:
  explicit UnsupportedFeature(std::string keyword);
  const std::string& keyword() const { return keyword_; }

 private:
  std::string keyword_;
};

struct Slot {
  bool is_var = false;
  // Variable name without '?', or the term's lexical form.
  std::string text;

  static Slot var(std::string name) { return {true, std::move(name)}; }
  static Slot term(std::string lexical) { return {false, std::move(lexical)}; }
  bool operator==(const Slot&) const = default;
};

struct TriplePattern {
  std::array<Slot, 3> slots;
  bool operator==(const TriplePattern&) const = default;

  const Slot& operator[](std::size_t mode) const { return slots[mode]; }
  // Distinct variable names in s, p, o order.
  std::vector<std::string> vars() const;
};

struct GraphTriple {
  // Empty means the default (first loaded) graph.
  std::string graph;
  TriplePattern pattern;
  bool operator==(const GraphTriple&) const = default;
};

struct PatternNode {
  enum class Kind { Bgp, Group, Optional, Union };

  Kind kind = Kind::Group;
  std::vector<GraphTriple> triples;    // Bgp
  std::vector<PatternNode> children;   // Group: conjunction; Optional/Union: {left, right}

  static PatternNode bgp(std::vector<GraphTriple> triples);
  static PatternNode group(std::vector<PatternNode> children);
  static PatternNode optional(PatternNode left, PatternNode right);
  static PatternNode union_of(PatternNode left, PatternNode right);

  bool operator==(const PatternNode&) const = default;
};

enum class QueryForm { Select, Ask, Construct };
enum class Modifier { None, Distinct, Reduced };

struct Query {
  QueryForm form = QueryForm::Select;
  Modifier modifier = Modifier::None;
  bool select_all = false;
  std::vector<std::string> projection;
  std::vector<TriplePattern> construct_template;
  PatternNode where;

  // Variables the result sequence carries: the explicit projection, or every
  // where-clause variable in order of first appearance for `*`, ASK and
  // CONSTRUCT.
  std::vector<std::string> result_vars() const;
};

// Every variable of the pattern tree in order of first appearance.
std::vector<std::string> pattern_vars(const PatternNode& node);

Query parse_query(std::string_view text);

std::string to_string(const TriplePattern& t);

}  // namespace tensorql
