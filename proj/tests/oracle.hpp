#pragma once

// Nested-loop reference evaluator and random instance generators shared by
// the unit tests and the acceptance binary. Works on term text only.

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tensorql/query.hpp"
#include "tensorql/query_engine.hpp"
#include "tensorql/rdf_store.hpp"

namespace oracle {

using tensorql::PatternNode;
using tensorql::Query;
using tensorql::TermTriple;

using Binding = std::map<std::string, std::string>;
using Bag = std::vector<Binding>;
using Row = std::vector<std::optional<std::string>>;

struct Store {
  // Alias -> triples; the first alias is the default graph.
  std::vector<std::pair<std::string, std::vector<TermTriple>>> graphs;

  const std::vector<TermTriple>& get(const std::string& alias) const {
    if (alias.empty()) return graphs.front().second;
    for (const auto& [a, t] : graphs) {
      if (a == alias) return t;
    }
    throw std::runtime_error("unknown alias " + alias);
  }
};

inline bool compatible(const Binding& a, const Binding& b) {
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it != b.end() && it->second != v) return false;
  }
  return true;
}

inline Binding merge(Binding a, const Binding& b) {
  a.insert(b.begin(), b.end());
  return a;
}

inline Bag join(const Bag& l, const Bag& r) {
  Bag out;
  for (const auto& a : l) {
    for (const auto& b : r) {
      if (compatible(a, b)) out.push_back(merge(a, b));
    }
  }
  return out;
}

inline Bag match(const tensorql::GraphTriple& gt, const Store& st) {
  Bag out;
  for (const auto& t : st.get(gt.graph)) {
    const std::string* terms[3] = {&t.s, &t.p, &t.o};
    Binding b;
    bool ok = true;
    for (std::size_t m = 0; m < 3 && ok; ++m) {
      const auto& slot = gt.pattern.slots[m];
      if (!slot.is_var) {
        ok = slot.text == *terms[m];
      } else if (auto it = b.find(slot.text); it != b.end()) {
        ok = it->second == *terms[m];
      } else {
        b[slot.text] = *terms[m];
      }
    }
    if (ok) out.push_back(std::move(b));
  }
  return out;
}

inline Bag eval(const PatternNode& n, const Store& st) {
  switch (n.kind) {
    case PatternNode::Kind::Bgp: {
      Bag acc = match(n.triples[0], st);
      for (std::size_t i = 1; i < n.triples.size(); ++i) acc = join(acc, match(n.triples[i], st));
      return acc;
    }
    case PatternNode::Kind::Group: {
      Bag acc = eval(n.children[0], st);
      for (std::size_t i = 1; i < n.children.size(); ++i) acc = join(acc, eval(n.children[i], st));
      return acc;
    }
    case PatternNode::Kind::Optional: {
      Bag l = eval(n.children[0], st), r = eval(n.children[1], st), out;
      for (const auto& a : l) {
        bool found = false;
        for (const auto& b : r) {
          if (compatible(a, b)) {
            out.push_back(merge(a, b));
            found = true;
          }
        }
        if (!found) out.push_back(a);
      }
      return out;
    }
    case PatternNode::Kind::Union: {
      Bag out = eval(n.children[0], st);
      Bag r = eval(n.children[1], st);
      out.insert(out.end(), r.begin(), r.end());
      return out;
    }
  }
  return {};
}

inline std::vector<Row> project(const Bag& bag, const std::vector<std::string>& vars, bool distinct) {
  std::vector<Row> rows;
  for (const auto& b : bag) {
    Row r;
    for (const auto& v : vars) {
      auto it = b.find(v);
      r.push_back(it == b.end() ? std::nullopt : std::optional<std::string>(it->second));
    }
    rows.push_back(std::move(r));
  }
  std::sort(rows.begin(), rows.end());
  if (distinct) rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  return rows;
}

inline std::vector<Row> rows_of(const tensorql::SolutionSequence& s) {
  std::vector<Row> rows;
  for (const auto& r : s.rows) rows.push_back(r.values);
  std::sort(rows.begin(), rows.end());
  return rows;
}

// Outcome of a query as comparable text: sorted rows, "true"/"false", or
// sorted N-Triples lines.
inline std::vector<std::string> expected(const Query& q, const Store& st) {
  const Bag bag = eval(q.where, st);
  std::vector<std::string> out;
  switch (q.form) {
    case tensorql::QueryForm::Ask: return {bag.empty() ? "false" : "true"};
    case tensorql::QueryForm::Construct: {
      const auto vars = tensorql::pattern_vars(q.where);
      std::set<std::string> triples;
      for (const auto& row : project(bag, vars, true)) {
        for (const auto& t : q.construct_template) {
          std::string terms[3];
          bool ok = true;
          for (std::size_t m = 0; m < 3 && ok; ++m) {
            if (!t.slots[m].is_var) {
              terms[m] = t.slots[m].text;
              continue;
            }
            const auto idx = std::find(vars.begin(), vars.end(), t.slots[m].text) - vars.begin();
            ok = row[idx].has_value();
            if (ok) terms[m] = *row[idx];
          }
          if (!ok || terms[0].starts_with('"') || !terms[1].starts_with('<')) continue;
          triples.insert(terms[0] + " " + terms[1] + " " + terms[2] + " .");
        }
      }
      return {triples.begin(), triples.end()};
    }
    case tensorql::QueryForm::Select: break;
  }
  for (const auto& r : project(bag, q.result_vars(), q.modifier != tensorql::Modifier::None)) {
    std::string line;
    for (const auto& v : r) line += (v ? *v : std::string("-")) + "\t";
    out.push_back(line);
  }
  return out;
}

inline std::vector<std::string> actual(const Query& q, const tensorql::GraphSet& gs) {
  const tensorql::QueryResult res = tensorql::run_query(q, gs);
  std::vector<std::string> out;
  if (const auto* b = std::get_if<bool>(&res.value)) return {*b ? "true" : "false"};
  if (const auto* g = std::get_if<tensorql::Graph>(&res.value)) {
    std::ostringstream s;
    tensorql::serialize_ntriples(*g, s);
    std::istringstream lines(s.str());
    std::string line;
    while (std::getline(lines, line)) out.push_back(line);
    std::sort(out.begin(), out.end());
    return out;
  }
  for (const auto& r : rows_of(std::get<tensorql::SolutionSequence>(res.value))) {
    std::string line;
    for (const auto& v : r) line += (v ? *v : std::string("-")) + "\t";
    out.push_back(line);
  }
  return out;
}

// ------------------------------------------------------------ generators

// Term pools: up to 8 subjects, 5 predicates, 8 objects (half of which are
// also subjects, so subject/object joins happen).
struct Generator {
  std::mt19937_64 rng;
  explicit Generator(std::uint64_t seed) : rng(seed) {}

  std::size_t below(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng); }

  std::string subject() { return "<s" + std::to_string(below(8)) + ">"; }
  std::string predicate() { return "<p" + std::to_string(below(5)) + ">"; }
  std::string object() {
    const std::size_t x = below(8);
    if (x < 4) return "<s" + std::to_string(x) + ">";
    if (x < 6) return "<o" + std::to_string(x) + ">";
    return "\"l" + std::to_string(x) + "\"";
  }

  std::vector<TermTriple> triples(std::size_t max_count) {
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    std::vector<TermTriple> out;
    const std::size_t n = below(max_count + 1);
    for (std::size_t i = 0; i < n; ++i) {
      TermTriple t{subject(), predicate(), object()};
      if (seen.insert({t.s, t.p, t.o}).second) out.push_back(t);
    }
    return out;
  }
};

inline tensorql::Graph build_graph(const std::vector<TermTriple>& ts) {
  tensorql::Graph g;
  for (const auto& t : ts) g.add_triple(t);
  return g;
}

}  // namespace oracle
