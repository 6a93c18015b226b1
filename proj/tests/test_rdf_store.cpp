#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracle.hpp"
#include "tensorql/rdf_store.hpp"

using namespace tensorql;

namespace {

Graph parse(const std::string& text) {
  std::istringstream in(text);
  return load_ntriples(in);
}

void expect_marginals_match(const Graph& g) {
  const MarginalStats fresh = marginals(g.tensor());
  EXPECT_EQ(g.stats().by_subject.cells(), fresh.by_subject.cells());
  EXPECT_EQ(g.stats().by_predicate.cells(), fresh.by_predicate.cells());
  EXPECT_EQ(g.stats().by_object.cells(), fresh.by_object.cells());
}

}  // namespace

TEST(NTriples, ParsesTermKinds) {
  const Graph g = parse(
      "# comment\n"
      "<a> <p> <b> .\n"
      "\n"
      "_:x <p> \"hello world\"@en .\n"
      "<a> <q> \"5\"^^<http://www.w3.org/2001/XMLSchema#integer> .\n"
      "<a> <p> <b> .\n");
  EXPECT_EQ(g.size(), 3u);
  EXPECT_EQ(g.tensor().dims(), (std::array<Index, 3>{2, 2, 3}));
  EXPECT_EQ(g.objects().term(1), "\"hello world\"@en");
}

TEST(NTriples, ErrorsCarryLineNumbers) {
  try {
    parse("<a> <p> <b> .\n<a> <p> .\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse("\"lit\" <p> <b> .\n"), ParseError);
  EXPECT_THROW(parse("<a> _:p <b> .\n"), ParseError);
  EXPECT_THROW(parse("<a> <p> <b>\n"), ParseError);
}

TEST(NTriples, EmptyInput) {
  const Graph g = parse("");
  EXPECT_EQ(g.size(), 0u);
}

TEST(NTriples, RoundTrip) {
  const Graph g = parse("<a> <p> <b> .\n<b> <q> \"x\" .\n");
  std::ostringstream out;
  serialize_ntriples(g, out);
  EXPECT_EQ(out.str(), "<a> <p> <b> .\n<b> <q> \"x\" .\n");
}

TEST(Dictionary, BlankNodesScopedPerGraph) {
  const Graph a = parse("_:x <p> <o> .\n");
  const Graph b = parse("_:x <p> <o> .\n");
  EXPECT_NE(a.blank_scope(), b.blank_scope());
  const DictionaryUnion u = unite(a.subjects(), b.subjects());
  EXPECT_EQ(u.dict->size(), 2u);
  const DictionaryUnion iri = unite(a.predicates(), b.predicates());
  EXPECT_EQ(iri.dict->size(), 1u);
}

TEST(Dictionary, UnionOrder) {
  const Graph a = parse("<x> <p> <o> .\n<y> <p> <o> .\n");
  const Graph b = parse("<z> <p> <o> .\n<x> <p> <o> .\n");
  const DictionaryUnion u = unite(a.subjects(), b.subjects());
  EXPECT_EQ(u.dict->term(2), "<z>");
  EXPECT_EQ(u.right_map, (std::vector<Index>{2, 0}));
}

TEST(Graph, AddRemoveKeepsMarginalsExact) {
  oracle::Generator gen(9);
  Graph g;
  std::vector<TermTriple> present;
  for (int step = 0; step < 400; ++step) {
    if (!present.empty() && gen.coin(0.4)) {
      const std::size_t i = gen.below(present.size());
      EXPECT_TRUE(g.remove_triple(present[i]));
      present.erase(present.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
      TermTriple t{gen.subject(), gen.predicate(), gen.object()};
      if (g.add_triple(t)) present.push_back(t);
    }
  }
  EXPECT_EQ(g.size(), present.size());
  expect_marginals_match(g);
  EXPECT_FALSE(g.remove_triple({"<nope>", "<p0>", "<s0>"}));
}

TEST(Graph, SnapshotsSurviveUpdates) {
  Graph g = parse("<a> <p> <b> .\n");
  const auto snap = g.dictionary_handle(Axis::Mode1);
  g.add_triple({"<c>", "<p>", "<b>"});
  EXPECT_EQ(snap->size(), 1u);
  EXPECT_EQ(g.subjects().size(), 2u);
}

TEST(Graph, EncodeDecode) {
  const Graph g = parse("<a> <p> <b> .\n");
  const auto c = g.encode({"<a>", "<p>", "<b>"});
  ASSERT_TRUE(c.has_value());
  EXPECT_EQ(g.decode(*c), (TermTriple{"<a>", "<p>", "<b>"}));
  EXPECT_FALSE(g.encode({"<a>", "<p>", "<zz>"}).has_value());
}

TEST(Align, PadsAndRemaps) {
  const Graph a = parse("<x> <p> <o> .\n");
  const Graph b = parse("<y> <p> <o> .\n<x> <q> <o> .\n");
  const std::array<Axis, 1> modes{Axis::Mode1};
  const AlignedPair ap = align(a, b, modes);
  EXPECT_EQ(ap.left.tensor().dim(Axis::Mode1), 2u);
  EXPECT_EQ(ap.right.tensor().dim(Axis::Mode1), 2u);
  EXPECT_EQ(ap.right.subjects().term(0), "<x>");
  EXPECT_EQ(ap.right.size(), 2u);
  EXPECT_TRUE(ap.right.encode({"<x>", "<q>", "<o>"}).has_value());
}
