#include <gtest/gtest.h>

#include "tensorql/query.hpp"

using namespace tensorql;

TEST(Parser, SelectWithOptionalAndUnion) {
  const Query q = parse_query("SELECT ?a ?c WHERE { ?a <p> ?b OPTIONAL { ?b <q> ?c } . { ?a <r> ?d } UNION { ?a <s> ?d } }");
  EXPECT_EQ(q.form, QueryForm::Select);
  EXPECT_EQ(q.projection, (std::vector<std::string>{"a", "c"}));
  ASSERT_EQ(q.where.children.size(), 2u);
  EXPECT_EQ(q.where.children[0].kind, PatternNode::Kind::Optional);
  EXPECT_EQ(q.where.children[1].kind, PatternNode::Kind::Union);
}

TEST(Parser, ConsecutiveTriplesFormOneBgp) {
  const Query q = parse_query("SELECT * { ?a <p> ?b . ?b <q> ?c . }");
  ASSERT_EQ(q.where.children.size(), 1u);
  EXPECT_EQ(q.where.children[0].triples.size(), 2u);
  EXPECT_EQ(q.result_vars(), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(Parser, TermsAndGraphs) {
  const Query q = parse_query("ask { FROM other _:x <p> \"l\"@en . FROM <g2> ?s $p ?o }");
  EXPECT_EQ(q.form, QueryForm::Ask);
  const auto& t = q.where.children[0].triples;
  EXPECT_EQ(t[0].graph, "other");
  EXPECT_EQ(t[0].pattern[0], Slot::term("_:x"));
  EXPECT_EQ(t[0].pattern[2], Slot::term("\"l\"@en"));
  EXPECT_EQ(t[1].graph, "g2");
  EXPECT_EQ(t[1].pattern[1], Slot::var("p"));
}

TEST(Parser, ConstructTemplate) {
  const Query q = parse_query("CONSTRUCT { ?b <inv> ?a . ?a <self> ?a } WHERE { ?a <p> ?b }");
  EXPECT_EQ(q.form, QueryForm::Construct);
  EXPECT_EQ(q.construct_template.size(), 2u);
}

TEST(Parser, Modifiers) {
  EXPECT_EQ(parse_query("SELECT DISTINCT ?a { ?a <p> ?b }").modifier, Modifier::Distinct);
  EXPECT_EQ(parse_query("SELECT REDUCED ?a { ?a <p> ?b }").modifier, Modifier::Reduced);
}

TEST(Parser, UnsupportedKeywordsAreNamed) {
  const std::pair<const char*, const char*> cases[] = {
      {"SELECT * WHERE { ?a <p> ?b FILTER }", "FILTER"},
      {"SELECT * WHERE { ?a <p> ?b } ORDER BY ?a", "ORDER BY"},
      {"SELECT * WHERE { ?a <p> ?b } LIMIT 3", "LIMIT"},
      {"PREFIX ex: <http://x/> SELECT * { ?a <p> ?b }", "PREFIX"},
      {"DESCRIBE ?a WHERE { ?a <p> ?b }", "DESCRIBE"},
  };
  for (const auto& [text, kw] : cases) {
    try {
      parse_query(text);
      ADD_FAILURE() << text;
    } catch (const UnsupportedFeature& e) {
      EXPECT_EQ(e.keyword(), kw) << text;
    }
  }
}

TEST(Parser, SyntaxErrors) {
  EXPECT_THROW(parse_query("SELECT ?a WHERE { ?a <p> }"), ParseError);
  EXPECT_THROW(parse_query("SELECT ?z WHERE { ?a <p> ?b }"), ParseError);
  EXPECT_THROW(parse_query("SELECT * WHERE { }"), ParseError);
  EXPECT_THROW(parse_query("SELECT * WHERE { \"x\" <p> ?b }"), ParseError);
  EXPECT_THROW(parse_query("SELECT * WHERE { ?a \"x\" ?b }"), ParseError);
  EXPECT_THROW(parse_query("SELECT * WHERE { ?a <p> ?b } junk"), ParseError);
}
