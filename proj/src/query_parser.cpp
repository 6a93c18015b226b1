#include <algorithm>
#include <cctype>
#include <optional>
#include <unordered_set>

#include "tensorql/query.hpp"

namespace tensorql {

UnsupportedFeature::UnsupportedFeature(std::string keyword)
    : Error("unsupported feature: " + keyword), keyword_(std::move(keyword)) {}

std::vector<std::string> TriplePattern::vars() const {
  std::vector<std::string> out;
  for (const auto& s : slots) {
    if (s.is_var && std::find(out.begin(), out.end(), s.text) == out.end()) out.push_back(s.text);
  }
  return out;
}

PatternNode PatternNode::bgp(std::vector<GraphTriple> triples) {
  PatternNode n;
  n.kind = Kind::Bgp;
  n.triples = std::move(triples);
  return n;
}

PatternNode PatternNode::group(std::vector<PatternNode> children) {
  PatternNode n;
  n.kind = Kind::Group;
  n.children = std::move(children);
  return n;
}

PatternNode PatternNode::optional(PatternNode left, PatternNode right) {
  PatternNode n;
  n.kind = Kind::Optional;
  n.children.push_back(std::move(left));
  n.children.push_back(std::move(right));
  return n;
}

PatternNode PatternNode::union_of(PatternNode left, PatternNode right) {
  PatternNode n;
  n.kind = Kind::Union;
  n.children.push_back(std::move(left));
  n.children.push_back(std::move(right));
  return n;
}

namespace {

void collect_vars(const PatternNode& node, std::vector<std::string>& out) {
  for (const auto& t : node.triples) {
    for (const auto& v : t.pattern.vars()) {
      if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    }
  }
  for (const auto& c : node.children) collect_vars(c, out);
}

}  // namespace

std::vector<std::string> pattern_vars(const PatternNode& node) {
  std::vector<std::string> out;
  collect_vars(node, out);
  return out;
}

std::vector<std::string> Query::result_vars() const {
  if (form == QueryForm::Select && !select_all) return projection;
  return pattern_vars(where);
}

std::string to_string(const TriplePattern& t) {
  std::string out;
  for (const auto& s : t.slots) {
    if (!out.empty()) out += ' ';
    out += s.is_var ? "?" + s.text : s.text;
  }
  return out;
}

// ---------------------------------------------------------------- lexer

namespace {

enum class Tok { Word, Var, Iri, Literal, Blank, LBrace, RBrace, Dot, Star, Other, End };

struct Token {
  Tok kind;
  std::string text;  // Word: upper-cased keyword; Var: name; others: lexical form
  std::size_t line;
  std::size_t column;
  std::string raw = {};  // Word: as written
};

// Keywords the grammar does not cover but real SPARQL has.
const std::unordered_set<std::string> kUnsupported = {
    "FILTER", "ORDER", "LIMIT", "OFFSET", "PREFIX", "BASE", "GROUP", "HAVING", "BIND",
    "VALUES", "MINUS", "GRAPH", "SERVICE", "DESCRIBE", "NAMED", "BY"};

class Lexer {
 public:
  explicit Lexer(std::string_view s) : s_(s) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip();
      const std::size_t line = line_, col = col_;
      if (pos_ >= s_.size()) {
        out.push_back({Tok::End, "", line, col});
        return out;
      }
      const char c = s_[pos_];
      if (c == '{') {
        advance();
        out.push_back({Tok::LBrace, "{", line, col});
      } else if (c == '}') {
        advance();
        out.push_back({Tok::RBrace, "}", line, col});
      } else if (c == '.') {
        advance();
        out.push_back({Tok::Dot, ".", line, col});
      } else if (c == '*') {
        advance();
        out.push_back({Tok::Star, "*", line, col});
      } else if (c == '?' || c == '$') {
        advance();
        std::string name = name_chars();
        if (name.empty()) throw ParseError("empty variable name", line, col);
        out.push_back({Tok::Var, std::move(name), line, col});
      } else if (c == '<') {
        out.push_back({Tok::Iri, iri(line, col), line, col});
      } else if (c == '"') {
        out.push_back({Tok::Literal, literal(line, col), line, col});
      } else if (c == '_' && pos_ + 1 < s_.size() && s_[pos_ + 1] == ':') {
        advance();
        advance();
        std::string label = name_chars();
        if (label.empty()) throw ParseError("empty blank node label", line, col);
        out.push_back({Tok::Blank, "_:" + label, line, col});
      } else if (std::isalpha(static_cast<unsigned char>(c))) {
        std::string raw = name_chars();
        std::string w = raw;
        std::transform(w.begin(), w.end(), w.begin(), [](unsigned char ch) { return std::toupper(ch); });
        out.push_back({Tok::Word, std::move(w), line, col, std::move(raw)});
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        std::string num;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
          num += s_[pos_];
          advance();
        }
        out.push_back({Tok::Other, std::move(num), line, col});
      } else {
        // Left to the parser, so a preceding unsupported keyword is reported
        // instead of the character.
        out.push_back({Tok::Other, std::string(1, c), line, col});
        advance();
      }
    }
  }

 private:
  void advance() {
    if (s_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip() {
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (c == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  std::string name_chars() {
    std::string out;
    while (pos_ < s_.size()) {
      const unsigned char c = s_[pos_];
      if (std::isalnum(c) || c == '_' || c == '-' || c >= 0x80) {
        out.push_back(static_cast<char>(c));
        advance();
      } else {
        break;
      }
    }
    return out;
  }

  std::string iri(std::size_t line, std::size_t col) {
    const std::size_t start = pos_;
    advance();
    while (pos_ < s_.size() && s_[pos_] != '>') {
      if (std::isspace(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '<') {
        throw ParseError("invalid character in IRI", line_, col_);
      }
      advance();
    }
    if (pos_ >= s_.size()) throw ParseError("unterminated IRI", line, col);
    advance();
    return std::string(s_.substr(start, pos_ - start));
  }

  std::string literal(std::size_t line, std::size_t col) {
    const std::size_t start = pos_;
    advance();
    while (pos_ < s_.size() && s_[pos_] != '"') {
      if (s_[pos_] == '\n') throw ParseError("newline in literal", line_, col_);
      if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) advance();
      advance();
    }
    if (pos_ >= s_.size()) throw ParseError("unterminated literal", line, col);
    advance();
    if (pos_ < s_.size() && s_[pos_] == '@') {
      advance();
      if (name_chars().empty()) throw ParseError("empty language tag", line_, col_);
    } else if (s_.substr(pos_, 2) == "^^") {
      advance();
      advance();
      if (pos_ >= s_.size() || s_[pos_] != '<') throw ParseError("expected datatype IRI", line_, col_);
      iri(line_, col_);
    }
    return std::string(s_.substr(start, pos_ - start));
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
};

// ---------------------------------------------------------------- parser

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : t_(std::move(toks)) {}

  Query query() {
    Query q;
    const Token& head = peek();
    if (is_word("SELECT")) {
      next();
      q.form = QueryForm::Select;
      if (is_word("DISTINCT")) {
        next();
        q.modifier = Modifier::Distinct;
      } else if (is_word("REDUCED")) {
        next();
        q.modifier = Modifier::Reduced;
      }
      if (peek().kind == Tok::Star) {
        next();
        q.select_all = true;
      } else {
        while (peek().kind == Tok::Var) q.projection.push_back(next().text);
        if (q.projection.empty()) fail("expected '*' or at least one variable after SELECT");
      }
    } else if (is_word("ASK")) {
      next();
      q.form = QueryForm::Ask;
    } else if (is_word("CONSTRUCT")) {
      next();
      q.form = QueryForm::Construct;
      expect(Tok::LBrace, "'{' after CONSTRUCT");
      while (peek().kind != Tok::RBrace) {
        q.construct_template.push_back(triple());
        if (peek().kind == Tok::Dot) next();
      }
      next();
      if (q.construct_template.empty()) fail("empty CONSTRUCT template");
    } else {
      reject_unsupported();
      fail("expected SELECT, ASK or CONSTRUCT", head);
    }

    if (is_word("WHERE")) next();
    q.where = group();
    if (peek().kind != Tok::End) {
      reject_unsupported();
      fail("unexpected trailing input");
    }
    validate(q);
    return q;
  }

 private:
  const Token& peek() const { return t_[i_]; }
  Token next() { return t_[i_ < t_.size() - 1 ? i_++ : i_]; }
  bool is_word(std::string_view w) const { return peek().kind == Tok::Word && peek().text == w; }

  [[noreturn]] void fail(const std::string& msg) const { fail(msg, peek()); }
  [[noreturn]] static void fail(const std::string& msg, const Token& at) {
    throw ParseError(msg + (at.kind == Tok::End ? " at end of input" : " near '" + at.text + "'"), at.line,
                     at.column);
  }

  void reject_unsupported() const {
    if (peek().kind == Tok::Word && kUnsupported.contains(peek().text)) {
      std::string kw = peek().text;
      if (kw == "ORDER" || kw == "GROUP") {
        if (i_ + 1 < t_.size() && t_[i_ + 1].kind == Tok::Word && t_[i_ + 1].text == "BY") kw += " BY";
      }
      throw UnsupportedFeature(kw);
    }
  }

  void expect(Tok kind, const std::string& what) {
    if (peek().kind != kind) fail("expected " + what);
    next();
  }

  Slot slot() {
    const Token& tok = peek();
    switch (tok.kind) {
      case Tok::Var: return Slot::var(next().text);
      case Tok::Iri:
      case Tok::Literal:
      case Tok::Blank: return Slot::term(next().text);
      default:
        reject_unsupported();
        fail("expected a variable or term");
    }
  }

  TriplePattern triple() {
    TriplePattern t;
    const Token& start = peek();
    for (auto& s : t.slots) s = slot();
    if (!t.slots[0].is_var && t.slots[0].text.starts_with('"')) fail("literal in subject position", start);
    if (!t.slots[1].is_var && !t.slots[1].text.starts_with('<')) fail("predicate must be an IRI", start);
    return t;
  }

  // A triple, a group, or a chain of OPTIONAL/UNION applied to one of those.
  PatternNode pattern(bool& plain_triple, GraphTriple& triple_out) {
    PatternNode node;
    plain_triple = false;
    if (peek().kind == Tok::LBrace) {
      node = group();
    } else {
      GraphTriple gt;
      if (is_word("FROM")) {
        next();
        if (peek().kind == Tok::Iri) {
          const std::string& iri = peek().text;
          gt.graph = iri.substr(1, iri.size() - 2);
          next();
        } else if (peek().kind == Tok::Word) {
          gt.graph = next().raw;
        } else if (peek().kind == Tok::Var) {
          gt.graph = next().text;
        } else {
          fail("expected graph alias after FROM");
        }
        if (gt.graph.empty()) fail("empty graph alias");
      }
      gt.pattern = triple();
      triple_out = gt;
      plain_triple = true;
      node = PatternNode::bgp({gt});
    }
    for (;;) {
      if (is_word("OPTIONAL")) {
        next();
        node = PatternNode::optional(std::move(node), group());
        plain_triple = false;
      } else if (is_word("UNION")) {
        next();
        node = PatternNode::union_of(std::move(node), group());
        plain_triple = false;
      } else {
        return node;
      }
    }
  }

  PatternNode group() {
    expect(Tok::LBrace, "'{'");
    std::vector<PatternNode> children;
    std::vector<GraphTriple> run;
    auto flush = [&] {
      if (!run.empty()) children.push_back(PatternNode::bgp(std::move(run)));
      run.clear();
    };
    bool need_pattern = true;
    while (peek().kind != Tok::RBrace) {
      if (peek().kind == Tok::End) fail("unterminated group");
      if (!need_pattern && peek().kind == Tok::Dot) {
        next();
        need_pattern = true;
        continue;
      }
      reject_unsupported();
      bool plain = false;
      GraphTriple gt;
      PatternNode p = pattern(plain, gt);
      if (plain) {
        run.push_back(std::move(gt));
      } else {
        flush();
        children.push_back(std::move(p));
      }
      need_pattern = false;
    }
    next();
    flush();
    if (children.empty()) fail("empty group pattern");
    return PatternNode::group(std::move(children));
  }

  void validate(const Query& q) const {
    const auto vars = pattern_vars(q.where);
    auto known = [&](const std::string& v) { return std::find(vars.begin(), vars.end(), v) != vars.end(); };
    for (const auto& v : q.projection) {
      if (!known(v)) throw ParseError("projected variable ?" + v + " does not occur in WHERE", 1, 1);
    }
    for (const auto& t : q.construct_template) {
      for (const auto& v : t.vars()) {
        if (!known(v)) throw ParseError("template variable ?" + v + " does not occur in WHERE", 1, 1);
      }
    }
  }

  std::vector<Token> t_;
  std::size_t i_ = 0;
};

}  // namespace

Query parse_query(std::string_view text) { return Parser(Lexer(text).run()).query(); }

}  // namespace tensorql
