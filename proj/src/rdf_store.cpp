#include "tensorql/rdf_store.hpp"

#include <atomic>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace tensorql {

ParseError::ParseError(std::string message, std::size_t line, std::size_t column)
    : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message),
      line_(line),
      column_(column) {}

// ---------------------------------------------------------------- Dictionary

std::string Dictionary::key(std::string_view text, std::uint32_t scope) {
  std::string k(text);
  if (scope != 0) {
    k.push_back('\x1f');
    k += std::to_string(scope);
  }
  return k;
}

const std::string& Dictionary::term(Index i) const { return entry(i).text; }

const Dictionary::Entry& Dictionary::entry(Index i) const {
  if (i >= entries_.size()) {
    throw IndexOutOfRange("dictionary index " + std::to_string(i) + " >= " + std::to_string(entries_.size()));
  }
  return entries_[i];
}

std::optional<Index> Dictionary::find(std::string_view text, std::uint32_t blank_scope) const {
  auto it = index_.find(key(text, is_blank_term(text) ? blank_scope : 0));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::optional<Index> Dictionary::find(const Entry& e) const {
  auto it = index_.find(key(e.text, e.scope));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Index Dictionary::intern(std::string_view text, std::uint32_t blank_scope) {
  return intern(Entry{std::string(text), is_blank_term(text) ? blank_scope : 0});
}

Index Dictionary::intern(const Entry& e) {
  auto [it, inserted] = index_.try_emplace(key(e.text, e.scope), entries_.size());
  if (inserted) entries_.push_back(e);
  return it->second;
}

DictionaryUnion unite(const Dictionary& left, const Dictionary& right) {
  auto dict = std::make_shared<Dictionary>(left);
  DictionaryUnion u;
  u.left_map.resize(left.size());
  for (Index i = 0; i < left.size(); ++i) u.left_map[i] = i;
  u.right_map.reserve(right.size());
  for (const auto& e : right.entries()) u.right_map.push_back(dict->intern(e));
  u.dict = std::move(dict);
  return u;
}

// ---------------------------------------------------------------- CountMatrix

CountMatrix::CountMatrix(Index rows, Index cols) : rows_(rows), cols_(cols), row_sq_(rows, 0), col_sq_(cols, 0) {}

Index CountMatrix::get(Index r, Index c) const {
  const auto& row = rows_.at(r);
  auto it = row.find(c);
  return it == row.end() ? 0 : it->second;
}

void CountMatrix::add(Index r, Index c, int delta) {
  if (r >= rows() || c >= cols()) throw IndexOutOfRange("count matrix cell outside shape");
  auto& cell = rows_[r][c];
  const Index before = cell;
  if (delta < 0 && before < static_cast<Index>(-delta)) {
    rows_[r].erase(c);
    throw Error("count matrix entry would become negative");
  }
  const Index after = before + delta;
  // (x + d)^2 - x^2, tracked exactly.
  const std::uint64_t sq_before = before * before;
  const std::uint64_t sq_after = after * after;
  row_sq_[r] = row_sq_[r] - sq_before + sq_after;
  col_sq_[c] = col_sq_[c] - sq_before + sq_after;
  total_ = total_ + delta;
  if (after == 0) {
    rows_[r].erase(c);
    cols_[c].erase(r);
    --nnz_;
  } else {
    cell = after;
    cols_[c][r] = after;
    if (before == 0) ++nnz_;
  }
}

void CountMatrix::grow(Index rows, Index cols) {
  if (rows > this->rows()) {
    rows_.resize(rows);
    row_sq_.resize(rows, 0);
  }
  if (cols > this->cols()) {
    cols_.resize(cols);
    col_sq_.resize(cols, 0);
  }
}

double CountMatrix::row_norm(Index r) const { return std::sqrt(static_cast<double>(row_sum_squares(r))); }
double CountMatrix::col_norm(Index c) const { return std::sqrt(static_cast<double>(col_sum_squares(c))); }

std::vector<CountMatrix::Cell> CountMatrix::cells() const {
  std::vector<Cell> out;
  out.reserve(nnz_);
  for (Index r = 0; r < rows(); ++r) {
    for (const auto& [c, n] : rows_[r]) out.push_back({r, c, n});
  }
  return out;
}

// ---------------------------------------------------------------- MarginalStats

const CountMatrix& MarginalStats::summed_over(Axis mode) const {
  switch (mode) {
    case Axis::Mode1: return by_subject;
    case Axis::Mode2: return by_predicate;
    case Axis::Mode3: return by_object;
  }
  return by_object;
}

void MarginalStats::grow(const std::array<Index, 3>& d) {
  by_subject.grow(d[1], d[2]);
  by_predicate.grow(d[0], d[2]);
  by_object.grow(d[0], d[1]);
}

void MarginalStats::apply(Coord3 c, int delta) {
  by_subject.add(c.j, c.k, delta);
  by_predicate.add(c.i, c.k, delta);
  by_object.add(c.i, c.j, delta);
}

MarginalStats marginals(const BoolTensor3& t) {
  const auto& d = t.dims();
  MarginalStats m{CountMatrix(d[1], d[2]), CountMatrix(d[0], d[2]), CountMatrix(d[0], d[1])};
  for (const auto& c : t.nonzeros()) m.apply(c, +1);
  return m;
}

// ---------------------------------------------------------------- Graph

std::uint32_t next_blank_scope() {
  static std::atomic<std::uint32_t> counter{0};
  return ++counter;
}

Graph::Graph()
    : dicts_{std::make_shared<Dictionary>(), std::make_shared<Dictionary>(), std::make_shared<Dictionary>()},
      tensor_({0, 0, 0}),
      stats_(marginals(tensor_)),
      scope_(next_blank_scope()) {}

Graph Graph::from_parts(std::array<std::shared_ptr<const Dictionary>, 3> dicts, BoolTensor3 tensor,
                        std::uint32_t scope) {
  Graph g;
  for (std::size_t m = 0; m < 3; ++m) {
    if (dicts[m]->size() != tensor.dims()[m]) throw ShapeError("graph tensor dims differ from dictionary sizes");
    // const_pointer_cast is safe: mutable_dictionary() copies before writing
    // whenever the handle is shared.
    g.dicts_[m] = std::const_pointer_cast<Dictionary>(dicts[m]);
  }
  g.stats_ = marginals(tensor);
  g.tensor_ = std::move(tensor);
  g.scope_ = scope;
  return g;
}

Dictionary& Graph::mutable_dictionary(std::size_t mode) {
  auto& d = dicts_[mode];
  if (d.use_count() > 1) d = std::make_shared<Dictionary>(*d);
  return *d;
}

std::optional<Coord3> Graph::encode(const TermTriple& t) const {
  auto s = subjects().find(t.s, scope_);
  auto p = predicates().find(t.p, scope_);
  auto o = objects().find(t.o, scope_);
  if (!s || !p || !o) return std::nullopt;
  return Coord3{*s, *p, *o};
}

bool Graph::add_triple(const TermTriple& t) {
  if (auto c = encode(t); c && tensor_.test(c->i, c->j, c->k)) return false;
  Coord3 c{mutable_dictionary(0).intern(t.s, scope_), mutable_dictionary(1).intern(t.p, scope_),
           mutable_dictionary(2).intern(t.o, scope_)};
  const std::array<Index, 3> dims{subjects().size(), predicates().size(), objects().size()};
  if (dims != tensor_.dims()) {
    tensor_ = tensor_.resized(dims);
    stats_.grow(dims);
  }
  tensor_ = tensor_.with(c);
  stats_.apply(c, +1);
  return true;
}

bool Graph::remove_triple(const TermTriple& t) {
  auto c = encode(t);
  if (!c || !tensor_.test(c->i, c->j, c->k)) return false;
  tensor_ = tensor_.without(*c);
  stats_.apply(*c, -1);
  return true;
}

TermTriple Graph::decode(Coord3 c) const {
  return {subjects().term(c.i), predicates().term(c.j), objects().term(c.k)};
}

std::vector<TermTriple> Graph::decode(std::span<const Coord3> coords) const {
  std::vector<TermTriple> out;
  out.reserve(coords.size());
  for (const auto& c : coords) out.push_back(decode(c));
  return out;
}

// ---------------------------------------------------------------- N-Triples

namespace {

class LineParser {
 public:
  LineParser(std::string_view line, std::size_t line_no) : s_(line), line_(line_no) {}

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\r')) ++pos_;
  }
  bool at_end_or_comment() {
    skip_ws();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line_, pos_ + 1); }

  std::string iri() {
    if (pos_ >= s_.size() || s_[pos_] != '<') fail("expected '<'");
    const std::size_t start = pos_++;
    while (pos_ < s_.size() && s_[pos_] != '>') {
      if (s_[pos_] == ' ' || s_[pos_] == '<' || s_[pos_] == '"') fail("invalid character in IRI");
      ++pos_;
    }
    if (pos_ >= s_.size()) fail("unterminated IRI");
    ++pos_;
    return std::string(s_.substr(start, pos_ - start));
  }

  std::string blank() {
    if (s_.substr(pos_, 2) != "_:") fail("expected '_:'");
    const std::size_t start = pos_;
    pos_ += 2;
    auto label_char = [](char c) {
      return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-' ||
             static_cast<unsigned char>(c) >= 0x80;
    };
    while (pos_ < s_.size() &&
           (label_char(s_[pos_]) || (s_[pos_] == '.' && pos_ + 1 < s_.size() && label_char(s_[pos_ + 1])))) {
      ++pos_;
    }
    if (pos_ == start + 2) fail("empty blank node label");
    return std::string(s_.substr(start, pos_ - start));
  }

  std::string literal() {
    const std::size_t start = pos_++;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      if (s_[pos_] == '\\') ++pos_;
      ++pos_;
    }
    if (pos_ >= s_.size()) fail("unterminated literal");
    ++pos_;
    if (pos_ < s_.size() && s_[pos_] == '@') {
      ++pos_;
      const std::size_t tag = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '-')) ++pos_;
      if (pos_ == tag) fail("empty language tag");
    } else if (s_.substr(pos_, 2) == "^^") {
      pos_ += 2;
      iri();
    }
    return std::string(s_.substr(start, pos_ - start));
  }

  std::string term(bool allow_blank, bool allow_literal) {
    skip_ws();
    if (pos_ >= s_.size()) fail("unexpected end of line");
    const char c = s_[pos_];
    if (c == '<') return iri();
    if (c == '_' && allow_blank) return blank();
    if (c == '"' && allow_literal) return literal();
    fail("unexpected character '" + std::string(1, c) + "'");
  }

  void dot() {
    skip_ws();
    if (pos_ >= s_.size() || s_[pos_] != '.') fail("expected '.'");
    ++pos_;
    if (!at_end_or_comment()) fail("trailing characters after '.'");
  }

 private:
  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

}  // namespace

Graph load_ntriples(std::istream& in) {
  Graph g;
  std::array<std::shared_ptr<Dictionary>, 3> dicts{std::make_shared<Dictionary>(), std::make_shared<Dictionary>(),
                                                   std::make_shared<Dictionary>()};
  std::vector<Coord3> coords;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    LineParser p(line, line_no);
    if (p.at_end_or_comment()) continue;
    std::string s = p.term(true, false);
    std::string pr = p.term(false, false);
    std::string o = p.term(true, true);
    p.dot();
    coords.push_back({dicts[0]->intern(s, g.blank_scope()), dicts[1]->intern(pr, g.blank_scope()),
                      dicts[2]->intern(o, g.blank_scope())});
  }
  BoolTensor3 t({dicts[0]->size(), dicts[1]->size(), dicts[2]->size()}, std::move(coords));
  return Graph::from_parts({dicts[0], dicts[1], dicts[2]}, std::move(t), g.blank_scope());
}

Graph load_ntriples_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return load_ntriples(in);
}

void serialize_ntriples(const Graph& g, std::ostream& out) {
  for (const auto& c : g.tensor().nonzeros()) {
    out << g.subjects().term(c.i) << ' ' << g.predicates().term(c.j) << ' ' << g.objects().term(c.k) << " .\n";
  }
}

// ---------------------------------------------------------------- alignment

AlignedPair align(const Graph& left, const Graph& right, std::span<const Axis> modes) {
  std::array<std::shared_ptr<const Dictionary>, 3> ld, rd;
  std::array<std::vector<Index>, 3> lmap, rmap;
  std::array<bool, 3> remap{false, false, false};
  std::vector<Alignment> alignments;
  for (std::size_t m = 0; m < 3; ++m) {
    ld[m] = left.dictionary_handle(axis_from_index(m));
    rd[m] = right.dictionary_handle(axis_from_index(m));
  }
  for (Axis a : modes) {
    const std::size_t m = axis_index(a);
    if (remap[m]) continue;
    remap[m] = true;
    if (ld[m] == rd[m]) {
      std::vector<Index> id(ld[m]->size());
      for (Index i = 0; i < id.size(); ++i) id[i] = i;
      lmap[m] = id;
      rmap[m] = id;
      alignments.push_back({a, ld[m], std::move(id), rmap[m]});
      continue;
    }
    DictionaryUnion u = unite(*ld[m], *rd[m]);
    ld[m] = u.dict;
    rd[m] = u.dict;
    lmap[m] = u.left_map;
    rmap[m] = u.right_map;
    alignments.push_back({a, u.dict, std::move(u.left_map), std::move(u.right_map)});
  }
  auto rebuild = [&](const Graph& g, const std::array<std::shared_ptr<const Dictionary>, 3>& d,
                     const std::array<std::vector<Index>, 3>& maps) {
    std::vector<Coord3> coords;
    coords.reserve(g.size());
    for (const auto& c : g.tensor().nonzeros()) {
      coords.push_back({remap[0] ? maps[0][c.i] : c.i, remap[1] ? maps[1][c.j] : c.j, remap[2] ? maps[2][c.k] : c.k});
    }
    BoolTensor3 t({d[0]->size(), d[1]->size(), d[2]->size()}, std::move(coords));
    return Graph::from_parts(d, std::move(t), g.blank_scope());
  };
  return {rebuild(left, ld, lmap), rebuild(right, rd, rmap), std::move(alignments)};
}

}  // namespace tensorql
