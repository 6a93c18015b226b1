#include "tensorql/query_engine.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <numeric>
#include <ranges>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace tensorql {

namespace {

std::atomic<std::uint64_t> g_hidden_counter{0};

Factor hidden_factor(std::string_view tag, Index size) {
  return {"#" + std::string(tag) + std::to_string(++g_hidden_counter), nullptr, size, false};
}

Index axis_extent(const std::vector<Factor>& axis) {
  Index n = 1;
  for (const auto& f : axis) n = checked_mul(n, f.extent());
  return n;
}

void decode_axis(Index composite, const std::vector<Factor>& axis, Index* out) {
  for (std::size_t f = axis.size(); f-- > 0;) {
    const Index e = axis[f].extent();
    out[f] = composite % e;
    composite /= e;
  }
}

Index encode_axis(const Index* vals, const std::vector<Factor>& axis) {
  Index c = 0;
  for (std::size_t f = 0; f < axis.size(); ++f) c = c * axis[f].extent() + vals[f];
  return c;
}

std::vector<std::string> names(const std::vector<Factor>& axis) {
  std::vector<std::string> out;
  out.reserve(axis.size());
  for (const auto& f : axis) out.push_back(f.var);
  return out;
}

bool contains(const std::vector<std::string>& v, const std::string& x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

// One row per nonzero, one column per factor (axis by axis), payload order.
struct Flat {
  std::vector<Factor> factors;
  std::vector<Index> data;

  std::size_t width() const { return factors.size(); }
  std::size_t count() const { return factors.empty() ? data.size() : data.size() / factors.size(); }
  const Index* row(std::size_t r) const { return data.data() + r * width(); }
  std::size_t column_of(const std::string& var) const {
    for (std::size_t c = 0; c < factors.size(); ++c) {
      if (factors[c].var == var) return c;
    }
    throw std::logic_error("factor " + var + " missing");
  }
};

// Zero-width rows cannot carry a count through `data`; track it separately.
struct FlatRows {
  Flat flat;
  std::size_t rows = 0;
};

FlatRows flatten(const AlgebraicResult& r) {
  FlatRows out;
  out.flat.factors = r.factors();
  const std::size_t w = out.flat.width();
  std::vector<Index> buf(w);
  auto emit = [&](std::span<const Index> per_axis) {
    std::size_t off = 0;
    for (std::size_t a = 0; a < r.axes.size(); ++a) {
      decode_axis(per_axis[a], r.axes[a], buf.data() + off);
      off += r.axes[a].size();
    }
    out.flat.data.insert(out.flat.data.end(), buf.begin(), buf.end());
    ++out.rows;
  };
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, BoolVector>) {
          for (Index i : p.nonzeros()) {
            const Index idx[1] = {i};
            emit(idx);
          }
        } else if constexpr (std::is_same_v<T, BoolMatrix>) {
          for (const auto& c : p.nonzeros()) {
            const Index idx[2] = {c.row, c.col};
            emit(idx);
          }
        } else {
          for (const auto& c : p.nonzeros()) {
            const Index idx[3] = {c.i, c.j, c.k};
            emit(idx);
          }
        }
      },
      r.payload);
  return out;
}

// Builds a result whose axis a consists of flat columns layout[a] carrying
// factors axes[a].
AlgebraicResult assemble(const FlatRows& fr, const std::vector<std::vector<std::size_t>>& layout,
                         std::vector<std::vector<Factor>> axes) {
  const Flat& f = fr.flat;
  std::vector<Index> dims;
  for (const auto& ax : axes) dims.push_back(axis_extent(ax));
  std::vector<std::vector<Index>> composite(axes.size(), std::vector<Index>(fr.rows));
  std::vector<Index> vals;
  for (std::size_t r = 0; r < fr.rows; ++r) {
    const Index* row = f.data.data() + r * f.width();
    for (std::size_t a = 0; a < axes.size(); ++a) {
      vals.clear();
      for (std::size_t c : layout[a]) vals.push_back(row[c]);
      composite[a][r] = encode_axis(vals.data(), axes[a]);
    }
  }
  AlgebraicResult out;
  if (axes.size() == 1) {
    out.payload = BoolVector(dims[0], std::move(composite[0]));
  } else if (axes.size() == 2) {
    std::vector<Coord2> nz(fr.rows);
    for (std::size_t r = 0; r < fr.rows; ++r) nz[r] = {composite[0][r], composite[1][r]};
    out.payload = BoolMatrix(dims[0], dims[1], std::move(nz));
  } else {
    std::vector<Coord3> nz(fr.rows);
    for (std::size_t r = 0; r < fr.rows; ++r) nz[r] = {composite[0][r], composite[1][r], composite[2][r]};
    out.payload = BoolTensor3({dims[0], dims[1], dims[2]}, std::move(nz));
  }
  out.axes = std::move(axes);
  return out;
}

// Layout reproducing the current axis structure of `r` over its flat columns.
std::vector<std::vector<std::size_t>> same_layout(const AlgebraicResult& r) {
  std::vector<std::vector<std::size_t>> layout;
  std::size_t c = 0;
  for (const auto& ax : r.axes) {
    layout.emplace_back();
    for (std::size_t i = 0; i < ax.size(); ++i) layout.back().push_back(c++);
  }
  return layout;
}

Factor graph_factor(const std::string& var, const Graph& g, Axis mode) {
  auto d = g.dictionary_handle(mode);
  return {var, d, d->size(), false};
}

// Replaces the dictionary of `var`, mapping old indices through `map`.
AlgebraicResult remap(const AlgebraicResult& r, const std::string& var, const std::vector<Index>& map,
                      const std::shared_ptr<const Dictionary>& dict) {
  AlgebraicResult out = r;
  for (auto& ax : out.axes) {
    for (auto& f : ax) {
      if (f.var != var) continue;
      const bool identity = map.size() == f.size && dict->size() == f.size &&
                            std::equal(map.begin(), map.end(), std::views::iota(Index{0}).begin());
      if (identity) {
        f.dict = dict;
        return out;
      }
    }
  }
  FlatRows fr = flatten(r);
  const std::size_t col = fr.flat.column_of(var);
  const Factor old = fr.flat.factors[col];
  for (std::size_t i = 0; i < fr.rows; ++i) {
    Index& v = fr.flat.data[i * fr.flat.width() + col];
    v = v == old.unbound() ? dict->size() : map[v];
  }
  for (auto& ax : out.axes) {
    for (auto& f : ax) {
      if (f.var == var) {
        f.dict = dict;
        f.size = dict->size();
      }
    }
  }
  auto layout = same_layout(out);
  return assemble(fr, layout, out.axes);
}

// Gives `var` one common dictionary on both sides.
void unify(AlgebraicResult& l, AlgebraicResult& r, const std::string& var) {
  const Factor* fl = l.find(var);
  const Factor* fr = r.find(var);
  if (fl->dict == fr->dict && fl->size == fr->size) return;
  DictionaryUnion u = unite(*fl->dict, *fr->dict);
  l = remap(l, var, u.left_map, u.dict);
  r = remap(r, var, u.right_map, u.dict);
}

std::vector<std::string> shared_vars(const AlgebraicResult& l, const AlgebraicResult& r) {
  std::vector<std::string> out;
  for (const auto& f : l.factors()) {
    if (!f.hidden() && r.find(f.var) != nullptr) out.push_back(f.var);
  }
  return out;
}

JoinCase::Shape shape_of(const AlgebraicResult& r) {
  if (std::holds_alternative<BoolTensor3>(r.payload)) return JoinCase::Shape::Tensor;
  if (std::holds_alternative<BoolVector>(r.payload)) return JoinCase::Shape::Vector;
  const auto& a = r.axes;
  if (a[0].empty() && a[1].empty()) return JoinCase::Shape::Scalar;
  if (a[0].size() == 1 && a[1].size() == 1) return JoinCase::Shape::Matrix;
  return JoinCase::Shape::Intermediate;
}

// `tag` receives how the operand was brought into shape.
AlgebraicResult to_matrix_tagged(const AlgebraicResult& res, const std::vector<std::string>& key, std::string& tag) {
  for (const auto& k : key) {
    if (res.find(k) == nullptr) throw std::logic_error("to_matrix: key " + k + " missing");
  }
  if (const auto* v = std::get_if<BoolVector>(&res.payload)) {
    if (key.empty()) {
      tag = "x";
      return {BoolMatrix::column(*v), {res.axes[0], {}}};
    }
    if (names(res.axes[0]) == key) {
      tag = "x^T";
      return {BoolMatrix::row(*v), {{}, res.axes[0]}};
    }
  } else if (const auto* m = std::get_if<BoolMatrix>(&res.payload)) {
    if (names(res.axes[1]) == key) {
      tag = "X";
      return res;
    }
    if (names(res.axes[0]) == key) {
      tag = "X^T";
      return {transpose(*m), {res.axes[1], res.axes[0]}};
    }
  } else if (const auto* t = std::get_if<BoolTensor3>(&res.payload)) {
    if (key.size() == 1) {
      for (std::size_t mode = 0; mode < 3; ++mode) {
        if (res.axes[mode].size() == 1 && res.axes[mode][0].var == key[0] && res.axes[0].size() == 1 &&
            res.axes[1].size() == 1 && res.axes[2].size() == 1) {
          const std::size_t earlier = mode == 0 ? 1 : 0;
          const std::size_t later = mode == 2 ? 1 : 2;
          tag = "X_(" + std::to_string(mode + 1) + ")^T";
          return {transpose(matricize(*t, axis_from_index(mode)).matrix),
                  {{res.axes[later][0], res.axes[earlier][0]}, {res.axes[mode][0]}}};
        }
      }
    }
  }
  tag = "regroup(X)";
  FlatRows fr = flatten(res);
  std::vector<std::vector<std::size_t>> layout(2);
  std::vector<std::vector<Factor>> axes(2);
  for (std::size_t c = 0; c < fr.flat.width(); ++c) {
    if (!contains(key, fr.flat.factors[c].var)) {
      layout[0].push_back(c);
      axes[0].push_back(fr.flat.factors[c]);
    }
  }
  for (const auto& k : key) {
    const std::size_t c = fr.flat.column_of(k);
    layout[1].push_back(c);
    axes[1].push_back(fr.flat.factors[c]);
  }
  return assemble(fr, layout, std::move(axes));
}

// Natural 2-D form for Kronecker products: vectors as columns, tensors as
// their mode-1 unfolding.
AlgebraicResult natural_matrix(const AlgebraicResult& r) {
  if (const auto* v = std::get_if<BoolVector>(&r.payload)) return {BoolMatrix::column(*v), {r.axes[0], {}}};
  if (const auto* t = std::get_if<BoolTensor3>(&r.payload)) {
    if (r.axes[0].size() == 1 && r.axes[1].size() == 1 && r.axes[2].size() == 1) {
      return {matricize(*t, Axis::Mode1).matrix, {r.axes[0], {r.axes[2][0], r.axes[1][0]}}};
    }
    std::string tag;
    return to_matrix_tagged(r, {}, tag);
  }
  return r;
}

bool key_on_rows(const AlgebraicResult& r, const std::vector<std::string>& key) {
  return std::holds_alternative<BoolMatrix>(r.payload) && !r.axes[1].empty() && names(r.axes[0]) == key;
}

// Splits on whether `var` is bound. The bound part keeps the factor as
// non-nullable; the unbound part drops it.
std::pair<AlgebraicResult, AlgebraicResult> split_nullable(const AlgebraicResult& r, const std::string& var) {
  FlatRows fr = flatten(r);
  const std::size_t col = fr.flat.column_of(var);
  const Index unb = fr.flat.factors[col].unbound();
  FlatRows bound, unbound;
  bound.flat.factors = fr.flat.factors;
  unbound.flat.factors = fr.flat.factors;
  for (std::size_t i = 0; i < fr.rows; ++i) {
    const Index* row = fr.flat.row(i);
    FlatRows& dst = row[col] == unb ? unbound : bound;
    dst.flat.data.insert(dst.flat.data.end(), row, row + fr.flat.width());
    ++dst.rows;
  }
  // Bound part: same layout, factor no longer nullable.
  AlgebraicResult shape = r;
  for (auto& ax : shape.axes) {
    for (auto& f : ax) {
      if (f.var == var) f.nullable = false;
    }
  }
  bound.flat.factors = shape.factors();
  AlgebraicResult b = assemble(bound, same_layout(shape), shape.axes);
  // Unbound part: drop the column.
  std::vector<std::vector<std::size_t>> layout;
  std::vector<std::vector<Factor>> axes;
  std::size_t c = 0;
  for (const auto& ax : r.axes) {
    layout.emplace_back();
    axes.emplace_back();
    for (const auto& f : ax) {
      if (f.var != var) {
        layout.back().push_back(c);
        axes.back().push_back(f);
      }
      ++c;
    }
  }
  AlgebraicResult u = assemble(unbound, layout, std::move(axes));
  return {std::move(b), std::move(u)};
}

// Stacks solution sets: a leading hidden branch factor selects the part,
// every factor missing from a part is UNBOUND there.
AlgebraicResult stack(const std::vector<AlgebraicResult>& parts) {
  std::vector<Factor> all;
  std::map<std::string, std::size_t> pos;
  // per part: factor name -> index map into the union dictionary (empty = identity)
  std::vector<std::map<std::string, std::vector<Index>>> maps(parts.size());
  std::vector<std::set<std::string>> present(parts.size());
  for (std::size_t p = 0; p < parts.size(); ++p) {
    for (const auto& f : parts[p].factors()) {
      present[p].insert(f.var);
      auto it = pos.find(f.var);
      if (it == pos.end()) {
        pos[f.var] = all.size();
        all.push_back(f);
        continue;
      }
      Factor& u = all[it->second];
      u.nullable = u.nullable || f.nullable;
      if (f.hidden() || (u.dict == f.dict && u.size == f.size)) continue;
      DictionaryUnion du = unite(*u.dict, *f.dict);
      // Left maps of `unite` are the identity, so earlier parts stay valid.
      u.dict = du.dict;
      u.size = du.dict->size();
      maps[p][f.var] = std::move(du.right_map);
    }
  }
  for (auto& f : all) {
    for (std::size_t p = 0; p < parts.size(); ++p) {
      if (!present[p].contains(f.var)) f.nullable = true;
    }
  }
  Factor branch = hidden_factor("branch", parts.size());
  FlatRows out;
  out.flat.factors.push_back(branch);
  out.flat.factors.insert(out.flat.factors.end(), all.begin(), all.end());
  std::vector<Index> row(out.flat.width());
  for (std::size_t p = 0; p < parts.size(); ++p) {
    FlatRows fr = flatten(parts[p]);
    std::vector<long> src(all.size(), -1);
    for (std::size_t c = 0; c < fr.flat.width(); ++c) src[pos[fr.flat.factors[c].var]] = static_cast<long>(c);
    for (std::size_t i = 0; i < fr.rows; ++i) {
      const Index* in = fr.flat.row(i);
      row[0] = p;
      for (std::size_t a = 0; a < all.size(); ++a) {
        if (src[a] < 0) {
          row[a + 1] = all[a].unbound();
          continue;
        }
        const Factor& old = fr.flat.factors[src[a]];
        const Index v = in[src[a]];
        if (v == old.unbound() && old.nullable) {
          row[a + 1] = all[a].unbound();
        } else if (auto m = maps[p].find(all[a].var); m != maps[p].end()) {
          row[a + 1] = m->second[v];
        } else {
          row[a + 1] = v;
        }
      }
      out.flat.data.insert(out.flat.data.end(), row.begin(), row.end());
      ++out.rows;
    }
  }
  std::vector<std::size_t> layout(out.flat.width());
  std::iota(layout.begin(), layout.end(), 0);
  return assemble(out, {layout}, {out.flat.factors});
}

std::string orientation_text(const std::string& lt, const std::string& rt, bool transposed, const char* op) {
  auto fill = [](std::string tag, char name) {
    for (auto& ch : tag) {
      if (ch == 'X' || ch == 'x') ch = name;
    }
    return tag;
  };
  std::string s = fill(lt, 'L') + " " + op + " " + fill(rt, 'R');
  if (transposed) s = "(" + s + ")^T";
  return s;
}

AlgebraicResult join_impl(AlgebraicResult l, AlgebraicResult r, JoinCase& jc);

AlgebraicResult kr_join(AlgebraicResult l, AlgebraicResult r, const std::vector<std::string>& key, JoinCase& jc) {
  for (const auto& k : key) unify(l, r, k);
  // Two tensors agreeing mode by mode: plain intersection.
  if (key.size() == 3 && std::holds_alternative<BoolTensor3>(l.payload) &&
      std::holds_alternative<BoolTensor3>(r.payload)) {
    bool aligned = true;
    for (std::size_t m = 0; m < 3; ++m) {
      aligned = aligned && l.axes[m].size() == 1 && r.axes[m].size() == 1 && l.axes[m][0].var == r.axes[m][0].var;
    }
    if (aligned) {
      jc.rule = JoinCase::Rule::ElementwiseAnd;
      jc.orientation = "L and R";
      return {elementwise(LogicOp::And, std::get<BoolTensor3>(l.payload), std::get<BoolTensor3>(r.payload)), l.axes};
    }
  }
  std::string lt, rt;
  AlgebraicResult lm = to_matrix_tagged(l, key, lt);
  AlgebraicResult rm = to_matrix_tagged(r, key, rt);
  BoolMatrix kr = khatri_rao(std::get<BoolMatrix>(lm.payload), std::get<BoolMatrix>(rm.payload));
  std::vector<Factor> rows = lm.axes[0];
  rows.insert(rows.end(), rm.axes[0].begin(), rm.axes[0].end());
  const bool back = key_on_rows(l, key) && key_on_rows(r, key);
  jc.orientation = orientation_text(lt, rt, back, "(.)");
  if (back) return {transpose(kr), {lm.axes[1], std::move(rows)}};
  return {std::move(kr), {std::move(rows), lm.axes[1]}};
}

AlgebraicResult kron_join(const AlgebraicResult& l, const AlgebraicResult& r, JoinCase& jc) {
  const auto* lv = std::get_if<BoolVector>(&l.payload);
  const auto* rv = std::get_if<BoolVector>(&r.payload);
  if (lv && rv) {
    jc.rule = JoinCase::Rule::Outer;
    jc.orientation = "l r^T";
    return {outer(*lv, *rv), {l.axes[0], r.axes[0]}};
  }
  jc.rule = JoinCase::Rule::Kronecker;
  jc.orientation = "L (x) R";
  AlgebraicResult ln = natural_matrix(l);
  AlgebraicResult rn = natural_matrix(r);
  std::vector<Factor> rows = ln.axes[0], cols = ln.axes[1];
  rows.insert(rows.end(), rn.axes[0].begin(), rn.axes[0].end());
  cols.insert(cols.end(), rn.axes[1].begin(), rn.axes[1].end());
  return {kronecker(std::get<BoolMatrix>(ln.payload), std::get<BoolMatrix>(rn.payload)),
          {std::move(rows), std::move(cols)}};
}

JoinCase::Rule rule_for(JoinCase::Shape l, JoinCase::Shape r, std::size_t shared) {
  using S = JoinCase::Shape;
  using R = JoinCase::Rule;
  if (shared == 0) return l == S::Vector && r == S::Vector ? R::Outer : R::Kronecker;
  if (l == S::Tensor && r == S::Tensor) {
    return shared == 3 ? R::ElementwiseAnd : (shared == 2 ? R::TubeOuter : R::SliceKronecker);
  }
  if (l == S::Tensor || r == S::Tensor) return R::KhatriRaoMatricized;
  return R::KhatriRao;
}

AlgebraicResult join_impl(AlgebraicResult l, AlgebraicResult r, JoinCase& jc) {
  const auto shared = shared_vars(l, r);
  jc.left = shape_of(l);
  jc.right = shape_of(r);
  jc.shared = shared;
  for (const auto& v : shared) {
    const bool ln = l.find(v)->nullable;
    const bool rn = r.find(v)->nullable;
    if (!ln && !rn) continue;
    // Compatible-mapping semantics: UNBOUND matches anything. Evaluate the
    // bound/unbound combinations separately and stack them.
    std::vector<AlgebraicResult> parts;
    auto [lb, lu] = ln ? split_nullable(l, v) : std::pair{l, AlgebraicResult{}};
    auto [rb, ru] = rn ? split_nullable(r, v) : std::pair{r, AlgebraicResult{}};
    JoinCase sub;
    parts.push_back(join_impl(lb, rb, sub));
    if (ln) parts.push_back(join_impl(lu, rb, sub));
    if (rn) parts.push_back(join_impl(lb, ru, sub));
    if (ln && rn) parts.push_back(join_impl(lu, ru, sub));
    jc.rule = JoinCase::Rule::NullableSplit;
    jc.orientation = "split on ?" + v;
    return stack(parts);
  }
  if (shared.empty()) return kron_join(l, r, jc);
  jc.rule = rule_for(jc.left, jc.right, shared.size());
  AlgebraicResult out = kr_join(std::move(l), std::move(r), shared, jc);
  return out;
}

// Gives every solution of `r` a distinct hidden id.
AlgebraicResult with_row_ids(const AlgebraicResult& r, const Factor& id) {
  FlatRows fr = flatten(r);
  FlatRows out;
  out.flat.factors = fr.flat.factors;
  out.flat.factors.push_back(id);
  for (std::size_t i = 0; i < fr.rows; ++i) {
    const Index* row = fr.flat.row(i);
    out.flat.data.insert(out.flat.data.end(), row, row + fr.flat.width());
    out.flat.data.push_back(i);
    ++out.rows;
  }
  std::vector<std::size_t> layout(out.flat.width());
  std::iota(layout.begin(), layout.end(), 0);
  return assemble(out, {layout}, {out.flat.factors});
}

AlgebraicResult optional_impl(AlgebraicResult l, AlgebraicResult r, JoinCase& jc) {
  const auto shared = shared_vars(l, r);
  jc.left = shape_of(l);
  jc.right = shape_of(r);
  jc.shared = shared;
  const bool nullable_key = std::any_of(shared.begin(), shared.end(), [&](const std::string& v) {
    return l.find(v)->nullable || r.find(v)->nullable;
  });
  if (nullable_key) {
    // Join, then add back the left solutions no right solution matched.
    Factor id = hidden_factor("row", l.nnz());
    AlgebraicResult lid = with_row_ids(l, id);
    JoinCase sub;
    AlgebraicResult joined = join_impl(lid, r, sub);
    FlatRows jf = flatten(joined);
    const std::size_t idc = jf.flat.column_of(id.var);
    std::unordered_set<Index> matched;
    for (std::size_t i = 0; i < jf.rows; ++i) matched.insert(jf.flat.row(i)[idc]);
    FlatRows lf = flatten(lid);
    FlatRows dangling;
    dangling.flat.factors = lf.flat.factors;
    const std::size_t lidc = lf.flat.column_of(id.var);
    for (std::size_t i = 0; i < lf.rows; ++i) {
      const Index* row = lf.flat.row(i);
      if (matched.contains(row[lidc])) continue;
      dangling.flat.data.insert(dangling.flat.data.end(), row, row + lf.flat.width());
      ++dangling.rows;
    }
    std::vector<std::size_t> layout(dangling.flat.width());
    std::iota(layout.begin(), layout.end(), 0);
    AlgebraicResult d = assemble(dangling, {layout}, {dangling.flat.factors});
    jc.rule = JoinCase::Rule::NullableSplit;
    jc.orientation = "join, then unmatched left rows";
    return stack({joined, d});
  }
  for (const auto& k : shared) unify(l, r, k);
  std::string lt, rt;
  AlgebraicResult lm = to_matrix_tagged(l, shared, lt);
  AlgebraicResult rm = to_matrix_tagged(r, shared, rt);
  const auto& lmat = std::get<BoolMatrix>(lm.payload);
  const auto& rmat = std::get<BoolMatrix>(rm.payload);
  // "No value" key columns: some left solution, no right solution.
  BoolVector dangling = elementwise(LogicOp::AndNot, lmat.column_support(), rmat.column_support());

  const std::vector<Factor>& rr = rm.axes[0];
  const bool need_marker =
      !rr.empty() && std::any_of(rr.begin(), rr.end(), [](const Factor& f) { return f.nullable; });
  std::vector<Factor> rows2;
  if (need_marker) rows2.push_back(hidden_factor("novalue", 2));
  for (Factor f : rr) {
    f.nullable = true;
    rows2.push_back(f);
  }
  const std::size_t off = need_marker ? 1 : 0;
  std::vector<Index> vals(rows2.size());
  std::vector<Coord2> nz;
  nz.reserve(rmat.nnz() + dangling.nnz());
  for (const auto& c : rmat.nonzeros()) {
    decode_axis(c.row, rr, vals.data() + off);
    if (need_marker) vals[0] = 0;
    nz.push_back({encode_axis(vals.data(), rows2), c.col});
  }
  for (std::size_t f = 0; f < rows2.size(); ++f) vals[f] = rows2[f].unbound();
  if (need_marker) vals[0] = 1;
  const Index none_row = encode_axis(vals.data(), rows2);
  for (Index c : dangling.nonzeros()) nz.push_back({none_row, c});
  BoolMatrix extended(axis_extent(rows2), rmat.cols(), std::move(nz));

  BoolMatrix kr = khatri_rao(lmat, extended);
  std::vector<Factor> rows = lm.axes[0];
  rows.insert(rows.end(), rows2.begin(), rows2.end());
  const bool back = key_on_rows(l, shared) && key_on_rows(r, shared);
  jc.rule = rule_for(jc.left, jc.right, shared.size());
  jc.orientation = orientation_text(lt, "[" + rt + ", k]", back, "(.)");
  if (back) return {transpose(kr), {lm.axes[1], std::move(rows)}};
  return {std::move(kr), {std::move(rows), lm.axes[1]}};
}

}  // namespace

// ---------------------------------------------------------------- AlgebraicResult

std::size_t AlgebraicResult::nnz() const {
  return std::visit([](const auto& p) { return p.nnz(); }, payload);
}

std::vector<Factor> AlgebraicResult::factors() const {
  std::vector<Factor> out;
  for (const auto& ax : axes) out.insert(out.end(), ax.begin(), ax.end());
  return out;
}

const Factor* AlgebraicResult::find(const std::string& var) const {
  for (const auto& ax : axes) {
    for (const auto& f : ax) {
      if (f.var == var) return &f;
    }
  }
  return nullptr;
}

std::string AlgebraicResult::shape() const {
  std::string kind = std::holds_alternative<BoolVector>(payload)   ? "vector"
                     : std::holds_alternative<BoolMatrix>(payload) ? "matrix"
                                                                   : "tensor";
  std::string dims, roles;
  for (std::size_t a = 0; a < axes.size(); ++a) {
    if (a) {
      dims += "x";
      roles += " | ";
    }
    dims += std::to_string(axis_extent(axes[a]));
    std::string ax;
    for (const auto& f : axes[a]) {
      if (!ax.empty()) ax += ",";
      ax += f.hidden() ? "#" : "?" + f.var;
      if (f.nullable) ax += "'";
    }
    roles += ax.empty() ? "1" : ax;
  }
  return kind + " " + dims + " [" + roles + "]";
}

std::vector<Index> strides(const std::vector<Factor>& axis) {
  std::vector<Index> s(axis.size(), 1);
  for (std::size_t f = axis.size(); f-- > 1;) s[f - 1] = checked_mul(s[f], axis[f].extent());
  return s;
}

// ---------------------------------------------------------------- GraphSet

void GraphSet::add(std::string alias, std::shared_ptr<const Graph> g) {
  for (const auto& [a, _] : graphs_) {
    if (a == alias) throw Error("duplicate graph alias " + alias);
  }
  graphs_.emplace_back(std::move(alias), std::move(g));
}

const Graph& GraphSet::resolve(const std::string& alias) const {
  if (graphs_.empty()) throw Error("no graph loaded");
  if (alias.empty()) return *graphs_.front().second;
  for (const auto& [a, g] : graphs_) {
    if (a == alias) return *g;
  }
  throw Error("unknown graph alias " + alias);
}

// ---------------------------------------------------------------- JoinCase

std::string_view to_string(JoinCase::Rule r) {
  switch (r) {
    case JoinCase::Rule::KhatriRao: return "khatri-rao";
    case JoinCase::Rule::KhatriRaoMatricized: return "khatri-rao/matricized";
    case JoinCase::Rule::Kronecker: return "kronecker";
    case JoinCase::Rule::Outer: return "outer";
    case JoinCase::Rule::ElementwiseAnd: return "elementwise-and";
    case JoinCase::Rule::TubeOuter: return "tube-outer";
    case JoinCase::Rule::SliceKronecker: return "slice-kronecker";
    case JoinCase::Rule::NullableSplit: return "nullable-split";
  }
  return "?";
}

std::string_view to_string(JoinCase::Shape s) {
  switch (s) {
    case JoinCase::Shape::Scalar: return "scalar";
    case JoinCase::Shape::Vector: return "vector";
    case JoinCase::Shape::Matrix: return "matrix";
    case JoinCase::Shape::Tensor: return "tensor";
    case JoinCase::Shape::Intermediate: return "intermediate";
  }
  return "?";
}

std::string JoinCase::describe() const {
  std::string s = std::string(to_string(rule)) + " " + std::string(to_string(left)) + "/" +
                  std::string(to_string(right)) + " on {";
  for (std::size_t i = 0; i < shared.size(); ++i) s += (i ? ",?" : "?") + shared[i];
  s += "}";
  if (!orientation.empty()) s += " : " + orientation;
  return s;
}

// ---------------------------------------------------------------- operators

AlgebraicResult eval_pattern(const TriplePattern& tp, const Graph& g) {
  // Fixed terms resolve to indices; an unknown term empties the result.
  std::array<std::optional<Index>, 3> fixed;
  bool missing = false;
  for (std::size_t m = 0; m < 3; ++m) {
    if (tp[m].is_var) continue;
    fixed[m] = g.dictionary(axis_from_index(m)).find(tp[m].text, g.blank_scope());
    missing = missing || !fixed[m];
  }
  const auto vars = tp.vars();
  std::size_t var_slots = 0;
  for (const auto& s : tp.slots) var_slots += s.is_var ? 1 : 0;

  if (var_slots == vars.size()) {
    std::vector<std::size_t> var_modes;
    std::vector<std::size_t> fixed_modes;
    for (std::size_t m = 0; m < 3; ++m) (tp[m].is_var ? var_modes : fixed_modes).push_back(m);
    const auto& t = g.tensor();
    switch (vars.size()) {
      case 0: {
        const bool hit = !missing && t.test(*fixed[0], *fixed[1], *fixed[2]);
        return {BoolMatrix(1, 1, hit ? std::vector<Coord2>{{0, 0}} : std::vector<Coord2>{}), {{}, {}}};
      }
      case 1: {
        const std::size_t m = var_modes[0];
        Factor f = graph_factor(tp[m].text, g, axis_from_index(m));
        if (missing) return {BoolVector(f.size), {{f}}};
        const std::size_t a = fixed_modes[0], b = fixed_modes[1];
        return {fibre(t, {axis_from_index(a), *fixed[a]}, {axis_from_index(b), *fixed[b]}), {{f}}};
      }
      case 2: {
        const std::size_t r = var_modes[0], c = var_modes[1], f = fixed_modes[0];
        Factor fr = graph_factor(tp[r].text, g, axis_from_index(r));
        Factor fc = graph_factor(tp[c].text, g, axis_from_index(c));
        if (missing) return {BoolMatrix(fr.size, fc.size), {{fr}, {fc}}};
        return {slice(t, axis_from_index(f), *fixed[f]), {{fr}, {fc}}};
      }
      default:
        return {t, {{graph_factor(tp[0].text, g, Axis::Mode1)},
                    {graph_factor(tp[1].text, g, Axis::Mode2)},
                    {graph_factor(tp[2].text, g, Axis::Mode3)}}};
    }
  }

  // A variable repeated inside one pattern: unify the dictionaries of its
  // modes and keep the diagonal.
  std::vector<Factor> out_factors;
  std::vector<std::vector<Index>> mode_map(3);  // mode index -> unified index
  std::vector<std::size_t> factor_of_mode(3, 0);
  for (const auto& v : vars) {
    std::shared_ptr<const Dictionary> dict;
    std::vector<std::size_t> modes;
    for (std::size_t m = 0; m < 3; ++m) {
      if (tp[m].is_var && tp[m].text == v) modes.push_back(m);
    }
    dict = g.dictionary_handle(axis_from_index(modes[0]));
    std::vector<std::vector<Index>> maps(modes.size());
    maps[0].resize(dict->size());
    std::iota(maps[0].begin(), maps[0].end(), 0);
    for (std::size_t x = 1; x < modes.size(); ++x) {
      DictionaryUnion u = unite(*dict, g.dictionary(axis_from_index(modes[x])));
      dict = u.dict;
      maps[x] = std::move(u.right_map);
    }
    for (std::size_t x = 0; x < modes.size(); ++x) {
      mode_map[modes[x]] = std::move(maps[x]);
      factor_of_mode[modes[x]] = out_factors.size();
    }
    out_factors.push_back({v, dict, dict->size(), false});
  }
  FlatRows fr;
  fr.flat.factors = out_factors;
  if (!missing) {
    std::vector<Index> vals(out_factors.size());
    for (const auto& c : g.tensor().nonzeros()) {
      bool ok = true;
      std::vector<bool> set(out_factors.size(), false);
      for (std::size_t m = 0; m < 3 && ok; ++m) {
        if (!tp[m].is_var) {
          ok = c[m] == *fixed[m];
          continue;
        }
        const Index u = mode_map[m][c[m]];
        const std::size_t f = factor_of_mode[m];
        if (set[f]) {
          ok = vals[f] == u;
        } else {
          vals[f] = u;
          set[f] = true;
        }
      }
      if (!ok) continue;
      fr.flat.data.insert(fr.flat.data.end(), vals.begin(), vals.end());
      ++fr.rows;
    }
  }
  if (out_factors.size() == 1) return assemble(fr, {{0}}, {out_factors});
  return assemble(fr, {{0}, {1}}, {{out_factors[0]}, {out_factors[1]}});
}

AlgebraicResult eval_join(const AlgebraicResult& left, const AlgebraicResult& right, JoinCase* used) {
  JoinCase jc;
  AlgebraicResult out = join_impl(left, right, jc);
  if (used) *used = jc;
  return out;
}

AlgebraicResult eval_optional(const AlgebraicResult& left, const AlgebraicResult& right) {
  JoinCase jc;
  return optional_impl(left, right, jc);
}

AlgebraicResult eval_union(const AlgebraicResult& left, const AlgebraicResult& right) {
  return stack({left, right});
}

AlgebraicResult to_matrix(const AlgebraicResult& res, const std::vector<std::string>& key) {
  std::string tag;
  return to_matrix_tagged(res, key, tag);
}

AlgebraicResult project_distinct(const AlgebraicResult& res, const std::vector<std::string>& vars) {
  FlatRows fr = flatten(res);
  std::vector<std::size_t> layout;
  std::vector<Factor> axis;
  FlatRows src = fr;
  for (const auto& v : vars) {
    if (std::find_if(axis.begin(), axis.end(), [&](const Factor& f) { return f.var == v; }) != axis.end()) continue;
    const Factor* f = res.find(v);
    if (f == nullptr) throw std::logic_error("project_distinct: unknown variable " + v);
    layout.push_back(fr.flat.column_of(v));
    axis.push_back(*f);
  }
  return assemble(src, {layout}, {axis});
}

SolutionSequence decode_solutions(const AlgebraicResult& res, const std::vector<std::string>& vars) {
  SolutionSequence out;
  out.vars = vars;
  FlatRows fr = flatten(res);
  std::vector<long> col(vars.size(), -1);
  for (std::size_t v = 0; v < vars.size(); ++v) {
    for (std::size_t c = 0; c < fr.flat.width(); ++c) {
      if (fr.flat.factors[c].var == vars[v]) col[v] = static_cast<long>(c);
    }
  }
  out.rows.reserve(fr.rows);
  for (std::size_t i = 0; i < fr.rows; ++i) {
    const Index* row = fr.flat.row(i);
    Solution s;
    s.values.reserve(vars.size());
    for (std::size_t v = 0; v < vars.size(); ++v) {
      if (col[v] < 0) {
        s.values.emplace_back();
        continue;
      }
      const Factor& f = fr.flat.factors[col[v]];
      const Index x = row[col[v]];
      if (f.nullable && x == f.unbound()) {
        s.values.emplace_back();
      } else {
        s.values.emplace_back(f.dict->term(x));
      }
    }
    out.rows.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------- plans

std::string PlanStep::label() const {
  switch (op) {
    case Op::Scan: return "scan";
    case Op::Join: return "join";
    case Op::LeftJoin: return "optional";
    case Op::Union: return "union";
    case Op::DistinctBound: return "distinct-bound";
    case Op::DistinctMask: return "distinct-mask";
    case Op::DistinctProduct: return "distinct-product";
  }
  return "?";
}

namespace {

JoinCase::Shape scan_shape(const PlanStep& s) {
  if (s.op != PlanStep::Op::Scan) return JoinCase::Shape::Intermediate;
  std::size_t slots = 0;
  for (const auto& sl : s.triple.pattern.slots) slots += sl.is_var ? 1 : 0;
  if (slots != s.vars.size()) return JoinCase::Shape::Intermediate;
  switch (s.vars.size()) {
    case 0: return JoinCase::Shape::Scalar;
    case 1: return JoinCase::Shape::Vector;
    case 2: return JoinCase::Shape::Matrix;
    default: return JoinCase::Shape::Tensor;
  }
}

std::vector<std::string> merge_vars(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::string> out = a;
  for (const auto& v : b) {
    if (!contains(out, v)) out.push_back(v);
  }
  return out;
}

class PlanBuilder {
 public:
  explicit PlanBuilder(JoinPlan& p) : plan_(p) {}

  std::size_t node(const PatternNode& n) {
    switch (n.kind) {
      case PatternNode::Kind::Bgp: {
        std::size_t acc = scan(n.triples.front());
        for (std::size_t i = 1; i < n.triples.size(); ++i) acc = binary(PlanStep::Op::Join, acc, scan(n.triples[i]));
        return acc;
      }
      case PatternNode::Kind::Group: {
        std::size_t acc = node(n.children.front());
        for (std::size_t i = 1; i < n.children.size(); ++i) acc = binary(PlanStep::Op::Join, acc, node(n.children[i]));
        return acc;
      }
      case PatternNode::Kind::Optional:
        return binary(PlanStep::Op::LeftJoin, node(n.children[0]), node(n.children[1]));
      case PatternNode::Kind::Union:
        return binary(PlanStep::Op::Union, node(n.children[0]), node(n.children[1]));
    }
    throw std::logic_error("unknown pattern node");
  }

  std::size_t scan(const GraphTriple& t) {
    PlanStep s;
    s.op = PlanStep::Op::Scan;
    s.triple = t;
    s.vars = t.pattern.vars();
    plan_.steps.push_back(std::move(s));
    return plan_.steps.size() - 1;
  }

  std::size_t binary(PlanStep::Op op, std::size_t l, std::size_t r) {
    PlanStep s;
    s.op = op;
    s.inputs = {l, r};
    const auto& ls = plan_.steps[l];
    const auto& rs = plan_.steps[r];
    s.vars = merge_vars(ls.vars, rs.vars);
    if (op != PlanStep::Op::Union) {
      JoinCase jc;
      jc.left = scan_shape(ls);
      jc.right = scan_shape(rs);
      for (const auto& v : ls.vars) {
        if (contains(rs.vars, v)) jc.shared.push_back(v);
      }
      jc.rule = rule_for(jc.left, jc.right, jc.shared.size());
      s.join_case = jc;
    }
    plan_.steps.push_back(std::move(s));
    return plan_.steps.size() - 1;
  }

 private:
  JoinPlan& plan_;
};

// Two slices sharing exactly one variable, each with one fixed position.
std::optional<PlanStep::Op> distinct_shape(const Query& q, std::string& shared) {
  if (q.form != QueryForm::Select || q.modifier == Modifier::None || q.select_all) return std::nullopt;
  const PatternNode& w = q.where;
  if (w.kind != PatternNode::Kind::Group || w.children.size() != 1) return std::nullopt;
  const PatternNode& b = w.children[0];
  if (b.kind != PatternNode::Kind::Bgp || b.triples.size() != 2) return std::nullopt;
  std::array<std::vector<std::string>, 2> vars;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& tp = b.triples[i].pattern;
    std::size_t slots = 0;
    for (const auto& s : tp.slots) slots += s.is_var ? 1 : 0;
    vars[i] = tp.vars();
    if (slots != 2 || vars[i].size() != 2) return std::nullopt;
  }
  std::vector<std::string> common;
  for (const auto& v : vars[0]) {
    if (contains(vars[1], v)) common.push_back(v);
  }
  if (common.size() != 1) return std::nullopt;
  shared = common[0];
  std::set<std::string> proj(q.projection.begin(), q.projection.end());
  const std::string lf = vars[0][0] == shared ? vars[0][1] : vars[0][0];
  const std::string rf = vars[1][0] == shared ? vars[1][1] : vars[1][0];
  if (proj == std::set<std::string>{shared}) return PlanStep::Op::DistinctBound;
  if (proj == std::set<std::string>{lf, shared} || proj == std::set<std::string>{rf, shared}) {
    return PlanStep::Op::DistinctMask;
  }
  if (proj == std::set<std::string>{lf, rf}) return PlanStep::Op::DistinctProduct;
  return std::nullopt;
}

}  // namespace

JoinPlan plan_pattern(const PatternNode& node, const GraphSet&) {
  JoinPlan p;
  PlanBuilder(p).node(node);
  return p;
}

JoinPlan plan(const Query& q, const GraphSet& graphs) {
  std::string shared;
  if (auto op = distinct_shape(q, shared)) {
    JoinPlan p;
    PlanBuilder b(p);
    const auto& triples = q.where.children[0].triples;
    const std::size_t l = b.scan(triples[0]);
    const std::size_t r = b.scan(triples[1]);
    PlanStep s;
    s.op = *op;
    s.inputs = {l, r};
    s.triple = triples[0];
    s.second = triples[1];
    s.projection = q.projection;
    s.vars = q.projection;
    s.join_case.left = JoinCase::Shape::Matrix;
    s.join_case.right = JoinCase::Shape::Matrix;
    s.join_case.shared = {shared};
    s.join_case.rule = JoinCase::Rule::KhatriRao;
    p.steps.push_back(std::move(s));
    return p;
  }
  return plan_pattern(q.where, graphs);
}

namespace {

AlgebraicResult eval_distinct_step(const PlanStep& s, AlgebraicResult l, AlgebraicResult r) {
  const std::string& b = s.join_case.shared[0];
  unify(l, r, b);
  AlgebraicResult lm = to_matrix(l, {b});
  AlgebraicResult rm = to_matrix(r, {b});
  const auto& lmat = std::get<BoolMatrix>(lm.payload);
  const auto& rmat = std::get<BoolMatrix>(rm.payload);
  switch (s.op) {
    case PlanStep::Op::DistinctBound:
      // (OR_k t_k:) AND (OR_k u_k:)
      return {elementwise(LogicOp::And, lmat.column_support(), rmat.column_support()), {lm.axes[1]}};
    case PlanStep::Op::DistinctMask: {
      // Columns of the free side whose counterpart column is nonempty.
      const bool left_free = contains(s.projection, lm.axes[0][0].var);
      const AlgebraicResult& keep = left_free ? lm : rm;
      const BoolVector mask = (left_free ? rmat : lmat).column_support();
      std::vector<Coord2> nz;
      for (const auto& c : std::get<BoolMatrix>(keep.payload).nonzeros()) {
        if (mask.test(c.col)) nz.push_back(c);
      }
      const auto& km = std::get<BoolMatrix>(keep.payload);
      return {BoolMatrix(km.rows(), km.cols(), std::move(nz)), keep.axes};
    }
    case PlanStep::Op::DistinctProduct:
      return {boolean_matmul(lmat, transpose(rmat)), {lm.axes[0], rm.axes[0]}};
    default: throw std::logic_error("not a distinct step");
  }
}

}  // namespace

std::vector<AlgebraicResult> execute(JoinPlan& p, const GraphSet& graphs) {
  std::vector<AlgebraicResult> out;
  out.reserve(p.steps.size());
  for (auto& s : p.steps) {
    switch (s.op) {
      case PlanStep::Op::Scan:
        out.push_back(eval_pattern(s.triple.pattern, graphs.resolve(s.triple.graph)));
        break;
      case PlanStep::Op::Join: {
        JoinCase jc;
        out.push_back(join_impl(out[s.inputs[0]], out[s.inputs[1]], jc));
        jc.left = s.join_case.left;
        jc.right = s.join_case.right;
        s.join_case = jc;
        break;
      }
      case PlanStep::Op::LeftJoin: {
        JoinCase jc;
        out.push_back(optional_impl(out[s.inputs[0]], out[s.inputs[1]], jc));
        jc.left = s.join_case.left;
        jc.right = s.join_case.right;
        s.join_case = jc;
        break;
      }
      case PlanStep::Op::Union:
        out.push_back(stack({out[s.inputs[0]], out[s.inputs[1]]}));
        break;
      default:
        out.push_back(eval_distinct_step(s, out[s.inputs[0]], out[s.inputs[1]]));
        break;
    }
  }
  return out;
}

// ---------------------------------------------------------------- query forms

namespace {

AlgebraicResult eval_where(const PatternNode& node, const GraphSet& graphs) {
  JoinPlan p = plan_pattern(node, graphs);
  auto results = execute(p, graphs);
  return std::move(results.back());
}

// Nonemptiness with early exit on the first empty conjunct.
bool nonempty(const PatternNode& n, const GraphSet& graphs) {
  switch (n.kind) {
    case PatternNode::Kind::Union: return nonempty(n.children[0], graphs) || nonempty(n.children[1], graphs);
    case PatternNode::Kind::Optional: return nonempty(n.children[0], graphs);
    case PatternNode::Kind::Bgp:
    case PatternNode::Kind::Group: {
      const std::size_t count = n.kind == PatternNode::Kind::Bgp ? n.triples.size() : n.children.size();
      auto part = [&](std::size_t i) {
        return n.kind == PatternNode::Kind::Bgp
                   ? eval_pattern(n.triples[i].pattern, graphs.resolve(n.triples[i].graph))
                   : eval_where(n.children[i], graphs);
      };
      AlgebraicResult acc = part(0);
      if (acc.empty()) return false;
      for (std::size_t i = 1; i < count; ++i) {
        AlgebraicResult next = part(i);
        if (next.empty()) return false;
        acc = eval_join(acc, next);
        if (acc.empty()) return false;
      }
      return true;
    }
  }
  return false;
}

}  // namespace

AlgebraicResult eval_distinct(const Query& q, const GraphSet& graphs) {
  JoinPlan p = plan(q, graphs);
  auto results = execute(p, graphs);
  const PlanStep& root = p.steps.back();
  if (root.op == PlanStep::Op::DistinctBound || root.op == PlanStep::Op::DistinctMask ||
      root.op == PlanStep::Op::DistinctProduct) {
    return std::move(results.back());
  }
  return project_distinct(results.back(), q.result_vars());
}

bool eval_ask(const Query& q, const GraphSet& graphs) { return nonempty(q.where, graphs); }

Graph eval_construct(const Query& q, const GraphSet& graphs) {
  const auto vars = pattern_vars(q.where);
  AlgebraicResult res = project_distinct(eval_where(q.where, graphs), vars);
  SolutionSequence sols = decode_solutions(res, vars);
  Graph out;
  for (const auto& sol : sols.rows) {
    for (const auto& t : q.construct_template) {
      std::array<std::string, 3> terms;
      bool ok = true;
      for (std::size_t m = 0; m < 3 && ok; ++m) {
        if (!t[m].is_var) {
          terms[m] = t[m].text;
          continue;
        }
        const auto it = std::find(vars.begin(), vars.end(), t[m].text);
        const auto& v = sol.values[it - vars.begin()];
        ok = v.has_value();
        if (ok) terms[m] = *v;
      }
      if (!ok || terms[0].starts_with('"') || !terms[1].starts_with('<')) continue;
      out.add_triple({terms[0], terms[1], terms[2]});
    }
  }
  return out;
}

QueryResult run_query(const Query& q, const GraphSet& graphs) {
  switch (q.form) {
    case QueryForm::Ask: return {eval_ask(q, graphs)};
    case QueryForm::Construct: return {eval_construct(q, graphs)};
    case QueryForm::Select: break;
  }
  const auto vars = q.result_vars();
  if (q.modifier != Modifier::None) return {decode_solutions(eval_distinct(q, graphs), vars)};
  return {decode_solutions(eval_where(q.where, graphs), vars)};
}

}  // namespace tensorql
