#include "tensorql/cp_decomp.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace tensorql {

CPFactors::CPFactors(BoolMatrix a, BoolMatrix b, BoolMatrix c) : A(std::move(a)), B(std::move(b)), C(std::move(c)) {
  if (A.cols() != B.cols() || A.cols() != C.cols()) {
    throw ShapeError("factor matrices disagree on rank: " + std::to_string(A.cols()) + ", " + std::to_string(B.cols()) +
                     ", " + std::to_string(C.cols()));
  }
}

namespace {

std::vector<std::vector<Index>> columns_of(const BoolMatrix& m) {
  std::vector<std::vector<Index>> cols(m.cols());
  for (const auto& c : m.nonzeros()) cols[c.col].push_back(c.row);
  return cols;
}

struct CellCodec {
  Index m, l;
  explicit CellCodec(const std::array<Index, 3>& d) : m(d[1]), l(d[2]) { checked_mul(checked_mul(d[0], d[1]), d[2]); }
  std::uint64_t operator()(Index i, Index j, Index k) const { return (i * m + j) * l + k; }
};

// Component cells as codes.
std::vector<std::vector<std::uint64_t>> component_cells(const CPFactors& f) {
  const CellCodec code(f.dims());
  const auto a = columns_of(f.A), b = columns_of(f.B), c = columns_of(f.C);
  std::vector<std::vector<std::uint64_t>> out(f.rank());
  for (Index r = 0; r < f.rank(); ++r) {
    for (Index i : a[r]) {
      for (Index j : b[r]) {
        for (Index k : c[r]) out[r].push_back(code(i, j, k));
      }
    }
  }
  return out;
}

CPFactors drop_component(const CPFactors& f, Index drop) {
  auto strip = [drop](const BoolMatrix& m) {
    std::vector<Coord2> nz;
    for (const auto& c : m.nonzeros()) {
      if (c.col != drop) nz.push_back({c.row, c.col > drop ? c.col - 1 : c.col});
    }
    return BoolMatrix(m.rows(), m.cols() - 1, std::move(nz));
  };
  return {strip(f.A), strip(f.B), strip(f.C)};
}

void check_shape(const CPFactors& f, const BoolTensor3& t) {
  if (f.dims() != t.dims()) throw ShapeError("factor row counts do not match tensor dimensions");
}

}  // namespace

BoolTensor3 reconstruct(const CPFactors& f) {
  const auto a = columns_of(f.A), b = columns_of(f.B), c = columns_of(f.C);
  std::vector<Coord3> nz;
  for (Index r = 0; r < f.rank(); ++r) {
    for (Index i : a[r]) {
      for (Index j : b[r]) {
        for (Index k : c[r]) nz.push_back({i, j, k});
      }
    }
  }
  return BoolTensor3(f.dims(), std::move(nz));
}

std::array<bool, 3> unfold_identity_check(const CPFactors& f, const BoolTensor3& t) {
  check_shape(f, t);
  return {
      matricize(t, Axis::Mode1).matrix == boolean_matmul(f.A, transpose(khatri_rao(f.C, f.B))),
      matricize(t, Axis::Mode2).matrix == boolean_matmul(f.B, transpose(khatri_rao(f.C, f.A))),
      matricize(t, Axis::Mode3).matrix == boolean_matmul(f.C, transpose(khatri_rao(f.B, f.A))),
  };
}

CPFactors naive_decomposition(const BoolTensor3& t) {
  const auto [n, m, l] = t.dims();
  const Index c1 = checked_mul(m, l), c2 = checked_mul(n, l), c3 = checked_mul(n, m);
  const Index r = std::min({c1, c2, c3});
  // Mode whose unfolding has the fewest columns.
  const Axis mode = r == c1 ? Axis::Mode1 : (r == c2 ? Axis::Mode2 : Axis::Mode3);
  const Matricization u = matricize(t, mode);
  const BoolVector used = u.matrix.column_support();
  // Column c of the unfolding is (earlier, later) = decode(c); the two
  // one-hot factors put a single 1 at those positions.
  std::vector<Coord2> earlier, later;
  for (Index c : used.nonzeros()) {
    const auto [e, s] = u.decoder.decode(c);
    earlier.push_back({e, c});
    later.push_back({s, c});
  }
  const BoolMatrix& unf = u.matrix;
  switch (mode) {
    case Axis::Mode1:
      return {unf, BoolMatrix(m, r, std::move(earlier)), BoolMatrix(l, r, std::move(later))};
    case Axis::Mode2:
      return {BoolMatrix(n, r, std::move(earlier)), unf, BoolMatrix(l, r, std::move(later))};
    case Axis::Mode3:
      return {BoolMatrix(n, r, std::move(earlier)), BoolMatrix(m, r, std::move(later)), unf};
  }
  throw std::logic_error("unreachable");
}

GreedyResult greedy_cp(const BoolTensor3& t, Index r, const GreedyOptions& opts) {
  const auto dims = t.dims();
  const CellCodec code(dims);
  std::unordered_set<std::uint64_t> ones;
  ones.reserve(t.nnz() * 2);
  // Fibres through each pair of fixed indices, keyed by the pair.
  std::array<std::unordered_map<std::uint64_t, std::vector<Index>>, 3> fibres;
  for (const auto& c : t.nonzeros()) {
    ones.insert(code(c.i, c.j, c.k));
    fibres[0][c.j * dims[2] + c.k].push_back(c.i);
    fibres[1][c.i * dims[2] + c.k].push_back(c.j);
    fibres[2][c.i * dims[1] + c.j].push_back(c.k);
  }
  std::unordered_set<std::uint64_t> covered;
  std::mt19937_64 rng(opts.seed);

  std::vector<std::array<std::vector<Index>, 3>> blocks;
  for (Index round = 0; round < r; ++round) {
    std::vector<Coord3> uncovered;
    for (const auto& c : t.nonzeros()) {
      if (!covered.contains(code(c.i, c.j, c.k))) uncovered.push_back(c);
    }
    if (uncovered.empty()) break;
    const std::size_t tries = std::min(uncovered.size(), std::max<std::size_t>(opts.seed_candidates, 1));
    for (std::size_t s = 0; s < tries; ++s) {
      std::uniform_int_distribution<std::size_t> pick(s, uncovered.size() - 1);
      std::swap(uncovered[s], uncovered[pick(rng)]);
    }

    long best_score = 0;
    std::array<std::vector<Index>, 3> best;
    for (std::size_t s = 0; s < tries; ++s) {
      const Coord3 c0 = uncovered[s];
      std::array<std::vector<Index>, 3> blk{{{c0.i}, {c0.j}, {c0.k}}};
      long score = 1;
      while (true) {
        long gain_best = 0;
        std::size_t mode_best = 3;
        Index x_best = 0;
        for (std::size_t mode = 0; mode < 3; ++mode) {
          const std::size_t p = mode == 0 ? 1 : 0, q = mode == 2 ? 1 : 2;
          const std::uint64_t key = blk[p][0] * dims[q] + blk[q][0];
          auto it = fibres[mode].find(key);
          if (it == fibres[mode].end()) continue;
          for (Index x : it->second) {
            if (std::find(blk[mode].begin(), blk[mode].end(), x) != blk[mode].end()) continue;
            long gain = 0;
            bool feasible = true;
            for (Index y : blk[p]) {
              for (Index z : blk[q]) {
                std::array<Index, 3> cell{};
                cell[mode] = x;
                cell[p] = y;
                cell[q] = z;
                const auto cc = code(cell[0], cell[1], cell[2]);
                if (!ones.contains(cc)) {
                  feasible = feasible && opts.allow_overcover;
                  --gain;
                } else if (!covered.contains(cc)) {
                  ++gain;
                }
              }
              if (!feasible) break;
            }
            if (feasible && gain > gain_best) {
              gain_best = gain;
              mode_best = mode;
              x_best = x;
            }
          }
        }
        if (mode_best == 3) break;
        blk[mode_best].push_back(x_best);
        score += gain_best;
      }
      if (score > best_score) {
        best_score = score;
        best = blk;
      }
    }
    if (best_score <= 0) break;
    for (Index i : best[0]) {
      for (Index j : best[1]) {
        for (Index k : best[2]) covered.insert(code(i, j, k));
      }
    }
    blocks.push_back(std::move(best));
  }

  std::array<std::vector<Coord2>, 3> nz;
  for (Index b = 0; b < blocks.size(); ++b) {
    for (std::size_t mode = 0; mode < 3; ++mode) {
      for (Index x : blocks[b][mode]) nz[mode].push_back({x, b});
    }
  }
  const Index rank = blocks.size();
  GreedyResult out;
  out.factors = CPFactors(BoolMatrix(dims[0], rank, std::move(nz[0])), BoolMatrix(dims[1], rank, std::move(nz[1])),
                          BoolMatrix(dims[2], rank, std::move(nz[2])));
  out.report = verify_sparsity(out.factors, t);
  return out;
}

bool is_irreducible(const CPFactors& f) {
  const auto cells = component_cells(f);
  std::unordered_map<std::uint64_t, std::uint32_t> count;
  for (const auto& comp : cells) {
    for (auto c : comp) ++count[c];
  }
  for (const auto& comp : cells) {
    if (std::all_of(comp.begin(), comp.end(), [&](std::uint64_t c) { return count[c] >= 2; })) return false;
  }
  return true;
}

CPFactors reduce_to_irreducible(const CPFactors& f, const BoolTensor3& t) {
  check_shape(f, t);
  if (reconstruct(f) != t) throw Error("reduce_to_irreducible: factors do not reconstruct the tensor");
  CPFactors cur = f;
  auto cells = component_cells(cur);
  std::unordered_map<std::uint64_t, std::uint32_t> count;
  for (const auto& comp : cells) {
    for (auto c : comp) ++count[c];
  }
  for (Index j = 0; j < cells.size();) {
    const bool redundant =
        std::all_of(cells[j].begin(), cells[j].end(), [&](std::uint64_t c) { return count[c] >= 2; });
    if (!redundant) {
      ++j;
      continue;
    }
    for (auto c : cells[j]) --count[c];
    cells.erase(cells.begin() + static_cast<std::ptrdiff_t>(j));
    cur = drop_component(cur, j);
    // Counts only fall, so earlier components stay essential.
  }
  // Each component must remove at least one cell from the residual.
  std::unordered_set<std::uint64_t> residual;
  for (const auto& c : t.nonzeros()) residual.insert(CellCodec(t.dims())(c.i, c.j, c.k));
  for (const auto& comp : cells) {
    const std::size_t before = residual.size();
    for (auto c : comp) residual.erase(c);
    if (residual.size() >= before) throw std::logic_error("residual sparsity did not increase");
  }
  return cur;
}

DecompReport verify_sparsity(const CPFactors& f, const BoolTensor3& t) {
  check_shape(f, t);
  DecompReport rep;
  const BoolTensor3 rec = reconstruct(f);
  rep.exact = rec == t;
  rep.rank = f.rank();
  rep.nnz_factors = f.nnz();
  rep.nnz_target = t.nnz();
  const auto hit = elementwise(LogicOp::And, rec, t);
  rep.covered = hit.nnz();
  rep.overcovered = rec.nnz() - hit.nnz();
  rep.sA = sparsity(f.A);
  rep.sB = sparsity(f.B);
  rep.sC = sparsity(f.C);
  rep.sT = sparsity(t);
  rep.irreducible = is_irreducible(f);
  rep.factor_count_bound = rep.nnz_factors <= 3 * rep.nnz_target;
  rep.sparsity_bound = rep.sA + rep.sB + rep.sC >= rep.sT - 1e-12;
  return rep;
}

void export_factors(const CPFactors& f, const std::string& dir, std::uint64_t seed, const std::string& method) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream h(fs::path(dir) / "factors.header");
    const auto d = f.dims();
    h << "dims " << d[0] << " " << d[1] << " " << d[2] << "\n"
      << "rank " << f.rank() << "\n"
      << "seed " << seed << "\n"
      << "method " << method << "\n";
    if (!h) throw Error("cannot write " + (fs::path(dir) / "factors.header").string());
  }
  const std::array<std::pair<const char*, const BoolMatrix*>, 3> files{{{"A.coo", &f.A}, {"B.coo", &f.B}, {"C.coo", &f.C}}};
  for (const auto& [name, m] : files) {
    std::ofstream out(fs::path(dir) / name);
    for (const auto& c : m->nonzeros()) out << c.row << " " << c.col << "\n";
    if (!out) throw Error("cannot write " + (fs::path(dir) / name).string());
  }
}

CPFactors import_factors(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream h(fs::path(dir) / "factors.header");
  if (!h) throw Error("cannot read " + (fs::path(dir) / "factors.header").string());
  std::array<Index, 3> dims{};
  Index rank = 0;
  bool have_dims = false, have_rank = false;
  std::string line;
  while (std::getline(h, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "dims") have_dims = static_cast<bool>(ls >> dims[0] >> dims[1] >> dims[2]);
    if (key == "rank") have_rank = static_cast<bool>(ls >> rank);
  }
  if (!have_dims || !have_rank) throw Error("factors.header lacks dims or rank");
  auto read = [&](const char* name, Index rows) {
    std::ifstream in(fs::path(dir) / name);
    if (!in) throw Error("cannot read " + (fs::path(dir) / name).string());
    std::vector<Coord2> nz;
    Index r, c;
    while (in >> r >> c) nz.push_back({r, c});
    if (!in.eof()) throw Error(std::string("malformed coordinate in ") + name);
    return BoolMatrix(rows, rank, std::move(nz));
  };
  return {read("A.coo", dims[0]), read("B.coo", dims[1]), read("C.coo", dims[2])};
}

}  // namespace tensorql
