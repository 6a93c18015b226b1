#include "tensorql/cardinality.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tensorql {

// ---------------------------------------------------------------- MarginalVector

MarginalVector MarginalVector::from_dense(std::span<const Index> counts) {
  std::vector<std::pair<Index, std::uint64_t>> e;
  for (Index i = 0; i < counts.size(); ++i) {
    if (counts[i] != 0) e.emplace_back(i, counts[i]);
  }
  return from_sparse(counts.size(), std::move(e));
}

MarginalVector MarginalVector::from_sparse(Index length, std::vector<std::pair<Index, std::uint64_t>> entries) {
  MarginalVector v(length);
  std::erase_if(entries, [](const auto& e) { return e.second == 0; });
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].first >= length) throw IndexOutOfRange("marginal index out of range");
    if (i && entries[i].first <= entries[i - 1].first) throw Error("marginal indices must increase");
    v.sum_sq_ += entries[i].second * entries[i].second;
    v.total_ += entries[i].second;
  }
  v.entries_ = std::move(entries);
  return v;
}

std::uint64_t MarginalVector::at(Index i) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), std::pair<Index, std::uint64_t>{i, 0});
  return it != entries_.end() && it->first == i ? it->second : 0;
}

double MarginalVector::norm() const { return std::sqrt(static_cast<double>(sum_sq_)); }

MarginalVector MarginalVector::remapped(Index new_length, std::span<const Index> map) const {
  std::vector<std::pair<Index, std::uint64_t>> e;
  e.reserve(entries_.size());
  for (const auto& [i, n] : entries_) e.emplace_back(map[i], n);
  std::sort(e.begin(), e.end());
  return from_sparse(new_length, std::move(e));
}

std::string_view to_string(EstimateKind k) {
  switch (k) {
    case EstimateKind::Exact: return "exact";
    case EstimateKind::UpperBound: return "upper";
    case EstimateKind::LowerBound: return "lower";
    case EstimateKind::Expectation: return "expected";
  }
  return "?";
}

// ---------------------------------------------------------------- estimators

namespace {

void require_same_length(const MarginalVector& a, const MarginalVector& b) {
  if (a.length() != b.length()) {
    throw ShapeError("marginal vectors differ in length: " + std::to_string(a.length()) + " vs " +
                     std::to_string(b.length()));
  }
}

unsigned __int128 isqrt(unsigned __int128 n) {
  if (n == 0) return 0;
  auto x = static_cast<unsigned __int128>(std::sqrt(static_cast<long double>(n)));
  while (x * x > n) --x;
  while ((x + 1) * (x + 1) <= n) ++x;
  return x;
}

void check_probability(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("probability out of range: " + std::to_string(p));
}

}  // namespace

CardEstimate exact_kr_nnz(const MarginalVector& a, const MarginalVector& b) {
  require_same_length(a, b);
  CardEstimate out{EstimateKind::Exact, 0, 0, "khatri-rao nnz"};
  unsigned __int128 sum = 0;
  auto ia = a.entries().begin(), ib = b.entries().begin();
  while (ia != a.entries().end() && ib != b.entries().end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      sum += static_cast<unsigned __int128>(ia->second) * ib->second;
      ++out.cost;
      ++ia;
      ++ib;
    }
  }
  out.value = static_cast<double>(sum);
  return out;
}

CardEstimate kr_upper_cosine(const MarginalVector& a, const MarginalVector& b) {
  require_same_length(a, b);
  const unsigned __int128 prod = static_cast<unsigned __int128>(a.sum_squares()) * b.sum_squares();
  unsigned __int128 r = isqrt(prod);
  if (r * r < prod) ++r;
  return {EstimateKind::UpperBound, static_cast<double>(r), 2, "cosine bound"};
}

std::pair<CardEstimate, CardEstimate> bool_product_bounds(const MarginalVector& a, const MarginalVector& b) {
  require_same_length(a, b);
  CardEstimate upper = exact_kr_nnz(a, b);
  upper.kind = EstimateKind::UpperBound;
  upper.label = "sum bound";
  CardEstimate lower{EstimateKind::LowerBound, 0, upper.cost, "max bound"};
  auto ia = a.entries().begin(), ib = b.entries().begin();
  while (ia != a.entries().end() && ib != b.entries().end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      lower.value = std::max(lower.value, static_cast<double>(ia->second) * static_cast<double>(ib->second));
      ++ia;
      ++ib;
    }
  }
  return {lower, upper};
}

double expected_density_uniform(double pA, double pB, std::uint64_t k) {
  check_probability(pA);
  check_probability(pB);
  return 1.0 - std::pow(1.0 - pA * pB, static_cast<double>(k));
}

double expected_density_rank1(std::span<const double> pA, std::span<const double> pB, Rank1Form form) {
  if (pA.size() != pB.size()) throw ShapeError("density lists differ in length");
  double prod = 1.0;
  for (std::size_t i = 0; i < pA.size(); ++i) {
    check_probability(pA[i]);
    check_probability(pB[i]);
    prod *= form == Rank1Form::Complement ? 1.0 - pA[i] * pB[i] : pA[i] * pB[i];
  }
  return 1.0 - prod;
}

// ---------------------------------------------------------------- KMV

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t hash64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h ^ seed);
}

std::uint64_t hash64(std::uint64_t key, std::uint64_t seed) { return splitmix64(splitmix64(key) ^ seed); }

KmvSketch::KmvSketch(std::size_t k, std::uint64_t seed) : k_(k), seed_(seed) {
  if (k < 2) throw std::invalid_argument("sketch size must be at least 2");
  minima_.reserve(k + 1);
}

void KmvSketch::add_hash(std::uint64_t h) {
  if (minima_.size() == k_ && h >= minima_.back()) return;
  auto it = std::lower_bound(minima_.begin(), minima_.end(), h);
  if (it != minima_.end() && *it == h) return;
  minima_.insert(it, h);
  if (minima_.size() > k_) minima_.pop_back();
}

void KmvSketch::merge(const KmvSketch& other) {
  if (other.k_ != k_ || other.seed_ != seed_) throw std::invalid_argument("incompatible sketches");
  for (auto h : other.minima_) add_hash(h);
}

double KmvSketch::estimate() const {
  if (minima_.size() < k_) return static_cast<double>(minima_.size());
  const long double kth = static_cast<long double>(minima_.back()) + 1.0L;
  return static_cast<double>(static_cast<long double>(k_ - 1) * 18446744073709551616.0L / kth);
}

double kmv_distinct(std::span<const std::uint64_t> hashes, std::size_t k) {
  KmvSketch s(k);
  for (auto h : hashes) s.add_hash(h);
  return s.estimate();
}

// ---------------------------------------------------------------- plan steps

const CardEstimate* EstimateBundle::find(EstimateKind k) const {
  for (const auto& e : estimates) {
    if (e.kind == k) return &e;
  }
  return nullptr;
}

namespace {

std::optional<Index> lookup(const Graph& g, std::size_t mode, const std::string& text) {
  return g.dictionary(axis_from_index(mode)).find(text, g.blank_scope());
}

bool has_repeat(const TriplePattern& tp) {
  std::size_t slots = 0;
  for (const auto& s : tp.slots) slots += s.is_var ? 1 : 0;
  return slots != tp.vars().size();
}

MarginalVector from_map(Index length, const std::map<Index, Index>& m) {
  std::vector<std::pair<Index, std::uint64_t>> e(m.begin(), m.end());
  return MarginalVector::from_sparse(length, std::move(e));
}

std::uint64_t scan_size(const TriplePattern& tp, const Graph& g) {
  const auto vars = tp.vars();
  if (!vars.empty()) {
    if (auto m = scan_marginal(tp, g, vars[0])) return m->total();
  }
  return eval_pattern(tp, g).nnz();
}

struct Side {
  MarginalVector sigma;
  std::shared_ptr<const Dictionary> dict;
};

std::optional<Side> side_for(const GraphTriple& t, const GraphSet& graphs, const std::string& var) {
  const Graph& g = graphs.resolve(t.graph);
  auto m = scan_marginal(t.pattern, g, var);
  if (!m) return std::nullopt;
  for (std::size_t mode = 0; mode < 3; ++mode) {
    if (t.pattern[mode].is_var && t.pattern[mode].text == var) {
      return Side{std::move(*m), g.dictionary_handle(axis_from_index(mode))};
    }
  }
  return std::nullopt;
}

void align_sides(Side& a, Side& b) {
  if (a.dict == b.dict) return;
  DictionaryUnion u = unite(*a.dict, *b.dict);
  a.sigma = a.sigma.remapped(u.dict->size(), u.left_map);
  b.sigma = b.sigma.remapped(u.dict->size(), u.right_map);
  a.dict = b.dict = u.dict;
}

Index free_dim(const GraphTriple& t, const GraphSet& graphs, const std::string& shared) {
  for (std::size_t mode = 0; mode < 3; ++mode) {
    if (t.pattern[mode].is_var && t.pattern[mode].text != shared) {
      return graphs.resolve(t.graph).dictionary(axis_from_index(mode)).size();
    }
  }
  return 1;
}

}  // namespace

std::optional<MarginalVector> scan_marginal(const TriplePattern& tp, const Graph& g, const std::string& var) {
  if (has_repeat(tp)) return std::nullopt;
  std::size_t m = 3;
  std::vector<std::size_t> fixed, others;
  for (std::size_t mode = 0; mode < 3; ++mode) {
    if (!tp[mode].is_var) {
      fixed.push_back(mode);
    } else if (tp[mode].text == var) {
      m = mode;
    } else {
      others.push_back(mode);
    }
  }
  if (m == 3) return std::nullopt;
  const Index len = g.dictionary(axis_from_index(m)).size();
  const auto& stats = g.stats();
  switch (fixed.size()) {
    case 2: {
      const auto a = lookup(g, fixed[0], tp[fixed[0]].text);
      const auto b = lookup(g, fixed[1], tp[fixed[1]].text);
      if (!a || !b) return MarginalVector(len);
      const BoolVector f = fibre(g.tensor(), {axis_from_index(fixed[0]), *a}, {axis_from_index(fixed[1]), *b});
      std::vector<std::pair<Index, std::uint64_t>> e;
      for (Index i : f.nonzeros()) e.emplace_back(i, 1);
      return MarginalVector::from_sparse(len, std::move(e));
    }
    case 1: {
      const std::size_t f = fixed[0];
      const auto x = lookup(g, f, tp[f].text);
      if (!x) return MarginalVector(len);
      const CountMatrix& cm = stats.summed_over(axis_from_index(others[0]));
      return from_map(len, f < m ? cm.row(*x) : cm.col(*x));
    }
    default: {
      // Sum out one of the other modes, then add up the remaining one.
      const std::size_t s = others[0];
      const std::size_t rest = others[1];
      const CountMatrix& cm = stats.summed_over(axis_from_index(s));
      std::vector<std::pair<Index, std::uint64_t>> e;
      for (Index i = 0; i < len; ++i) {
        const auto& line = m < rest ? cm.row(i) : cm.col(i);
        std::uint64_t n = 0;
        for (const auto& [_, c] : line) n += c;
        if (n) e.emplace_back(i, n);
      }
      return MarginalVector::from_sparse(len, std::move(e));
    }
  }
}

EstimateBundle estimate_join(const JoinPlan& plan, std::size_t step, const GraphSet& graphs) {
  EstimateBundle out;
  const PlanStep& s = plan.steps.at(step);
  auto scan_of = [&](std::size_t i) -> const PlanStep* {
    const PlanStep& p = plan.steps.at(i);
    return p.op == PlanStep::Op::Scan ? &p : nullptr;
  };
  switch (s.op) {
    case PlanStep::Op::Scan: {
      const Graph& g = graphs.resolve(s.triple.graph);
      out.supported = true;
      out.estimates.push_back({EstimateKind::Exact, static_cast<double>(scan_size(s.triple.pattern, g)), 0, "scan nnz"});
      return out;
    }
    case PlanStep::Op::Join: {
      const PlanStep* l = scan_of(s.inputs[0]);
      const PlanStep* r = scan_of(s.inputs[1]);
      if (!l || !r) {
        out.note = "operand is not a single pattern";
        return out;
      }
      if (has_repeat(l->triple.pattern) || has_repeat(r->triple.pattern)) {
        out.note = "repeated variable in pattern";
        return out;
      }
      std::vector<std::string> shared;
      for (const auto& v : l->vars) {
        if (std::find(r->vars.begin(), r->vars.end(), v) != r->vars.end()) shared.push_back(v);
      }
      if (shared.empty()) {
        const double a = static_cast<double>(scan_size(l->triple.pattern, graphs.resolve(l->triple.graph)));
        const double b = static_cast<double>(scan_size(r->triple.pattern, graphs.resolve(r->triple.graph)));
        out.supported = true;
        out.estimates.push_back({EstimateKind::Exact, a * b, 2, "kronecker nnz"});
        return out;
      }
      if (shared.size() != 1) {
        out.note = "more than one shared variable";
        return out;
      }
      auto a = side_for(l->triple, graphs, shared[0]);
      auto b = side_for(r->triple, graphs, shared[0]);
      if (!a || !b) {
        out.note = "no marginal for ?" + shared[0];
        return out;
      }
      align_sides(*a, *b);
      out.supported = true;
      out.estimates.push_back(exact_kr_nnz(a->sigma, b->sigma));
      out.estimates.push_back(kr_upper_cosine(a->sigma, b->sigma));
      return out;
    }
    case PlanStep::Op::DistinctBound:
    case PlanStep::Op::DistinctMask:
    case PlanStep::Op::DistinctProduct: {
      const std::string& b = s.join_case.shared.at(0);
      auto sa = side_for(s.triple, graphs, b);
      auto sb = side_for(s.second, graphs, b);
      if (!sa || !sb) {
        out.note = "no marginal for ?" + b;
        return out;
      }
      align_sides(*sa, *sb);
      out.supported = true;
      const auto& ea = sa->sigma.entries();
      const auto& eb = sb->sigma.entries();
      if (s.op == PlanStep::Op::DistinctBound) {
        // Size of the intersection of the two supports.
        std::uint64_t n = 0;
        auto ia = ea.begin(), ib = eb.begin();
        while (ia != ea.end() && ib != eb.end()) {
          if (ia->first < ib->first) {
            ++ia;
          } else if (ib->first < ia->first) {
            ++ib;
          } else {
            ++n, ++ia, ++ib;
          }
        }
        out.estimates.push_back({EstimateKind::Exact, static_cast<double>(n), ea.size() + eb.size(), "support intersection"});
        return out;
      }
      if (s.op == PlanStep::Op::DistinctMask) {
        const std::string free = s.projection[0] == b ? s.projection[1] : s.projection[0];
        const auto& lv = s.triple.pattern.vars();
        const bool left_free = std::find(lv.begin(), lv.end(), free) != lv.end();
        const auto& keep = left_free ? sa->sigma : sb->sigma;
        const auto& mask = left_free ? sb->sigma : sa->sigma;
        std::uint64_t n = 0;
        for (const auto& [i, c] : keep.entries()) {
          if (mask.at(i)) n += c;
        }
        out.estimates.push_back({EstimateKind::Exact, static_cast<double>(n), ea.size() + eb.size(), "masked column sum"});
        return out;
      }
      auto [lo, hi] = bool_product_bounds(sa->sigma, sb->sigma);
      out.estimates.push_back(lo);
      out.estimates.push_back(hi);
      const double m = static_cast<double>(free_dim(s.triple, graphs, b));
      const double n = static_cast<double>(free_dim(s.second, graphs, b));
      const Index k = sa->sigma.length();
      if (m > 0 && n > 0 && k > 0) {
        const double pa = static_cast<double>(sa->sigma.total()) / (m * static_cast<double>(k));
        const double pb = static_cast<double>(sb->sigma.total()) / (n * static_cast<double>(k));
        out.estimates.push_back({EstimateKind::Expectation, m * n * expected_density_uniform(pa, pb, k), 2, "uniform"});
        std::vector<double> da(k, 0.0), db(k, 0.0);
        for (const auto& [i, c] : ea) da[i] = static_cast<double>(c) / m;
        for (const auto& [i, c] : eb) db[i] = static_cast<double>(c) / n;
        out.estimates.push_back(
            {EstimateKind::Expectation, m * n * expected_density_rank1(da, db), ea.size() + eb.size(), "rank-1"});
      }
      return out;
    }
    default:
      out.note = "no estimator for " + s.label();
      return out;
  }
}

}  // namespace tensorql
