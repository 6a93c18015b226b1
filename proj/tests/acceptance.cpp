// Acceptance suite: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include "oracle.hpp"
#include "query_cases.hpp"
#include "tensorql/cardinality.hpp"
#include "tensorql/cp_decomp.hpp"

using namespace tensorql;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

BoolMatrix random_matrix(std::mt19937_64& rng, Index rows, Index cols, double p) {
  std::bernoulli_distribution bit(p);
  std::vector<Coord2> nz;
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      if (bit(rng)) nz.push_back({r, c});
    }
  }
  return BoolMatrix(rows, cols, std::move(nz));
}

BoolVector random_vector(std::mt19937_64& rng, Index n, double p) {
  std::bernoulli_distribution bit(p);
  std::vector<Index> nz;
  for (Index i = 0; i < n; ++i) {
    if (bit(rng)) nz.push_back(i);
  }
  return BoolVector(n, std::move(nz));
}

BoolTensor3 random_tensor(std::mt19937_64& rng, std::array<Index, 3> d, double p) {
  std::bernoulli_distribution bit(p);
  std::vector<Coord3> nz;
  for (Index i = 0; i < d[0]; ++i) {
    for (Index j = 0; j < d[1]; ++j) {
      for (Index k = 0; k < d[2]; ++k) {
        if (bit(rng)) nz.push_back({i, j, k});
      }
    }
  }
  return BoolTensor3(d, std::move(nz));
}

MarginalVector column_marginal(const BoolMatrix& m) { return MarginalVector::from_dense(m.column_sums()); }

// A matrix whose column c holds sums[c] ones.
BoolMatrix with_column_sums(const std::vector<Index>& sums, Index rows) {
  std::vector<Coord2> nz;
  for (Index c = 0; c < sums.size(); ++c) {
    for (Index r = 0; r < sums[c]; ++r) nz.push_back({r, c});
  }
  return BoolMatrix(rows, sums.size(), std::move(nz));
}

int failures = 0;

void report(int id, const char* title, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", id, title, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

// ------------------------------------------------------------ 1

void oracle_equivalence() {
  const auto t0 = Clock::now();
  const int per_case = 25;
  int instances = 0, mismatches = 0;
  std::string first_bad;
  for (auto c : oracle::kAllCases) {
    oracle::Generator gen(0xacce97 + static_cast<int>(c));
    for (int t = 0; t < per_case; ++t) {
      oracle::Store store;
      GraphSet graphs;
      for (const char* alias : {"g", "g2"}) {
        auto ts = gen.triples(alias[1] ? 16 : 28);
        graphs.add(alias, std::make_shared<const Graph>(oracle::build_graph(ts)));
        store.graphs.emplace_back(alias, std::move(ts));
      }
      const std::string text = oracle::make_query(c, gen);
      const Query q = parse_query(text);
      ++instances;
      if (oracle::actual(q, graphs) != oracle::expected(q, store)) {
        ++mismatches;
        if (first_bad.empty()) first_bad = text;
      }
    }
  }
  const double secs = seconds_since(t0);
  std::string detail = std::to_string(instances) + " instances over " + std::to_string(oracle::kAllCases.size()) +
                       " query families, " + std::to_string(mismatches) + " mismatches, " + std::to_string(secs) + " s";
  if (!first_bad.empty()) detail += ", first: " + first_bad;
  report(1, "oracle equivalence", mismatches == 0 && instances >= 500 && secs < 60, detail);
}

// ------------------------------------------------------------ 2, 3

struct KrPair {
  BoolMatrix a, b;
};

std::vector<KrPair> kr_pairs() {
  std::mt19937_64 rng(2024);
  std::vector<KrPair> out;
  for (int t = 0; t < 200; ++t) {
    const Index k = 1 + rng() % 6;
    const double p = 0.1 + 0.8 * std::uniform_real_distribution<>(0, 1)(rng);
    out.push_back({random_matrix(rng, 1 + rng() % 8, k, p), random_matrix(rng, 1 + rng() % 8, k, p)});
  }
  return out;
}

void prop1_exactness(const std::vector<KrPair>& pairs) {
  int bad = 0;
  for (const auto& [a, b] : pairs) {
    const double est = exact_kr_nnz(column_marginal(a), column_marginal(b)).value;
    if (est != static_cast<double>(khatri_rao(a, b).nnz())) ++bad;
  }
  report(2, "Khatri-Rao nnz from marginals is exact", bad == 0,
         std::to_string(pairs.size()) + " pairs, " + std::to_string(bad) + " mismatches");
}

void prop2_cosine(const std::vector<KrPair>& pairs) {
  int below = 0;
  for (const auto& [a, b] : pairs) {
    const auto sa = column_marginal(a), sb = column_marginal(b);
    if (kr_upper_cosine(sa, sb).value < exact_kr_nnz(sa, sb).value) ++below;
  }
  std::mt19937_64 rng(7);
  int unequal = 0;
  const int parallel = 50;
  for (int t = 0; t < parallel; ++t) {
    const Index k = 1 + rng() % 6, scale = 1 + rng() % 3;
    std::vector<Index> x(k), y(k);
    for (Index i = 0; i < k; ++i) {
      x[i] = rng() % 4;
      y[i] = scale * x[i];
    }
    const BoolMatrix a = with_column_sums(x, 4), b = with_column_sums(y, 12);
    const auto sa = column_marginal(a), sb = column_marginal(b);
    if (kr_upper_cosine(sa, sb).value != static_cast<double>(khatri_rao(a, b).nnz())) ++unequal;
  }
  report(3, "cosine upper bound", below == 0 && unequal == 0,
         std::to_string(pairs.size()) + " random pairs, " + std::to_string(below) + " below exact; " +
             std::to_string(parallel) + " parallel pairs, " + std::to_string(unequal) + " not tight");
}

// ------------------------------------------------------------ 4

void prop3_bounds() {
  std::mt19937_64 rng(33);
  int outside = 0;
  for (int t = 0; t < 200; ++t) {
    const Index k = 1 + rng() % 6;
    const double p = 0.05 + 0.6 * std::uniform_real_distribution<>(0, 1)(rng);
    const BoolMatrix a = random_matrix(rng, 1 + rng() % 8, k, p), b = random_matrix(rng, 1 + rng() % 8, k, p);
    const double actual = static_cast<double>(boolean_matmul(a, transpose(b)).nnz());
    const auto [lo, hi] = bool_product_bounds(column_marginal(a), column_marginal(b));
    if (!(lo.value <= actual && actual <= hi.value)) ++outside;
  }
  report(4, "Boolean product bounds sandwich the distinct result", outside == 0,
         "200 pairs, " + std::to_string(outside) + " outside [lower, upper]");
}

// ------------------------------------------------------------ 5

struct MonteCarlo {
  double mean = 0, stderr_ = 0;
};

// nnz of A (m x k) times B (k x n) with A column i ~ pA[i], B row i ~ pB[i].
MonteCarlo simulate(std::mt19937_64& rng, Index m, Index n, const std::vector<double>& pA,
                    const std::vector<double>& pB, int trials) {
  const Index k = pA.size();
  double sum = 0, sum_sq = 0;
  for (int t = 0; t < trials; ++t) {
    std::vector<Coord2> an, bn;
    for (Index i = 0; i < k; ++i) {
      std::bernoulli_distribution ba(pA[i]), bb(pB[i]);
      for (Index r = 0; r < m; ++r) {
        if (ba(rng)) an.push_back({r, i});
      }
      for (Index c = 0; c < n; ++c) {
        if (bb(rng)) bn.push_back({i, c});
      }
    }
    const double x = static_cast<double>(
        boolean_matmul(BoolMatrix(m, k, std::move(an)), BoolMatrix(k, n, std::move(bn))).nnz());
    sum += x;
    sum_sq += x * x;
  }
  MonteCarlo mc;
  mc.mean = sum / trials;
  const double var = std::max(0.0, (sum_sq - trials * mc.mean * mc.mean) / (trials - 1));
  mc.stderr_ = std::sqrt(var / trials);
  return mc;
}

void props45_expectations() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(45);
  std::uniform_real_distribution<> unit(0.05, 0.95);
  const int trials = 10000;
  int outside = 0, inconsistent = 0;
  double worst = 0;
  for (int setting = 0; setting < 20; ++setting) {
    const Index m = 2 + rng() % 7, n = 2 + rng() % 7, k = 1 + rng() % 6;
    std::vector<double> pA(k), pB(k);
    double expected;
    if (setting < 10) {
      const double a = unit(rng), b = unit(rng);
      std::fill(pA.begin(), pA.end(), a);
      std::fill(pB.begin(), pB.end(), b);
      const double uniform = expected_density_uniform(a, b, k);
      const double rank1 = expected_density_rank1(pA, pB);
      if (std::abs(uniform - rank1) > 1e-12 * std::max(uniform, 1e-300)) ++inconsistent;
      expected = static_cast<double>(m * n) * uniform;
    } else {
      for (auto& p : pA) p = unit(rng);
      for (auto& p : pB) p = unit(rng);
      expected = static_cast<double>(m * n) * expected_density_rank1(pA, pB);
    }
    const MonteCarlo mc = simulate(rng, m, n, pA, pB, trials);
    const double z = mc.stderr_ > 0 ? std::abs(expected - mc.mean) / mc.stderr_ : (expected == mc.mean ? 0 : 1e9);
    worst = std::max(worst, z);
    if (z > 3) ++outside;
  }
  const double secs = seconds_since(t0);
  report(5, "expected product density vs Monte Carlo", outside == 0 && inconsistent == 0 && secs < 300,
         "20 settings x 10^4 trials, " + std::to_string(outside) + " beyond 3 SE (max " + std::to_string(worst) +
             " SE), " + std::to_string(inconsistent) + " constant-density disagreements, " + std::to_string(secs) +
             " s");
}

// ------------------------------------------------------------ 6

void distinct_chain() {
  std::mt19937_64 rng(46);
  int bad = 0;
  for (int t = 0; t < 100; ++t) {
    const double p = std::uniform_real_distribution<>(0.1, 0.7)(rng);
    const BoolMatrix T = random_matrix(rng, 5, 4, p), U = random_matrix(rng, 5, 4, p);
    // OR over the columns of the Khatri-Rao product, one entry per (a, c).
    const BoolVector or_cols = khatri_rao(T, U).row_support();
    const BoolVector vec_prod = vectorize(boolean_matmul(T, transpose(U)), VecOrder::RowMajor);
    bool direct_ok = true;
    for (Index a = 0; a < 5; ++a) {
      for (Index c = 0; c < 5; ++c) {
        bool any = false;
        for (Index b = 0; b < 4; ++b) any = any || (T.test(a, b) && U.test(c, b));
        direct_ok = direct_ok && any == or_cols.test(a * 5 + c);
      }
    }
    if (!(or_cols == vec_prod) || !direct_ok) ++bad;
  }
  report(6, "OR of Khatri-Rao columns equals vectorized Boolean product", bad == 0,
         "100 slice pairs 5x4/5x4, " + std::to_string(bad) + " mismatches");
}

// ------------------------------------------------------------ 7, 8, 9

struct CpSuite {
  std::vector<std::pair<CPFactors, BoolTensor3>> exact;  // every exact decomposition produced
};

void cp_naive(CpSuite& suite) {
  std::mt19937_64 rng(47);
  int inexact = 0, wrong_rank = 0, identity_fail = 0, over = 0;
  for (int t = 0; t < 100; ++t) {
    const std::array<Index, 3> d{1 + rng() % 5, 1 + rng() % 5, 1 + rng() % 5};
    const BoolTensor3 T = random_tensor(rng, d, std::uniform_real_distribution<>(0.0, 0.8)(rng));
    const CPFactors f = naive_decomposition(T);
    if (reconstruct(f) != T) ++inexact;
    if (f.rank() != std::min({d[1] * d[2], d[0] * d[2], d[0] * d[1]})) ++wrong_rank;
    const auto ids = unfold_identity_check(f, T);
    if (!(ids[0] && ids[1] && ids[2])) ++identity_fail;
    if (f.nnz() > 3 * T.nnz()) ++over;
    suite.exact.emplace_back(f, T);
  }
  report(7, "naive decomposition is exact", inexact == 0 && wrong_rank == 0 && identity_fail == 0,
         "100 tensors up to 5x5x5, " + std::to_string(inexact) + " inexact, " + std::to_string(wrong_rank) +
             " wrong rank, " + std::to_string(identity_fail) + " unfolding identity failures");
  report(8, "factor nonzeros at most 3|T|", over == 0,
         "100 naive decompositions, " + std::to_string(over) + " violations");
}

void planted_recovery(CpSuite& suite) {
  const Index r = 4;
  int full = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    std::mt19937_64 rng(seed * 7919);
    std::vector<Coord2> a, b, c;
    for (Index comp = 0; comp < r; ++comp) {
      for (const auto& [dst, v] : {std::pair{&a, random_vector(rng, 8, 0.25)},
                                   std::pair{&b, random_vector(rng, 8, 0.25)},
                                   std::pair{&c, random_vector(rng, 8, 0.25)}}) {
        for (Index i : v.nonzeros()) dst->push_back({i, comp});
      }
    }
    const BoolTensor3 T = reconstruct(CPFactors(BoolMatrix(8, r, a), BoolMatrix(8, r, b), BoolMatrix(8, r, c)));
    GreedyOptions opts;
    opts.seed = seed;
    const GreedyResult g = greedy_cp(T, r, opts);
    if (g.report.exact) {
      ++full;
      suite.exact.emplace_back(g.factors, T);
    }
  }
  report(10, "greedy recovers planted rank-4 tensors", full >= 90,
         std::to_string(full) + "/100 seeds fully covered (8x8x8, density 0.25)");
}

void prop8_lemma1(const CpSuite& suite) {
  std::mt19937_64 rng(49);
  int violations = 0, lemma_fail = 0, rank1 = 0;
  auto check_rank1 = [&](const CPFactors& f, const BoolTensor3& T) {
    if (f.rank() != 1) return;
    ++rank1;
    const DecompReport rep = verify_sparsity(f, T);
    if (std::abs((1 - rep.sT) - (1 - rep.sA) * (1 - rep.sB) * (1 - rep.sC)) > 1e-12) ++lemma_fail;
    if (T.nnz() != f.A.nnz() * f.B.nnz() * f.C.nnz()) ++lemma_fail;
  };
  for (const auto& [f, T] : suite.exact) {
    const CPFactors red = reduce_to_irreducible(f, T);
    const DecompReport rep = verify_sparsity(red, T);
    if (!rep.exact || !rep.irreducible || !rep.sparsity_bound) ++violations;
    check_rank1(red, T);
  }
  for (int t = 0; t < 100; ++t) {
    const std::array<Index, 3> d{1 + rng() % 6, 1 + rng() % 6, 1 + rng() % 6};
    BoolVector a = random_vector(rng, d[0], 0.5), b = random_vector(rng, d[1], 0.5), c = random_vector(rng, d[2], 0.5);
    const CPFactors f(BoolMatrix::column(a), BoolMatrix::column(b), BoolMatrix::column(c));
    const BoolTensor3 T = reconstruct(f);
    if (T.empty()) continue;
    const CPFactors red = reduce_to_irreducible(f, T);
    if (!verify_sparsity(red, T).sparsity_bound) ++violations;
    check_rank1(red, T);
  }
  report(9, "irreducible sparsity bound and rank-1 identity", violations == 0 && lemma_fail == 0,
         std::to_string(suite.exact.size()) + " exact decompositions reduced plus random rank-1, " +
             std::to_string(violations) + " violations; " + std::to_string(rank1) + " rank-1 instances, " +
             std::to_string(lemma_fail) + " identity failures");
}

// ------------------------------------------------------------ 11

void kmv_accuracy() {
  const std::size_t k = 256;
  const double tol = 3.0 / std::sqrt(static_cast<double>(k - 2));
  const std::uint64_t n = 100000;
  int within = 0;
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    KmvSketch s(k, seed * 0x9e3779b97f4a7c15ULL);
    for (std::uint64_t i = 0; i < n; ++i) s.add(seed * 1000003 + i * 7);
    const double rel = std::abs(s.estimate() - static_cast<double>(n)) / static_cast<double>(n);
    worst = std::max(worst, rel);
    if (rel <= tol) ++within;
  }
  report(11, "KMV sketch relative error", within >= 99,
         std::to_string(within) + "/100 seeds within " + std::to_string(tol) + " (k=256, 10^5 distinct; worst " +
             std::to_string(worst) + ")");
}

// ------------------------------------------------------------ 12

void marginal_feasibility() {
  oracle::Generator gen(12);
  int violations = 0, checks = 0;
  for (int seq = 0; seq < 50; ++seq) {
    Graph g;
    std::vector<TermTriple> present;
    for (int op = 0; op < 300; ++op) {
      if (!present.empty() && gen.coin(0.45)) {
        const std::size_t i = gen.below(present.size());
        g.remove_triple(present[i]);
        present.erase(present.begin() + static_cast<std::ptrdiff_t>(i));
      } else {
        TermTriple t{gen.subject(), gen.predicate(), gen.object()};
        if (g.add_triple(t)) present.push_back(t);
      }
      const auto& st = g.stats();
      const std::size_t nnz = g.size();
      const bool ok = st.by_subject.nnz() + st.by_predicate.nnz() + st.by_object.nnz() <= 3 * nnz &&
                      st.by_subject.total() == nnz && st.by_predicate.total() == nnz &&
                      st.by_object.total() == nnz;
      ++checks;
      if (!ok) ++violations;
    }
    const MarginalStats fresh = marginals(g.tensor());
    if (fresh.by_subject.cells() != g.stats().by_subject.cells() ||
        fresh.by_predicate.cells() != g.stats().by_predicate.cells() ||
        fresh.by_object.cells() != g.stats().by_object.cells()) {
      ++violations;
    }
  }
  report(12, "marginal matrices stay within 3 nnz(T) and sum to nnz(T)", violations == 0,
         std::to_string(checks) + " states over 50 add/remove sequences, " + std::to_string(violations) +
             " violations");
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  oracle_equivalence();
  const auto pairs = kr_pairs();
  prop1_exactness(pairs);
  prop2_cosine(pairs);
  prop3_bounds();
  props45_expectations();
  distinct_chain();
  CpSuite suite;
  cp_naive(suite);
  planted_recovery(suite);
  prop8_lemma1(suite);
  kmv_accuracy();
  marginal_feasibility();
  std::printf("%d of 12 criteria failed, %.1f s total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
