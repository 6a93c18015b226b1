#pragma once

// Join size estimation from marginal count vectors, plus a k-minimum-values
// sketch for distinct counts.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tensorql/query_engine.hpp"

namespace tensorql {

// Sparse count vector. sum_squares is exact; norm() is derived from it.
class MarginalVector {
 public:
  MarginalVector() = default;
  explicit MarginalVector(Index length) : length_(length) {}
  static MarginalVector from_dense(std::span<const Index> counts);
  // `entries` must have strictly increasing indices; zero counts are dropped.
  static MarginalVector from_sparse(Index length, std::vector<std::pair<Index, std::uint64_t>> entries);

  Index length() const { return length_; }
  const std::vector<std::pair<Index, std::uint64_t>>& entries() const { return entries_; }
  std::uint64_t at(Index i) const;
  std::uint64_t sum_squares() const { return sum_sq_; }
  std::uint64_t total() const { return total_; }
  double norm() const;
  std::size_t support() const { return entries_.size(); }

  // Re-index into a larger space; map[i] is the new index of i.
  MarginalVector remapped(Index new_length, std::span<const Index> map) const;

 private:
  Index length_ = 0;
  std::vector<std::pair<Index, std::uint64_t>> entries_;
  std::uint64_t sum_sq_ = 0;
  std::uint64_t total_ = 0;
};

enum class EstimateKind { Exact, UpperBound, LowerBound, Expectation };

std::string_view to_string(EstimateKind k);

struct CardEstimate {
  EstimateKind kind = EstimateKind::Exact;
  double value = 0;
  // Number of vector entries touched to obtain the value.
  std::uint64_t cost = 0;
  std::string label;
};

CardEstimate exact_kr_nnz(const MarginalVector& a, const MarginalVector& b);
// ||a|| * ||b||, rounded up from the exact sums of squares.
CardEstimate kr_upper_cosine(const MarginalVector& a, const MarginalVector& b);
// Bounds on the nonzeros of an OR of Khatri-Rao columns (a Boolean product).
std::pair<CardEstimate, CardEstimate> bool_product_bounds(const MarginalVector& a, const MarginalVector& b);

// Probability that a given entry of the m x n Boolean product of an m x k and
// a k x n matrix with i.i.d. densities pA, pB is nonzero. Expected nonzeros
// are m * n times this.
double expected_density_uniform(double pA, double pB, std::uint64_t k);

enum class Rank1Form {
  Complement,  // 1 - prod(1 - pA_i pB_i)
  AsPrinted,   // 1 - prod(pA_i pB_i)
};

// Per-entry fill probability when column i of A and row i of B have their own
// densities pA[i], pB[i].
double expected_density_rank1(std::span<const double> pA, std::span<const double> pB,
                              Rank1Form form = Rank1Form::Complement);

// ------------------------------------------------------------ KMV

inline constexpr std::uint64_t kDefaultHashSeed = 0x9e3779b97f4a7c15ULL;

std::uint64_t hash64(std::string_view bytes, std::uint64_t seed = kDefaultHashSeed);
std::uint64_t hash64(std::uint64_t key, std::uint64_t seed = kDefaultHashSeed);

class KmvSketch {
 public:
  explicit KmvSketch(std::size_t k, std::uint64_t seed = kDefaultHashSeed);

  void add(std::string_view item) { add_hash(hash64(item, seed_)); }
  void add(std::uint64_t item) { add_hash(hash64(item, seed_)); }
  void add_hash(std::uint64_t h);
  void merge(const KmvSketch& other);

  // Exact count below k distinct hashes, (k-1) * 2^64 / h_k otherwise.
  double estimate() const;
  bool saturated() const { return minima_.size() == k_; }
  std::size_t k() const { return k_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<std::uint64_t>& minima() const { return minima_; }

 private:
  std::size_t k_;
  std::uint64_t seed_;
  std::vector<std::uint64_t> minima_;  // ascending, distinct
};

double kmv_distinct(std::span<const std::uint64_t> hashes, std::size_t k);

// ------------------------------------------------------------ plan steps

struct EstimateBundle {
  bool supported = false;
  std::string note;
  std::vector<CardEstimate> estimates;

  const CardEstimate* find(EstimateKind k) const;
};

// Column marginal of a scan's matrix form with `var` on the columns, taken
// from the graph's marginal count matrices. Empty if the pattern repeats a
// variable or does not bind `var`.
std::optional<MarginalVector> scan_marginal(const TriplePattern& tp, const Graph& g, const std::string& var);

EstimateBundle estimate_join(const JoinPlan& plan, std::size_t step, const GraphSet& graphs);

}  // namespace tensorql
