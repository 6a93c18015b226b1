#pragma once

// Boolean CP decomposition: T = OR_i a_i (x) b_i (x) c_i.

#include <array>
#include <cstdint>
#include <string>

#include "tensorql/tensor_core.hpp"

namespace tensorql {

struct CPFactors {
  BoolMatrix A;  // n x r
  BoolMatrix B;  // m x r
  BoolMatrix C;  // l x r

  CPFactors() = default;
  CPFactors(BoolMatrix a, BoolMatrix b, BoolMatrix c);

  Index rank() const { return A.cols(); }
  std::array<Index, 3> dims() const { return {A.rows(), B.rows(), C.rows()}; }
  std::size_t nnz() const { return A.nnz() + B.nnz() + C.nnz(); }
};

struct DecompReport {
  bool exact = false;
  Index rank = 0;
  std::size_t nnz_factors = 0;
  std::size_t nnz_target = 0;
  std::size_t covered = 0;  // nonzeros of T reproduced
  std::size_t overcovered = 0;  // zeros of T set by the factors
  double sA = 1, sB = 1, sC = 1, sT = 1;
  bool irreducible = false;
  bool factor_count_bound = false;  // |A|+|B|+|C| <= 3|T|
  bool sparsity_bound = false;      // s(A)+s(B)+s(C) >= s(T)
};

BoolTensor3 reconstruct(const CPFactors& f);

// T_(1) = A o (C (.) B)^T, T_(2) = B o (C (.) A)^T, T_(3) = C o (B (.) A)^T.
std::array<bool, 3> unfold_identity_check(const CPFactors& f, const BoolTensor3& t);

// Exact decomposition of rank min{nm, nl, ml}: the unfolding with fewest
// columns is one factor, the other two are one-hot so that their Khatri-Rao
// product is the identity. Columns for empty fibres are left all-zero.
CPFactors naive_decomposition(const BoolTensor3& t);

struct GreedyOptions {
  std::uint64_t seed = 42;
  // Uncovered nonzeros tried as block seeds per round.
  std::size_t seed_candidates = 64;
  // Let blocks cover zeros of T when that covers more nonzeros than zeros.
  bool allow_overcover = false;
};

struct GreedyResult {
  CPFactors factors;
  DecompReport report;
};

// At most r rounds; each adds the rank-1 block covering the most uncovered
// nonzeros. Stops early once everything is covered.
GreedyResult greedy_cp(const BoolTensor3& t, Index r, const GreedyOptions& opts = {});

bool is_irreducible(const CPFactors& f);

// Drops components whose cells are all covered by other components until
// none is left. Requires reconstruct(f) == t.
CPFactors reduce_to_irreducible(const CPFactors& f, const BoolTensor3& t);

DecompReport verify_sparsity(const CPFactors& f, const BoolTensor3& t);

// Directory layout: factors.header ("dims n m l", "rank r", "seed s",
// "method name"), A.coo, B.coo, C.coo with one "row col" pair per line.
void export_factors(const CPFactors& f, const std::string& dir, std::uint64_t seed, const std::string& method);
CPFactors import_factors(const std::string& dir);

}  // namespace tensorql
