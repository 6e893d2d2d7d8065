#pragma once

// Exact optimal transport between equally weighted, equally sized batches.

#include <Eigen/Core>
#include <cstddef>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "foldflow/se3.hpp"

namespace foldflow::ot {

inline constexpr std::size_t kDefaultBatchCap = 512;

/// c[i][j] = d(x_i, y_j)^2 / 2.
struct CostMatrix {
  Eigen::MatrixXd c;
  std::size_t size() const { return static_cast<std::size_t>(c.rows()); }
};

/// Coupling with uniform marginals 1/n. Plans from solve_exact are scaled
/// permutations and also carry the assignment row -> column.
struct TransportPlan {
  Eigen::MatrixXd p;
  std::vector<std::size_t> assignment;  // empty unless the plan is a permutation

  std::size_t size() const { return static_cast<std::size_t>(p.rows()); }
  double objective(const CostMatrix& cost) const;
  /// Largest deviation of any row or column sum from 1/n.
  double marginal_error() const;
};

CostMatrix cost_matrix(std::span<const FrameSet> src, std::span<const FrameSet> dst);
CostMatrix cost_matrix(std::span<const Rotation> src, std::span<const Rotation> dst);

/// Minimum-cost perfect matching of a square matrix (Jonker-Volgenant
/// shortest augmenting paths). Returns row -> column. Deterministic for a
/// given input.
std::vector<std::size_t> solve_assignment(const Eigen::MatrixXd& cost);

/// Exact OT plan for uniform marginals. Throws DomainError when the batch
/// exceeds `cap` or the matrix is not square and finite.
TransportPlan solve_exact(const CostMatrix& cost, std::size_t cap = kDefaultBatchCap);

/// n index pairs (src, dst). A permutation plan yields exactly its pairing
/// in source order; any other plan is sampled i.i.d. proportional to p.
std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(const TransportPlan& plan, std::mt19937_64& rng);

}  // namespace foldflow::ot
