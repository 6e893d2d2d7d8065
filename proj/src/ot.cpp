#include "foldflow/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace foldflow::ot {

namespace {

void require_square_batches(std::size_t a, std::size_t b) {
  if (a != b)
    throw DomainError("OT batches differ in size: " + std::to_string(a) + " vs " + std::to_string(b));
  if (a == 0) throw DomainError("OT batches are empty");
}

// Returns true when every row holds exactly one positive entry, the entries
// hit distinct columns, and fills `assignment`.
bool extract_permutation(const Eigen::MatrixXd& p, std::vector<std::size_t>& assignment) {
  const auto n = static_cast<std::size_t>(p.rows());
  assignment.assign(n, 0);
  std::vector<bool> used(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t hits = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (p(i, j) > 0.0) {
        ++hits;
        assignment[i] = j;
      }
    }
    if (hits != 1 || used[assignment[i]]) return false;
    used[assignment[i]] = true;
  }
  return true;
}

}  // namespace

double TransportPlan::objective(const CostMatrix& cost) const { return (p.array() * cost.c.array()).sum(); }

double TransportPlan::marginal_error() const {
  const double target = 1.0 / static_cast<double>(p.rows());
  const double rows = (p.rowwise().sum().array() - target).abs().maxCoeff();
  const double cols = (p.colwise().sum().array() - target).abs().maxCoeff();
  return std::max(rows, cols);
}

CostMatrix cost_matrix(std::span<const FrameSet> src, std::span<const FrameSet> dst) {
  require_square_batches(src.size(), dst.size());
  for (auto batch : {src, dst})
    for (const FrameSet& f : batch) {
      if (f.size() != src.front().size()) throw DomainError("frame sets in a cost matrix must have equal size");
      if (!f.is_centered(1e-8)) throw DomainError("frame sets in a cost matrix must be centered");
    }
  const auto n = static_cast<Eigen::Index>(src.size());
  CostMatrix cost{Eigen::MatrixXd(n, n)};
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      cost.c(i, j) = 0.5 * product_distance_squared(src[static_cast<std::size_t>(i)], dst[static_cast<std::size_t>(j)]);
  return cost;
}

CostMatrix cost_matrix(std::span<const Rotation> src, std::span<const Rotation> dst) {
  require_square_batches(src.size(), dst.size());
  const auto n = static_cast<Eigen::Index>(src.size());
  CostMatrix cost{Eigen::MatrixXd(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = geodesic_distance(src[static_cast<std::size_t>(i)], dst[static_cast<std::size_t>(j)]);
      cost.c(i, j) = 0.5 * d * d;
    }
  }
  return cost;
}

// Jonker & Volgenant (1987): column reduction, reduction transfer, two
// rounds of (budgeted) augmenting row reduction, then shortest augmenting paths for the
// rows still free. Costs are read row-major for cache locality.
std::vector<std::size_t> solve_assignment(const Eigen::MatrixXd& cost_in) {
  if (cost_in.rows() != cost_in.cols()) throw DomainError("assignment cost matrix must be square");
  if (!cost_in.allFinite()) throw DomainError("assignment cost matrix has non-finite entries");
  const int n = static_cast<int>(cost_in.rows());
  if (n == 0) return {};
  if (n == 1) return {0};

  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor cost = cost_in;
  auto c = [&](int i, int j) { return cost(i, j); };
  constexpr double kBig = std::numeric_limits<double>::max();

  std::vector<int> rowsol(n, -1), colsol(n, -1), matches(n, 0), free_rows(n), collist(n), pred(n);
  std::vector<double> v(n), d(n);

  // Column reduction, scanning columns in reverse.
  for (int j = n - 1; j >= 0; --j) {
    double min = c(0, j);
    int imin = 0;
    for (int i = 1; i < n; ++i) {
      if (c(i, j) < min) {
        min = c(i, j);
        imin = i;
      }
    }
    v[j] = min;
    if (++matches[imin] == 1) {
      rowsol[imin] = j;
      colsol[j] = imin;
    } else if (v[j] < v[rowsol[imin]]) {
      const int j1 = rowsol[imin];
      rowsol[imin] = j;
      colsol[j] = imin;
      colsol[j1] = -1;
    } else {
      colsol[j] = -1;
    }
  }

  // Reduction transfer.
  int numfree = 0;
  for (int i = 0; i < n; ++i) {
    if (matches[i] == 0) {
      free_rows[numfree++] = i;
    } else if (matches[i] == 1) {
      const int j1 = rowsol[i];
      double min = kBig;
      for (int j = 0; j < n; ++j)
        if (j != j1 && c(i, j) - v[j] < min) min = c(i, j) - v[j];
      v[j1] -= min;
    }
  }

  // Augmenting row reduction. On near-tied costs the reductions shrink to
  // tiny steps and rows keep displacing each other, so each round gets a
  // budget of 4n row visits; rows left over go to the exact path phase.
  for (int round = 0; round < 2; ++round) {
    int k = 0;
    const int prvnumfree = numfree;
    numfree = 0;
    long budget = 4L * n;
    while (k < prvnumfree) {
      if (budget-- <= 0) {
        while (k < prvnumfree) free_rows[numfree++] = free_rows[k++];
        break;
      }
      const int i = free_rows[k++];
      double umin = c(i, 0) - v[0];
      int j1 = 0;
      int j2 = -1;
      double usubmin = kBig;
      for (int j = 1; j < n; ++j) {
        const double h = c(i, j) - v[j];
        if (h < usubmin) {
          if (h >= umin) {
            usubmin = h;
            j2 = j;
          } else {
            usubmin = umin;
            umin = h;
            j2 = j1;
            j1 = j;
          }
        }
      }
      int i0 = colsol[j1];
      if (umin < usubmin) {
        v[j1] -= usubmin - umin;
      } else if (i0 > -1) {
        j1 = j2;
        i0 = colsol[j2];
      }
      rowsol[i] = j1;
      colsol[j1] = i;
      if (i0 > -1) {
        if (umin < usubmin)
          free_rows[--k] = i0;
        else
          free_rows[numfree++] = i0;
      }
    }
  }

  // Shortest augmenting path for every remaining free row.
  for (int f = 0; f < numfree; ++f) {
    const int freerow = free_rows[f];
    for (int j = 0; j < n; ++j) {
      d[j] = c(freerow, j) - v[j];
      pred[j] = freerow;
      collist[j] = j;
    }
    int low = 0;
    int up = 0;
    int last = 0;
    int endofpath = -1;
    double min = 0.0;
    bool found = false;
    while (!found) {
      if (up == low) {
        last = low - 1;
        min = d[collist[up++]];
        for (int k = up; k < n; ++k) {
          const int j = collist[k];
          const double h = d[j];
          if (h <= min) {
            if (h < min) {
              up = low;
              min = h;
            }
            collist[k] = collist[up];
            collist[up++] = j;
          }
        }
        for (int k = low; k < up; ++k) {
          if (colsol[collist[k]] < 0) {
            endofpath = collist[k];
            found = true;
            break;
          }
        }
      }
      if (!found) {
        const int j1 = collist[low++];
        const int i = colsol[j1];
        const double h = c(i, j1) - v[j1] - min;
        for (int k = up; k < n; ++k) {
          const int j = collist[k];
          const double v2 = c(i, j) - v[j] - h;
          if (v2 < d[j]) {
            pred[j] = i;
            if (v2 == min) {
              if (colsol[j] < 0) {
                endofpath = j;
                found = true;
                break;
              }
              collist[k] = collist[up];
              collist[up++] = j;
            }
            d[j] = v2;
          }
        }
      }
    }
    for (int k = 0; k <= last; ++k) {
      const int j1 = collist[k];
      v[j1] += d[j1] - min;
    }
    int i;
    do {
      i = pred[endofpath];
      colsol[endofpath] = i;
      const int j1 = endofpath;
      endofpath = rowsol[i];
      rowsol[i] = j1;
    } while (i != freerow);
  }

  return {rowsol.begin(), rowsol.end()};
}

TransportPlan solve_exact(const CostMatrix& cost, std::size_t cap) {
  const std::size_t n = cost.size();
  if (n == 0) throw DomainError("OT cost matrix is empty");
  if (n > cap)
    throw DomainError("OT batch of " + std::to_string(n) + " exceeds the cap of " + std::to_string(cap) +
                      "; subsample first");
  TransportPlan plan;
  plan.assignment = solve_assignment(cost.c);
  const auto ni = static_cast<Eigen::Index>(n);
  plan.p = Eigen::MatrixXd::Zero(ni, ni);
  const double mass = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    plan.p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(plan.assignment[i])) = mass;
  return plan;
}

std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(const TransportPlan& plan, std::mt19937_64& rng) {
  const std::size_t n = plan.size();
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(n);

  std::vector<std::size_t> perm = plan.assignment;
  if (perm.size() == n || extract_permutation(plan.p, perm)) {
    for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(i, perm[i]);
    return pairs;
  }

  // Row-major flattening of the plan as categorical weights.
  std::vector<double> weights(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      weights[i * n + j] = std::max(plan.p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), 0.0);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t flat = pick(rng);
    pairs.emplace_back(flat / n, flat % n);
  }
  return pairs;
}

}  // namespace foldflow::ot
