#pragma once

// Synthetic multimodal targets on SO(3) and sample-based evaluation:
// exact empirical Wasserstein distances under the geodesic ground cost and
// per-mode coverage.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include "foldflow/so3.hpp"

namespace foldflow::eval {

inline constexpr std::size_t kMaxWassersteinSize = 5000;
inline constexpr double kDefaultModeRadius = 0.7;

struct Component {
  Rotation center;
  double eps = 0.05;
  double weight = 1.0;
};

struct MixtureTarget {
  std::vector<Component> components;

  /// Throws DomainError unless weights are positive and sum to 1 within
  /// 1e-12 and every eps is at least the IGSO(3) table floor.
  void validate() const;
  std::size_t size() const { return components.size(); }

  /// Four equal-weight components with eps = 0.05 at I, Rx(pi/2), Ry(pi/2)
  /// and Rz(2 pi/3).
  static MixtureTarget four_modes(double eps = 0.05);
};

struct LabeledSamples {
  std::vector<Rotation> rotations;
  std::vector<std::size_t> component;
};

LabeledSamples sample_target_labeled(const MixtureTarget& target, std::size_t n, std::mt19937_64& rng);
std::vector<Rotation> sample_target(const MixtureTarget& target, std::size_t n, std::mt19937_64& rng);

/// Exact empirical W_p (p = 1 or 2) between equal-size sets with cost d^p.
/// Throws DomainError for unequal sizes, empty sets, p outside {1, 2}, or
/// n > kMaxWassersteinSize (subsample first).
double wasserstein(std::span<const Rotation> a, std::span<const Rotation> b, int order);

struct Coverage {
  std::vector<double> fractions;  // per component
  double unassigned = 0.0;
  double radius = kDefaultModeRadius;

  /// Components whose fraction falls below `threshold`.
  std::vector<std::size_t> missing(double threshold) const;
};

/// Each sample is assigned to its nearest center when that center lies
/// within `radius` (geodesic distance); otherwise it is unassigned.
Coverage mode_coverage(std::span<const Rotation> samples, const MixtureTarget& target, double radius);

/// Mean geodesic distance from target draws to their own component center.
double intrinsic_spread(const LabeledSamples& draws, const MixtureTarget& target);

struct EvalReport {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double w1 = 0.0;  // generated vs fresh target draws
  double w2 = 0.0;
  double floor_w1 = 0.0;  // two independent target draws
  double floor_w2 = 0.0;
  double spread = 0.0;
  Coverage coverage;
  double missing_threshold = 0.05;

  double w1_normalized() const { return spread > 0.0 ? w1 / spread : 0.0; }
  double w2_over_floor() const { return floor_w2 > 0.0 ? w2 / floor_w2 : 0.0; }

  /// key = value lines.
  void write_text(std::ostream& out) const;
  /// metric,value rows, then mode,fraction rows.
  void write_csv(std::ostream& out) const;
};

/// Compares `generated` (subsampled to n when larger) with n fresh target
/// draws, and two further independent target draws for the noise floor.
/// Random streams "eval/reference", "eval/floor_a", "eval/floor_b",
/// "eval/subsample" derive from `seed`.
EvalReport evaluate(std::span<const Rotation> generated, const MixtureTarget& target, std::size_t n,
                    std::uint64_t seed, double radius = kDefaultModeRadius);

}  // namespace foldflow::eval
