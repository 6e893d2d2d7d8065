#pragma once

// Isotropic Gaussian distribution on SO(3) (the SO(3) heat kernel).
//
// The rotation angle w has density f(w, eps) with respect to the Haar angle
// marginal (1 - cos w) / pi; the axis is uniform on the sphere. As eps -> 0
// the rotation vector approaches N(0, 2 eps I).

#include <cmath>
#include <cstddef>
#include <memory>
#include <random>
#include <vector>

#include "foldflow/so3.hpp"

namespace foldflow::igso3 {

/// Tables are refused below this concentration: the series no longer
/// converges within the term cap.
inline constexpr double kMinTableEps = 1e-4;
inline constexpr int kMaxSeriesTerms = 5000;
inline constexpr std::size_t kDefaultGridSize = 1024;

struct IgParams {
  Rotation mean;
  double eps = 1.0;
};

/// Truncated series sum_{l<terms} (2l+1) e^{-l(l+1) eps} sin((l+1/2) w) / sin(w/2).
///
/// The ratio sin((l+1/2) w) / sin(w/2) is evaluated as the Dirichlet kernel
/// 1 + 2 sum_k cos(k w), which is regular at w = 0. Templated so tests can
/// evaluate it in extended precision: in double the sum cancels to noise
/// once f drops below ~1e-14.
template <class Real>
Real density_series(Real omega, Real eps, int terms) {
  using std::cos;
  using std::exp;
  using std::sin;
  const Real c1 = cos(omega);
  const Real s1 = sin(omega);
  Real ck = 1;  // cos(k w)
  Real sk = 0;  // sin(k w)
  Real kernel = 1;
  Real sum = 1;  // l = 0 term
  for (int l = 1; l < terms; ++l) {
    const Real next_c = ck * c1 - sk * s1;
    sk = sk * c1 + ck * s1;
    ck = next_c;
    kernel += 2 * ck;
    const Real lr = l;
    sum += (2 * lr + 1) * exp(-lr * (lr + 1) * eps) * kernel;
  }
  return sum;
}

/// Series with adaptive truncation: stops once the term bound
/// (2l+1)^2 e^{-l(l+1) eps} falls below 1e-12 of the partial sum, capped at
/// kMaxSeriesTerms terms.
double density_series_adaptive(double omega, double eps);

/// Closed-form approximation, valid for 0 < eps <= 1. Throws DomainError
/// for eps > 1 or omega outside (0, pi].
double density_closed(double omega, double eps);

/// Haar density of the rotation angle, (1 - cos w) / pi.
double haar_angle_density(double omega);

/// Density of the rotation angle under IGSO(3): f(w, eps) (1 - cos w) / pi.
/// Uses the closed form for eps <= 1 and the adaptive series otherwise.
double angle_density(double omega, double eps);

struct CdfTable {
  double eps = 0.0;
  std::vector<double> grid;  // ascending angles, grid.front() = 0, grid.back() = pi
  std::vector<double> cdf;   // ascending, cdf.front() = 0, cdf.back() = 1

  /// Linear interpolation of the CDF.
  double cdf_at(double omega) const;
  /// Linear interpolation of the inverse CDF for u in [0, 1].
  double inverse(double u) const;
};

/// Trapezoid CDF of the angle density on a uniform grid over [0, pi].
/// Throws DomainError for eps < kMinTableEps or grid_size < 256.
CdfTable build_cdf(double eps, std::size_t grid_size = kDefaultGridSize);

/// Process-wide cache of default-size tables keyed by eps. Thread-safe.
const CdfTable& cached_table(double eps);

/// Draws the rotation angle from a table.
double sample_angle(const CdfTable& table, std::mt19937_64& rng);

/// Uniform unit vector.
Vec3 sample_axis(std::mt19937_64& rng);

/// mean * exp(hat(w axis)) with w drawn by inverse transform from the cached
/// table for params.eps. Throws DomainError for eps < kMinTableEps.
Rotation sample(const IgParams& params, std::mt19937_64& rng);

/// Sampler for a continuously varying concentration, as needed by bridge
/// marginals. Inverse CDFs are tabulated on a log-spaced eps grid and
/// interpolated linearly in log eps. Below kMinTableEps the small-eps limit
/// N(0, 2 eps I) on the rotation vector is used; eps == 0 returns the mean.
class ConcentrationSampler {
 public:
  explicit ConcentrationSampler(double max_eps = 4.0, std::size_t levels = 256,
                                std::size_t grid_size = kDefaultGridSize);

  double max_eps() const { return max_eps_; }

  /// Rotation-vector perturbation drawn from IGSO(3, eps) at the identity.
  Vec3 sample_rotvec(double eps, std::mt19937_64& rng) const;
  Rotation sample(const Rotation& mean, double eps, std::mt19937_64& rng) const;

  /// Shared instance with default settings.
  static const ConcentrationSampler& shared();

 private:
  double angle_from_uniform(double eps, double u) const;

  double max_eps_;
  double log_min_;
  double log_step_;
  std::vector<CdfTable> tables_;
};

}  // namespace foldflow::igso3
