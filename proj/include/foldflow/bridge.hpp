#pragma once

// Brownian bridges in R^3 and on SO(3).
//
// The SO(3) bridge pinned at r1 (t = 1) and r0 (t = 0) follows
//   dR_t = log_{R_t}(r0) / t dt + gamma(t) dB_t,   R_1 = r1,
// integrated backward in time. Its simulation-free stand-in draws
// IGSO(3) noise around the geodesic interpolant.

#include <cstddef>
#include <iosfwd>
#include <random>
#include <vector>

#include "foldflow/igso3.hpp"
#include "foldflow/so3.hpp"

namespace foldflow::bridge {

/// gamma(t) >= 0 on [0, 1]: either constant or tabulated on a uniform grid
/// over [0, 1] with linear interpolation.
class DiffusionSchedule {
 public:
  static DiffusionSchedule constant(double gamma);
  static DiffusionSchedule table(std::vector<double> values);

  DiffusionSchedule() = default;
  double operator()(double t) const;
  bool is_zero() const;
  bool is_constant() const { return values_.size() == 1; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> values_{0.0};
};

struct BridgePath {
  std::vector<double> times;  // ascending, times.front() = 0, times.back() = 1
  std::vector<Rotation> states;
};

struct SimulationOptions {
  /// Lower clamp on t in the 1/t drift. Zero leaves the grid times as they
  /// are; the smallest is one step, where the drift lands exactly on r0.
  double drift_time_floor = 0.0;
};

/// N(t s1 + (1 - t) s0, gamma^2 t (1 - t) I).
Vec3 euclid_bridge_sample(const Vec3& s0, const Vec3& s1, double t, double gamma, std::mt19937_64& rng);

/// Geodesic random walk from r1 at t = 1 down to t = 0 on a uniform grid:
/// R <- R exp(hat(drift dt + gamma(t) sqrt(dt) xi)). The final step carries
/// no noise, so the path ends on r0.
BridgePath simulate_so3_bridge(const Rotation& r0, const Rotation& r1, const DiffusionSchedule& gamma,
                               std::size_t steps, std::mt19937_64& rng, const SimulationOptions& options = {});

/// IGSO(3) concentration matching the bridge spread at time t. Per axis the
/// bridge rotation vector has variance gamma^2 t (1 - t), and IGSO(3, eps)
/// has variance 2 eps, so eps = gamma^2 t (1 - t) / 2.
double bridge_concentration(double gamma, double t);

/// IGSO(3) draw around exp_{r0}(t log_{r0}(r1)) with concentration
/// bridge_concentration(gamma(t), t). Returns the endpoints exactly at t = 0, 1.
Rotation approx_bridge_sample(const Rotation& r0, const Rotation& r1, double t, const DiffusionSchedule& gamma,
                              std::mt19937_64& rng,
                              const igso3::ConcentrationSampler& sampler = igso3::ConcentrationSampler::shared());

/// Distance-to-interpolant statistics along the bridge for one gamma.
struct StudyCurve {
  double gamma = 0.0;
  std::vector<double> times;
  std::vector<double> sim_mean, sim_std;
  std::vector<double> approx_mean, approx_std;

  /// max_t |sim_mean - approx_mean| / max_t sim_mean (0 when both vanish to
  /// within 1e-9).
  double relative_mean_gap() const;
  /// True when the +-1 std bands intersect at every interior grid point.
  bool bands_overlap() const;
  void write_csv(std::ostream& out) const;
};

struct StudyOptions {
  /// Endpoint pairs farther apart than this relative angle are redrawn. Near
  /// the cut locus (angle pi) the interpolant is not unique and the
  /// distance-to-interpolant statistic is meaningless.
  double max_relative_angle = 1.5707963267948966;
};

/// For each gamma: n endpoint pairs (r0, r1) drawn Haar-uniformly subject to
/// options.max_relative_angle, one simulated bridge per pair, and one
/// approximate draw per pair and grid time.
std::vector<StudyCurve> bridge_error_study(const std::vector<double>& gammas, std::size_t n, std::size_t steps,
                                           std::mt19937_64& rng, const StudyOptions& options = {});

}  // namespace foldflow::bridge
