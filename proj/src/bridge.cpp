#include "foldflow/bridge.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace foldflow::bridge {

DiffusionSchedule DiffusionSchedule::constant(double gamma) { return table({gamma}); }

DiffusionSchedule DiffusionSchedule::table(std::vector<double> values) {
  if (values.empty()) throw DomainError("diffusion schedule needs at least one value");
  for (double g : values)
    if (!(g >= 0.0) || !std::isfinite(g)) throw DomainError("diffusion schedule values must be finite and >= 0");
  DiffusionSchedule s;
  s.values_ = std::move(values);
  return s;
}

double DiffusionSchedule::operator()(double t) const {
  if (values_.size() == 1) return values_.front();
  const double pos = std::clamp(t, 0.0, 1.0) * static_cast<double>(values_.size() - 1);
  const std::size_t k = std::min(static_cast<std::size_t>(pos), values_.size() - 2);
  const double frac = pos - static_cast<double>(k);
  return (1.0 - frac) * values_[k] + frac * values_[k + 1];
}

bool DiffusionSchedule::is_zero() const {
  return std::all_of(values_.begin(), values_.end(), [](double g) { return g == 0.0; });
}

Vec3 euclid_bridge_sample(const Vec3& s0, const Vec3& s1, double t, double gamma, std::mt19937_64& rng) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("bridge time must lie in [0, 1]");
  if (t == 0.0) return s0;
  if (t == 1.0) return s1;
  const Vec3 mean = (1.0 - t) * s0 + t * s1;
  const double sd = gamma * std::sqrt(t * (1.0 - t));
  if (sd == 0.0) return mean;
  std::normal_distribution<double> normal(0.0, sd);
  return mean + Vec3(normal(rng), normal(rng), normal(rng));
}

BridgePath simulate_so3_bridge(const Rotation& r0, const Rotation& r1, const DiffusionSchedule& gamma,
                               std::size_t steps, std::mt19937_64& rng, const SimulationOptions& options) {
  if (steps < 16) throw DomainError("bridge simulation needs at least 16 steps");
  const double dt = 1.0 / static_cast<double>(steps);
  const double sqrt_dt = std::sqrt(dt);
  std::normal_distribution<double> normal(0.0, 1.0);

  BridgePath path;
  path.times.resize(steps + 1);
  path.states.resize(steps + 1);
  path.times[steps] = 1.0;
  path.states[steps] = r1;

  Rotation state = r1;
  for (std::size_t k = steps; k >= 1; --k) {
    const double t = static_cast<double>(k) * dt;
    Vec3 increment = log_rotvec(state.inverse() * r0) * (dt / std::max(t, options.drift_time_floor));
    const double g = gamma(t);
    if (k > 1 && g > 0.0) increment += g * sqrt_dt * Vec3(normal(rng), normal(rng), normal(rng));
    state = state * exp_rotvec(increment);
    path.times[k - 1] = static_cast<double>(k - 1) * dt;
    path.states[k - 1] = state;
  }
  return path;
}

double bridge_concentration(double gamma, double t) { return 0.5 * gamma * gamma * t * (1.0 - t); }

Rotation approx_bridge_sample(const Rotation& r0, const Rotation& r1, double t, const DiffusionSchedule& gamma,
                              std::mt19937_64& rng, const igso3::ConcentrationSampler& sampler) {
  const Rotation mean = geodesic_interpolant(r0, r1, t);
  const double eps = bridge_concentration(gamma(t), t);
  if (eps == 0.0) return mean;
  return sampler.sample(mean, eps, rng);
}

double StudyCurve::relative_mean_gap() const {
  double peak = 0.0;
  double gap = 0.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    peak = std::max(peak, sim_mean[k]);
    gap = std::max(gap, std::abs(sim_mean[k] - approx_mean[k]));
  }
  // Rounding noise on a noiseless bridge is not a gap.
  constexpr double kNoise = 1e-9;
  if (peak <= kNoise) return gap <= kNoise ? 0.0 : INFINITY;
  return gap / peak;
}

bool StudyCurve::bands_overlap() const {
  for (std::size_t k = 1; k + 1 < times.size(); ++k) {
    const double lo = std::max(sim_mean[k] - sim_std[k], approx_mean[k] - approx_std[k]);
    const double hi = std::min(sim_mean[k] + sim_std[k], approx_mean[k] + approx_std[k]);
    if (lo > hi) return false;
  }
  return true;
}

void StudyCurve::write_csv(std::ostream& out) const {
  out << "t,sim_mean,sim_std,approx_mean,approx_std\n";
  out.precision(10);
  for (std::size_t k = 0; k < times.size(); ++k)
    out << times[k] << ',' << sim_mean[k] << ',' << sim_std[k] << ',' << approx_mean[k] << ',' << approx_std[k]
        << '\n';
}

namespace {

struct RunningStats {
  double sum = 0.0;
  double sum_sq = 0.0;
  void add(double x) {
    sum += x;
    sum_sq += x * x;
  }
  double mean(std::size_t n) const { return sum / static_cast<double>(n); }
  double std(std::size_t n) const {
    const double m = mean(n);
    return std::sqrt(std::max(sum_sq / static_cast<double>(n) - m * m, 0.0));
  }
};

}  // namespace

std::vector<StudyCurve> bridge_error_study(const std::vector<double>& gammas, std::size_t n, std::size_t steps,
                                           std::mt19937_64& rng, const StudyOptions& options) {
  if (n < 256) throw DomainError("bridge study needs at least 256 endpoint pairs");
  std::vector<StudyCurve> curves;
  for (double g : gammas) {
    const DiffusionSchedule schedule = DiffusionSchedule::constant(g);
    std::vector<RunningStats> sim(steps + 1), approx(steps + 1);
    std::vector<double> times;
    for (std::size_t p = 0; p < n; ++p) {
      const Rotation r0 = sample_uniform(rng);
      Rotation r1 = sample_uniform(rng);
      while (rotation_angle(r0.inverse() * r1) > options.max_relative_angle) r1 = sample_uniform(rng);
      const BridgePath path = simulate_so3_bridge(r0, r1, schedule, steps, rng);
      for (std::size_t k = 0; k <= steps; ++k) {
        const double t = path.times[k];
        const Rotation mean = geodesic_interpolant(r0, r1, t);
        sim[k].add(geodesic_distance(path.states[k], mean));
        approx[k].add(geodesic_distance(approx_bridge_sample(r0, r1, t, schedule, rng), mean));
      }
      if (p == 0) times = path.times;
    }
    StudyCurve curve;
    curve.gamma = g;
    curve.times = times;
    for (std::size_t k = 0; k <= steps; ++k) {
      curve.sim_mean.push_back(sim[k].mean(n));
      curve.sim_std.push_back(sim[k].std(n));
      curve.approx_mean.push_back(approx[k].mean(n));
      curve.approx_std.push_back(approx[k].std(n));
    }
    curves.push_back(std::move(curve));
  }
  return curves;
}

}  // namespace foldflow::bridge
