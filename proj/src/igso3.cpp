#include "foldflow/igso3.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <numbers>
#include <string>

namespace foldflow::igso3 {

namespace {

constexpr double kPi = std::numbers::pi;

// Closed form with the e^{-pi^2/eps} factor folded into the exponentials so
// nothing overflows for small eps.
double closed_form_unchecked(double omega, double eps) {
  const double prefactor = std::sqrt(kPi) * std::pow(eps, -1.5) * std::exp((eps - omega * omega / eps) / 4.0);
  const double wrap = (omega - 2.0 * kPi) * std::exp(kPi * (omega - kPi) / eps) +
                      (omega + 2.0 * kPi) * std::exp(-kPi * (omega + kPi) / eps);
  return prefactor * (omega - wrap) / (2.0 * std::sin(omega / 2.0));
}

}  // namespace

double density_series_adaptive(double omega, double eps) {
  if (!(eps > 0.0)) throw DomainError("igso3 concentration must be positive");
  const double c1 = std::cos(omega);
  const double s1 = std::sin(omega);
  double ck = 1.0;
  double sk = 0.0;
  double kernel = 1.0;
  double sum = 1.0;
  for (int l = 1; l < kMaxSeriesTerms; ++l) {
    const double next_c = ck * c1 - sk * s1;
    sk = sk * c1 + ck * s1;
    ck = next_c;
    kernel += 2.0 * ck;
    const double lr = l;
    const double weight = (2.0 * lr + 1.0) * std::exp(-lr * (lr + 1.0) * eps);
    sum += weight * kernel;
    if (weight * (2.0 * lr + 1.0) < 1e-12 * std::abs(sum)) break;
  }
  return sum;
}

double density_closed(double omega, double eps) {
  if (!(eps > 0.0 && eps <= 1.0))
    throw DomainError("closed-form igso3 density requires 0 < eps <= 1, got " + std::to_string(eps));
  if (!(omega > 0.0 && omega <= kPi)) throw DomainError("closed-form igso3 density requires omega in (0, pi]");
  return closed_form_unchecked(omega, eps);
}

double haar_angle_density(double omega) { return (1.0 - std::cos(omega)) / kPi; }

double angle_density(double omega, double eps) {
  if (omega <= 0.0) return 0.0;
  const double f = eps <= 1.0 ? closed_form_unchecked(omega, eps) : density_series_adaptive(omega, eps);
  return std::max(f, 0.0) * haar_angle_density(omega);
}

double CdfTable::cdf_at(double omega) const {
  if (omega <= grid.front()) return 0.0;
  if (omega >= grid.back()) return 1.0;
  const auto it = std::upper_bound(grid.begin(), grid.end(), omega);
  const std::size_t i = static_cast<std::size_t>(it - grid.begin()) - 1;
  const double frac = (omega - grid[i]) / (grid[i + 1] - grid[i]);
  return cdf[i] + frac * (cdf[i + 1] - cdf[i]);
}

double CdfTable::inverse(double u) const {
  if (u <= 0.0) return grid.front();
  if (u >= 1.0) return grid.back();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  const std::size_t i = static_cast<std::size_t>(it - cdf.begin()) - 1;
  const double width = cdf[i + 1] - cdf[i];
  if (width <= 0.0) return grid[i];
  return grid[i] + (u - cdf[i]) / width * (grid[i + 1] - grid[i]);
}

CdfTable build_cdf(double eps, std::size_t grid_size) {
  if (!(eps >= kMinTableEps))
    throw DomainError("igso3 series does not converge within " + std::to_string(kMaxSeriesTerms) +
                      " terms for eps = " + std::to_string(eps) + " (minimum " +
                      std::to_string(kMinTableEps) + ")");
  if (grid_size < 256) throw DomainError("igso3 cdf grid needs at least 256 points");

  CdfTable table;
  table.eps = eps;
  table.grid.resize(grid_size);
  table.cdf.resize(grid_size);
  const double step = kPi / static_cast<double>(grid_size - 1);
  double prev_density = 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < grid_size; ++i) {
    const double omega = i + 1 == grid_size ? kPi : step * static_cast<double>(i);
    const double density = angle_density(omega, eps);
    if (i > 0) acc += 0.5 * (prev_density + density) * (omega - table.grid[i - 1]);
    table.grid[i] = omega;
    table.cdf[i] = acc;
    prev_density = density;
  }
  if (!(acc > 0.0)) throw DomainError("igso3 angle density integrates to zero");
  for (double& c : table.cdf) c /= acc;
  table.cdf.back() = 1.0;
  return table;
}

const CdfTable& cached_table(double eps) {
  static std::mutex mutex;
  static std::map<double, std::unique_ptr<CdfTable>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[eps];
  if (!slot) slot = std::make_unique<CdfTable>(build_cdf(eps));
  return *slot;
}

double sample_angle(const CdfTable& table, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  return table.inverse(uniform(rng));
}

Vec3 sample_axis(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(normal(rng), normal(rng), normal(rng));
  } while (v.squaredNorm() < 1e-24);
  return v.normalized();
}

Rotation sample(const IgParams& params, std::mt19937_64& rng) {
  if (!(params.eps >= kMinTableEps))
    throw DomainError("igso3 eps " + std::to_string(params.eps) + " is below the supported minimum");
  const CdfTable& table = cached_table(params.eps);
  const double omega = sample_angle(table, rng);
  const Vec3 axis = sample_axis(rng);
  return params.mean * exp_rotvec(omega * axis);
}

ConcentrationSampler::ConcentrationSampler(double max_eps, std::size_t levels, std::size_t grid_size)
    : max_eps_(max_eps) {
  if (!(max_eps > kMinTableEps) || levels < 2) throw DomainError("invalid concentration grid");
  log_min_ = std::log(kMinTableEps);
  log_step_ = (std::log(max_eps) - log_min_) / static_cast<double>(levels - 1);
  tables_.reserve(levels);
  for (std::size_t k = 0; k < levels; ++k) {
    const double eps = k + 1 == levels ? max_eps : std::exp(log_min_ + log_step_ * static_cast<double>(k));
    tables_.push_back(build_cdf(std::max(eps, kMinTableEps), grid_size));
  }
}

double ConcentrationSampler::angle_from_uniform(double eps, double u) const {
  const double pos = (std::log(eps) - log_min_) / log_step_;
  const std::size_t last = tables_.size() - 1;
  const std::size_t k = std::min(static_cast<std::size_t>(std::max(pos, 0.0)), last - 1);
  const double frac = std::clamp(pos - static_cast<double>(k), 0.0, 1.0);
  return (1.0 - frac) * tables_[k].inverse(u) + frac * tables_[k + 1].inverse(u);
}

Vec3 ConcentrationSampler::sample_rotvec(double eps, std::mt19937_64& rng) const {
  if (!(eps >= 0.0)) throw DomainError("igso3 concentration must be nonnegative");
  if (eps == 0.0) return Vec3::Zero();
  if (eps < kMinTableEps) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 * eps));
    return Vec3(normal(rng), normal(rng), normal(rng));
  }
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u = uniform(rng);
  const double omega = eps > max_eps_ ? cached_table(eps).inverse(u) : angle_from_uniform(eps, u);
  return omega * sample_axis(rng);
}

Rotation ConcentrationSampler::sample(const Rotation& mean, double eps, std::mt19937_64& rng) const {
  const Vec3 w = sample_rotvec(eps, rng);
  if (eps == 0.0) return mean;
  return mean * exp_rotvec(w);
}

const ConcentrationSampler& ConcentrationSampler::shared() {
  static const ConcentrationSampler sampler;
  return sampler;
}

}  // namespace foldflow::igso3
