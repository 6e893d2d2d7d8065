#include "foldflow/eval.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>
#include <string>

#include "foldflow/igso3.hpp"
#include "foldflow/ot.hpp"
#include "foldflow/seeding.hpp"

namespace foldflow::eval {

void MixtureTarget::validate() const {
  if (components.empty()) throw DomainError("mixture target has no components");
  double total = 0.0;
  for (const Component& c : components) {
    if (!(c.weight > 0.0)) throw DomainError("mixture weights must be positive");
    if (!(c.eps >= igso3::kMinTableEps)) throw DomainError("mixture eps must be at least 1e-4");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) throw DomainError("mixture weights must sum to 1");
}

MixtureTarget MixtureTarget::four_modes(double eps) {
  const double pi = std::numbers::pi;
  MixtureTarget t;
  t.components = {{Rotation::identity(), eps, 0.25},
                  {Rotation::about_x(pi / 2), eps, 0.25},
                  {Rotation::about_y(pi / 2), eps, 0.25},
                  {Rotation::about_z(2 * pi / 3), eps, 0.25}};
  return t;
}

LabeledSamples sample_target_labeled(const MixtureTarget& target, std::size_t n, std::mt19937_64& rng) {
  target.validate();
  std::vector<double> weights;
  for (const Component& c : target.components) weights.push_back(c.weight);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  LabeledSamples out;
  out.rotations.reserve(n);
  out.component.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t c = pick(rng);
    out.component.push_back(c);
    out.rotations.push_back(igso3::sample({target.components[c].center, target.components[c].eps}, rng));
  }
  return out;
}

std::vector<Rotation> sample_target(const MixtureTarget& target, std::size_t n, std::mt19937_64& rng) {
  return sample_target_labeled(target, n, rng).rotations;
}

double wasserstein(std::span<const Rotation> a, std::span<const Rotation> b, int order) {
  if (order != 1 && order != 2) throw DomainError("Wasserstein order must be 1 or 2");
  if (a.size() != b.size()) throw DomainError("Wasserstein needs equal-size sample sets");
  if (a.empty()) throw DomainError("Wasserstein of empty sample sets");
  if (a.size() > kMaxWassersteinSize)
    throw DomainError("Wasserstein set of " + std::to_string(a.size()) + " exceeds " +
                      std::to_string(kMaxWassersteinSize) + "; subsample first");
  const auto n = static_cast<Eigen::Index>(a.size());
  Eigen::MatrixXd cost(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = geodesic_distance(a[static_cast<std::size_t>(i)], b[static_cast<std::size_t>(j)]);
      cost(i, j) = order == 1 ? d : d * d;
    }
  }
  const std::vector<std::size_t> assignment = ot::solve_assignment(cost);
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    total += cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(assignment[i]));
  const double mean = total / static_cast<double>(a.size());
  return order == 1 ? mean : std::sqrt(mean);
}

std::vector<std::size_t> Coverage::missing(double threshold) const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < fractions.size(); ++k)
    if (fractions[k] < threshold) out.push_back(k);
  return out;
}

Coverage mode_coverage(std::span<const Rotation> samples, const MixtureTarget& target, double radius) {
  if (!(radius > 0.0)) throw DomainError("coverage radius must be positive");
  if (target.components.empty()) throw DomainError("mixture target has no components");
  Coverage cov;
  cov.radius = radius;
  cov.fractions.assign(target.size(), 0.0);
  if (samples.empty()) return cov;
  std::size_t unassigned = 0;
  std::vector<std::size_t> counts(target.size(), 0);
  for (const Rotation& r : samples) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t k = 0; k < target.size(); ++k) {
      const double d = geodesic_distance(r, target.components[k].center);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    if (best_d <= radius)
      ++counts[best];
    else
      ++unassigned;
  }
  const double n = static_cast<double>(samples.size());
  for (std::size_t k = 0; k < target.size(); ++k) cov.fractions[k] = static_cast<double>(counts[k]) / n;
  cov.unassigned = static_cast<double>(unassigned) / n;
  return cov;
}

double intrinsic_spread(const LabeledSamples& draws, const MixtureTarget& target) {
  if (draws.rotations.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < draws.rotations.size(); ++k)
    sum += geodesic_distance(draws.rotations[k], target.components[draws.component[k]].center);
  return sum / static_cast<double>(draws.rotations.size());
}

void EvalReport::write_text(std::ostream& out) const {
  out.precision(10);
  out << "n = " << n << '\n'
      << "seed = " << seed << '\n'
      << "w1 = " << w1 << '\n'
      << "w2 = " << w2 << '\n'
      << "floor_w1 = " << floor_w1 << '\n'
      << "floor_w2 = " << floor_w2 << '\n'
      << "w2_over_floor = " << w2_over_floor() << '\n'
      << "spread = " << spread << '\n'
      << "w1_normalized = " << w1_normalized() << '\n'
      << "coverage.radius = " << coverage.radius << '\n';
  for (std::size_t k = 0; k < coverage.fractions.size(); ++k)
    out << "coverage.mode" << k << " = " << coverage.fractions[k] << '\n';
  out << "coverage.unassigned = " << coverage.unassigned << '\n';
  const auto missing = coverage.missing(missing_threshold);
  out << "coverage.missing_modes = ";
  if (missing.empty()) out << "none";
  for (std::size_t k = 0; k < missing.size(); ++k) out << (k ? "," : "") << k;
  out << '\n';
}

void EvalReport::write_csv(std::ostream& out) const {
  out.precision(10);
  out << "metric,value\n"
      << "n," << n << '\n'
      << "seed," << seed << '\n'
      << "w1," << w1 << '\n'
      << "w2," << w2 << '\n'
      << "floor_w1," << floor_w1 << '\n'
      << "floor_w2," << floor_w2 << '\n'
      << "w2_over_floor," << w2_over_floor() << '\n'
      << "spread," << spread << '\n'
      << "w1_normalized," << w1_normalized() << '\n';
  for (std::size_t k = 0; k < coverage.fractions.size(); ++k)
    out << "mode" << k << "," << coverage.fractions[k] << '\n';
  out << "unassigned," << coverage.unassigned << '\n';
}

EvalReport evaluate(std::span<const Rotation> generated, const MixtureTarget& target, std::size_t n,
                    std::uint64_t seed, double radius) {
  target.validate();
  if (n == 0) throw DomainError("evaluation size must be positive");
  if (generated.size() < n)
    throw DomainError("evaluation needs " + std::to_string(n) + " generated samples, got " +
                      std::to_string(generated.size()));
  std::vector<Rotation> gen(generated.begin(), generated.end());
  if (gen.size() > n) {
    std::mt19937_64 sub = make_stream(seed, "eval/subsample");
    std::shuffle(gen.begin(), gen.end(), sub);
    gen.resize(n);
  }
  std::mt19937_64 ref_rng = make_stream(seed, "eval/reference");
  std::mt19937_64 fa_rng = make_stream(seed, "eval/floor_a");
  std::mt19937_64 fb_rng = make_stream(seed, "eval/floor_b");
  const LabeledSamples reference = sample_target_labeled(target, n, ref_rng);
  const std::vector<Rotation> floor_a = sample_target(target, n, fa_rng);
  const std::vector<Rotation> floor_b = sample_target(target, n, fb_rng);

  EvalReport report;
  report.n = n;
  report.seed = seed;
  report.w1 = wasserstein(gen, reference.rotations, 1);
  report.w2 = wasserstein(gen, reference.rotations, 2);
  report.floor_w1 = wasserstein(floor_a, floor_b, 1);
  report.floor_w2 = wasserstein(floor_a, floor_b, 2);
  report.spread = intrinsic_spread(reference, target);
  report.coverage = mode_coverage(gen, target, radius);
  return report;
}

}  // namespace foldflow::eval
