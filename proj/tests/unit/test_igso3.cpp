#include <doctest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <numbers>

#include "foldflow/igso3.hpp"
#include "oracles.hpp"

using namespace foldflow;
using namespace foldflow::igso3;
using std::numbers::pi;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

double series_big(double omega, double eps, int terms) {
  return static_cast<double>(density_series<Big>(Big(omega), Big(eps), terms));
}

// Angle density from a plain-double series with enough terms for eps >= 0.05.
double angle_pdf(double omega, double eps) {
  return density_series<double>(omega, eps, 200) * (1.0 - std::cos(omega)) / pi;
}

// Fine reference CDF by Simpson integration on [0, w] for each grid point.
struct ReferenceCdf {
  std::vector<double> w, c;
  explicit ReferenceCdf(double eps, int n = 4000) {
    const double h = pi / n;
    w.push_back(0.0);
    c.push_back(0.0);
    for (int k = 1; k <= n; ++k) {
      const double a = (k - 1) * h, b = k * h;
      const double piece = (angle_pdf(a, eps) + 4.0 * angle_pdf(0.5 * (a + b), eps) + angle_pdf(b, eps)) * h / 6.0;
      w.push_back(b);
      c.push_back(c.back() + piece);
    }
  }
  double operator()(double x) const {
    if (x <= 0) return 0.0;
    if (x >= pi) return c.back();
    const std::size_t i = static_cast<std::size_t>(x / (pi / (w.size() - 1)));
    const double f = (x - w[i]) / (w[i + 1] - w[i]);
    return c[i] + f * (c[i + 1] - c[i]);
  }
};

}  // namespace

TEST_CASE("series converges and matches the extended-precision sum") {
  const double f2000 = series_big(pi / 2, 0.5, 2000);
  const double f4000 = series_big(pi / 2, 0.5, 4000);
  CHECK(std::abs(f2000 - f4000) < 1e-10);
  CHECK(density_series_adaptive(pi / 2, 0.5) == doctest::Approx(f4000).epsilon(1e-12));
  for (double omega : {1e-8, 0.3, 1.0, 2.0, 3.1}) {
    // Large eps leaves only the l = 0 term.
    CHECK(density_series<double>(omega, 100.0, 50) == doctest::Approx(1.0).epsilon(1e-12));
    for (double eps : {0.05, 0.3, 1.5}) {
      const double ref = series_big(omega, eps, 3000);
      CHECK(density_series_adaptive(omega, eps) == doctest::Approx(ref).epsilon(1e-9));
    }
  }
  // Regular at omega = 0: the kernel tends to 2l + 1.
  double at_zero = 0.0;
  for (int l = 0; l < 200; ++l) at_zero += (2.0 * l + 1) * (2.0 * l + 1) * std::exp(-l * (l + 1) * 0.5);
  CHECK(density_series<double>(0.0, 0.5, 200) == doctest::Approx(at_zero).epsilon(1e-12));
}

TEST_CASE("angle marginal integrates to one") {
  for (double eps : {0.05, 0.1, 0.5, 1.0, 2.0}) {
    const double total = oracle::simpson([eps](double w) { return angle_pdf(w, eps); }, 0.0, pi, 4000);
    CHECK(std::abs(total - 1.0) <= 1e-4);
  }
}

TEST_CASE("closed form agrees with the series on its validity range") {
  double worst = 0.0;
  for (double eps : {0.05, 0.1, 0.2, 0.5, 0.8, 1.0}) {
    for (double omega = 0.1; omega <= 3.0 + 1e-9; omega += 0.1) {
      const double ref = series_big(omega, eps, 600);  // tail below 1e-40 for eps >= 0.05
      const double closed = density_closed(omega, eps);
      CHECK(closed > 0.0);
      worst = std::max(worst, std::abs(closed - ref) / ref);
    }
  }
  CHECK(worst <= 1e-3);
  CHECK(std::abs(density_closed(pi / 2, 0.8) - series_big(pi / 2, 0.8, 5000)) <= 1e-3);
  CHECK_THROWS_AS(density_closed(1.0, 1.5), DomainError);
  CHECK_THROWS_AS(density_closed(0.0, 0.5), DomainError);
}

TEST_CASE("cdf table") {
  const CdfTable t = build_cdf(0.5);
  REQUIRE(t.grid.size() == kDefaultGridSize);
  CHECK(t.grid.front() == 0.0);
  CHECK(t.grid.back() == doctest::Approx(pi).epsilon(1e-15));
  CHECK(t.cdf.front() == 0.0);
  CHECK(std::abs(t.cdf.back() - 1.0) <= 1e-6);
  CHECK(std::is_sorted(t.cdf.begin(), t.cdf.end()));
  CHECK(t.inverse(0.0) == 0.0);
  CHECK(t.inverse(1.0) == doctest::Approx(pi));
  for (double u : {0.1, 0.5, 0.9}) CHECK(t.cdf_at(t.inverse(u)) == doctest::Approx(u).epsilon(1e-9));

  const ReferenceCdf ref(0.5);
  for (double w = 0.05; w < pi; w += 0.1) CHECK(std::abs(t.cdf_at(w) - ref(w)) <= 1e-4);

  CHECK_THROWS_AS(build_cdf(5e-5), DomainError);
  CHECK_THROWS_AS(build_cdf(0.5, 100), DomainError);
  CHECK_NOTHROW(build_cdf(kMinTableEps));
  const CdfTable wide = build_cdf(3.0, 256);
  CHECK(std::abs(wide.cdf.back() - 1.0) <= 1e-6);
}

TEST_CASE("median angle matches a rejection sampler") {
  // Rejection from the Haar angle marginal against the series density.
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double bound = density_series<double>(0.0, 0.5, 100) * 1.001;
  std::vector<double> accepted;
  while (accepted.size() < 200000) {
    // Haar angle by inverse CDF of (w - sin w) / pi via the trace of a Haar rotation.
    const double w = oracle::angle_from_trace(oracle::haar_qr(rng));
    if (u(rng) * bound < density_series<double>(w, 0.5, 100)) accepted.push_back(w);
  }
  std::nth_element(accepted.begin(), accepted.begin() + accepted.size() / 2, accepted.end());
  const double median_oracle = accepted[accepted.size() / 2];
  CHECK(std::abs(build_cdf(0.5).inverse(0.5) - median_oracle) <= 2e-2);
}

TEST_CASE("sampled angles follow the density") {
  std::mt19937_64 rng(32);
  const int n = 100000, bins = 40;
  std::vector<double> observed(bins, 0.0), expected(bins, 0.0);
  const IgParams params{Rotation::identity(), 0.5};
  for (int k = 0; k < n; ++k) {
    const Rotation r = sample(params, rng);
    REQUIRE(r.is_valid());
    const double w = oracle::angle_from_trace(r.matrix());
    observed[std::min(bins - 1, static_cast<int>(w / pi * bins))] += 1.0;
  }
  for (int b = 0; b < bins; ++b)
    expected[b] =
        n * oracle::simpson([](double w) { return angle_pdf(w, 0.5); }, b * pi / bins, (b + 1) * pi / bins, 200);
  CHECK(oracle::chi2_pvalue(observed, expected) > 0.01);

  // Axis is uniform: each coordinate of the unit axis is U(-1, 1).
  std::vector<double> zs;
  for (int k = 0; k < 20000; ++k) zs.push_back(sample_axis(rng).z());
  CHECK(oracle::ks_pvalue(zs, [](double z) { return (z + 1.0) / 2.0; }) > 0.01);
}

TEST_CASE("small concentration stays near the mean") {
  std::mt19937_64 rng(33);
  const double eps = 1e-3;
  // Direct evaluation of the angle CDF: mass below 0.2 is essentially one.
  const double mass = oracle::simpson([eps](double w) { return angle_density(w, eps); }, 1e-12, 0.2, 4000);
  CHECK(mass > 0.999);
  const Rotation mean = Rotation::about_y(0.7);
  int inside = 0;
  const int n = 20000;
  for (int k = 0; k < n; ++k)
    if (rotation_angle(mean.inverse() * sample({mean, eps}, rng)) < 0.2) ++inside;
  CHECK(inside >= 0.99 * n);
  CHECK_THROWS_AS(sample({mean, 5e-5}, rng), DomainError);
}

TEST_CASE("sampling is left-equivariant in the mean") {
  const Rotation q = Rotation::about_x(0.9) * Rotation::about_z(-2.0);
  std::mt19937_64 a(34), b(34);
  for (int k = 0; k < 1000; ++k) {
    const Rotation at_identity = sample({Rotation::identity(), 0.3}, a);
    const Rotation at_q = sample({q, 0.3}, b);
    CHECK((at_q.matrix() - (q * at_identity).matrix()).norm() <= 1e-12);
  }
}

TEST_CASE("concentration sampler across eps levels") {
  const ConcentrationSampler& s = ConcentrationSampler::shared();
  std::mt19937_64 rng(35);
  CHECK(s.sample_rotvec(0.0, rng) == Vec3::Zero());
  CHECK(s.sample(Rotation::about_z(1.0), 0.0, rng).matrix() == Rotation::about_z(1.0).matrix());
  for (double eps : {0.07, 0.33, 1.7}) {
    const ReferenceCdf ref(eps);
    std::vector<double> angles;
    for (int k = 0; k < 20000; ++k) angles.push_back(s.sample_rotvec(eps, rng).norm());
    CHECK(oracle::ks_pvalue(angles, [&](double w) { return ref(w); }) > 0.01);
  }
  // Below the table range the rotation vector is N(0, 2 eps I).
  const double tiny = 2e-5;
  std::vector<double> xs;
  for (int k = 0; k < 20000; ++k) xs.push_back(s.sample_rotvec(tiny, rng).x());
  const double sd = std::sqrt(2.0 * tiny);
  CHECK(oracle::ks_pvalue(xs, [sd](double x) { return 0.5 * std::erfc(-x / (sd * std::sqrt(2.0))); }) > 0.01);
  CHECK_THROWS_AS(s.sample_rotvec(-1.0, rng), DomainError);
  // Past the interpolated range a dedicated table is used.
  const Vec3 wide = s.sample_rotvec(s.max_eps() * 2, rng);
  CHECK(wide.norm() <= pi + 1e-12);
}
