#include <doctest.h>

#include <numbers>
#include <sstream>

#include "foldflow/eval.hpp"
#include "foldflow/samples_csv.hpp"
#include "oracles.hpp"

using namespace foldflow;
using namespace foldflow::eval;
using std::numbers::pi;

namespace {

std::vector<Rotation> haar_set(std::size_t n, std::mt19937_64& rng) {
  std::vector<Rotation> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(oracle::haar(rng));
  return out;
}

double brute_wasserstein(const std::vector<Rotation>& a, const std::vector<Rotation>& b, int order) {
  const int n = static_cast<int>(a.size());
  Eigen::MatrixXd c(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double d = std::sqrt(2.0) * oracle::angle_from_trace(a[i].matrix().transpose() * b[j].matrix());
      c(i, j) = std::pow(d, order);
    }
  return std::pow(oracle::brute_force_assignment(c).cost / n, 1.0 / order);
}

}  // namespace

TEST_CASE("four-mode target") {
  const MixtureTarget t = MixtureTarget::four_modes();
  REQUIRE(t.size() == 4);
  CHECK_NOTHROW(t.validate());
  double min_sep = 1e9;
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(t.components[i].weight == 0.25);
    CHECK(t.components[i].eps == 0.05);
    for (std::size_t j = i + 1; j < 4; ++j)
      min_sep = std::min(min_sep, geodesic_distance(t.components[i].center, t.components[j].center));
  }
  CHECK(min_sep >= 1.5);
  CHECK(kDefaultModeRadius < min_sep / 2);

  MixtureTarget bad = t;
  bad.components[0].weight = 0.3;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = t;
  bad.components[1].eps = 0.0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  CHECK_THROWS_AS(MixtureTarget{}.validate(), DomainError);
}

TEST_CASE("target sampling") {
  std::mt19937_64 rng(81);
  const MixtureTarget tight{{{Rotation::about_z(1.0), 1e-3, 1.0}}};
  int inside = 0;
  for (const Rotation& r : sample_target(tight, 5000, rng)) {
    CHECK(r.is_valid());
    if (rotation_angle(tight.components[0].center.inverse() * r) < 0.2) ++inside;
  }
  CHECK(inside >= 0.99 * 5000);

  const MixtureTarget two{{{Rotation::identity(), 0.05, 0.5}, {Rotation::about_x(2.0), 0.05, 0.5}}};
  const int n = 20000;
  const LabeledSamples draws = sample_target_labeled(two, n, rng);
  REQUIRE(draws.rotations.size() == static_cast<std::size_t>(n));
  const double first = std::count(draws.component.begin(), draws.component.end(), 0u);
  CHECK(std::abs(first / n - 0.5) <= 3 * std::sqrt(0.25 / n));
  for (std::size_t k = 0; k < 100; ++k) {
    const Rotation& center = two.components[draws.component[k]].center;
    CHECK(geodesic_distance(draws.rotations[k], center) < 1.5);
  }
}

TEST_CASE("wasserstein against brute force") {
  std::mt19937_64 rng(82);
  const auto a = haar_set(1, rng), b = haar_set(1, rng);
  for (int order : {1, 2}) CHECK(wasserstein(a, b, order) == doctest::Approx(geodesic_distance(a[0], b[0])));
  const auto same = haar_set(20, rng);
  CHECK(wasserstein(same, same, 2) <= 1e-7);

  for (int trial = 0; trial < 10; ++trial) {
    const auto x = haar_set(6, rng), y = haar_set(6, rng);
    for (int order : {1, 2}) CHECK(std::abs(wasserstein(x, y, order) - brute_wasserstein(x, y, order)) <= 1e-7);
  }
}

TEST_CASE("wasserstein metric properties") {
  std::mt19937_64 rng(83);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = haar_set(12, rng), y = haar_set(12, rng), z = haar_set(12, rng);
    const Rotation q = oracle::haar(rng);
    for (int order : {1, 2}) {
      const double xy = wasserstein(x, y, order);
      CHECK(xy >= 0.0);
      CHECK(std::abs(xy - wasserstein(y, x, order)) <= 1e-10);
      CHECK(xy <= wasserstein(x, z, order) + wasserstein(z, y, order) + 1e-9);
      std::vector<Rotation> qx, qy;
      for (std::size_t i = 0; i < x.size(); ++i) qx.push_back(q * x[i]), qy.push_back(q * y[i]);
      CHECK(std::abs(wasserstein(qx, qy, order) - xy) <= 1e-9);
    }
  }
  const auto x = haar_set(3, rng);
  CHECK_THROWS_AS(wasserstein(x, haar_set(4, rng), 1), DomainError);
  CHECK_THROWS_AS(wasserstein(x, x, 3), DomainError);
  CHECK_THROWS_AS(wasserstein(std::vector<Rotation>{}, std::vector<Rotation>{}, 1), DomainError);
  const auto big = std::vector<Rotation>(kMaxWassersteinSize + 1);
  CHECK_THROWS_AS(wasserstein(big, big, 1), DomainError);
}

TEST_CASE("mode coverage") {
  std::mt19937_64 rng(84);
  const MixtureTarget target = MixtureTarget::four_modes();
  const auto self = sample_target(target, 5000, rng);
  const Coverage wide = mode_coverage(self, target, 1.0);
  double total = wide.unassigned;
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(wide.fractions[k] >= 0.25 / 2);
    total += wide.fractions[k];
  }
  CHECK(total == doctest::Approx(1.0));
  CHECK(wide.missing(0.05).empty());

  const std::vector<Rotation> collapsed(500, target.components[2].center);
  const Coverage one = mode_coverage(collapsed, target, 0.7);
  CHECK(one.fractions[2] == 1.0);
  CHECK(one.unassigned == 0.0);
  CHECK(one.missing(0.05) == std::vector<std::size_t>{0, 1, 3});

  const std::vector<Rotation> far(10, Rotation::about_y(pi));
  CHECK(mode_coverage(far, target, 0.7).unassigned == 1.0);
  CHECK_THROWS_AS(mode_coverage(far, target, 0.0), DomainError);
}

TEST_CASE("evaluation report") {
  std::mt19937_64 rng(85);
  const MixtureTarget target = MixtureTarget::four_modes();
  const auto generated = sample_target(target, 600, rng);
  const EvalReport a = evaluate(generated, target, 400, 9);
  const EvalReport b = evaluate(generated, target, 400, 9);
  CHECK(a.w1 == b.w1);
  CHECK(a.w2 == b.w2);
  CHECK(a.n == 400);
  CHECK(a.floor_w2 > 0.0);
  // Target against target sits at the noise floor.
  CHECK(a.w2_over_floor() < 1.3);
  CHECK(a.w2_over_floor() > 0.7);
  CHECK(a.spread > 0.0);
  CHECK(a.w1_normalized() == doctest::Approx(a.w1 / a.spread));

  std::ostringstream text, csv;
  a.write_text(text);
  a.write_csv(csv);
  CHECK(text.str().find("w2 = ") != std::string::npos);
  CHECK(text.str().find("coverage.missing_modes = none") != std::string::npos);
  CHECK(csv.str().rfind("metric,value\n", 0) == 0);

  const std::vector<Rotation> collapsed(400, target.components[0].center);
  const EvalReport bad = evaluate(collapsed, target, 400, 9);
  CHECK(bad.coverage.missing(bad.missing_threshold).size() == 3);
  CHECK(bad.w2_over_floor() > 2.5);
  CHECK_THROWS_AS(evaluate(collapsed, target, 401, 9), DomainError);
}

TEST_CASE("samples csv roundtrip") {
  std::mt19937_64 rng(86);
  std::vector<FrameSet> samples;
  for (int k = 0; k < 5; ++k) samples.push_back(oracle::random_frames(3, rng));
  std::stringstream io;
  write_samples_csv(samples, io);
  const std::string text = io.str();
  CHECK(text.rfind(std::string(kSamplesHeader) + "\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 5 * 3);

  const auto back = read_samples_csv(io);
  REQUIRE(back.size() == samples.size());
  for (std::size_t s = 0; s < samples.size(); ++s) {
    REQUIRE(back[s].size() == 3);
    for (std::size_t f = 0; f < 3; ++f) {
      CHECK((back[s][f].rot.matrix() - samples[s][f].rot.matrix()).norm() <= 1e-9);
      CHECK((back[s][f].trans - samples[s][f].trans).norm() <= 1e-9);
    }
  }

  // Euler and rotation-vector columns agree with recomputation.
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);
  std::getline(lines, line);
  std::vector<double> cols;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) cols.push_back(std::stod(cell));
  REQUIRE(cols.size() == 20);
  const EulerZXZ e = to_euler_xconv(samples[0][0].rot);
  CHECK(cols[14] == doctest::Approx(e.phi).epsilon(1e-12));
  CHECK(cols[15] == doctest::Approx(e.theta).epsilon(1e-12));
  CHECK(cols[16] == doctest::Approx(e.psi).epsilon(1e-12));
  const Vec3 rv = log_rotvec(samples[0][0].rot);
  for (int d = 0; d < 3; ++d) CHECK(cols[11 + d] == doctest::Approx(rv[d]).epsilon(1e-12));

  std::stringstream rotations;
  const auto rots = haar_set(4, rng);
  write_samples_csv(rots, rotations);
  const auto firsts = first_rotations(read_samples_csv(rotations));
  REQUIRE(firsts.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) CHECK(geodesic_distance(firsts[k], rots[k]) <= 1e-7);

  std::stringstream empty;
  write_samples_csv(std::vector<Rotation>{}, empty);
  CHECK(read_samples_csv(empty).empty());
}

TEST_CASE("malformed sample rows name the line") {
  const std::string header = std::string(kSamplesHeader) + "\n";
  const std::string good = "0,0,1,0,0,0,1,0,0,0,1,0,0,0,0,0,0,0,0,0\n";
  const auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      read_samples_csv(in);
    } catch (const CsvError& e) {
      return e.row();
    }
    return 0;
  };
  CHECK(line_of(header + good) == 0);
  CHECK(line_of(header + good + "1,0,1,0,0\n") == 3);
  CHECK(line_of(header + good + "1,0,2,0,0,0,1,0,0,0,1,0,0,0,0,0,0,0,0,0\n") == 3);
  CHECK(line_of(header + good + "3,0,1,0,0,0,1,0,0,0,1,0,0,0,0,0,0,0,0,0\n") == 3);
  CHECK(line_of(header + "0,0,x,0,0,0,1,0,0,0,1,0,0,0,0,0,0,0,0,0\n") == 2);
  CHECK(line_of("bad header\n" + good) == 1);
}
