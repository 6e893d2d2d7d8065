#include <doctest.h>

#include <Eigen/Geometry>
#include <sstream>

#include "foldflow/inference.hpp"
#include "oracles.hpp"
#include "overfit.hpp"

using namespace foldflow;
using namespace foldflow::infer;

namespace {

net::FlowParams zero_net(const net::StateLayout& layout = {}) {
  net::FlowParams p = net::init_mlp(layout, 16, 2, 1);
  for (auto& layer : p.layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  return p;
}

const train::TrainResult& overfit_net() {
  static const train::TrainResult r = overfit::train();
  return r;
}

// Brownian motion on SO(3) by composing small quaternion increments.
double random_walk_msd(double sigma, std::size_t steps, double dt, int paths, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale = sigma * std::sqrt(dt);
  double total = 0.0;
  for (int p = 0; p < paths; ++p) {
    Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
    for (std::size_t k = 0; k < steps; ++k) {
      const Eigen::Vector3d w(scale * normal(rng), scale * normal(rng), scale * normal(rng));
      const double angle = w.norm();
      const Eigen::Quaterniond step(Eigen::AngleAxisd(angle, angle > 0 ? Eigen::Vector3d(w / angle)
                                                                        : Eigen::Vector3d::UnitX()));
      q = q * step;
    }
    const double angle = 2.0 * std::atan2(q.vec().norm(), std::abs(q.w()));
    total += 2.0 * angle * angle;  // squared Frobenius geodesic distance
  }
  return total / paths;
}

}  // namespace

TEST_CASE("config") {
  InferConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.dt() == doctest::Approx(0.99 / 200));
  CHECK(c.time_at(0) == 1.0);
  CHECK(c.time_at(200) == doctest::Approx(0.01));
  CHECK(c.anneal(0.3) == 1.0);
  c.anneal_c = 10.0;
  CHECK(c.anneal(0.3) == doctest::Approx(3.0));
  c.steps = 4;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = InferConfig{};
  c.zeta = -1.0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = InferConfig{};
  c.t_min = 0.0;
  CHECK_THROWS_AS(c.validate(), DomainError);
}

TEST_CASE("zero network leaves the prior in place") {
  const net::FlowParams p = zero_net({3, true});
  std::mt19937_64 rng(71);
  const FrameSet prior = oracle::random_frames(3, rng);
  const FrameSet out = ode_sample(p, InferConfig{}, prior);
  CHECK(product_distance(out, prior) <= 1e-12);
  const auto flat = flow_norm_diagnostic(zero_net(), InferConfig{}, std::vector<FrameSet>{FrameSet::single(oracle::haar(rng))});
  for (std::size_t k = 0; k < flat.times.size(); ++k) {
    CHECK(flat.raw_unannealed[k] == 0.0);
    CHECK(flat.annealed[k] == 0.0);
  }
  FrameSet bad = prior;
  bad[0].trans += Vec3(1, 0, 0);
  CHECK_THROWS_AS(ode_sample(p, InferConfig{}, bad), DomainError);
  CHECK_THROWS_AS(ode_sample(p, InferConfig{}, FrameSet::single(Rotation::identity())), DomainError);
}

TEST_CASE("non-finite field aborts with the time") {
  net::FlowParams p = zero_net();
  p.layers.back().bias(0) = std::numeric_limits<double>::quiet_NaN();
  try {
    ode_sample(p, InferConfig{}, FrameSet::single(Rotation::identity()));
    FAIL("expected InferenceError");
  } catch (const InferenceError& e) {
    CHECK(e.t() == 1.0);
  }
}

TEST_CASE("overfit network transports the prior onto the data") {
  const auto& trained = overfit_net();
  const FrameSet out = ode_sample(trained.params, InferConfig{}, FrameSet::single(overfit::prior_rotation()));
  CHECK(geodesic_distance(out[0].rot, overfit::data_rotation()) <= 0.05);
}

TEST_CASE("step refinement converges at first order") {
  // Successive differences of a first-order scheme halve with the step.
  const auto ratio = [](const net::FlowParams& params, const FrameSet& prior) {
    const auto run = [&](std::size_t steps) {
      InferConfig c;
      c.steps = steps;
      return ode_sample(params, c, prior)[0].rot;
    };
    const Rotation a = run(200), b = run(400), c = run(800);
    return geodesic_distance(a, b) / geodesic_distance(b, c);
  };
  // A generic field: the leading error term is first order.
  std::mt19937_64 rng(77);
  for (std::uint64_t seed : {1, 2, 3}) {
    const net::FlowParams random = net::init_mlp({}, 64, 2, seed);
    const double r = ratio(random, FrameSet::single(oracle::haar(rng)));
    CHECK(r >= 1.8);
    CHECK(r <= 2.2);
  }
  // Along a learned geodesic the exponential steps are nearly exact, so the
  // differences shrink at least as fast.
  CHECK(ratio(overfit_net().params, FrameSet::single(overfit::prior_rotation())) >= 1.8);
}

TEST_CASE("stochastic sampler without noise is the ODE sampler") {
  const auto& trained = overfit_net();
  std::mt19937_64 rng(72);
  InferConfig c;
  c.gamma = bridge::DiffusionSchedule::constant(0.5);
  c.zeta = 0.0;
  for (int k = 0; k < 5; ++k) {
    const FrameSet prior = FrameSet::single(oracle::haar(rng));
    std::mt19937_64 noise(k);
    CHECK(sde_sample(trained.params, c, prior, noise)[0].rot.matrix() ==
          ode_sample(trained.params, c, prior)[0].rot.matrix());
  }
}

TEST_CASE("batched sampling matches single-path sampling") {
  const auto& trained = overfit_net();
  std::mt19937_64 rng(73);
  std::vector<FrameSet> priors;
  for (int k = 0; k < 16; ++k) priors.push_back(FrameSet::single(oracle::haar(rng)));
  InferConfig c;
  const auto batch = sample_batch(trained.params, c, priors, false, 0);
  REQUIRE(batch.size() == priors.size());
  for (std::size_t k = 0; k < priors.size(); ++k)
    CHECK(geodesic_distance(batch[k][0].rot, ode_sample(trained.params, c, priors[k])[0].rot) <= 1e-9);

  c.zeta = 1.0;
  c.gamma = bridge::DiffusionSchedule::constant(0.3);
  const auto a = sample_batch(trained.params, c, priors, true, 11);
  const auto b = sample_batch(trained.params, c, priors, true, 11);
  const auto d = sample_batch(trained.params, c, priors, true, 12);
  for (std::size_t k = 0; k < priors.size(); ++k) {
    CHECK(a[k][0].rot.matrix() == b[k][0].rot.matrix());
    CHECK(a[k][0].rot.matrix() != d[k][0].rot.matrix());
  }
}

TEST_CASE("noise alone is a Brownian motion") {
  InferConfig c;
  c.zeta = 1.0;
  c.gamma = bridge::DiffusionSchedule::constant(0.5);
  const std::vector<FrameSet> priors(20000, FrameSet::single(Rotation::about_x(0.3)));
  const auto out = sample_batch(zero_net(), c, priors, true, 5);
  double msd = 0.0;
  for (const auto& f : out) msd += std::pow(geodesic_distance(f[0].rot, priors[0][0].rot), 2);
  msd /= static_cast<double>(out.size());
  std::mt19937_64 rng(74);
  const double oracle_msd = random_walk_msd(0.5, c.steps, c.dt(), 100000, rng);
  CHECK(std::abs(msd - oracle_msd) <= 0.05 * oracle_msd);
}

TEST_CASE("states stay on the manifold") {
  const auto& trained = overfit_net();
  InferConfig c;
  c.steps = 1000;
  c.zeta = 1.0;
  c.gamma = bridge::DiffusionSchedule::constant(1.0);
  std::mt19937_64 rng(75);
  IntegrationStats stats;
  for (int k = 0; k < 10; ++k) {
    const FrameSet out = sde_sample(trained.params, c, FrameSet::single(oracle::haar(rng)), rng, &stats);
    CHECK(out[0].rot.orthonormality_error() <= 1e-6);
    CHECK(out[0].rot.is_valid());
  }
  CHECK(stats.max_orthonormality_error <= 1e-6);
  CHECK(stats.reorthonormalizations == 0);

  const net::FlowParams frames = zero_net({4, true});
  InferConfig noisy;
  noisy.zeta = 1.0;
  noisy.gamma = noisy.gamma_s = bridge::DiffusionSchedule::constant(0.5);
  const FrameSet out = sde_sample(frames, noisy, oracle::random_frames(4, rng), rng);
  CHECK(out.is_centered());
}

TEST_CASE("flow norm diagnostic") {
  const auto& trained = overfit_net();
  std::mt19937_64 rng(76);
  std::vector<FrameSet> priors;
  for (int k = 0; k < 32; ++k) priors.push_back(FrameSet::single(oracle::haar(rng)));
  InferConfig c;
  c.anneal_c = 10.0;
  const FlowNormCurve curve = flow_norm_diagnostic(trained.params, c, priors);
  REQUIRE(curve.times.size() == c.steps);
  for (std::size_t k = 0; k < curve.times.size(); ++k) {
    CHECK(std::isfinite(curve.raw_unannealed[k]));
    CHECK(curve.annealed[k] == doctest::Approx(c.anneal(curve.times[k]) * curve.raw_annealed[k]).epsilon(1e-12));
  }
  CHECK(curve.times.front() == 1.0);
  CHECK(curve.raw_unannealed.front() == doctest::Approx(curve.raw_annealed.front()).epsilon(1e-12));

  c.anneal_c = 0.0;
  const FlowNormCurve plain = flow_norm_diagnostic(trained.params, c, priors);
  CHECK(plain.raw_unannealed == plain.raw_annealed);
  CHECK(plain.raw_annealed == plain.annealed);

  std::ostringstream csv;
  plain.write_csv(csv);
  CHECK(csv.str().rfind("t,raw_unannealed,raw_annealed,annealed\n", 0) == 0);
  CHECK_THROWS_AS(flow_norm_diagnostic(trained.params, c, {}), DomainError);
}
