#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "foldflow/flow_net.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace foldflow;
using namespace foldflow::net;

namespace {

const StateLayout kRot{1, false};
const StateLayout kSe3{4, true};

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("foldflow_test_" + name);
}

}  // namespace

TEST_CASE("init is deterministic and validates dims") {
  const FlowParams a = init_mlp(kRot, 32, 2, 7);
  const FlowParams b = init_mlp(kRot, 32, 2, 7);
  REQUIRE(a.layers.size() == 3);
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    CHECK(a.layers[l].weight == b.layers[l].weight);
    CHECK(a.layers[l].bias == b.layers[l].bias);
  }
  CHECK(a.layer_dims.front() == 18);
  CHECK(a.layer_dims.back() == 9);
  CHECK(init_mlp(kSe3, 16, 2, 1).layer_dims.front() == 9 + 48);
  CHECK_THROWS_AS(init({17, 8, 9}, 9, kRot, 0), DomainError);
  CHECK_THROWS_AS(init({18, 8, 10}, 9, kRot, 0), DomainError);
  CHECK_THROWS_AS(init({18, 9}, 9, kRot, 0), DomainError);
  CHECK_THROWS_AS(init({17, 8, 9}, 8, kRot, 0), DomainError);
}

TEST_CASE("forward at init is finite and bounded") {
  const FlowParams p = init_mlp(kRot, 128, 3, 11);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const TangentRotation v = forward_rot(p, u(rng), oracle::haar(rng));
    CHECK(v.algebra.allFinite());
    CHECK(tangent_norm(v.algebra) <= 10.0);
  }
}

TEST_CASE("rotation head is tangent by construction") {
  CHECK(project_tangent(Mat3::Identity() * 3.0).norm() == 0.0);
  std::mt19937_64 rng(5);
  for (int k = 0; k < 50; ++k) {
    Mat3 m = Mat3::Random();
    const Vec3 once = project_tangent(m);
    CHECK((project_tangent(hat(once)) - once).norm() == 0.0);
    const Mat3 sym = m + m.transpose();
    CHECK(project_tangent(sym).norm() < 1e-15);
  }
  const FlowParams p = init_mlp(kRot, 32, 2, 5);
  for (int k = 0; k < 50; ++k) {
    const Rotation r = oracle::haar(rng);
    const TangentRotation v = forward_rot(p, 0.3, r);
    const Mat3 ambient = r.matrix() * hat(v.algebra);
    const Mat3 back = r.matrix().transpose() * ambient;
    CHECK((back + back.transpose()).norm() <= 1e-12);
    CHECK((v.base.matrix() - r.matrix()).norm() == 0.0);
  }
}

TEST_CASE("symmetric raw output gives a zero field") {
  FlowParams p = init_mlp(kRot, 16, 2, 9);
  // Make the output layer emit a symmetric 3x3 block: rows (r,c) and (c,r) equal.
  Layer& out = p.layers.back();
  for (int r = 0; r < 3; ++r)
    for (int c = r + 1; c < 3; ++c) {
      out.weight.row(3 * c + r) = out.weight.row(3 * r + c);
      out.bias(3 * c + r) = out.bias(3 * r + c);
    }
  std::mt19937_64 rng(1);
  CHECK(forward_rot(p, 0.5, oracle::haar(rng)).algebra.norm() == 0.0);
}

TEST_CASE("translation head is centered") {
  const FlowParams p = init_mlp(kSe3, 32, 2, 4);
  std::mt19937_64 rng(8);
  for (double t : {0.01, 0.5, 1.0}) {
    const FrameSet f = oracle::random_frames(4, rng);
    const auto v = forward_trans(p, t, f);
    Vec3 sum = Vec3::Zero();
    for (const Vec3& x : v) {
      CHECK(x.allFinite());
      sum += x;
    }
    CHECK(sum.norm() <= 1e-9);
  }
  // Constant raw head across frames: zero output.
  FlowParams q = p;
  Layer& out = q.layers.back();
  for (int f = 1; f < 4; ++f)
    for (int k = 0; k < 3; ++k) {
      out.weight.row(36 + 3 * f + k) = out.weight.row(36 + k);
      out.bias(36 + 3 * f + k) = out.bias(36 + k);
    }
  for (const Vec3& x : forward_trans(q, 0.4, oracle::random_frames(4, rng))) CHECK(x.norm() < 1e-12);
}

TEST_CASE("batched forward matches single forward") {
  const FlowParams p = init_mlp(kSe3, 24, 2, 12);
  std::mt19937_64 rng(2);
  std::vector<double> times{0.1, 0.7, 0.95};
  std::vector<FrameSet> states;
  for (int k = 0; k < 3; ++k) states.push_back(oracle::random_frames(4, rng));
  const auto batch = forward_batch(p, times, states);
  for (std::size_t b = 0; b < 3; ++b) {
    const FieldValue single = forward(p, times[b], states[b]);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK((single.rot[i] - batch[b].rot[i]).norm() < 1e-14);
      CHECK((single.trans[i] - batch[b].trans[i]).norm() < 1e-14);
    }
  }
}

TEST_CASE("loss is zero at the network's own output") {
  const FlowParams p = init_mlp(kSe3, 16, 2, 3);
  std::mt19937_64 rng(4);
  std::vector<Regression> batch;
  for (int k = 0; k < 5; ++k) {
    Regression r = gradcheck::random_regression(kSe3, rng);
    const FieldValue v = forward(p, r.t, r.state);
    r.rot_target = v.rot;
    r.trans_target = v.trans;
    batch.push_back(r);
  }
  const LossResult res = loss_grad(p, batch);
  CHECK(res.loss_total < 1e-28);
  for (const Layer& g : res.grads) {
    CHECK(g.weight.cwiseAbs().maxCoeff() < 1e-14);
    CHECK(g.bias.cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("loss is nonnegative and uses the Frobenius tangent norm") {
  const FlowParams p = init_mlp(kRot, 8, 2, 6);
  std::mt19937_64 rng(6);
  for (int k = 0; k < 20; ++k) {
    const Regression r = gradcheck::random_regression(kRot, rng);
    const std::vector<Regression> one{r};
    const LossResult res = loss_grad(p, one, {1.0, 1.0});
    const Vec3 diff = forward_rot(p, r.t, r.state[0].rot).algebra - r.rot_target[0];
    const Mat3 ambient = hat(diff);
    CHECK(res.loss_total >= 0.0);
    CHECK(res.loss_rot == doctest::Approx(ambient.squaredNorm()).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(21);
  SUBCASE("single rotation, single sample") {
    const FlowParams p = init({18, 32, 32, 9}, 9, kRot, 17);
    const std::vector<Regression> batch{gradcheck::random_regression(kRot, rng)};
    CHECK(gradcheck::max_relative_error(p, batch) <= 1e-4);
  }
  SUBCASE("frames with translations, batch of 3") {
    const FlowParams p = init({9 + 36, 16, 16, 36}, 9, {3, true}, 5);
    std::vector<Regression> batch;
    for (int k = 0; k < 3; ++k) batch.push_back(gradcheck::random_regression({3, true}, rng));
    CHECK(gradcheck::max_relative_error(p, batch) <= 1e-4);
  }
  SUBCASE("x0-prediction head") {
    const FlowParams p = init({18, 16, 16, 9}, 9, kRot, 19, true);
    std::vector<Regression> batch{gradcheck::random_regression(kRot, rng), gradcheck::random_regression(kRot, rng)};
    CHECK(gradcheck::max_relative_error(p, batch) <= 1e-4);
  }
}

TEST_CASE("non-finite loss names the sample") {
  FlowParams p = init_mlp(kRot, 8, 2, 1);
  std::mt19937_64 rng(3);
  std::vector<Regression> batch{gradcheck::random_regression(kRot, rng), gradcheck::random_regression(kRot, rng)};
  batch[1].rot_target[0] = Vec3(NAN, 0, 0);
  try {
    (void)loss_grad(p, batch);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(e.index() == 1);
  }
  CHECK_THROWS_AS(loss_grad(p, std::span<const Regression>{}), DomainError);
}

TEST_CASE("adam update rule") {
  FlowParams p = init_mlp(kRot, 8, 2, 2);
  const FlowParams before = p;
  OptimizerState st = init_optimizer(p);
  Gradients zero = init_optimizer(p).first_moment;
  adam_step(p, st, zero, {});
  for (std::size_t l = 0; l < p.layers.size(); ++l) CHECK(p.layers[l].weight == before.layers[l].weight);

  // First step with a constant gradient moves by lr * g / (|g| + eps).
  FlowParams q = before;
  OptimizerState s2 = init_optimizer(q);
  Gradients g = init_optimizer(q).first_moment;
  g[0].weight(0, 0) = 0.37;
  g[1].bias(2) = -2.5;
  const AdamConfig cfg{1e-3, 0.9, 0.99, 1e-8};
  adam_step(q, s2, g, cfg);
  CHECK((q.layers[0].weight(0, 0) - before.layers[0].weight(0, 0)) == doctest::Approx(-1e-3).epsilon(0.01));
  CHECK((q.layers[1].bias(2) - before.layers[1].bias(2)) == doctest::Approx(1e-3).epsilon(0.01));
  CHECK(q.layers[0].weight(0, 1) == before.layers[0].weight(0, 1));
  CHECK(s2.step == 1);
}

TEST_CASE("checkpoint roundtrip and rejection") {
  FlowParams p = init_mlp(kSe3, 16, 2, 13, 9, true);
  OptimizerState st = init_optimizer(p);
  std::mt19937_64 rng(5);
  std::vector<Regression> batch{gradcheck::random_regression(kSe3, rng), gradcheck::random_regression(kSe3, rng)};
  for (int k = 0; k < 3; ++k) adam_step(p, st, loss_grad(p, batch).grads, {});
  const auto path = temp_file("ckpt.bin");
  save_checkpoint({p, st, 2}, path);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.variant == 2);
  CHECK(back.params.layout == p.layout);
  CHECK(back.params.predict_x0);
  CHECK(back.optimizer.step == 3);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    CHECK(back.params.layers[l].weight == p.layers[l].weight);
    CHECK(back.params.layers[l].bias == p.layers[l].bias);
    CHECK(back.optimizer.first_moment[l].weight == st.first_moment[l].weight);
    CHECK(back.optimizer.second_moment[l].bias == st.second_moment[l].bias);
  }
  for (int k = 0; k < 10; ++k) {
    const FrameSet f = oracle::random_frames(4, rng);
    const FieldValue a = forward(p, 0.42, f);
    const FieldValue b = forward(back.params, 0.42, f);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(a.rot[i] == b.rot[i]);
      CHECK(a.trans[i] == b.trans[i]);
    }
  }

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
  };
  write(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x40;
  write(flipped);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("checksum"), CheckpointError);
  std::string versioned = bytes;
  versioned[8] = 9;
  write(versioned);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("version 9"), CheckpointError);
  write("not a checkpoint");
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"), CheckpointError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
}
