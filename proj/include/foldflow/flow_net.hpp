#pragma once

// Time-conditioned vector field on SE(3)^N_0 (or SO(3) alone): a tanh MLP
// whose rotation outputs are projected onto the Lie algebra and whose
// translation outputs are mean-centered across frames. Gradients are
// hand-written reverse mode; the optimizer is Adam.

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "foldflow/se3.hpp"

namespace foldflow::net {

/// What the network consumes and predicts: `frames` rotations, plus one
/// translation per frame when `translations` is set.
struct StateLayout {
  std::size_t frames = 1;
  bool translations = false;

  std::size_t state_dim() const { return frames * (translations ? 12 : 9); }
  bool operator==(const StateLayout&) const = default;
};

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

struct FlowParams {
  std::vector<std::size_t> layer_dims;  // input, hidden..., output
  std::size_t time_embed_dim = 9;       // [t, sin(2 pi f t), cos(2 pi f t)] for f = 1, 2, 4, ...
  StateLayout layout;
  bool predict_x0 = false;  // rotation head is log_{r_t}(r0_hat); velocity = head / t
  std::vector<Layer> layers;

  std::size_t parameter_count() const;
  bool all_finite() const;
};

/// Same shapes as FlowParams::layers.
using Gradients = std::vector<Layer>;

struct OptimizerState {
  std::vector<Layer> first_moment;
  std::vector<Layer> second_moment;
  std::uint64_t step = 0;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

std::size_t expected_input_dim(const StateLayout& layout, std::size_t time_embed_dim);
std::size_t expected_output_dim(const StateLayout& layout);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases, seeded.
/// Throws DomainError when the dims do not fit the layout.
FlowParams init(const std::vector<std::size_t>& layer_dims, std::size_t time_embed_dim, const StateLayout& layout,
                std::uint64_t seed, bool predict_x0 = false);

/// [hidden x depth] convenience wrapper around init().
FlowParams init_mlp(const StateLayout& layout, std::size_t hidden, std::size_t hidden_layers, std::uint64_t seed,
                    std::size_t time_embed_dim = 9, bool predict_x0 = false);

OptimizerState init_optimizer(const FlowParams& params);

Eigen::VectorXd time_features(double t, std::size_t dim);

/// Algebra coordinates of the skew part of m: vee((m - m^T) / 2).
Vec3 project_tangent(const Mat3& m);

/// Field value per frame in algebra coordinates (rotation) and ambient
/// coordinates (translation, empty in SO(3)-only layouts).
struct FieldValue {
  std::vector<Vec3> rot;
  std::vector<Vec3> trans;
};

FieldValue forward(const FlowParams& params, double t, const FrameSet& state);
std::vector<FieldValue> forward_batch(const FlowParams& params, std::span<const double> times,
                                      std::span<const FrameSet> states);

/// Rotation head for a single-frame layout, as a tangent vector at r.
TangentRotation forward_rot(const FlowParams& params, double t, const Rotation& r);

/// Centered translation head.
std::vector<Vec3> forward_trans(const FlowParams& params, double t, const FrameSet& frames);

/// One regression sample: field at (t, state) should equal the targets.
struct Regression {
  double t = 1.0;
  FrameSet state;
  std::vector<Vec3> rot_target;
  std::vector<Vec3> trans_target;
};

struct LossWeights {
  double rotation = 0.5;
  double translation = 1.0;
};

struct LossResult {
  double loss_rot = 0.0;    // batch mean of sum_i ||v_i - u_i||^2_SO3 (Frobenius norm)
  double loss_trans = 0.0;  // batch mean of sum_i ||v_i - u_i||^2
  double loss_total = 0.0;  // weighted sum
  Gradients grads;
};

/// Thrown when a forward pass or loss goes non-finite.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, std::size_t index) : std::runtime_error(what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

/// Weighted mean squared residual and its exact gradient.
LossResult loss_grad(const FlowParams& params, std::span<const Regression> batch, const LossWeights& weights = {});

/// Loss only (no gradient), for finite-difference checks.
double loss_value(const FlowParams& params, std::span<const Regression> batch, const LossWeights& weights = {});

void adam_step(FlowParams& params, OptimizerState& state, const Gradients& grads, const AdamConfig& config);

// Checkpoints --------------------------------------------------------------

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  FlowParams params;
  OptimizerState optimizer;
  std::uint32_t variant = 0;  // caller-defined tag (training variant)
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace foldflow::net
