#pragma once

// Conditional flow matching on SO(3) and SE(3)^N_0.
//
// Three variants share one pipeline:
//   base  independent pairs, deterministic geodesic interpolant
//   ot    pairs from the exact minibatch OT plan, deterministic interpolant
//   sfm   OT pairs, interpolant perturbed by the simulation-free bridge noise
// Data sits at t = 0, the prior at t = 1; regression targets point from the
// noisy state toward the data endpoint: log_{x_t}(x0) / t.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "foldflow/bridge.hpp"
#include "foldflow/flow_net.hpp"
#include "foldflow/ot.hpp"
#include "foldflow/se3.hpp"

namespace foldflow::train {

enum class Variant : std::uint32_t { base = 0, ot = 1, sfm = 2 };

std::string_view to_string(Variant v);
/// Accepts "base", "ot", "sfm"; throws DomainError otherwise.
Variant parse_variant(std::string_view name);

struct TrainConfig {
  Variant variant = Variant::base;
  std::size_t batch_size = 256;
  std::size_t steps = 50000;
  double lr = 1e-4;
  double t_min = 1e-2;
  bridge::DiffusionSchedule gamma_r = bridge::DiffusionSchedule::constant(0.1);
  bridge::DiffusionSchedule gamma_s = bridge::DiffusionSchedule::constant(0.1);
  std::uint64_t seed = 0;
  net::LossWeights weights{};
  net::StateLayout layout{};  // SO(3)-only by default
  std::size_t hidden = 128;
  std::size_t hidden_layers = 2;  // three linear layers
  bool predict_x0 = false;
  std::size_t ot_cap = ot::kDefaultBatchCap;

  /// Throws DomainError naming the offending field.
  void validate() const;
};

using StateSampler = std::function<FrameSet(std::mt19937_64&)>;

/// Haar rotations with centered standard normal translations (when the
/// layout has translations).
StateSampler prior_sampler(const net::StateLayout& layout);

using Pairs = std::vector<std::pair<FrameSet, FrameSet>>;

/// Index-aligned pairs (src[i], dst[i]). The rng is unused: the batches are
/// already independent draws.
Pairs make_pair_base(const std::vector<FrameSet>& src, const std::vector<FrameSet>& dst, std::mt19937_64& rng);

/// Pairs drawn from the exact OT plan between the two batches.
Pairs make_pair_ot(const std::vector<FrameSet>& src, const std::vector<FrameSet>& dst, std::mt19937_64& rng,
                   std::size_t cap = ot::kDefaultBatchCap);

struct TrainingTuple {
  double t = 1.0;
  FrameSet x0, x1;
  FrameSet state;                  // noisy state at time t
  std::vector<Vec3> rot_target;    // algebra coordinates at state[i].rot
  std::vector<Vec3> trans_target;  // empty without translations
};

/// Throws DomainError for t outside [t_min, 1].
TrainingTuple make_tuple(Variant variant, const FrameSet& x0, const FrameSet& x1, double t, const TrainConfig& config,
                         std::mt19937_64& rng);

net::Regression to_regression(const TrainingTuple& tuple, const net::StateLayout& layout);

struct LossRow {
  std::size_t step = 0;
  double loss_rot = 0.0;
  double loss_trans = 0.0;
  double loss_total = 0.0;
};

void write_loss_csv(const std::vector<LossRow>& rows, std::ostream& out);

struct TrainResult {
  net::FlowParams params;
  net::OptimizerState optimizer;
  std::vector<LossRow> history;
};

/// Raised when a step produces a non-finite loss; `what()` names the step
/// and dumps the offending tuple.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t step) : std::runtime_error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

using ProgressFn = std::function<void(const LossRow&)>;

/// Runs config.steps optimizer steps from a fresh initialization. Random
/// streams (see seeding.hpp): "init", "data", "prior", "time", "pair",
/// "bridge", all derived from config.seed.
TrainResult train_loop(const TrainConfig& config, const StateSampler& data, const StateSampler& prior,
                       const ProgressFn& progress = {});

}  // namespace foldflow::train
