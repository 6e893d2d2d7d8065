#pragma once

// Generation by integrating the learned field from the prior (t = 1) down to
// t_min. Each step moves a state along its field value for a positive step
// dt while t decreases:
//   r <- r exp(hat(i(t) v dt + zeta gamma(t) sqrt(dt) xi)),
//   s <- center(s + i(t) v_s dt + zeta gamma_s(t) sqrt(dt) xi_s),
// with the annealing factor i(t) = c t (c = 0 disables it: i = 1).

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "foldflow/bridge.hpp"
#include "foldflow/flow_net.hpp"
#include "foldflow/se3.hpp"

namespace foldflow::infer {

struct InferConfig {
  std::size_t steps = 200;
  double t_min = 1e-2;
  double zeta = 0.0;
  double anneal_c = 0.0;  // 0 disables annealing
  bridge::DiffusionSchedule gamma = bridge::DiffusionSchedule::constant(0.0);
  bridge::DiffusionSchedule gamma_s = bridge::DiffusionSchedule::constant(0.0);

  /// i(t) = c t, or 1 when c = 0.
  double anneal(double t) const { return anneal_c > 0.0 ? anneal_c * t : 1.0; }
  /// Uniform step so that `steps` steps go exactly from 1 to t_min.
  double dt() const { return (1.0 - t_min) / static_cast<double>(steps); }
  /// Time at which step k (0-based) evaluates the field.
  double time_at(std::size_t k) const { return 1.0 - static_cast<double>(k) * dt(); }
  /// Throws DomainError for steps < 8, t_min outside (0, 0.1], zeta < 0 or c < 0.
  void validate() const;
};

class InferenceError : public std::runtime_error {
 public:
  InferenceError(const std::string& what, double t) : std::runtime_error(what), t_(t) {}
  double t() const { return t_; }

 private:
  double t_;
};

struct IntegrationStats {
  std::size_t reorthonormalizations = 0;  // states projected back after drift > 1e-6
  double max_orthonormality_error = 0.0;  // largest drift seen before projection
};

/// Deterministic integration (noise off regardless of zeta).
FrameSet ode_sample(const net::FlowParams& params, const InferConfig& config, const FrameSet& prior,
                    IntegrationStats* stats = nullptr);

/// Stochastic integration. Noise draws are skipped wherever zeta gamma(t) = 0,
/// so zeta = 0 reproduces ode_sample bit for bit.
FrameSet sde_sample(const net::FlowParams& params, const InferConfig& config, const FrameSet& prior,
                    std::mt19937_64& rng, IntegrationStats* stats = nullptr);

/// Integrates a batch through batched forward passes. Sample k draws its
/// noise from stream "noise/k" of `seed`. With `stochastic` false this equals
/// ode_sample on every prior up to floating-point reassociation in the
/// batched matrix products.
std::vector<FrameSet> sample_batch(const net::FlowParams& params, const InferConfig& config,
                                   std::span<const FrameSet> priors, bool stochastic, std::uint64_t seed,
                                   IntegrationStats* stats = nullptr);

/// Mean rotation-field norms along the integration grid.
struct FlowNormCurve {
  std::vector<double> times;
  std::vector<double> raw_unannealed;  // ||v|| along the unannealed trajectory
  std::vector<double> raw_annealed;    // ||v|| along the annealed trajectory
  std::vector<double> annealed;        // ||i(t) v|| along the annealed trajectory
  double anneal_c = 0.0;

  /// t,raw_unannealed,raw_annealed,annealed
  void write_csv(std::ostream& out) const;
};

/// Runs deterministic integration twice (with the configured c and with
/// c = 0) from the same priors and records mean tangent norms per step. A
/// config with c = 0 yields identical curves.
FlowNormCurve flow_norm_diagnostic(const net::FlowParams& params, const InferConfig& config,
                                   std::span<const FrameSet> priors);

}  // namespace foldflow::infer
