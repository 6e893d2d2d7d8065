#include "foldflow/inference.hpp"

#include <cmath>
#include <functional>
#include <ostream>

#include "foldflow/seeding.hpp"

namespace foldflow::infer {

void InferConfig::validate() const {
  if (steps < 8) throw DomainError("infer.steps must be at least 8");
  if (!(t_min > 0.0 && t_min <= 0.1)) throw DomainError("infer.t_min must lie in (0, 0.1]");
  if (!(zeta >= 0.0) || !std::isfinite(zeta)) throw DomainError("infer.zeta must be finite and >= 0");
  if (!(anneal_c >= 0.0) || !std::isfinite(anneal_c)) throw DomainError("infer.anneal_c must be finite and >= 0");
}

namespace {

constexpr double kDriftLimit = 1e-6;

using StepObserver = std::function<void(double t, double factor, const std::vector<net::FieldValue>&)>;

std::vector<net::FieldValue> evaluate_field(const net::FlowParams& params, double t, std::span<const FrameSet> states) {
  const std::vector<double> times(states.size(), t);
  try {
    return net::forward_batch(params, times, states);
  } catch (const net::NonFiniteError& e) {
    throw InferenceError("non-finite field value at t = " + std::to_string(t) + " for sample " +
                             std::to_string(e.index()),
                         t);
  }
}

Rotation guard_drift(const Rotation& r, IntegrationStats* stats) {
  const double err = r.orthonormality_error();
  if (stats != nullptr && err > stats->max_orthonormality_error) stats->max_orthonormality_error = err;
  if (err <= kDriftLimit) return r;
  if (stats != nullptr) ++stats->reorthonormalizations;
  return Rotation::project(r.matrix());
}

// `rngs` is empty for deterministic runs, otherwise one stream per state.
void integrate(const net::FlowParams& params, const InferConfig& config, std::vector<FrameSet>& states,
               std::span<std::mt19937_64* const> rngs, IntegrationStats* stats, const StepObserver& observe = {}) {
  config.validate();
  if (states.empty()) return;
  const double dt = config.dt();
  const double sqrt_dt = std::sqrt(dt);
  const bool translations = params.layout.translations;
  std::normal_distribution<double> normal(0.0, 1.0);

  for (std::size_t k = 0; k < config.steps; ++k) {
    const double t = config.time_at(k);
    const double factor = config.anneal(t);
    const std::vector<net::FieldValue> field = evaluate_field(params, t, states);
    if (observe) observe(t, factor, field);
    const double rot_noise = rngs.empty() ? 0.0 : config.zeta * config.gamma(t) * sqrt_dt;
    const double trans_noise = rngs.empty() ? 0.0 : config.zeta * config.gamma_s(t) * sqrt_dt;

    for (std::size_t b = 0; b < states.size(); ++b) {
      FrameSet& s = states[b];
      for (std::size_t i = 0; i < s.size(); ++i) {
        Vec3 increment = factor * dt * field[b].rot[i];
        if (rot_noise > 0.0) {
          std::mt19937_64& rng = *rngs[b];
          increment += rot_noise * Vec3(normal(rng), normal(rng), normal(rng));
        }
        s[i].rot = guard_drift(s[i].rot * exp_rotvec(increment), stats);
        if (translations) {
          s[i].trans += factor * dt * field[b].trans[i];
          if (trans_noise > 0.0) {
            std::mt19937_64& rng = *rngs[b];
            s[i].trans += trans_noise * Vec3(normal(rng), normal(rng), normal(rng));
          }
        }
      }
      if (translations) s = center(s);
    }
  }

  if (params.predict_x0) {
    // The head at t_min is the predicted jump to the data endpoint.
    const double t = config.t_min;
    const std::vector<net::FieldValue> field = evaluate_field(params, t, states);
    for (std::size_t b = 0; b < states.size(); ++b) {
      FrameSet& s = states[b];
      for (std::size_t i = 0; i < s.size(); ++i) {
        s[i].rot = guard_drift(s[i].rot * exp_rotvec(t * field[b].rot[i]), stats);
        if (translations) s[i].trans += t * field[b].trans[i];
      }
      if (translations) s = center(s);
    }
  }
}

void check_prior(const net::FlowParams& params, const FrameSet& prior) {
  if (prior.size() != params.layout.frames)
    throw DomainError("prior has " + std::to_string(prior.size()) + " frames, network expects " +
                      std::to_string(params.layout.frames));
  for (const auto& f : prior.frames)
    if (!f.rot.is_valid()) throw DomainError("prior rotation is not in SO(3)");
  if (params.layout.translations && !prior.is_centered()) throw DomainError("prior translations are not centered");
}

double mean_rotation_norm(const std::vector<net::FieldValue>& field, double factor) {
  double sum = 0.0;
  for (const net::FieldValue& v : field) {
    double sq = 0.0;
    for (const Vec3& w : v.rot) sq += tangent_norm_squared(factor * w);
    sum += std::sqrt(sq);
  }
  return sum / static_cast<double>(field.size());
}

}  // namespace

FrameSet ode_sample(const net::FlowParams& params, const InferConfig& config, const FrameSet& prior,
                    IntegrationStats* stats) {
  check_prior(params, prior);
  std::vector<FrameSet> states{prior};
  integrate(params, config, states, {}, stats);
  return states.front();
}

FrameSet sde_sample(const net::FlowParams& params, const InferConfig& config, const FrameSet& prior,
                    std::mt19937_64& rng, IntegrationStats* stats) {
  check_prior(params, prior);
  std::vector<FrameSet> states{prior};
  std::mt19937_64* const streams[1] = {&rng};
  integrate(params, config, states, streams, stats);
  return states.front();
}

std::vector<FrameSet> sample_batch(const net::FlowParams& params, const InferConfig& config,
                                   std::span<const FrameSet> priors, bool stochastic, std::uint64_t seed,
                                   IntegrationStats* stats) {
  for (const FrameSet& p : priors) check_prior(params, p);
  std::vector<FrameSet> states(priors.begin(), priors.end());
  std::vector<std::mt19937_64> streams;
  std::vector<std::mt19937_64*> handles;
  if (stochastic) {
    streams.reserve(priors.size());
    for (std::size_t k = 0; k < priors.size(); ++k) streams.emplace_back(stream_seed(seed, "noise", k));
    for (auto& s : streams) handles.push_back(&s);
  }
  integrate(params, config, states, handles, stats);
  return states;
}

void FlowNormCurve::write_csv(std::ostream& out) const {
  out << "t,raw_unannealed,raw_annealed,annealed\n";
  out.precision(10);
  for (std::size_t k = 0; k < times.size(); ++k)
    out << times[k] << ',' << raw_unannealed[k] << ',' << raw_annealed[k] << ',' << annealed[k] << '\n';
}

FlowNormCurve flow_norm_diagnostic(const net::FlowParams& params, const InferConfig& config,
                                   std::span<const FrameSet> priors) {
  if (priors.empty()) throw DomainError("flow norm diagnostic needs at least one prior sample");
  for (const FrameSet& p : priors) check_prior(params, p);
  FlowNormCurve curve;
  curve.anneal_c = config.anneal_c;

  InferConfig plain = config;
  plain.anneal_c = 0.0;
  std::vector<FrameSet> states(priors.begin(), priors.end());
  integrate(params, plain, states, {}, nullptr, [&](double t, double, const std::vector<net::FieldValue>& field) {
    curve.times.push_back(t);
    curve.raw_unannealed.push_back(mean_rotation_norm(field, 1.0));
  });

  states.assign(priors.begin(), priors.end());
  integrate(params, config, states, {}, nullptr,
            [&](double, double factor, const std::vector<net::FieldValue>& field) {
              curve.raw_annealed.push_back(mean_rotation_norm(field, 1.0));
              curve.annealed.push_back(mean_rotation_norm(field, factor));
            });
  return curve;
}

}  // namespace foldflow::infer
