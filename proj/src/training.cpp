#include "foldflow/training.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "foldflow/ot.hpp"
#include "foldflow/seeding.hpp"

namespace foldflow::train {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::base:
      return "base";
    case Variant::ot:
      return "ot";
    case Variant::sfm:
      return "sfm";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  if (name == "base") return Variant::base;
  if (name == "ot") return Variant::ot;
  if (name == "sfm") return Variant::sfm;
  throw DomainError("unknown variant '" + std::string(name) + "' (expected base, ot or sfm)");
}

void TrainConfig::validate() const {
  if (!(t_min > 0.0 && t_min <= 0.1)) throw DomainError("train.t_min must lie in (0, 0.1]");
  if (batch_size < 1) throw DomainError("train.batch_size must be at least 1");
  if (variant != Variant::base && batch_size < 2) throw DomainError("train.batch_size must be at least 2 for OT pairing");
  if (variant != Variant::base && batch_size > ot_cap)
    throw DomainError("train.batch_size exceeds the OT batch cap of " + std::to_string(ot_cap));
  if (!(lr > 0.0) || !std::isfinite(lr)) throw DomainError("train.lr must be positive");
  if (weights.rotation < 0.0 || weights.translation < 0.0) throw DomainError("loss weights must be nonnegative");
  if (layout.frames == 0) throw DomainError("model.frames must be at least 1");
  if (hidden == 0 || hidden_layers == 0) throw DomainError("model.hidden and model.layers must be positive");
}

StateSampler prior_sampler(const net::StateLayout& layout) {
  return [layout](std::mt19937_64& rng) {
    FrameSet f;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < layout.frames; ++i) {
      RigidTransform x{sample_uniform(rng), Vec3::Zero()};
      if (layout.translations) x.trans = Vec3(normal(rng), normal(rng), normal(rng));
      f.frames.push_back(x);
    }
    return layout.translations ? center(f) : f;
  };
}

Pairs make_pair_base(const std::vector<FrameSet>& src, const std::vector<FrameSet>& dst, std::mt19937_64&) {
  if (src.size() != dst.size()) throw DomainError("pairing needs batches of equal size");
  Pairs pairs;
  pairs.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) pairs.emplace_back(src[i], dst[i]);
  return pairs;
}

Pairs make_pair_ot(const std::vector<FrameSet>& src, const std::vector<FrameSet>& dst, std::mt19937_64& rng,
                   std::size_t cap) {
  for (const FrameSet& f : src)
    if (!f.is_centered()) throw DomainError("OT pairing needs centered frame sets");
  for (const FrameSet& f : dst)
    if (!f.is_centered()) throw DomainError("OT pairing needs centered frame sets");
  const ot::TransportPlan plan = ot::solve_exact(ot::cost_matrix(src, dst), cap);
  Pairs pairs;
  pairs.reserve(src.size());
  for (const auto& [i, j] : ot::sample_pairs(plan, rng)) pairs.emplace_back(src[i], dst[j]);
  return pairs;
}

TrainingTuple make_tuple(Variant variant, const FrameSet& x0, const FrameSet& x1, double t, const TrainConfig& config,
                         std::mt19937_64& rng) {
  if (!(t >= config.t_min && t <= 1.0))
    throw DomainError("tuple time " + std::to_string(t) + " outside [t_min, 1]");
  if (x0.size() != x1.size() || x0.size() == 0) throw DomainError("tuple endpoints differ in frame count");

  TrainingTuple tuple;
  tuple.t = t;
  tuple.x0 = x0;
  tuple.x1 = x1;
  if (variant == Variant::sfm) {
    tuple.state = x0;
    bool noisy_trans = false;
    for (std::size_t i = 0; i < x0.size(); ++i) {
      tuple.state[i].rot = bridge::approx_bridge_sample(x0[i].rot, x1[i].rot, t, config.gamma_r, rng);
      const double gs = config.gamma_s(t);
      tuple.state[i].trans = bridge::euclid_bridge_sample(x0[i].trans, x1[i].trans, t, gs, rng);
      noisy_trans = noisy_trans || (gs > 0.0 && t < 1.0);
    }
    // Independent per-frame noise leaves the centered subspace; project back.
    if (noisy_trans && config.layout.translations) tuple.state = center(tuple.state);
  } else {
    tuple.state = frameset_interpolant(x0, x1, t);
  }

  for (std::size_t i = 0; i < x0.size(); ++i) {
    tuple.rot_target.push_back(log_map(tuple.state[i].rot, x0[i].rot).algebra / t);
    if (config.layout.translations) tuple.trans_target.push_back((tuple.state[i].trans - x0[i].trans) / t);
  }
  return tuple;
}

net::Regression to_regression(const TrainingTuple& tuple, const net::StateLayout& layout) {
  net::Regression r;
  r.t = tuple.t;
  r.state = tuple.state;
  r.rot_target = tuple.rot_target;
  if (layout.translations) r.trans_target = tuple.trans_target;
  return r;
}

void write_loss_csv(const std::vector<LossRow>& rows, std::ostream& out) {
  out << "step,loss_rot,loss_trans,loss_total\n";
  out.precision(17);
  for (const LossRow& r : rows) out << r.step << ',' << r.loss_rot << ',' << r.loss_trans << ',' << r.loss_total << '\n';
}

namespace {

std::string dump_tuple(const TrainingTuple& tuple) {
  std::ostringstream os;
  os.precision(17);
  os << "t = " << tuple.t << '\n';
  for (std::size_t i = 0; i < tuple.state.size(); ++i) {
    os << "frame " << i << ": x0 rotvec " << log_rotvec(tuple.x0[i].rot).transpose() << ", x1 rotvec "
       << log_rotvec(tuple.x1[i].rot).transpose() << ", state rotvec " << log_rotvec(tuple.state[i].rot).transpose()
       << ", rot target " << tuple.rot_target[i].transpose();
    if (!tuple.trans_target.empty()) os << ", trans target " << tuple.trans_target[i].transpose();
    os << '\n';
  }
  return os.str();
}

}  // namespace

TrainResult train_loop(const TrainConfig& config, const StateSampler& data, const StateSampler& prior,
                       const ProgressFn& progress) {
  config.validate();
  TrainResult result;
  result.params = net::init_mlp(config.layout, config.hidden, config.hidden_layers, stream_seed(config.seed, "init"),
                                9, config.predict_x0);
  result.optimizer = net::init_optimizer(result.params);
  const net::AdamConfig adam{config.lr, 0.9, 0.99, 1e-8};

  std::mt19937_64 data_rng = make_stream(config.seed, "data");
  std::mt19937_64 prior_rng = make_stream(config.seed, "prior");
  std::mt19937_64 time_rng = make_stream(config.seed, "time");
  std::mt19937_64 pair_rng = make_stream(config.seed, "pair");
  std::mt19937_64 bridge_rng = make_stream(config.seed, "bridge");
  std::uniform_real_distribution<double> time_dist(config.t_min, 1.0);

  const std::size_t n = config.batch_size;
  std::vector<FrameSet> x0s(n), x1s(n);
  std::vector<TrainingTuple> tuples(n);
  std::vector<net::Regression> batch(n);
  result.history.reserve(config.steps);

  for (std::size_t step = 0; step < config.steps; ++step) {
    for (std::size_t b = 0; b < n; ++b) x0s[b] = data(data_rng);
    for (std::size_t b = 0; b < n; ++b) x1s[b] = prior(prior_rng);
    const Pairs pairs = config.variant == Variant::base ? make_pair_base(x0s, x1s, pair_rng)
                                                         : make_pair_ot(x0s, x1s, pair_rng, config.ot_cap);
    for (std::size_t b = 0; b < n; ++b) {
      const double t = time_dist(time_rng);
      tuples[b] = make_tuple(config.variant, pairs[b].first, pairs[b].second, t, config, bridge_rng);
      batch[b] = to_regression(tuples[b], config.layout);
    }

    net::LossResult loss;
    try {
      loss = net::loss_grad(result.params, batch, config.weights);
    } catch (const net::NonFiniteError& e) {
      throw TrainingError("non-finite loss at step " + std::to_string(step) + " (" + e.what() + ")\n" +
                              dump_tuple(tuples[e.index()]),
                          step);
    }
    if (!std::isfinite(loss.loss_total))
      throw TrainingError("non-finite loss at step " + std::to_string(step), step);

    net::adam_step(result.params, result.optimizer, loss.grads, adam);
    if (!result.params.all_finite())
      throw TrainingError("parameters became non-finite at step " + std::to_string(step), step);
    const LossRow row{step, loss.loss_rot, loss.loss_trans, loss.loss_total};
    result.history.push_back(row);
    if (progress) progress(row);
  }
  return result;
}

}  // namespace foldflow::train
