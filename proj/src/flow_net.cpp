#include "foldflow/flow_net.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

namespace foldflow::net {

namespace {

using Matrix = Eigen::MatrixXd;

void check_time_embed_dim(std::size_t dim) {
  if (dim == 0 || dim % 2 == 0) throw DomainError("time embedding dimension must be odd (t plus sin/cos pairs)");
}

// Column-major batch input: one column per sample.
Matrix build_inputs(const FlowParams& params, std::span<const double> times, std::span<const FrameSet> states) {
  const std::size_t in = params.layer_dims.front();
  const std::size_t n_frames = params.layout.frames;
  Matrix x(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(states.size()));
  for (std::size_t b = 0; b < states.size(); ++b) {
    const FrameSet& s = states[b];
    if (s.size() != n_frames)
      throw DomainError("state has " + std::to_string(s.size()) + " frames, network expects " +
                        std::to_string(n_frames));
    auto col = x.col(static_cast<Eigen::Index>(b));
    col.head(static_cast<Eigen::Index>(params.time_embed_dim)) = time_features(times[b], params.time_embed_dim);
    Eigen::Index row = static_cast<Eigen::Index>(params.time_embed_dim);
    for (std::size_t i = 0; i < n_frames; ++i)
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) col(row++) = s[i].rot(r, c);
    if (params.layout.translations)
      for (std::size_t i = 0; i < n_frames; ++i)
        for (int k = 0; k < 3; ++k) col(row++) = s[i].trans[k];
  }
  return x;
}

// Activations of every layer; acts.back() is the raw linear output.
std::vector<Matrix> run_layers(const FlowParams& params, const Matrix& x) {
  std::vector<Matrix> acts;
  acts.reserve(params.layers.size() + 1);
  acts.push_back(x);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const Layer& layer = params.layers[l];
    Matrix z = layer.weight * acts.back();
    z.colwise() += layer.bias;
    if (l + 1 < params.layers.size()) z = z.array().tanh().matrix();
    acts.push_back(std::move(z));
  }
  return acts;
}

// Rotation velocity of frame i from the raw output column.
Vec3 rotation_head(const FlowParams& params, const Eigen::Ref<const Eigen::VectorXd>& y, std::size_t i, double t) {
  const Eigen::Index o = static_cast<Eigen::Index>(9 * i);
  // Row-major 3x3 block: m(r, c) = y(o + 3r + c).
  Vec3 v(0.5 * (y(o + 7) - y(o + 5)), 0.5 * (y(o + 2) - y(o + 6)), 0.5 * (y(o + 3) - y(o + 1)));
  if (params.predict_x0) v /= t;
  return v;
}

FieldValue decode(const FlowParams& params, const Eigen::Ref<const Eigen::VectorXd>& y, double t) {
  const std::size_t n = params.layout.frames;
  FieldValue out;
  out.rot.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.rot.push_back(rotation_head(params, y, i, t));
  if (params.layout.translations) {
    const Eigen::Index base = static_cast<Eigen::Index>(9 * n);
    Vec3 mean = Vec3::Zero();
    for (std::size_t i = 0; i < n; ++i) mean += y.segment<3>(base + static_cast<Eigen::Index>(3 * i));
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      out.trans.push_back(y.segment<3>(base + static_cast<Eigen::Index>(3 * i)) - mean);
  }
  return out;
}

std::vector<Layer> zeros_like(const std::vector<Layer>& layers) {
  std::vector<Layer> out;
  out.reserve(layers.size());
  for (const Layer& l : layers)
    out.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
  return out;
}

// Forward pass and loss; fills dY (d loss / d raw output) when requested.
LossResult evaluate(const FlowParams& params, std::span<const Regression> batch, const LossWeights& weights,
                    bool want_grad) {
  if (batch.empty()) throw DomainError("loss batch is empty");
  const std::size_t n_frames = params.layout.frames;
  const bool with_trans = params.layout.translations;

  std::vector<double> times(batch.size());
  std::vector<FrameSet> states;
  states.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    times[b] = batch[b].t;
    states.push_back(batch[b].state);
    if (batch[b].rot_target.size() != n_frames || (with_trans && batch[b].trans_target.size() != n_frames))
      throw DomainError("regression target does not match the network layout");
  }
  const Matrix x = build_inputs(params, times, states);
  const std::vector<Matrix> acts = run_layers(params, x);
  const Matrix& y = acts.back();

  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  LossResult result;
  Matrix dy;
  if (want_grad) dy = Matrix::Zero(y.rows(), y.cols());

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto col = y.col(static_cast<Eigen::Index>(b));
    if (!col.allFinite()) throw NonFiniteError("network output is non-finite for sample " + std::to_string(b), b);
    const double t = batch[b].t;
    const FieldValue field = decode(params, col, t);
    double rot_sq = 0.0;
    double trans_sq = 0.0;
    for (std::size_t i = 0; i < n_frames; ++i) {
      const Vec3 r = field.rot[i] - batch[b].rot_target[i];
      rot_sq += tangent_norm_squared(r);
      if (want_grad) {
        // d/drho of w_rot * 2 ||rho - u||^2 / B, then through rho = vee(skew(M)) (/ t).
        Vec3 g = 4.0 * weights.rotation * inv_batch * r;
        if (params.predict_x0) g /= t;
        const Eigen::Index o = static_cast<Eigen::Index>(9 * i);
        auto d = dy.col(static_cast<Eigen::Index>(b));
        d(o + 7) += 0.5 * g.x();
        d(o + 5) -= 0.5 * g.x();
        d(o + 2) += 0.5 * g.y();
        d(o + 6) -= 0.5 * g.y();
        d(o + 3) += 0.5 * g.z();
        d(o + 1) -= 0.5 * g.z();
      }
    }
    if (with_trans) {
      const Eigen::Index base = static_cast<Eigen::Index>(9 * n_frames);
      std::vector<Vec3> g(n_frames);
      Vec3 g_mean = Vec3::Zero();
      for (std::size_t i = 0; i < n_frames; ++i) {
        const Vec3 r = field.trans[i] - batch[b].trans_target[i];
        trans_sq += r.squaredNorm();
        g[i] = 2.0 * weights.translation * inv_batch * r;
        g_mean += g[i];
      }
      if (want_grad) {
        g_mean /= static_cast<double>(n_frames);
        auto d = dy.col(static_cast<Eigen::Index>(b));
        for (std::size_t i = 0; i < n_frames; ++i)
          d.segment<3>(base + static_cast<Eigen::Index>(3 * i)) += g[i] - g_mean;
      }
    }
    if (!std::isfinite(rot_sq) || !std::isfinite(trans_sq))
      throw NonFiniteError("loss is non-finite for sample " + std::to_string(b), b);
    result.loss_rot += rot_sq * inv_batch;
    result.loss_trans += trans_sq * inv_batch;
  }
  result.loss_total = weights.rotation * result.loss_rot + weights.translation * result.loss_trans;
  if (!want_grad) return result;

  result.grads = zeros_like(params.layers);
  Matrix delta = std::move(dy);
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    result.grads[l].weight.noalias() = delta * acts[l].transpose();
    result.grads[l].bias = delta.rowwise().sum();
    if (l == 0) break;
    Matrix up = params.layers[l].weight.transpose() * delta;
    delta = (up.array() * (1.0 - acts[l].array().square())).matrix();
  }
  return result;
}

// Little-endian byte writer/reader -----------------------------------------

class ByteWriter {
 public:
  template <class T>
  void put(T value) {
    std::array<unsigned char, sizeof(T)> raw;
    std::memcpy(raw.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    bytes_.insert(bytes_.end(), raw.begin(), raw.end());
  }
  void put_bytes(const char* data, std::size_t n) { bytes_.insert(bytes_.end(), data, data + n); }
  void put_layers(const std::vector<Layer>& layers) {
    for (const Layer& l : layers) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) put<double>(l.weight(r, c));
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) put<double>(l.bias(r));
    }
  }
  const std::vector<unsigned char>& bytes() const { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > size_) throw CheckpointError("checkpoint is truncated");
    std::array<unsigned char, sizeof(T)> raw;
    std::memcpy(raw.data(), data_ + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw.data(), sizeof(T));
    return value;
  }
  void get_layers(std::vector<Layer>& layers) {
    for (Layer& l : layers) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = get<double>();
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = get<double>();
    }
  }
  std::size_t position() const { return pos_; }

 private:
  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[8] = {'F', 'O', 'L', 'D', 'F', 'L', 'O', 'W'};

std::uint64_t fnv1a(const unsigned char* data, std::size_t n) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

std::size_t FlowParams::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool FlowParams::all_finite() const {
  for (const Layer& l : layers)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

std::size_t expected_input_dim(const StateLayout& layout, std::size_t time_embed_dim) {
  return time_embed_dim + layout.state_dim();
}

std::size_t expected_output_dim(const StateLayout& layout) { return layout.state_dim(); }

FlowParams init(const std::vector<std::size_t>& layer_dims, std::size_t time_embed_dim, const StateLayout& layout,
                std::uint64_t seed, bool predict_x0) {
  check_time_embed_dim(time_embed_dim);
  if (layout.frames == 0) throw DomainError("network layout needs at least one frame");
  if (layer_dims.size() < 3) throw DomainError("network needs an input, at least one hidden, and an output layer");
  if (layer_dims.front() != expected_input_dim(layout, time_embed_dim))
    throw DomainError("input dimension " + std::to_string(layer_dims.front()) + " does not match layout (expected " +
                      std::to_string(expected_input_dim(layout, time_embed_dim)) + ")");
  if (layer_dims.back() != expected_output_dim(layout))
    throw DomainError("output dimension " + std::to_string(layer_dims.back()) + " does not match layout (expected " +
                      std::to_string(expected_output_dim(layout)) + ")");
  for (std::size_t d : layer_dims)
    if (d == 0) throw DomainError("layer dimensions must be positive");

  FlowParams params;
  params.layer_dims = layer_dims;
  params.time_embed_dim = time_embed_dim;
  params.layout = layout;
  params.predict_x0 = predict_x0;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(layer_dims[l]);
    const auto out = static_cast<Eigen::Index>(layer_dims[l + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    Layer layer{Matrix(out, in), Eigen::VectorXd(out)};
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = uniform(rng);
    for (Eigen::Index r = 0; r < out; ++r) layer.bias(r) = uniform(rng);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

FlowParams init_mlp(const StateLayout& layout, std::size_t hidden, std::size_t hidden_layers, std::uint64_t seed,
                    std::size_t time_embed_dim, bool predict_x0) {
  std::vector<std::size_t> dims{expected_input_dim(layout, time_embed_dim)};
  for (std::size_t i = 0; i < hidden_layers; ++i) dims.push_back(hidden);
  dims.push_back(expected_output_dim(layout));
  return init(dims, time_embed_dim, layout, seed, predict_x0);
}

OptimizerState init_optimizer(const FlowParams& params) {
  return {zeros_like(params.layers), zeros_like(params.layers), 0};
}

Eigen::VectorXd time_features(double t, std::size_t dim) {
  check_time_embed_dim(dim);
  Eigen::VectorXd f(static_cast<Eigen::Index>(dim));
  f(0) = t;
  double freq = 1.0;
  for (std::size_t k = 0; 2 * k + 1 < dim; ++k) {
    const double arg = 2.0 * std::numbers::pi * freq * t;
    f(static_cast<Eigen::Index>(2 * k + 1)) = std::sin(arg);
    f(static_cast<Eigen::Index>(2 * k + 2)) = std::cos(arg);
    freq *= 2.0;
  }
  return f;
}

Vec3 project_tangent(const Mat3& m) { return vee(skew_part(m)); }

std::vector<FieldValue> forward_batch(const FlowParams& params, std::span<const double> times,
                                      std::span<const FrameSet> states) {
  if (times.size() != states.size()) throw DomainError("times and states differ in length");
  std::vector<FieldValue> out;
  if (states.empty()) return out;
  const Matrix x = build_inputs(params, times, states);
  const std::vector<Matrix> acts = run_layers(params, x);
  out.reserve(states.size());
  for (std::size_t b = 0; b < states.size(); ++b) {
    const auto col = acts.back().col(static_cast<Eigen::Index>(b));
    if (!col.allFinite()) throw NonFiniteError("network output is non-finite at t = " + std::to_string(times[b]), b);
    out.push_back(decode(params, col, times[b]));
  }
  return out;
}

FieldValue forward(const FlowParams& params, double t, const FrameSet& state) {
  const double times[1] = {t};
  return std::move(forward_batch(params, times, std::span<const FrameSet>(&state, 1)).front());
}

TangentRotation forward_rot(const FlowParams& params, double t, const Rotation& r) {
  if (params.layout.frames != 1 || params.layout.translations)
    throw DomainError("forward_rot needs a single-rotation layout");
  const FrameSet state = FrameSet::single(r);
  const double times[1] = {t};
  const Matrix x = build_inputs(params, times, std::span<const FrameSet>(&state, 1));
  const Eigen::VectorXd y = run_layers(params, x).back().col(0);
  if (!y.allFinite()) throw NonFiniteError("network output is non-finite at t = " + std::to_string(t), 0);
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = y(3 * i + j);
  Vec3 v = project_tangent(m);
  if (params.predict_x0) v /= t;
  return {r, v};
}

std::vector<Vec3> forward_trans(const FlowParams& params, double t, const FrameSet& frames) {
  if (!params.layout.translations) throw DomainError("network layout has no translation head");
  return forward(params, t, frames).trans;
}

LossResult loss_grad(const FlowParams& params, std::span<const Regression> batch, const LossWeights& weights) {
  return evaluate(params, batch, weights, true);
}

double loss_value(const FlowParams& params, std::span<const Regression> batch, const LossWeights& weights) {
  return evaluate(params, batch, weights, false).loss_total;
}

void adam_step(FlowParams& params, OptimizerState& state, const Gradients& grads, const AdamConfig& config) {
  if (grads.size() != params.layers.size() || state.first_moment.size() != params.layers.size() ||
      state.second_moment.size() != params.layers.size())
    throw DomainError("optimizer state does not match the parameters");
  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    if (param.rows() != g.rows() || param.cols() != g.cols() || m.rows() != g.rows() || m.cols() != g.cols())
      throw DomainError("gradient shape does not match the parameters");
    m.array() = config.beta1 * m.array() + (1.0 - config.beta1) * g.array();
    v.array() = config.beta2 * v.array() + (1.0 - config.beta2) * g.array().square();
    param.array() -= config.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + config.eps);
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    update(params.layers[l].weight, state.first_moment[l].weight, state.second_moment[l].weight, grads[l].weight);
    update(params.layers[l].bias, state.first_moment[l].bias, state.second_moment[l].bias, grads[l].bias);
  }
}

// Checkpoint layout (all integers and floats little-endian):
//   char[8]  "FOLDFLOW"
//   u32      format version
//   u32      variant tag
//   u32      time embedding dimension
//   u32      frames
//   u32      flags (bit 0 translations, bit 1 predict_x0)
//   u32      number of layer dims L+1, then L+1 x u32 dims
//   f64      per layer: weight (out x in, row-major) then bias
//   u64      optimizer step
//   f64      first moments, then second moments, same layout as the weights
//   u64      FNV-1a hash of every preceding byte
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const FlowParams& p = ckpt.params;
  ByteWriter w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(ckpt.variant);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.time_embed_dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.layout.frames));
  w.put<std::uint32_t>((p.layout.translations ? 1u : 0u) | (p.predict_x0 ? 2u : 0u));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.layer_dims.size()));
  for (std::size_t d : p.layer_dims) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  w.put_layers(p.layers);
  w.put<std::uint64_t>(ckpt.optimizer.step);
  const bool has_moments = ckpt.optimizer.first_moment.size() == p.layers.size();
  w.put_layers(has_moments ? ckpt.optimizer.first_moment : zeros_like(p.layers));
  w.put_layers(has_moments ? ckpt.optimizer.second_moment : zeros_like(p.layers));
  w.put<std::uint64_t>(fnv1a(w.bytes().data(), w.bytes().size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw CheckpointError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError(path.string() + " is not a checkpoint (bad magic)");

  ByteReader r(bytes.data(), bytes.size());
  for (std::size_t i = 0; i < sizeof(kMagic); ++i) r.get<unsigned char>();
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  if (bytes.size() < 8) throw CheckpointError("checkpoint is truncated");
  const std::size_t body = bytes.size() - 8;
  Checkpoint ckpt;
  ckpt.variant = r.get<std::uint32_t>();
  const auto embed = r.get<std::uint32_t>();
  const auto frames = r.get<std::uint32_t>();
  const auto flags = r.get<std::uint32_t>();
  const auto n_dims = r.get<std::uint32_t>();
  if (n_dims < 3 || n_dims > 64) throw CheckpointError("checkpoint has an implausible layer count");
  std::vector<std::size_t> dims(n_dims);
  std::size_t doubles = 0;
  for (auto& d : dims) d = r.get<std::uint32_t>();
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) doubles += dims[l] * dims[l + 1] + dims[l + 1];
  const std::size_t expected = r.position() + 3 * doubles * 8 + 8 + 8;
  if (bytes.size() != expected)
    throw CheckpointError("checkpoint size " + std::to_string(bytes.size()) + " does not match its header (expected " +
                          std::to_string(expected) + ")");
  const std::uint64_t stored_hash = ByteReader(bytes.data() + body, 8).get<std::uint64_t>();
  if (stored_hash != fnv1a(bytes.data(), body)) throw CheckpointError("checkpoint checksum mismatch (corrupt file)");

  StateLayout layout{frames, (flags & 1u) != 0};
  try {
    ckpt.params = init(dims, embed, layout, 0, (flags & 2u) != 0);
  } catch (const DomainError& e) {
    throw CheckpointError(std::string("checkpoint header is inconsistent: ") + e.what());
  }
  r.get_layers(ckpt.params.layers);
  ckpt.optimizer = init_optimizer(ckpt.params);
  ckpt.optimizer.step = r.get<std::uint64_t>();
  r.get_layers(ckpt.optimizer.first_moment);
  r.get_layers(ckpt.optimizer.second_moment);
  if (!ckpt.params.all_finite()) throw CheckpointError("checkpoint holds non-finite parameters");
  return ckpt;
}

}  // namespace foldflow::net
