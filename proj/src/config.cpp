#include "foldflow/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace foldflow::config {

namespace {

std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
  throw ConfigError("bad value '" + value + "' for " + key + " (expected " + expected + ")", 0, key);
}

double to_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || !std::isfinite(out))
    bad_value(key, value, "a finite number");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "a nonnegative integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  bad_value(key, value, "true or false");
}

bridge::DiffusionSchedule to_schedule(const std::string& key, const std::string& value) {
  std::vector<double> values;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) values.push_back(to_double(key, trim(item)));
  try {
    return bridge::DiffusionSchedule::table(values);
  } catch (const DomainError&) {
    bad_value(key, value, "one or more comma-separated values >= 0");
  }
}

std::string format_double(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

std::string format_schedule(const bridge::DiffusionSchedule& s) {
  std::string out;
  for (std::size_t k = 0; k < s.values().size(); ++k) out += (k ? "," : "") + format_double(s.values()[k]);
  return out;
}

struct Entry {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define FOLDFLOW_DOUBLE(field) \
  {[](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_double(k, v); }, \
   [](const RunConfig& c) { return format_double(c.field); }}
#define FOLDFLOW_COUNT(field) \
  {[](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_uint(k, v); }, \
   [](const RunConfig& c) { return std::to_string(c.field); }}
#define FOLDFLOW_BOOL(field) \
  {[](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_bool(k, v); }, \
   [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }}
#define FOLDFLOW_SCHEDULE(field) \
  {[](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_schedule(k, v); }, \
   [](const RunConfig& c) { return format_schedule(c.field); }}

const std::vector<std::pair<std::string, Entry>>& table() {
  static const std::vector<std::pair<std::string, Entry>> entries = {
      {"seed",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.seed = to_uint(k, v);
          c.train.seed = c.seed;
        },
        [](const RunConfig& c) { return std::to_string(c.seed); }}},
      {"train.variant",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          try {
            c.train.variant = train::parse_variant(v);
          } catch (const DomainError&) {
            bad_value(k, v, "base, ot or sfm");
          }
          c.variant_given = true;
        },
        [](const RunConfig& c) { return std::string(train::to_string(c.train.variant)); }}},
      {"train.steps", FOLDFLOW_COUNT(train.steps)},
      {"train.batch_size", FOLDFLOW_COUNT(train.batch_size)},
      {"train.lr", FOLDFLOW_DOUBLE(train.lr)},
      {"train.t_min", FOLDFLOW_DOUBLE(train.t_min)},
      {"train.gamma_r", FOLDFLOW_SCHEDULE(train.gamma_r)},
      {"train.gamma_s", FOLDFLOW_SCHEDULE(train.gamma_s)},
      {"train.rot_weight", FOLDFLOW_DOUBLE(train.weights.rotation)},
      {"train.trans_weight", FOLDFLOW_DOUBLE(train.weights.translation)},
      {"train.ot_cap", FOLDFLOW_COUNT(train.ot_cap)},
      {"model.frames", FOLDFLOW_COUNT(train.layout.frames)},
      {"model.translations", FOLDFLOW_BOOL(train.layout.translations)},
      {"model.hidden", FOLDFLOW_COUNT(train.hidden)},
      {"model.hidden_layers", FOLDFLOW_COUNT(train.hidden_layers)},
      {"model.predict_x0", FOLDFLOW_BOOL(train.predict_x0)},
      {"infer.steps", FOLDFLOW_COUNT(infer.steps)},
      {"infer.zeta", FOLDFLOW_DOUBLE(infer.zeta)},
      {"infer.anneal_c", FOLDFLOW_DOUBLE(infer.anneal_c)},
      {"target.eps", FOLDFLOW_DOUBLE(target_eps)},
      {"eval.n", FOLDFLOW_COUNT(eval_n)},
      {"eval.radius", FOLDFLOW_DOUBLE(eval_radius)},
  };
  return entries;
}

#undef FOLDFLOW_DOUBLE
#undef FOLDFLOW_COUNT
#undef FOLDFLOW_BOOL
#undef FOLDFLOW_SCHEDULE

const Entry* find(const std::string& key) {
  for (const auto& [name, entry] : table())
    if (name == key) return &entry;
  return nullptr;
}

}  // namespace

infer::InferConfig RunConfig::infer_config() const {
  infer::InferConfig c = infer;
  c.t_min = train.t_min;
  c.gamma = train.gamma_r;
  c.gamma_s = train.gamma_s;
  return c;
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [name, entry] : table()) out.push_back(name);
    return out;
  }();
  return keys;
}

void set_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const Entry* entry = find(key);
  if (entry == nullptr) throw ConfigError("unknown key '" + key + "'", 0, key);
  entry->set(cfg, key, value);
}

RunConfig parse(std::istream& in) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::size_t hash = raw.find('#');
    const std::string line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'", line_no);
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": missing key", line_no);
    if (value.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": missing value for " + key, line_no, key);
    if (!seen.insert(key).second)
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key " + key, line_no, key);
    try {
      set_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what(), line_no, key);
    }
  }
  return cfg;
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  try {
    return parse(in);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what(), e.line(), e.key());
  }
}

void validate(const RunConfig& cfg) {
  if (!cfg.variant_given) throw ConfigError("missing required field train.variant", 0, "train.variant");
  auto wrap = [](const std::string& key, auto&& check) {
    try {
      check();
    } catch (const DomainError& e) {
      throw ConfigError(std::string("invalid configuration: ") + e.what(), 0, key);
    }
  };
  wrap("train", [&] { cfg.train.validate(); });
  wrap("infer", [&] { cfg.infer_config().validate(); });
  wrap("target.eps", [&] { cfg.target().validate(); });
  if (cfg.eval_n == 0 || cfg.eval_n > eval::kMaxWassersteinSize)
    throw ConfigError("eval.n must lie in [1, " + std::to_string(eval::kMaxWassersteinSize) + "]", 0, "eval.n");
  if (!(cfg.eval_radius > 0.0)) throw ConfigError("eval.radius must be positive", 0, "eval.radius");
}

void write_snapshot(const RunConfig& cfg, std::ostream& out) {
  for (const auto& [name, entry] : table()) out << name << " = " << entry.get(cfg) << '\n';
}

}  // namespace foldflow::config
