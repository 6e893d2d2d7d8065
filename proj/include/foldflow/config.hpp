#pragma once

// Run configuration as flat "dotted.key = value" text.
//
//   # comment
//   train.variant = sfm
//   train.gamma_r = 0.1          (a constant, or a comma list tabulated on [0, 1])
//
// Parsing is strict: unknown keys, duplicate keys, and malformed values are
// errors carrying the line number. Every key has a default except
// train.variant, which must be given in the file or on the command line.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "foldflow/eval.hpp"
#include "foldflow/inference.hpp"
#include "foldflow/training.hpp"

namespace foldflow::config {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::size_t line = 0, std::string key = {})
      : std::runtime_error(what), line_(line), key_(std::move(key)) {}
  std::size_t line() const { return line_; }  // 0 when not tied to a line
  const std::string& key() const { return key_; }

 private:
  std::size_t line_;
  std::string key_;
};

struct RunConfig {
  std::uint64_t seed = 0;
  bool variant_given = false;
  train::TrainConfig train;
  infer::InferConfig infer;
  double target_eps = 0.05;
  std::size_t eval_n = eval::kMaxWassersteinSize;
  double eval_radius = eval::kDefaultModeRadius;

  eval::MixtureTarget target() const { return eval::MixtureTarget::four_modes(target_eps); }
  /// Inference shares the diffusion schedules of training.
  infer::InferConfig infer_config() const;
};

/// All recognized keys, in snapshot order.
const std::vector<std::string>& known_keys();

/// Sets one key from its text value. Throws ConfigError (line 0) on unknown
/// keys or bad values.
void set_value(RunConfig& cfg, const std::string& key, const std::string& value);

RunConfig parse(std::istream& in);
RunConfig load(const std::filesystem::path& path);

/// Cross-field checks plus required keys; throws ConfigError naming the key.
void validate(const RunConfig& cfg);

/// Every key with its resolved value; parse() of the output reproduces cfg.
void write_snapshot(const RunConfig& cfg, std::ostream& out);

}  // namespace foldflow::config
