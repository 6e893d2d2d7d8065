#include "commands.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <vector>

#include "foldflow/bridge.hpp"
#include "foldflow/config.hpp"
#include "foldflow/eval.hpp"
#include "foldflow/igso3.hpp"
#include "foldflow/inference.hpp"
#include "foldflow/samples_csv.hpp"
#include "foldflow/seeding.hpp"
#include "foldflow/training.hpp"

namespace foldflow::cli {

namespace {

// Thrown for configuration and usage problems detected after CLI parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string number_tag(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

// Options shared by the subcommands; unset optionals keep the config value.
struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<std::string> variant;
  std::optional<double> zeta;
  std::optional<double> anneal_c;
  std::string out = "runs";
};

config::RunConfig resolve(const Overrides& o, bool need_variant) {
  config::RunConfig cfg;
  try {
    if (!o.config_path.empty()) cfg = config::load(o.config_path);
    if (o.seed) config::set_value(cfg, "seed", std::to_string(*o.seed));
    if (o.variant) config::set_value(cfg, "train.variant", *o.variant);
    if (o.zeta) cfg.infer.zeta = *o.zeta;
    if (o.anneal_c) cfg.infer.anneal_c = *o.anneal_c;
    if (need_variant) {
      config::validate(cfg);
    } else {
      config::RunConfig probe = cfg;
      probe.variant_given = true;
      config::validate(probe);
    }
  } catch (const config::ConfigError& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

void write_snapshot_file(const config::RunConfig& cfg, const std::filesystem::path& dir) {
  std::ofstream out = open_out(dir / "config.resolved");
  config::write_snapshot(cfg, out);
}

int cmd_train(Overrides o, std::ostream& out, std::ostream& err) {
  config::RunConfig cfg = resolve(o, true);
  if (o.steps) cfg.train.steps = *o.steps;

  const eval::MixtureTarget target = cfg.target();
  const net::StateLayout layout = cfg.train.layout;
  // The toy target lives on SO(3); extra frames get independent draws and
  // zero translations.
  train::StateSampler data = [target, layout](std::mt19937_64& rng) {
    FrameSet f;
    for (std::size_t i = 0; i < layout.frames; ++i)
      f.frames.push_back({eval::sample_target(target, 1, rng).front(), Vec3::Zero()});
    return f;
  };

  const std::filesystem::path dir = make_run_dir(o.out, "train");
  write_snapshot_file(cfg, dir);
  const std::size_t report_every = std::max<std::size_t>(cfg.train.steps / 10, 1);
  const train::TrainResult result =
      train::train_loop(cfg.train, data, train::prior_sampler(layout), [&](const train::LossRow& row) {
        if ((row.step + 1) % report_every == 0)
          err << "step " << row.step + 1 << "/" << cfg.train.steps << " loss " << row.loss_total << '\n';
      });
  {
    std::ofstream loss = open_out(dir / "loss.csv");
    train::write_loss_csv(result.history, loss);
  }
  net::save_checkpoint({result.params, result.optimizer, static_cast<std::uint32_t>(cfg.train.variant)},
                       dir / "checkpoint.bin");
  out << dir.string() << '\n';
  return kOk;
}

int cmd_sample(Overrides o, const std::string& checkpoint, std::size_t n, std::ostream& out, std::ostream& err) {
  net::Checkpoint ckpt;
  try {
    ckpt = net::load_checkpoint(checkpoint);
  } catch (const net::CheckpointError& e) {
    throw UsageError(e.what());
  }
  if (ckpt.variant > static_cast<std::uint32_t>(train::Variant::sfm))
    throw UsageError("checkpoint carries an unknown variant tag " + std::to_string(ckpt.variant));
  const auto ckpt_variant = static_cast<train::Variant>(ckpt.variant);

  config::RunConfig cfg = resolve(o, false);
  if (cfg.variant_given && cfg.train.variant != ckpt_variant)
    throw UsageError("variant mismatch: checkpoint was trained as " + std::string(train::to_string(ckpt_variant)) +
                     ", configuration asks for " + std::string(train::to_string(cfg.train.variant)));
  cfg.train.variant = ckpt_variant;
  cfg.variant_given = true;
  if (o.steps) cfg.infer.steps = *o.steps;
  if (!(cfg.train.layout == ckpt.params.layout)) {
    cfg.train.layout = ckpt.params.layout;
  }

  const bool stochastic = ckpt_variant == train::Variant::sfm;
  if (!stochastic && cfg.infer.zeta > 0.0) {
    err << "warning: zeta = " << cfg.infer.zeta << " ignored for variant " << train::to_string(ckpt_variant)
        << " (deterministic sampling)\n";
    cfg.infer.zeta = 0.0;
  }
  infer::InferConfig ic = cfg.infer_config();
  try {
    ic.validate();
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }

  std::mt19937_64 prior_rng = make_stream(cfg.seed, "sample/prior");
  const train::StateSampler prior = train::prior_sampler(ckpt.params.layout);
  std::vector<FrameSet> priors;
  priors.reserve(n);
  for (std::size_t k = 0; k < n; ++k) priors.push_back(prior(prior_rng));

  infer::IntegrationStats stats;
  const std::vector<FrameSet> samples = infer::sample_batch(ckpt.params, ic, priors, stochastic, cfg.seed, &stats);

  const std::filesystem::path dir = make_run_dir(o.out, "sample");
  write_snapshot_file(cfg, dir);
  export_samples_csv(samples, dir / "samples.csv");
  if (n > 0) {
    const std::size_t m = std::min<std::size_t>(n, 256);
    const infer::FlowNormCurve curve =
        infer::flow_norm_diagnostic(ckpt.params, ic, std::span<const FrameSet>(priors.data(), m));
    std::ofstream norm = open_out(dir / "flow_norm.csv");
    curve.write_csv(norm);
  }
  {
    std::ofstream s = open_out(dir / "sample_stats.txt");
    s << "n = " << n << "\nvariant = " << train::to_string(ckpt_variant) << "\nreorthonormalizations = "
      << stats.reorthonormalizations << "\nmax_orthonormality_error = " << stats.max_orthonormality_error << '\n';
  }
  out << dir.string() << '\n';
  return kOk;
}

int cmd_eval(Overrides o, const std::string& samples_path, std::optional<std::size_t> n_flag, std::ostream& out,
             std::ostream& err) {
  config::RunConfig cfg = resolve(o, false);
  std::vector<FrameSet> samples;
  try {
    samples = import_samples_csv(samples_path);
  } catch (const CsvError& e) {
    throw UsageError(samples_path + ": " + e.what());
  }
  const std::vector<Rotation> rotations = first_rotations(samples);
  std::size_t n = n_flag.value_or(cfg.eval_n);
  if (n == 0 || n > eval::kMaxWassersteinSize)
    throw UsageError("--n must lie in [1, " + std::to_string(eval::kMaxWassersteinSize) + "]");
  if (rotations.size() < n) {
    if (rotations.empty()) throw UsageError("samples file holds no samples");
    err << "note: evaluating " << rotations.size() << " samples (fewer than n = " << n << ")\n";
    n = rotations.size();
  }
  const eval::EvalReport report = eval::evaluate(rotations, cfg.target(), n, cfg.seed, cfg.eval_radius);
  const std::filesystem::path dir = make_run_dir(o.out, "eval");
  write_snapshot_file(cfg, dir);
  {
    std::ofstream txt = open_out(dir / "report.txt");
    report.write_text(txt);
    std::ofstream csv = open_out(dir / "report.csv");
    report.write_csv(csv);
  }
  const auto missing = report.coverage.missing(report.missing_threshold);
  if (!missing.empty()) {
    err << "warning: modes with less than " << report.missing_threshold * 100 << "% of samples:";
    for (std::size_t k : missing) err << ' ' << k;
    err << '\n';
  }
  report.write_text(out);
  out << dir.string() << '\n';
  return kOk;
}

int cmd_bridge_check(Overrides o, const std::vector<double>& gammas, std::size_t n, std::ostream& out) {
  const std::uint64_t seed = o.seed.value_or(0);
  const std::size_t steps = o.steps.value_or(500);
  std::mt19937_64 rng = make_stream(seed, "bridge-check");
  std::vector<bridge::StudyCurve> curves;
  try {
    curves = bridge::bridge_error_study(gammas, n, steps, rng);
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  const std::filesystem::path dir = make_run_dir(o.out, "bridge");
  std::ofstream summary = open_out(dir / "summary.txt");
  summary << "seed = " << seed << "\nn = " << n << "\nsteps = " << steps << '\n';
  for (const bridge::StudyCurve& c : curves) {
    std::ofstream csv = open_out(dir / ("bridge_gamma_" + number_tag(c.gamma) + ".csv"));
    c.write_csv(csv);
    summary << "gamma " << c.gamma << ": relative_mean_gap = " << c.relative_mean_gap()
            << ", bands_overlap = " << (c.bands_overlap() ? "true" : "false") << '\n';
    out << "gamma " << c.gamma << ": relative_mean_gap = " << c.relative_mean_gap()
        << ", bands_overlap = " << (c.bands_overlap() ? "true" : "false") << '\n';
  }
  out << dir.string() << '\n';
  return kOk;
}

int cmd_igso3_table(Overrides o, const std::vector<double>& eps_list, std::size_t grid, std::ostream& out) {
  const std::filesystem::path dir = make_run_dir(o.out, "igso3");
  for (double eps : eps_list) {
    igso3::CdfTable table;
    try {
      table = igso3::build_cdf(eps, grid);
    } catch (const DomainError& e) {
      throw UsageError(e.what());
    }
    const bool closed = eps <= 1.0;
    std::ofstream csv = open_out(dir / ("igso3_eps_" + number_tag(eps) + ".csv"));
    csv << (closed ? "omega,series,closed,rel_error,angle_density,cdf\n" : "omega,series,angle_density,cdf\n");
    csv.precision(12);
    for (std::size_t k = 1; k < table.grid.size(); ++k) {
      const double w = table.grid[k];
      const double series = igso3::density_series_adaptive(w, eps);
      csv << w << ',' << series;
      if (closed) {
        const double cf = igso3::density_closed(w, eps);
        csv << ',' << cf << ',' << std::abs(cf - series) / std::abs(series);
      }
      csv << ',' << igso3::angle_density(w, eps) << ',' << table.cdf[k] << '\n';
    }
  }
  out << dir.string() << '\n';
  return kOk;
}

}  // namespace

std::filesystem::path make_run_dir(const std::filesystem::path& root, const std::string& kind) {
  std::filesystem::create_directories(root);
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream stamp;
  stamp << kind << '-' << std::put_time(&tm, "%Y%m%d-%H%M%S");
  for (int k = 0;; ++k) {
    const std::filesystem::path dir = root / (k == 0 ? stamp.str() : stamp.str() + "-" + std::to_string(k));
    if (std::filesystem::create_directory(dir)) return dir;
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Flow matching on SO(3) and SE(3)^N: training, sampling, evaluation and diagnostics", "foldflow"};
  app.require_subcommand(1);

  Overrides o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "Run configuration (dotted key = value)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Root seed for every random stream");
    sub->add_option("--out", o.out, "Root directory for run directories")->capture_default_str();
  };

  CLI::App* train_cmd = app.add_subcommand("train", "Train a flow model on the toy target");
  add_common(train_cmd);
  train_cmd->add_option("--steps", o.steps, "Optimizer steps (overrides train.steps)");
  train_cmd->add_option("--variant", o.variant, "base, ot or sfm (overrides train.variant)");

  std::string checkpoint;
  std::size_t sample_n = 1000;
  CLI::App* sample_cmd = app.add_subcommand("sample", "Generate samples from a checkpoint");
  add_common(sample_cmd);
  sample_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  sample_cmd->add_option("--n", sample_n, "Number of samples")->capture_default_str();
  sample_cmd->add_option("--steps", o.steps, "Integration steps (overrides infer.steps)");
  sample_cmd->add_option("--variant", o.variant, "Expected variant; must match the checkpoint");
  sample_cmd->add_option("--zeta", o.zeta, "Noise scale for sfm sampling");
  sample_cmd->add_option("--anneal-c", o.anneal_c, "Annealing constant c in i(t) = c t (0 disables)");

  std::string samples_path;
  std::optional<std::size_t> eval_n;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Wasserstein distances and mode coverage against the target");
  add_common(eval_cmd);
  eval_cmd->add_option("--samples", samples_path, "Samples CSV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--n", eval_n, "Evaluation size (overrides eval.n)");

  std::vector<double> gammas{0.1, 0.5, 1.0};
  std::size_t bridge_n = 1024;
  CLI::App* bridge_cmd = app.add_subcommand("bridge-check", "Simulated bridge vs simulation-free approximation");
  bridge_cmd->add_option("--seed", o.seed, "Root seed");
  bridge_cmd->add_option("--out", o.out, "Root directory for run directories")->capture_default_str();
  bridge_cmd->add_option("--gamma", gammas, "Diffusion coefficients")->delimiter(',')->capture_default_str();
  bridge_cmd->add_option("--n", bridge_n, "Endpoint pairs per coefficient")->capture_default_str();
  bridge_cmd->add_option("--steps", o.steps, "Simulation steps (default 500)");

  std::vector<double> eps_list{0.05, 0.1, 0.5, 1.0, 2.0};
  std::size_t grid = igso3::kDefaultGridSize;
  CLI::App* table_cmd = app.add_subcommand("igso3-table", "Series and closed-form IGSO(3) densities with CDFs");
  table_cmd->add_option("--out", o.out, "Root directory for run directories")->capture_default_str();
  table_cmd->add_option("--eps", eps_list, "Concentrations")->delimiter(',')->capture_default_str();
  table_cmd->add_option("--grid", grid, "Grid points over [0, pi]")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    if (!app.get_subcommands().empty()) err << app.get_subcommands().front()->help();
    return kUsageError;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(o, out, err);
    if (sample_cmd->parsed()) return cmd_sample(o, checkpoint, sample_n, out, err);
    if (eval_cmd->parsed()) return cmd_eval(o, samples_path, eval_n, out, err);
    if (bridge_cmd->parsed()) return cmd_bridge_check(o, gammas, bridge_n, out);
    if (table_cmd->parsed()) return cmd_igso3_table(o, eps_list, grid, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kUsageError;
}

}  // namespace foldflow::cli
