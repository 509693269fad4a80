// Command-line front end: train, sweep, diagnose, gradcheck, fixtures.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "hyperstab/hyperstab.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitDiverged = 2;
constexpr int kExitIo = 3;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> limit;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "key = value experiment file");
  cmd->add_option("--seed", f.seed, "overrides the config seed");
  cmd->add_option("--out", f.out, "output directory (overrides output_dir)");
  cmd->add_option("--limit", f.limit, "cap on training examples");
}

hyperstab::ExperimentConfig resolve(const CommonFlags& f) {
  hyperstab::ExperimentConfig c = f.config.empty() ? hyperstab::ExperimentConfig{} : hyperstab::load_config(f.config);
  if (f.seed) c.seed = *f.seed;
  if (!f.out.empty()) c.output_dir = f.out;
  if (f.limit) c.limit = *f.limit;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hypernetwork training and diagnostics"};
  app.require_subcommand(1);

  CommonFlags train_flags, sweep_flags, diag_flags;
  auto* train = app.add_subcommand("train", "run one experiment");
  add_common(train, train_flags);
  bool quiet = false;
  train->add_flag("--quiet", quiet, "no progress output");

  auto* sweep = app.add_subcommand("sweep", "run one experiment per axis value");
  add_common(sweep, sweep_flags);
  std::string axis;
  std::vector<std::string> values;
  sweep->add_option("--axis", axis, "mode|widths|depth|input_dim|activation|lr")->required();
  sweep->add_option("--values", values, "axis values (default: the built-in grid)")->delimiter(',');

  auto* diag = app.add_subcommand("diagnose", "weight statistics versus gamma");
  add_common(diag, diag_flags);
  std::string checkpoint;
  diag->add_option("--checkpoint", checkpoint, "trained checkpoint (init-only sweep when absent)");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  std::uint64_t grad_seed = 0;
  double tolerance = 1e-4;
  grad->add_option("--seed", grad_seed, "suite seed");
  grad->add_option("--tolerance", tolerance, "maximum relative error");

  auto* fix = app.add_subcommand("fixtures", "write IDX and checkpoint test fixtures");
  std::string fixture_dir = "fixtures";
  fix->add_option("--out", fixture_dir, "destination directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) {
      const auto cfg = resolve(train_flags);
      hyperstab::RunOptions opts;
      if (!quiet) opts.log = &std::cerr;
      const auto r = hyperstab::run_experiment(cfg, opts);
      std::printf("%s: %s, last eval metric %.6f, artifacts in %s\n", hyperstab::to_string(cfg.task).c_str(),
                  r.diverged ? "diverged" : "finished", r.last_eval_metric, cfg.output_dir.c_str());
      return r.diverged ? kExitDiverged : kExitOk;
    }
    if (*sweep) {
      const auto cfg = resolve(sweep_flags);
      hyperstab::RunOptions opts;
      opts.log = &std::cerr;
      const auto entries = hyperstab::run_sweep(cfg, axis, values, opts);
      for (const auto& e : entries) {
        std::printf("%s=%s  %s  last %.6f  best %.6f\n", axis.c_str(), e.value.c_str(),
                    e.run.diverged ? "diverged" : "ok      ", e.run.last_eval_metric, e.run.best_eval_metric);
      }
      return kExitOk;
    }
    if (*diag) {
      const auto cfg = resolve(diag_flags);
      std::optional<std::string> ckpt;
      if (!checkpoint.empty()) ckpt = checkpoint;
      const auto r = hyperstab::diagnose(cfg, ckpt);
      std::printf("slope %.6g  intercept %.6g  r2 %.6g  max/min stdev %.6g%s\n", r.fit.slope, r.fit.intercept,
                  r.fit.r2, r.stdev_ratio, r.from_checkpoint ? "" : "  (at init)");
      return kExitOk;
    }
    if (*grad) {
      double worst = 0.0;
      for (const auto& c : hyperstab::run_gradcheck_suite(grad_seed)) {
        std::printf("%-36s %.3e\n", c.name.c_str(), c.error);
        worst = std::max(worst, c.error);
      }
      std::printf("max relative error %.3e (tolerance %.1e)\n", worst, tolerance);
      return worst < tolerance ? kExitOk : kExitUsage;
    }
    if (*fix) {
      const auto f = hyperstab::write_fixtures(fixture_dir);
      std::printf("wrote fixtures to %s\n", fixture_dir.c_str());
      (void)f;
      return kExitOk;
    }
  } catch (const hyperstab::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const hyperstab::FormatError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
