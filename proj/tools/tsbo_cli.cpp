#include "tsbo/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Teacher-student Bayesian optimization benchmark runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method;
  std::optional<std::string> out_dir;

  auto* run = app.add_subcommand("run", "Run one experiment and write trace, queries and summary");
  run->add_option("--config", config_path, "key = value config file")->required();
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--method", method, "tsbo-gaussian, tsbo-gev, tsbo-random, vanilla-bo or sobol");
  run->add_option("--out", out_dir, "Output directory");

  auto* ablate = app.add_subcommand("ablate", "Run the ablation variants over shared seeds");
  ablate->add_option("--config", config_path, "key = value config file")->required();

  auto* eval_gen = app.add_subcommand("eval-gen", "Run an experiment and report query-GP test NLL");
  eval_gen->add_option("--config", config_path, "key = value config file")->required();

  app.add_subcommand("version", "Print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (app.got_subcommand("version")) {
    std::cout << "tsbo " << kVersion << '\n';
    return kExitOk;
  }

  tsbo::RunConfig cfg;
  try {
    cfg = tsbo::load_run_config(config_path);
    if (seed) cfg.seed = *seed;
    if (method) cfg.method = tsbo::parse_method(*method);
    if (out_dir) cfg.out_dir = *out_dir;
    cfg.validate();
  } catch (const tsbo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (run->parsed()) {
      const tsbo::RunResult result = tsbo::run_experiment(cfg);
      tsbo::write_run_outputs(cfg, result, cfg.out_dir);
      std::cout << "best " << result.best << " (true " << result.best_true << ") after " << result.evaluations
                << " evaluations; outputs in " << cfg.out_dir << '\n';
    } else if (ablate->parsed()) {
      const std::string table = tsbo::format_ablation_table(tsbo::run_ablation_suite(cfg));
      std::filesystem::create_directories(cfg.out_dir);
      std::ofstream(std::filesystem::path(cfg.out_dir) / "ablation.csv") << table;
      std::cout << table;
    } else if (eval_gen->parsed()) {
      const tsbo::RunResult result = tsbo::run_experiment(cfg);
      const tsbo::GeneralizationReport rep = tsbo::eval_generalization(cfg, result);
      std::filesystem::create_directories(cfg.out_dir);
      std::ofstream out(std::filesystem::path(cfg.out_dir) / "generalization.csv");
      out << "region,nll_with_pseudo,nll_without_pseudo\n"
          << "global," << rep.global_with << ',' << rep.global_without << '\n'
          << "local," << rep.local_with << ',' << rep.local_without << '\n';
      std::printf("region  with-pseudo  without-pseudo\nglobal  %11.5f  %14.5f\nlocal   %11.5f  %14.5f\n",
                  rep.global_with, rep.global_without, rep.local_with, rep.local_without);
    }
  } catch (const tsbo::NumericError& e) {
    std::cerr << "numeric failure (" << tsbo::to_string(e.kind()) << "): " << e.what() << '\n';
    tsbo::write_failure_summary(cfg, e.what(), cfg.out_dir);
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
