// Command-line entry point: ofexi_train [--config FILE] [--env NAME] [--steps N] ...
//
// Writes metrics.csv, architecture.json and final.ckpt into the output
// directory. Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "ofexi/checkpoint.hpp"
#include "ofexi/config.hpp"
#include "ofexi/report.hpp"

int main(int argc, char** argv) {
  using namespace ofexi;
  CliResult cli;
  try {
    cli = parse_cli(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n(run with --help for usage)\n";
    return 2;
  }
  if (cli.exit_early) {
    std::cout << cli.message;
    return 0;
  }

  const RunConfig& cfg = cli.cfg;
  std::cout << to_config_text(cfg) << std::endl;
  try {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    Trainer trainer(cfg);
    std::size_t reported = 0;
    while (trainer.step_count() < trainer.schedule().total_steps) {
      trainer.step();
      const auto& rows = trainer.artifacts().metrics;
      for (; reported < rows.size(); ++reported) {
        const auto& r = rows[reported];
        if (std::isnan(r.eval_return)) {
          std::printf("step %8lld  pruned  train params %lld (tR %.3f)\n",
                      static_cast<long long>(r.step), static_cast<long long>(r.params_train), r.tR);
        } else {
          std::printf("step %8lld  return %9.2f  L_aux %.4g  dR %.3f  tR %.3f  binary %.3f\n",
                      static_cast<long long>(r.step), r.eval_return, r.l_aux, r.dR, r.tR,
                      r.theta_binary_fraction);
        }
        std::fflush(stdout);
      }
    }
    const fs::path out(cfg.out_dir);
    write_metrics((out / "metrics.csv").string(), trainer.artifacts().metrics);
    const auto report = architecture_report(trainer);
    write_architecture_report((out / "architecture.json").string(), report);
    save_checkpoint(trainer, (out / "final.ckpt").string());
    std::cout << '\n' << architecture_table(report);
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
