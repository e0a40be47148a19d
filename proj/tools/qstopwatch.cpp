#include <algorithm>
#include <cstdio>
#include <functional>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qstopwatch/cli_io.hpp"

namespace {

using namespace qstopwatch;

void print_warnings(const std::vector<std::string> &warnings) {
  for (const auto &w : warnings)
    std::cerr << "warning: " << w << '\n';
}

int finish_run(const RunConfig &cfg, bool print_checks) {
  const RunResult result = run(cfg);
  print_warnings(result.report.warnings);
  const std::string json = render_report(result.report);
  write_outputs(cfg.outputs, render_csv(result), json);
  if (!cfg.outputs.json_path && !print_checks)
    std::cout << json;
  for (const auto &c : result.report.checks)
    std::cout << (c.passed ? "PASS " : "FAIL ") << to_string(c.kind) << ": " << c.detail << '\n';
  return result.report.all_checks_passed() ? kExitOk : kExitCheck;
}

int guarded(const std::function<int()> &body) {
  try {
    return body();
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError &e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ContaminationError &e) {
    std::cerr << "check failed: " << e.what() << '\n';
    return kExitCheck;
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception &e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Detection-time distributions under repeated projective measurement"};
  app.require_subcommand(1);

  std::string config;
  auto *simulate = app.add_subcommand("simulate", "Run the configured engines and checks");
  simulate->add_option("config", config, "Scenario config (JSON)")->required();

  std::vector<double> dts;
  auto *sweep = app.add_subcommand("sweep-dt", "Exact-chain sweep over detector tick lengths");
  sweep->add_option("config", config, "Scenario config (JSON)")->required();
  sweep->add_option("--dt", dts, "Comma-separated dt values (at least three)")
      ->required()
      ->delimiter(',');

  std::vector<std::string> checks;
  auto *check = app.add_subcommand("check", "Run only the named checks");
  check->add_option("config", config, "Scenario config (JSON)")->required();
  check->add_option("--checks", checks, "Comma-separated: zeno,povm,residual,cross_engine")
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (simulate->parsed())
    return guarded([&] { return finish_run(load_config(config), false); });

  if (sweep->parsed())
    return guarded([&] {
      const RunConfig cfg = load_config(config);
      if (dts.size() < 3)
        throw ConfigError("--dt", "need at least three dt values");
      const SweepReport report = sweep_dt(cfg, dts);
      const std::string json = render_sweep_report(report);
      write_outputs(cfg.outputs, render_sweep_csv(report), json);
      if (!cfg.outputs.json_path)
        std::cout << json;
      return kExitOk;
    });

  return guarded([&] {
    RunConfig cfg = load_config(config);
    if (!checks.empty()) {
      cfg.checks.clear();
      for (const auto &name : checks) {
        const CheckKind k = parse_check(name);
        if (std::find(cfg.checks.begin(), cfg.checks.end(), k) == cfg.checks.end())
          cfg.checks.push_back(k);
      }
    }
    if (cfg.checks.empty())
      throw ConfigError("checks", "no checks requested");
    return finish_run(cfg, true);
  });
}
