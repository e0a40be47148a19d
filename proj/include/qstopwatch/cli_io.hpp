#pragma once

// Config parsing, run orchestration and CSV/JSON serialization behind the
// qstopwatch command-line tool.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qstopwatch/chain.hpp"
#include "qstopwatch/distribution.hpp"
#include "qstopwatch/errors.hpp"
#include "qstopwatch/scenarios.hpp"

namespace qstopwatch {

enum class CheckKind { zeno, povm, residual, cross_engine };

const char *to_string(CheckKind kind);
/// Throws ConfigError (path "checks") for unknown names.
CheckKind parse_check(std::string_view name);

/// Stable process exit codes.
enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitCheck = 3, kExitIo = 4 };

/// Config problem, tagged with the dotted key path it concerns.
class ConfigError : public Error {
public:
  ConfigError(std::string path, const std::string &message)
      : Error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}
  const std::string &path() const noexcept { return path_; }

private:
  std::string path_;
};

class IoError : public Error {
public:
  using Error::Error;
};

struct RunOutputs {
  std::optional<std::filesystem::path> csv_path;
  std::optional<std::filesystem::path> json_path;
};

inline const std::vector<double> kDefaultZenoDts{1e-2, 5e-3, 2.5e-3, 1.25e-3};

struct RunConfig {
  ScenarioSpec scenario;
  bool approx = true;
  bool exact = true;
  RunOutputs outputs;
  std::vector<CheckKind> checks;
  double validity_warn_threshold = kDefaultValidityWarnThreshold;
  /// dt values for the zeno check, strictly decreasing.
  std::vector<double> zeno_dts = kDefaultZenoDts;
};

/// Strict parse: unknown keys, wrong types and out-of-range values raise
/// ConfigError naming the key path. Builder validation errors are surfaced
/// with their message intact.
RunConfig parse_config(std::string_view text);
/// Reads and parses a file; unreadable files raise IoError.
RunConfig load_config(const std::filesystem::path &path);

// Tolerances applied by the checks.
inline constexpr double kZenoSlopeLow = 1.98;
inline constexpr double kZenoSlopeHigh = 2.02;
inline constexpr double kZenoCoefficientTolerance = 0.01;
inline constexpr double kPovmResolutionTolerance = 1e-6;
inline constexpr double kPovmEigenvalueFloor = -1e-10;
inline constexpr double kPovmRemainderFloor = -1e-8;
inline constexpr double kResidualTolerance = 1e-3;
inline constexpr double kCrossEngineTolerance = 0.02;
/// Exact-chain survival above which the cross-engine comparison is made.
inline constexpr double kCrossEngineSurvivalFloor = 1e-3;
/// Effects whose spectra are computed directly in the povm check.
inline constexpr std::size_t kPovmEigenSamples = 16;
/// Conditional states sampled by the edge guard on the approximate engine.
inline constexpr std::size_t kEdgeGuardSamples = 200;

struct CheckOutcome {
  CheckKind kind = CheckKind::zeno;
  bool passed = false;
  /// Quantity compared against the tolerance.
  double value = 0.0;
  std::string detail;
  std::map<std::string, double> metrics;
};

struct ApproxSummary {
  double total = 0.0;
  double tail = 1.0;
  double integrated_total = 0.0;
  double mean = 0.0;
  std::optional<double> conditional_mean;
  double validity_epsilon = 0.0;
  bool certain_within_horizon = false;
  bool has_capped_region = false;
};

struct ExactSummary {
  double total = 0.0;
  double final_survival = 1.0;
  double mean = 0.0;
  std::optional<double> conditional_mean;
  std::size_t steps_run = 0;
  bool terminated_early = false;
};

struct Stage1Summary {
  std::size_t steps = 0;
  std::size_t selected_step = 0;
  double selected_time = 0.0;
  double total = 0.0;
  double final_survival = 1.0;
  std::optional<double> conditional_mean;
};

struct RunReport {
  std::string scenario;
  std::string kind;
  std::size_t dimension = 0;
  double dt = 0.0;
  double t_max = 0.0;
  std::size_t steps = 0;
  std::vector<std::string> warnings;
  std::optional<ApproxSummary> approx;
  std::optional<ExactSummary> exact;
  std::optional<Stage1Summary> stage1;
  /// Relative sup-norm between the engines where survival > 1e-3.
  std::optional<double> cross_engine_deviation;
  /// Largest conditional probability seen on the lattice edge sites.
  std::optional<double> edge_probability;
  std::vector<CheckOutcome> checks;

  bool all_checks_passed() const;
};

struct RunResult {
  RunReport report;
  std::optional<DetectionDistribution> approx;
  std::optional<ChainResult> exact;
};

/// Executes the configured engines and checks. Throws ContaminationError when
/// more than 1% of the conditional probability reaches the lattice edges.
RunResult run(const RunConfig &cfg);

/// Columns t,w,u,density_approx,survival_approx,p_exact_per_dt,survival_exact
/// for t_1..t_K, 17 significant digits, LF line endings.
std::string render_csv(const RunResult &result);
std::string render_report(const RunReport &report);

/// Writes whichever outputs are configured; failures raise IoError.
void write_outputs(const RunOutputs &outputs, const std::string &csv, const std::string &json);

struct SweepRow {
  double dt;
  std::size_t steps;
  double p_first_step;
  double total_exact;
};

struct SweepReport {
  std::string scenario;
  double t_max = 0.0;
  std::vector<SweepRow> rows;
  ZenoSweep zeno;
  /// Total detection probability strictly decreases as dt shrinks.
  bool monotone_suppression = false;
};

/// Exact-chain sweep over dt (at least three values, any order; reported
/// in decreasing dt).
SweepReport sweep_dt(const RunConfig &cfg, std::vector<double> dt_list);

std::string render_sweep_csv(const SweepReport &sweep);
std::string render_sweep_report(const SweepReport &sweep);

/// Relative sup-norm max|a - b| / max|b| over indices where mask holds.
double relative_sup_norm(const std::vector<double> &a, const std::vector<double> &b,
                         const std::vector<bool> &mask);

/// "%.17g" formatting used by every serialized number.
std::string format_number(double value);

} // namespace qstopwatch
