#pragma once

#include <string>
#include <vector>

#include "config.hpp"

namespace mdam::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kValidation = 2, kNumerical = 3 };

/// Runs the study; writes records.csv, metrics.csv and study.json, plus one
/// demonstration sample (sample.csv, margins.csv, impute.json) for `impute`.
void cmd_simulate(const RunConfig& cfg);
/// Item imputation, margin imputation and hot deck; writes completed_<l>.csv and report.json.
void cmd_impute(const RunConfig& cfg);
/// Rubin-pooled estimates over the completed datasets; writes estimates.csv.
void cmd_estimate(const RunConfig& cfg);
/// Metrics CSV plus rrmse.svg and coverage.svg from a study's metrics.csv.
void cmd_report(const RunConfig& cfg);

/// Full command line entry point; returns the process exit code.
int run_cli(int argc, const char* const* argv);
/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace mdam::cli
