#pragma once

// The `pavepci` command line: train, evaluate, predict, compare, visualize
// and make-fixture. Every option is a flat key that can come from the
// built-in defaults, a `key = value` config file (--config), or a
// `--key value` flag, later layers winning. The merged set is written to
// <output_dir>/config.resolved and can be replayed with --config.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pavepci/metrics.hpp"

namespace pavepci::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// `args` excludes the program name. Never throws; errors are reported on
// `err` and mapped to exit codes.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Parses `key = value` lines; '#' starts a comment. Throws ConfigError on a
// malformed line.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::string format_config(const std::map<std::string, std::string>& values);

// Text and JSON renderings of a comparison table. Lower is better for RMSE,
// MAE and MAPE, higher for R^2; the best value in each column carries '*'.
// Throws ConfigError for fewer than two reports or a repeated model name.
struct Comparison {
  std::string text;
  std::string json;
};
Comparison compare_reports(const std::vector<MetricReport>& reports);

}  // namespace pavepci::cli
