#pragma once

#include "qmono/config.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace qmono {

enum class Stage { Simulate, Section, Pressure, Quantize, Resonances, Weyl, All };

std::optional<Stage> parse_stage(const std::string& name);
std::string stage_name(Stage stage);

struct RunOptions {
  std::filesystem::path out;        // artifact directory, created if missing
  std::string config_label;         // recorded in the manifest (e.g. the config path as given)
  std::function<void(const std::string&)> log;  // progress lines; may be empty
};

struct RunResult {
  std::vector<std::string> artifacts;  // file names relative to out, in writing order
  std::filesystem::path manifest;
};

/// Runs one subcommand and writes its artifacts plus manifest.json. `All` runs
/// every stage that applies to the system kind; an explicit stage that does not
/// apply is a configuration error.
RunResult run(Stage stage, const RunConfig& config, const RunOptions& options);

/// Process exit status for an exception escaping run(): 1 config, 2 numeric, 3 consistency.
int exit_status(const std::exception& e);

}  // namespace qmono
