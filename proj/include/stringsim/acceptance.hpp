#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace stringsim {

struct CriterionResult {
  std::string id;
  std::string title;
  bool passed = false;
  double seconds = 0.0;
  double budget = 0.0;  // wall-clock budget in seconds; exceeding it fails the criterion
  std::string detail;   // one line: measured values against their limits
  nlohmann::json metrics = nlohmann::json::object();
};

struct AcceptanceOptions {
  /// Multiplies every numeric tolerance. Values below 1 tighten the gate.
  double tolerance_scale = 1.0;
  /// Criterion ids to run; empty runs all of them.
  std::vector<std::string> filter;
  /// Scratch space for scenario runs.
  std::filesystem::path work_dir = std::filesystem::temp_directory_path() / "stringsim-acceptance";
  /// Called after each criterion finishes.
  std::function<void(const CriterionResult&)> on_result;
};

std::vector<std::string> criterion_ids();

/// Throws ConfigError on an unknown id in the filter.
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options = {});

/// "PASS id (1.2 s / 10 s): detail"
std::string format_result(const CriterionResult& r);
nlohmann::json to_json(const std::vector<CriterionResult>& results);

}  // namespace stringsim
