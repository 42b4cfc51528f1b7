#pragma once

// Persisting an acceptance run: criterion artifacts, verify.json, and a
// hashed manifest.

#include <filesystem>

#include <nlohmann/json.hpp>

#include "shrinkflow/acceptance.hpp"
#include "shrinkflow/manifest.hpp"

namespace shrinkflow {

inline nlohmann::json write_verify(const std::filesystem::path& dir, const SuiteReport& rep, const Tolerances& tol,
                                   double wall_seconds) {
  nlohmann::json report = to_json(rep);
  report["tolerances"] = tol.json();
  ExperimentResult res;
  res.status = rep.passed() ? RunStatus::Success : RunStatus::VerdictNegative;
  res.artifacts = rep.artifacts;
  res.artifacts.push_back({"verify.json", report.dump(2)});
  return write_run(dir, res, {{"verify", rep.suite}, {"tolerances", tol.json()}}, wall_seconds);
}

}  // namespace shrinkflow
