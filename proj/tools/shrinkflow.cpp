// shrinkflow command line: run experiment configs, verify acceptance suites,
// replay a stored flow.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "shrinkflow/experiment.hpp"
#include "shrinkflow/manifest.hpp"
#include "shrinkflow/verify.hpp"

namespace fs = std::filesystem;
using namespace shrinkflow;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

std::string read_text(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  require(static_cast<bool>(is), ErrorCode::ConfigError, "cannot read " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& p) {
  try {
    return nlohmann::json::parse(read_text(p));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, p.string() + ": malformed JSON (" + e.what() + ")");
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Job {
  ExperimentConfig config;
  fs::path dir;
  int exit = 0;
  std::string message;
};

void execute(Job& job) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const ExperimentResult res = run_experiment(job.config);
    write_run(job.dir, res, to_json(job.config), seconds_since(t0));
    job.exit = exit_code(res.status);
    job.message = to_string(res.status) + (res.reason.empty() ? "" : ": " + res.reason);
  } catch (const Error& e) {
    job.exit = e.code() == ErrorCode::ConfigError ? kExitConfig : kExitFailure;
    job.message = e.what();
  }
}

std::string batch_dir_name(std::size_t i, const ExperimentConfig& c) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02zu_", i + 1);
  return buf + c.kind;
}

int cmd_run(const fs::path& config_path, fs::path out, std::optional<std::uint64_t> seed, unsigned jobs) {
  // Everything is parsed and validated before the first byte is written.
  const nlohmann::json doc = read_json(config_path);
  std::vector<Job> batch;
  if (doc.is_array()) {
    require(!doc.empty(), ErrorCode::ConfigError, "empty batch");
    for (std::size_t i = 0; i < doc.size(); ++i) {
      try {
        batch.emplace_back().config = config_from_json(doc[i]);
      } catch (const Error&) {
        std::cerr << "in batch item " << i << '\n';
        throw;
      }
    }
  } else {
    batch.emplace_back().config = config_from_json(doc);
  }
  if (out.empty()) {
    require(batch.size() == 1 && !batch[0].config.output_dir.empty(), ErrorCode::ConfigError,
            "no output directory: pass --out or set output_dir");
    out = batch[0].config.output_dir;
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (seed) batch[i].config.seed = *seed;
    batch[i].dir = doc.is_array() ? out / batch_dir_name(i, batch[i].config) : out;
  }

  std::atomic<std::size_t> next = 0;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < batch.size();) execute(batch[i]);
  };
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 1; w < std::min<std::size_t>(jobs, batch.size()); ++w) pool.emplace_back(worker);
    worker();
  }

  int worst = 0;
  for (const auto& job : batch) {
    std::cout << job.dir.string() << ": " << job.message << '\n';
    worst = std::max(worst, job.exit);
  }
  return worst;
}

int cmd_verify(const std::string& suite, const fs::path& out, const fs::path& tolerances) {
  const Tolerances tol = tolerances.empty() ? Tolerances{} : Tolerances{read_json(tolerances)};
  const auto t0 = std::chrono::steady_clock::now();
  const SuiteReport rep =
      run_verify(suite, tol, [](const CriterionResult& c) { std::cout << format_line(c) << std::endl; });
  if (!out.empty()) write_verify(out, rep, tol, seconds_since(t0));
  std::string failed;
  for (const auto& c : rep.criteria)
    if (!c.pass) failed += (failed.empty() ? "" : ", ") + c.id;
  if (failed.empty()) return 0;
  std::cerr << "failed: " << failed << '\n';
  return kExitFailure;
}

int cmd_replay(const fs::path& traj_dir, const ReplaySpec& spec, fs::path out) {
  const StoredTrajectory st = snapshots_from_json(read_json(traj_dir / "snapshots.json"));
  if (out.empty()) out = traj_dir / "replay";
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentResult res = run_replay(st, spec);
  nlohmann::json echo{{"traj", traj_dir.string()}, {"T1", spec.T1},     {"T2", spec.T2},
                      {"b", spec.b},               {"y0", spec.y0},     {"convention", spec.convention},
                      {"steps", spec.steps}};
  write_run(out, res, echo, seconds_since(t0));
  std::cout << out.string() << ": " << to_string(res.status) << (res.reason.empty() ? "" : ": " + res.reason) << '\n';
  return exit_code(res.status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shrinkflow: rescaled mean curvature flow experiments"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  fs::path config_path, run_out;
  std::optional<std::uint64_t> seed;
  unsigned jobs = 1;
  auto* run = app.add_subcommand("run", "run one experiment config or a batch (JSON array)");
  run->add_option("--config", config_path, "experiment config JSON")->required();
  run->add_option("--out", run_out, "output directory (batch items go to NN_<kind> inside it)");
  run->add_option("--seed", seed, "override the seed of every config");
  run->add_option("--jobs", jobs, "experiments run concurrently")->check(CLI::PositiveNumber);

  std::vector<std::string> suite_names;
  for (const auto& [name, ids] : suites()) suite_names.push_back(name);
  std::string suite;
  fs::path verify_out, tolerances;
  auto* verify = app.add_subcommand("verify", "run an acceptance suite");
  verify->add_option("suite", suite, "suite name")->required()->check(CLI::IsMember(suite_names));
  verify->add_option("--out", verify_out, "write artifacts, verify.json and manifest.json here");
  verify->add_option("--tolerances", tolerances, "JSON object overriding pinned tolerances");

  fs::path traj_dir, replay_out;
  ReplaySpec spec{0.0, 0.0, 0.0, {0.0, 0.0}, "literal", 20};
  auto* rp = app.add_subcommand("replay", "replay a stored flow over a comeback schedule");
  rp->add_option("--traj", traj_dir, "run directory containing snapshots.json")->required();
  rp->add_option("--t1", spec.T1, "T1")->required();
  rp->add_option("--t2", spec.T2, "T2")->required();
  rp->add_option("--b", spec.b, "dilation factor b")->required();
  rp->add_option("--y0", spec.y0, "translation y0 (two numbers)");
  rp->add_option("--convention", spec.convention, "time convention")->check(CLI::IsMember({"literal", "consistent"}));
  rp->add_option("--steps", spec.steps, "replay samples")->check(CLI::PositiveNumber);
  rp->add_option("--out", replay_out, "output directory (default <traj>/replay)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config_path, run_out, seed, jobs);
    if (*verify) return cmd_verify(suite, verify_out, tolerances);
    return cmd_replay(traj_dir, spec, replay_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::ConfigError ? kExitConfig : kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}
