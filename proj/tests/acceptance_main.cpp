// Runs the "all" acceptance suite twice (the second run feeds A13) and prints
// one line per criterion. Exit status is nonzero if any criterion fails.

#include <chrono>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "shrinkflow/verify.hpp"

int main(int argc, char** argv) {
  CLI::App app{"shrinkflow acceptance suite"};
  std::filesystem::path out;
  app.add_option("--out", out, "directory for artifacts, verify.json and manifest.json");
  CLI11_PARSE(app, argc, argv);

  using namespace shrinkflow;
  const auto t0 = std::chrono::steady_clock::now();
  const Tolerances tol;
  const SuiteReport rep = run_verify("all", tol, [](const CriterionResult& c) { std::cout << format_line(c) << std::endl; });
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::size_t failed = 0;
  for (const auto& c : rep.criteria) failed += !c.pass;
  std::cout << rep.criteria.size() - failed << "/" << rep.criteria.size() << " criteria passed in " << wall << " s\n";
  if (!out.empty()) {
    try {
      write_verify(out, rep, tol, wall);
    } catch (const Error& e) {
      std::cerr << e.what() << '\n';
      return 1;
    }
  }
  return failed == 0 ? 0 : 1;
}
