#pragma once

// Writing experiment artifacts to disk with a hashed manifest.

#include <array>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>

#include <Eigen/Core>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "shrinkflow/errors.hpp"
#include "shrinkflow/experiment.hpp"

namespace shrinkflow {

inline std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  require(EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) == 1, ErrorCode::InvalidArgument,
          "sha256 digest failed");
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) os << std::setw(2) << static_cast<int>(md[i]);
  return os.str();
}

inline nlohmann::json build_versions() {
  return {{"shrinkflow", kVersion},
          {"compiler", std::string(__VERSION__)},
          {"cxx_standard", static_cast<long>(__cplusplus)},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                                "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  os.write(content.data(), static_cast<std::streamsize>(content.size()));
  require(static_cast<bool>(os), ErrorCode::InvalidArgument, "cannot write " + path.string());
}

/// Writes every artifact under `dir` and a manifest.json listing them with
/// SHA-256 hashes, next to the config echo, versions and timings.
inline nlohmann::json write_run(const std::filesystem::path& dir, const ExperimentResult& res, const nlohmann::json& config_echo,
                                double wall_seconds) {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& a : res.artifacts) {
    write_file(dir / a.name, a.content);
    files.push_back({{"path", a.name}, {"sha256", sha256_hex(a.content)}, {"bytes", a.content.size()}});
  }
  nlohmann::json m{{"config", config_echo},
                   {"versions", build_versions()},
                   {"timings", {{"wall_seconds", wall_seconds}}},
                   {"status", to_string(res.status)},
                   {"exit_code", exit_code(res.status)},
                   {"artifacts", files}};
  if (!res.reason.empty()) m["reason"] = res.reason;
  write_file(dir / "manifest.json", m.dump(2));
  return m;
}

}  // namespace shrinkflow
