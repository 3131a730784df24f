#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace rlf::cli {

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Record of one command invocation: what ran, with which settings, and the
/// digests of every file read or written. Contains no timestamps so that
/// identical runs produce identical manifests.
class RunManifest {
 public:
  explicit RunManifest(std::string command);

  nlohmann::ordered_json& config() { return config_; }
  void seed(const std::string& name, std::uint64_t value);
  void input(const std::filesystem::path& path);
  void output(const std::filesystem::path& path);
  void note(const std::string& key, nlohmann::ordered_json value);

  void write(const std::filesystem::path& path) const;

 private:
  std::string command_;
  nlohmann::ordered_json config_ = nlohmann::ordered_json::object();
  nlohmann::ordered_json seeds_ = nlohmann::ordered_json::object();
  nlohmann::ordered_json notes_ = nlohmann::ordered_json::object();
  std::vector<std::filesystem::path> inputs_, outputs_;
};

}  // namespace rlf::cli
