#include "manifest.hpp"

#include <array>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "rlf/error.hpp"
#include "rlf/io.hpp"

namespace rlf::cli {

namespace {

constexpr const char* kToolVersion = "rlf 0.1.0";

nlohmann::ordered_json file_entry(const std::filesystem::path& path) {
  return {{"path", path.generic_string()}, {"sha256", sha256_file(path)}};
}

}  // namespace

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path.string() + "' for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i)
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

RunManifest::RunManifest(std::string command) : command_(std::move(command)) {}

void RunManifest::seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }
void RunManifest::input(const std::filesystem::path& path) { inputs_.push_back(path); }
void RunManifest::output(const std::filesystem::path& path) { outputs_.push_back(path); }
void RunManifest::note(const std::string& key, nlohmann::ordered_json value) {
  notes_[key] = std::move(value);
}

void RunManifest::write(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["command"] = command_;
  j["tool_version"] = kToolVersion;
  j["config"] = config_;
  j["seeds"] = seeds_;
  j["inputs"] = nlohmann::ordered_json::array();
  for (const auto& p : inputs_) j["inputs"].push_back(file_entry(p));
  j["outputs"] = nlohmann::ordered_json::array();
  for (const auto& p : outputs_) j["outputs"].push_back(file_entry(p));
  if (!notes_.empty()) j["notes"] = notes_;
  io::save(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

}  // namespace rlf::cli
