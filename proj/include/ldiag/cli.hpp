#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace ldiag {

/// Lowercase hex SHA-256.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

struct ManifestInput {
  std::string path;
  std::string sha256;
};

/// Written as manifest.json in every output directory.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::map<std::string, std::string> flags;  // every option of the subcommand, resolved
  std::string config_json;                   // resolved model configuration, if any
  std::uint64_t seed = 0;
  std::vector<ManifestInput> inputs;
  std::vector<std::string> outputs;
  std::string started_at;  // UTC, ISO 8601
  std::string finished_at;
};

std::string run_manifest_json(const RunManifest& manifest);
RunManifest parse_run_manifest_json(const std::string& text);

/// Runs one subcommand. Exit status: 0 success, 1 usage or validation error,
/// 2 runtime failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ldiag
