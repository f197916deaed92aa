#pragma once

// Flat "key = value" training configuration files, content hashes and the
// per-run reproduction manifest.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "mcne/bpr_trainer.hpp"

namespace mcne {

/// Starts from the defaults and overrides each listed key. Lists are comma
/// separated ("dims = 64,32,32"). Blank lines and '#' comments are ignored.
/// Unknown keys and malformed values raise ConfigError with the line number.
TrainConfig parse_train_config(std::istream& in, const std::string& source = "<stream>");
TrainConfig load_train_config(const std::filesystem::path& path);

/// Canonical text form: every key, fixed order, round-trips through the parser.
std::string format_train_config(const TrainConfig& config);

/// Lowercase hex SHA-1 of a byte string.
std::string sha1_hex(const std::string& bytes);
/// Git blob id of a file: SHA-1 over "blob <size>\0" followed by the content.
std::string git_blob_sha1(const std::filesystem::path& path);
/// SHA-1 of the canonical config text.
std::string config_hash(const TrainConfig& config);

struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string config_text;
  std::vector<std::filesystem::path> inputs;   // hashed at write time
};

/// Writes <dir>/manifest.txt. Directory inputs are hashed file by file.
void write_manifest(const std::filesystem::path& dir, const RunManifest& manifest);

}  // namespace mcne
