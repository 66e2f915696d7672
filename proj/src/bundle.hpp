#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "config.hpp"
#include "inference.hpp"

namespace npad {

struct LoadedBundle {
  ModelBundle model;
  RunConfig config;  // the fit-time configuration
  std::size_t n_train = 0;
  std::string content_hash;
};

// Writes bundle.json plus one NPAD tensor per field into a temporary sibling
// directory and renames it over `dir`, so a failed write never leaves a
// partial bundle. Returns the content hash.
std::string save_bundle(const std::filesystem::path& dir, const ModelBundle& model,
                        const RunConfig& config, std::size_t n_train);

// Reads a bundle, refactorizes the fields and verifies the content hash.
LoadedBundle load_bundle(const std::filesystem::path& dir);

// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

// Replaces `dir` with the directory produced by `write(tmp_dir)`.
void write_directory_atomically(const std::filesystem::path& dir,
                                const std::function<void(const std::filesystem::path&)>& write);

}  // namespace npad
