#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace lfd {

// Hex SHA-1 of "blob <size>\0<content>", as computed by git hash-object.
std::string git_blob_hash(std::string_view content);
std::string git_blob_hash_file(const std::filesystem::path& path);

struct RunManifest {
  std::string command;
  std::filesystem::path config_path;
  uint64_t seed = 0;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::string> outputs;  // layout of the output directory

  // Hash over the sorted "<blob hash> <file name>" lines of every input.
  std::string input_hash() const;
  std::string to_json() const;
  void write(const std::filesystem::path& path) const;
};

}  // namespace lfd
