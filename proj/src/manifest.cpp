#include "lfd/manifest.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "lfd/errors.hpp"

namespace lfd {

namespace {

std::string to_hex(const unsigned char* digest, size_t n) {
  std::string out(2 * n, '0');
  for (size_t i = 0; i < n; ++i) std::snprintf(&out[2 * i], 3, "%02x", digest[i]);
  return out;
}

std::string sha1_hex(std::string_view data) {
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  return to_hex(digest, SHA_DIGEST_LENGTH);
}

}  // namespace

std::string git_blob_hash(std::string_view content) {
  std::string blob = "blob " + std::to_string(content.size());
  blob.push_back('\0');
  blob.append(content);
  return sha1_hex(blob);
}

std::string git_blob_hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return git_blob_hash(ss.str());
}

std::string RunManifest::input_hash() const {
  std::vector<std::string> lines;
  for (const auto& p : inputs) lines.push_back(git_blob_hash_file(p) + " " + p.filename().string() + "\n");
  std::sort(lines.begin(), lines.end());
  std::string all;
  for (const auto& l : lines) all += l;
  return git_blob_hash(all);
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["config"] = config_path.string();
  j["seed"] = seed;
  auto files = nlohmann::ordered_json::array();
  for (const auto& p : inputs) files.push_back({{"path", p.string()}, {"sha1", git_blob_hash_file(p)}});
  j["inputs"] = files;
  j["input_hash"] = input_hash();
  j["outputs"] = outputs;
  return j.dump(2);
}

void RunManifest::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << to_json() << '\n';
}

}  // namespace lfd
