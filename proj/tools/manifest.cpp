#include "manifest.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "tica/common.hpp"

namespace tica::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::uint64_t h = 14695981039346656037ULL;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

namespace {

std::string hex64(std::uint64_t h) {
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx",
                static_cast<unsigned long long>(h));
  return out;
}

}  // namespace

void Manifest::add(const std::string& run_dir, const std::string& relpath) {
  artifacts[relpath] = hex64(fnv1a64_file(run_dir + "/" + relpath));
}

bool Manifest::has_prefix(const std::string& prefix) const {
  const auto it = artifacts.lower_bound(prefix);
  return it != artifacts.end() && it->first.compare(0, prefix.size(), prefix) == 0;
}

void Manifest::verify(const std::string& run_dir,
                      const std::string& prefix) const {
  for (const auto& [rel, digest] : artifacts) {
    if (rel.compare(0, prefix.size(), prefix) != 0) continue;
    const std::string path = run_dir + "/" + rel;
    if (!fs::exists(path)) throw MissingArtifact("artifact missing: " + rel);
    if (hex64(fnv1a64_file(path)) != digest)
      throw FormatError("artifact checksum mismatch: " + rel);
  }
}

Manifest load_manifest(const std::string& run_dir) {
  const std::string path = run_dir + "/manifest.json";
  std::ifstream in(path);
  if (!in)
    throw MissingArtifact("manifest.json not found in " + run_dir +
                          "; run simulate first");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("manifest.json malformed: " + std::string(e.what()));
  }
  Manifest m;
  if (!j.is_object() || !j.contains("artifacts") || !j["artifacts"].is_object())
    throw FormatError("manifest.json malformed: missing artifacts object");
  for (const auto& item : j["artifacts"].items()) {
    if (!item.value().is_string())
      throw FormatError("manifest.json malformed: digest must be a string");
    m.artifacts[item.key()] = item.value().get<std::string>();
  }
  return m;
}

Manifest load_manifest_or_empty(const std::string& run_dir) {
  if (!fs::exists(run_dir + "/manifest.json")) return {};
  return load_manifest(run_dir);
}

void save_manifest(const std::string& run_dir, const Manifest& m) {
  json j;
  j["version"] = 1;
  j["artifacts"] = json::object();
  for (const auto& [rel, digest] : m.artifacts) j["artifacts"][rel] = digest;
  std::ofstream out(run_dir + "/manifest.json");
  if (!out) throw IoError("cannot write manifest.json in " + run_dir);
  out << j.dump(2) << "\n";
}

}  // namespace tica::cli
