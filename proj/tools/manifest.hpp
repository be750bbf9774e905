#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace tica::cli {

// FNV-1a 64-bit digest of a file's bytes.
std::uint64_t fnv1a64_file(const std::string& path);

// Registry of run artifacts (relative path -> digest), persisted as
// manifest.json at the run root. timing.csv is never registered, so reruns
// of a subcommand leave the manifest byte-identical.
struct Manifest {
  std::map<std::string, std::string> artifacts;  // relpath -> 16-hex digest

  // Digests run_dir/relpath and records it.
  void add(const std::string& run_dir, const std::string& relpath);

  // True when at least one entry starts with prefix.
  bool has_prefix(const std::string& prefix) const;

  // Recomputes digests for every entry under prefix ("" checks all).
  // A missing file raises MissingArtifact, a changed one FormatError.
  void verify(const std::string& run_dir, const std::string& prefix) const;
};

Manifest load_manifest(const std::string& run_dir);  // MissingArtifact
Manifest load_manifest_or_empty(const std::string& run_dir);
void save_manifest(const std::string& run_dir, const Manifest& m);

}  // namespace tica::cli
