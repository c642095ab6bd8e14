#pragma once

// Artifact provenance: FNV-1a 64-bit content digests and JSON manifests
// written next to every pipeline output (<artifact>.manifest.json). Manifests
// carry the resolved config, master seed, and input digests, so a run can be
// reproduced bit-identically and stale inputs can be detected.

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "sgmus/common.hpp"

namespace sgmus {

inline constexpr std::uint64_t fnv1a64_init() { return 14695981039346656037ULL; }

inline std::uint64_t fnv1a64_update(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<std::uint64_t>(p[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
  return fnv1a64_update(fnv1a64_init(), data, n);
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error(strfmt("fnv1a64_file: cannot open %s", path.c_str()));
  std::uint64_t h = fnv1a64_init();
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof(buf));
    h = fnv1a64_update(h, buf, static_cast<std::size_t>(is.gcount()));
  }
  return h;
}

inline std::string hex64(std::uint64_t v) { return strfmt("%016llx", static_cast<unsigned long long>(v)); }

inline std::string manifest_path_for(const std::string& artifact_path) {
  return artifact_path + ".manifest.json";
}

inline void write_manifest(const std::string& artifact_path, const nlohmann::json& manifest) {
  const std::string path = manifest_path_for(artifact_path);
  std::ofstream os(path);
  if (!os) throw std::runtime_error(strfmt("write_manifest: cannot open %s", path.c_str()));
  os << manifest.dump(1) << '\n';
  if (!os) throw std::runtime_error(strfmt("write_manifest: write failed for %s", path.c_str()));
}

inline nlohmann::json read_manifest(const std::string& artifact_path) {
  const std::string path = manifest_path_for(artifact_path);
  std::ifstream is(path);
  if (!is) throw std::runtime_error(strfmt("read_manifest: cannot open %s", path.c_str()));
  nlohmann::json j;
  is >> j;
  return j;
}

inline bool manifest_exists(const std::string& artifact_path) {
  std::ifstream is(manifest_path_for(artifact_path));
  return static_cast<bool>(is);
}

}  // namespace sgmus
