#pragma once

// On-disk EigenBasis cache.
//
// File layout, little-endian:
//   8 bytes   magic "SATEIG01"
//   u64       n
//   u64       r
//   r  x f64  eigenvalues
//   n*r x f64 eigenvectors, column-major
//
// Files are named "<graph content hash>-r<r>.eig".

#include <bit>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <thread>
#include <optional>
#include <sstream>

#include "sat/spectral.hpp"

namespace sat {

static_assert(std::endian::native == std::endian::little, "eigenbasis cache assumes a little-endian host");

inline constexpr char kEigenMagic[8] = {'S', 'A', 'T', 'E', 'I', 'G', '0', '1'};

inline void write_eigenbasis(const EigenBasis& b, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    const std::uint64_t n = static_cast<std::uint64_t>(b.size());
    const std::uint64_t r = static_cast<std::uint64_t>(b.rank());
    out.write(kEigenMagic, sizeof kEigenMagic);
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(&r), sizeof r);
    out.write(reinterpret_cast<const char*>(b.values.data()), static_cast<std::streamsize>(sizeof(double) * r));
    out.write(reinterpret_cast<const char*>(b.vectors.data()),
              static_cast<std::streamsize>(sizeof(double) * n * r));
    if (!out) throw Error("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline EigenBasis read_eigenbasis(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char magic[8];
  std::uint64_t n = 0, r = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  in.read(reinterpret_cast<char*>(&r), sizeof r);
  if (!in || std::memcmp(magic, kEigenMagic, sizeof magic) != 0) throw Error(path.string() + ": not an eigenbasis file");
  if (r == 0 || r > n || n > (1ULL << 31)) throw Error(path.string() + ": bad header");
  EigenBasis b{Vector(static_cast<Index>(r)), Matrix(static_cast<Index>(n), static_cast<Index>(r))};
  in.read(reinterpret_cast<char*>(b.values.data()), static_cast<std::streamsize>(sizeof(double) * r));
  in.read(reinterpret_cast<char*>(b.vectors.data()), static_cast<std::streamsize>(sizeof(double) * n * r));
  if (!in) throw Error(path.string() + ": truncated");
  return b;
}

inline std::filesystem::path eigenbasis_cache_path(const std::filesystem::path& dir, std::uint64_t graph_hash,
                                                   Index r) {
  std::ostringstream name;
  name << std::hex << graph_hash << std::dec << "-r" << r << ".eig";
  return dir / name.str();
}

/// $SAT_CACHE_DIR when set, otherwise `fallback`.
inline std::filesystem::path resolve_cache_dir(const std::filesystem::path& fallback) {
  if (const char* env = std::getenv("SAT_CACHE_DIR"); env && *env) return env;
  return fallback;
}

/// Top-r basis of normalize(g), read from or written to `cache_dir` when given.
inline EigenBasis graph_eigenbasis(const Graph& g, Index r, const EigenOptions& opts = {},
                                   const std::optional<std::filesystem::path>& cache_dir = std::nullopt) {
  std::filesystem::path path;
  if (cache_dir) {
    path = eigenbasis_cache_path(*cache_dir, content_hash(g), r);
    if (std::filesystem::exists(path)) {
      auto b = read_eigenbasis(path);
      if (b.size() == g.num_nodes() && b.rank() == r) return b;
    }
  }
  auto b = top_r_eigenpairs(normalize(g), r, opts);
  if (cache_dir) write_eigenbasis(b, path);
  return b;
}

}  // namespace sat
