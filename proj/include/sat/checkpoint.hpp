#pragma once

// ModelParams checkpoint, little-endian:
//   8 bytes  magic "SATCKPT1"
//   u32      model kind (0 gcn, 1 sgc, 2 s2gc)
//   i32      K
//   f64      a
//   i64      propagation rank (0 = exact sparse Â)
//   u32      matrix count
//   per matrix: u64 rows, u64 cols, rows*cols f64 in row-major order

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sat/nn.hpp"

namespace sat {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'S', 'A', 'T', 'C', 'K', 'P', 'T', '1'};

struct Checkpoint {
  ModelParams params;
  Index rank = 0;
};

namespace detail {
template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& c) {
  std::ostringstream out(std::ios::binary);
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.params.kind));
  detail::put<std::int32_t>(out, c.params.K);
  detail::put<double>(out, c.params.a);
  detail::put<std::int64_t>(out, c.rank);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.params.weights.size()));
  for (const auto& w : c.params.weights) {
    detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(w.rows()));
    detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(w.cols()));
    for (Index i = 0; i < w.rows(); ++i)
      for (Index j = 0; j < w.cols(); ++j) detail::put<double>(out, w(i, j));
  }
  return out.str();
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw Error("not a model checkpoint");
  Checkpoint c;
  const auto kind = detail::get<std::uint32_t>(in);
  if (kind > 2) throw Error("checkpoint: unknown model kind");
  c.params.kind = static_cast<ModelKind>(kind);
  c.params.K = detail::get<std::int32_t>(in);
  c.params.a = detail::get<double>(in);
  c.rank = detail::get<std::int64_t>(in);
  const auto count = detail::get<std::uint32_t>(in);
  if (!in || count > 16) throw Error("checkpoint: bad header");
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto rows = detail::get<std::uint64_t>(in);
    const auto cols = detail::get<std::uint64_t>(in);
    if (!in || rows * cols > (1ULL << 32)) throw Error("checkpoint: bad matrix header");
    Matrix w(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index i = 0; i < w.rows(); ++i)
      for (Index j = 0; j < w.cols(); ++j) w(i, j) = detail::get<double>(in);
    if (!in) throw Error("checkpoint: truncated");
    c.params.weights.push_back(std::move(w));
  }
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  const auto bytes = serialize_checkpoint(c);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace sat
