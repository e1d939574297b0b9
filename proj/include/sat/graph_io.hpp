#pragma once

// Plain-text dataset files.
//
//   edges     "i j" per line, decimal node indices; '#' starts a comment line.
//   features  dense: one comma-separated row per node;
//             sparse: "i k v" triplets (row, column, value), '#' comments allowed;
//             an optional first line "# rows cols" fixes the column count.
//   labels    one decimal class index per line; line number is the node index.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sat/graph.hpp"

namespace sat {

enum class FeatureFormat { Dense, Sparse };

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline bool skippable(std::string_view line) {
  auto t = trim(line);
  return t.empty() || t.front() == '#';
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

template <typename T>
T parse_number(std::string_view tok, const std::string& path, std::size_t line) {
  T value{};
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, value);
  if (ec != std::errc() || ptr != end)
    throw ParseError(path, line, "invalid number '" + std::string(tok) + "'");
  return value;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace detail

inline std::vector<int> read_labels(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  std::size_t blank_run = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = detail::trim(line);
    if (t.empty()) {
      ++blank_run;
      continue;
    }
    if (blank_run > 0) throw ParseError(path.string(), lineno - blank_run, "empty label line");
    labels.push_back(detail::parse_number<int>(t, path.string(), lineno));
    if (labels.back() < 0) throw ParseError(path.string(), lineno, "negative label");
  }
  return labels;
}

inline std::vector<NodePair> read_edges(const std::filesystem::path& path, Index n) {
  auto in = detail::open_input(path);
  std::vector<NodePair> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skippable(line)) continue;
    auto toks = detail::split_ws(line);
    if (toks.size() != 2) throw ParseError(path.string(), lineno, "expected 'i j'");
    const auto u = detail::parse_number<Index>(toks[0], path.string(), lineno);
    const auto v = detail::parse_number<Index>(toks[1], path.string(), lineno);
    if (u < 0 || v < 0 || u >= n || v >= n)
      throw BoundsError(path.string() + ":" + std::to_string(lineno) + ": node index outside [0, " +
                        std::to_string(n) + ")");
    edges.push_back({u, v});
  }
  return edges;
}

inline SparseMatrix read_features(const std::filesystem::path& path, Index n, FeatureFormat format) {
  auto in = detail::open_input(path);
  std::vector<Triplet> trips;
  std::string line;
  std::size_t lineno = 0;
  Index cols = 0;
  if (format == FeatureFormat::Dense) {
    Index row = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto t = detail::trim(line);
      if (t.empty()) continue;
      if (row >= n) throw BoundsError(path.string() + ":" + std::to_string(lineno) + ": more feature rows than nodes");
      Index col = 0;
      std::size_t start = 0;
      while (start <= t.size()) {
        auto comma = t.find(',', start);
        auto tok = detail::trim(t.substr(start, comma == std::string_view::npos ? t.npos : comma - start));
        const double v = detail::parse_number<double>(tok, path.string(), lineno);
        if (v != 0.0) trips.emplace_back(row, col, v);
        ++col;
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
      if (row == 0) cols = col;
      else if (col != cols)
        throw ParseError(path.string(), lineno, "expected " + std::to_string(cols) + " columns, got " +
                                                    std::to_string(col));
      ++row;
    }
    if (row != n)
      throw ParseError(path.string(), lineno, "expected " + std::to_string(n) + " feature rows, got " +
                                                  std::to_string(row));
  } else {
    while (std::getline(in, line)) {
      ++lineno;
      if (detail::skippable(line)) {
        // Optional "# rows cols" shape header on the first line.
        auto toks = detail::split_ws(detail::trim(line));
        if (lineno == 1 && toks.size() == 3 && toks[0] == "#") {
          Index declared = 0;
          auto [p, ec] = std::from_chars(toks[2].data(), toks[2].data() + toks[2].size(), declared);
          if (ec == std::errc() && p == toks[2].data() + toks[2].size()) cols = std::max(cols, declared);
        }
        continue;
      }
      auto toks = detail::split_ws(line);
      if (toks.size() != 3) throw ParseError(path.string(), lineno, "expected 'i k v'");
      const auto i = detail::parse_number<Index>(toks[0], path.string(), lineno);
      const auto k = detail::parse_number<Index>(toks[1], path.string(), lineno);
      const auto v = detail::parse_number<double>(toks[2], path.string(), lineno);
      if (i < 0 || i >= n) throw BoundsError(path.string() + ":" + std::to_string(lineno) + ": node index out of range");
      if (k < 0) throw BoundsError(path.string() + ":" + std::to_string(lineno) + ": negative feature index");
      cols = std::max(cols, k + 1);
      trips.emplace_back(i, k, v);
    }
  }
  SparseMatrix x(n, cols);
  x.setFromTriplets(trips.begin(), trips.end(), [](double, double b) { return b; });
  x.makeCompressed();
  return x;
}

/// Node count comes from the labels file.
inline Graph load_graph(const std::filesystem::path& edges_path, const std::filesystem::path& features_path,
                        const std::filesystem::path& labels_path, FeatureFormat format = FeatureFormat::Sparse) {
  auto labels = read_labels(labels_path);
  const auto n = static_cast<Index>(labels.size());
  if (n == 0) throw ParseError(labels_path.string(), 1, "no labels");
  auto edges = read_edges(edges_path, n);
  auto features = read_features(features_path, n, format);
  return Graph(n, edges, std::move(features), std::move(labels));
}

/// Writes edges.txt, features.txt (sparse triplets) and labels.txt into `dir`.
inline void save_graph(const Graph& g, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "edges.txt");
    for (const auto& e : g.edge_list()) out << e.u << ' ' << e.v << '\n';
  }
  {
    std::ofstream out(dir / "features.txt");
    out << std::setprecision(17);
    const auto& x = g.features();
    out << "# " << x.rows() << ' ' << x.cols() << '\n';
    for (Index i = 0; i < x.outerSize(); ++i)
      for (SparseMatrix::InnerIterator it(x, i); it; ++it) out << i << ' ' << it.col() << ' ' << it.value() << '\n';
  }
  {
    std::ofstream out(dir / "labels.txt");
    for (int y : g.labels()) out << y << '\n';
  }
}

}  // namespace sat
