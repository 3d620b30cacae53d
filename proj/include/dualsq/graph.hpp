#pragma once

#include "dualsq/core.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace dualsq {

/// Undirected simple graph on nodes 0..n-1.
class Graph {
 public:
  Graph() = default;

  Graph(int n, std::vector<std::pair<int, int>> edges) : n_(n), adj_(static_cast<std::size_t>(n)) {
    if (n < 1) throw GraphError("graph: need at least one node");
    for (auto [i, j] : edges) {
      if (i == j) throw GraphError("graph: self-loop at node " + std::to_string(i));
      if (i < 0 || j < 0 || i >= n || j >= n) throw GraphError("graph: node index out of range");
      if (i > j) std::swap(i, j);
      edges_.emplace_back(i, j);
    }
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
    for (auto [i, j] : edges_) {
      adj_[i].push_back(j);
      adj_[j].push_back(i);
    }
    for (auto& a : adj_) std::sort(a.begin(), a.end());
  }

  int n() const { return n_; }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  /// Sorted neighbor list of node i.
  const std::vector<int>& neighbors(int i) const { return adj_[static_cast<std::size_t>(i)]; }
  int degree(int i) const { return static_cast<int>(neighbors(i).size()); }

  bool has_edge(int i, int j) const {
    const auto& a = neighbors(i);
    return std::binary_search(a.begin(), a.end(), j);
  }

  bool connected() const {
    if (n_ == 0) return false;
    std::vector<char> seen(static_cast<std::size_t>(n_), 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    int count = 1;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int v : neighbors(u))
        if (!seen[v]) {
          seen[v] = 1;
          ++count;
          q.push(v);
        }
    }
    return count == n_;
  }

 private:
  int n_ = 0;
  std::vector<std::pair<int, int>> edges_;
  std::vector<std::vector<int>> adj_;
};

inline constexpr int kErdosRenyiAttempts = 1000;

/// G(n, prob) resampled until connected. Deterministic given the seed.
inline Graph erdos_renyi_connected(int n, double prob, std::uint64_t seed) {
  if (n < 2) throw GraphError("erdos_renyi: need n >= 2");
  if (!(prob > 0.0 && prob <= 1.0)) throw GraphError("erdos_renyi: prob must lie in (0, 1]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int attempt = 0; attempt < kErdosRenyiAttempts; ++attempt) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (unif(rng) < prob) edges.emplace_back(i, j);
    Graph g(n, std::move(edges));
    if (g.connected()) return g;
  }
  throw GraphError("erdos_renyi: no connected sample after " + std::to_string(kErdosRenyiAttempts) +
                   " attempts; try a higher edge probability");
}

inline Graph ring_graph(int n) {
  if (n < 3) throw GraphError("ring: need n >= 3");
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i < n; ++i) e.emplace_back(i, (i + 1) % n);
  return Graph(n, std::move(e));
}

inline Graph path_graph(int n) {
  if (n < 2) throw GraphError("path: need n >= 2");
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return Graph(n, std::move(e));
}

inline Graph complete_graph(int n) {
  if (n < 2) throw GraphError("complete: need n >= 2");
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) e.emplace_back(i, j);
  return Graph(n, std::move(e));
}

inline Graph star_graph(int n) {
  if (n < 2) throw GraphError("star: need n >= 2");
  std::vector<std::pair<int, int>> e;
  for (int i = 1; i < n; ++i) e.emplace_back(0, i);
  return Graph(n, std::move(e));
}

/// Edge-list text: a header line `n <count>` followed by one `i j` pair per line.
inline Graph read_edge_list(std::istream& in) {
  std::string line, tag;
  int n = -1;
  std::vector<std::pair<int, int>> edges;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::istringstream ss(line);
    if (n < 0) {
      if (!(ss >> tag >> n) || tag != "n") throw GraphError("edge list: expected header `n <count>`");
      continue;
    }
    int i = 0, j = 0;
    if (!(ss >> i >> j)) throw GraphError("edge list: malformed line: " + line);
    edges.emplace_back(i, j);
  }
  if (n < 0) throw GraphError("edge list: missing header");
  return Graph(n, std::move(edges));
}

inline Graph read_edge_list_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw GraphError("edge list: cannot open " + path);
  return read_edge_list(in);
}

inline void write_edge_list(std::ostream& out, const Graph& g) {
  out << "n " << g.n() << '\n';
  for (auto [i, j] : g.edges()) out << i << ' ' << j << '\n';
}

/// Parses `er:<n>:<prob>:<seed>`, `ring:<n>`, `path:<n>`, `complete:<n>`,
/// `star:<n>` or `file:<path>`.
inline Graph parse_graph_spec(const std::string& spec) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.empty()) throw ConfigError("empty graph spec");
  const std::string& kind = parts[0];
  try {
    if (kind == "file" && parts.size() >= 2) return read_edge_list_file(spec.substr(5));
    if (kind == "er" && parts.size() == 4)
      return erdos_renyi_connected(std::stoi(parts[1]), std::stod(parts[2]), std::stoull(parts[3]));
    if (parts.size() == 2) {
      const int n = std::stoi(parts[1]);
      if (kind == "ring") return ring_graph(n);
      if (kind == "path") return path_graph(n);
      if (kind == "complete") return complete_graph(n);
      if (kind == "star") return star_graph(n);
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError("malformed graph spec: " + spec);
  }
  throw ConfigError("unknown graph spec: " + spec);
}

}  // namespace dualsq
