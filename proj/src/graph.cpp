#include "gsapool/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gsapool {

namespace {

std::vector<std::vector<int>> build_neighbors(
    int num_nodes, const std::vector<std::pair<int, int>>& edges) {
  std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(num_nodes));
  for (const auto& [a, b] : edges) nbrs[static_cast<std::size_t>(a)].push_back(b);
  return nbrs;  // edges are sorted, so each list is already ascending
}

}  // namespace

Graph Graph::make(int num_nodes,
                  const std::vector<std::pair<int, int>>& undirected_edges,
                  Tensor features, int label) {
  if (num_nodes < 0) throw std::invalid_argument("Graph: negative node count");
  Graph g;
  g.num_nodes = num_nodes;
  g.label = label;

  g.edges.reserve(undirected_edges.size() * 2);
  for (const auto& [a, b] : undirected_edges) {
    if (a < 0 || b < 0 || a >= num_nodes || b >= num_nodes)
      throw std::invalid_argument("Graph: edge endpoint out of range (" +
                                  std::to_string(a) + ", " +
                                  std::to_string(b) + ")");
    if (a == b)
      throw std::invalid_argument("Graph: self-loop on node " +
                                  std::to_string(a));
    g.edges.emplace_back(a, b);
    g.edges.emplace_back(b, a);
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  g.neighbors = build_neighbors(num_nodes, g.edges);

  if (!features.defined())
    features = Tensor::constant(static_cast<std::size_t>(num_nodes), 1, 1.0);
  if (features.rows() != static_cast<std::size_t>(num_nodes))
    throw std::invalid_argument("Graph: feature rows do not match node count");
  g.node_features = features;
  return g;
}

void Graph::validate() const {
  if (num_nodes < 0) throw std::runtime_error("Graph: negative node count");
  if (node_features.rows() != static_cast<std::size_t>(num_nodes))
    throw std::runtime_error("Graph: feature rows do not match node count");
  for (std::size_t i = 0; i + 1 < edges.size(); ++i)
    if (edges[i] == edges[i + 1])
      throw std::runtime_error("Graph: duplicate edge");
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= num_nodes || b >= num_nodes)
      throw std::runtime_error("Graph: edge endpoint out of range");
    if (a == b) throw std::runtime_error("Graph: stored self-loop");
    if (!std::binary_search(edges.begin(), edges.end(), std::make_pair(b, a)))
      throw std::runtime_error("Graph: edge without its reverse");
  }
}

Tensor normalized_adjacency(const Graph& g) {
  const std::size_t n = static_cast<std::size_t>(g.num_nodes);
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i)
    inv_sqrt_deg[i] =
        1.0 / std::sqrt(static_cast<double>(g.neighbors[i].size()) + 1.0);

  std::vector<double> vals(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    vals[i * n + i] = inv_sqrt_deg[i] * inv_sqrt_deg[i];
  for (const auto& [a, b] : g.edges)
    vals[static_cast<std::size_t>(a) * n + static_cast<std::size_t>(b)] =
        inv_sqrt_deg[static_cast<std::size_t>(a)] *
        inv_sqrt_deg[static_cast<std::size_t>(b)];
  return Tensor(n, n, std::move(vals));
}

Graph induced_subgraph(const Graph& g, const std::vector<int>& idx,
                       Tensor features) {
  if (idx.empty()) throw std::invalid_argument("empty pooled graph");
  std::vector<int> remap(static_cast<std::size_t>(g.num_nodes), -1);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= g.num_nodes)
      throw std::invalid_argument("induced_subgraph: index out of range");
    if (i > 0 && idx[i] <= idx[i - 1])
      throw std::invalid_argument(
          "induced_subgraph: indices must be strictly increasing");
    remap[static_cast<std::size_t>(idx[i])] = static_cast<int>(i);
  }

  Graph out;
  out.num_nodes = static_cast<int>(idx.size());
  out.label = g.label;
  for (const auto& [a, b] : g.edges) {
    const int na = remap[static_cast<std::size_t>(a)];
    const int nb = remap[static_cast<std::size_t>(b)];
    if (na >= 0 && nb >= 0) out.edges.emplace_back(na, nb);
  }
  std::sort(out.edges.begin(), out.edges.end());
  out.neighbors = build_neighbors(out.num_nodes, out.edges);

  if (!features.defined()) features = gather_rows(g.node_features, idx);
  if (features.rows() != idx.size())
    throw std::invalid_argument(
        "induced_subgraph: feature rows do not match selection");
  out.node_features = features;
  return out;
}

Graph permute(const Graph& g, const std::vector<int>& perm) {
  const std::size_t n = static_cast<std::size_t>(g.num_nodes);
  if (perm.size() != n)
    throw std::invalid_argument("permute: permutation size mismatch");
  std::vector<int> inverse(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (perm[i] < 0 || static_cast<std::size_t>(perm[i]) >= n ||
        inverse[static_cast<std::size_t>(perm[i])] != -1)
      throw std::invalid_argument("permute: not a bijection");
    inverse[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  }

  Graph out;
  out.num_nodes = g.num_nodes;
  out.label = g.label;
  out.edges.reserve(g.edges.size());
  for (const auto& [a, b] : g.edges)
    out.edges.emplace_back(perm[static_cast<std::size_t>(a)],
                           perm[static_cast<std::size_t>(b)]);
  std::sort(out.edges.begin(), out.edges.end());
  out.neighbors = build_neighbors(out.num_nodes, out.edges);
  out.node_features = gather_rows(g.node_features, inverse);
  return out;
}

}  // namespace gsapool
