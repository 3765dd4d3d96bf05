#pragma once

#include <utility>
#include <vector>

#include "gsapool/tensor.hpp"

namespace gsapool {

/// One labeled graph. Edges are stored in both directions, deduplicated,
/// without self-loops, sorted lexicographically. Instances are treated as
/// immutable after construction and are safe to share across workers.
struct Graph {
  int num_nodes = 0;
  std::vector<std::pair<int, int>> edges;   // directed pairs, both ways
  std::vector<std::vector<int>> neighbors;  // sorted adjacency lists
  Tensor node_features;                     // num_nodes x feature_dim
  int label = 0;

  int feature_dim() const {
    return node_features.defined() ? static_cast<int>(node_features.cols()) : 0;
  }

  /// Builds a graph from undirected edge pairs (each pair may appear once or
  /// in both directions); symmetrizes and deduplicates. Throws on self-loops
  /// and out-of-range endpoints. Undefined features default to a constant 1.
  static Graph make(int num_nodes,
                    const std::vector<std::pair<int, int>>& undirected_edges,
                    Tensor features = {}, int label = 0);

  /// Checks the structural invariants; throws on violation.
  void validate() const;

  /// Number of undirected edges (stored pairs / 2).
  std::size_t undirected_edge_count() const { return edges.size() / 2; }
};

/// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I, as a dense
/// constant tensor. Well defined for every valid graph: the self-loop keeps
/// all degrees positive.
Tensor normalized_adjacency(const Graph& g);

/// Subgraph induced by a strictly increasing, nonempty index list. Features
/// default to the selected rows of the source features; callers may
/// substitute their own (e.g. fused, gated features).
Graph induced_subgraph(const Graph& g, const std::vector<int>& idx,
                       Tensor features = {});

/// Relabels nodes: node i of the output carries the features of node
/// perm^-1(i). Throws unless perm is a bijection on [0, num_nodes).
Graph permute(const Graph& g, const std::vector<int>& perm);

}  // namespace gsapool
