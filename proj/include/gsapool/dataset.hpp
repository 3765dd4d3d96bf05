#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsapool/graph.hpp"

namespace gsapool {

struct Dataset {
  std::string name;
  std::vector<Graph> graphs;
  int num_classes = 0;
  int feature_dim = 0;
};

struct DatasetStats {
  int num_graphs = 0;
  int num_classes = 0;
  double mean_nodes = 0.0;
  double mean_edges = 0.0;  // undirected edges per graph
};

DatasetStats dataset_stats(const Dataset& d);

/// Parses a TU-format dataset from `dir`: NAME_A.txt ("i, j", 1-indexed
/// global node ids, both directions expected), NAME_graph_indicator.txt,
/// NAME_graph_labels.txt and, when present, NAME_node_labels.txt. Node labels
/// become one-hot features; without a label file every node gets the constant
/// feature 1. Graph labels are remapped to contiguous 0-based classes.
Dataset load_tu_dataset(const std::string& dir, const std::string& name);

/// Writes a dataset back out in TU format (node labels from the one-hot
/// argmax). Loading the result reproduces the input structurally.
void save_tu_dataset(const Dataset& d, const std::string& dir,
                     const std::string& name);

struct FoldPlan {
  int k = 0;
  std::vector<int> assignments;  // per-graph fold id in [0, k)

  std::vector<int> members_of(int fold) const;
};

/// Deterministic stratified k-fold split: per-class counts differ by at most
/// one across folds. Requires k >= 2 and at least k members per class.
FoldPlan stratified_folds(const Dataset& d, int k, std::uint64_t seed);

/// Desk-scale benchmark: n random graphs of 10-20 nodes over 5 one-hot node
/// types. Label 1 means at least three nodes carry the marker type (type 0);
/// the generator keeps marker fractions well separated so the task is
/// learnable from small readouts, and classes are balanced.
Dataset synthetic_motif_dataset(int n, std::uint64_t seed);

}  // namespace gsapool
