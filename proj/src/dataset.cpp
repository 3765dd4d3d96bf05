#include "gsapool/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "gsapool/rng.hpp"

namespace fs = std::filesystem;

namespace gsapool {

namespace {

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream is(path);
  if (!is)
    throw std::runtime_error("missing dataset file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
      line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

long parse_int(const std::string& s, const fs::path& file, std::size_t lineno) {
  std::istringstream is(s);
  long v;
  if (!(is >> v))
    throw std::runtime_error(file.filename().string() + ": line " +
                             std::to_string(lineno) + ": expected an integer");
  return v;
}

std::pair<long, long> parse_edge(const std::string& s, const fs::path& file,
                                 std::size_t lineno) {
  std::string cleaned = s;
  std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
  std::istringstream is(cleaned);
  long a, b;
  if (!(is >> a >> b))
    throw std::runtime_error(file.filename().string() + ": line " +
                             std::to_string(lineno) +
                             ": expected an edge \"i, j\"");
  return {a, b};
}

}  // namespace

DatasetStats dataset_stats(const Dataset& d) {
  DatasetStats s;
  s.num_graphs = static_cast<int>(d.graphs.size());
  s.num_classes = d.num_classes;
  double nodes = 0.0, edges = 0.0;
  for (const Graph& g : d.graphs) {
    nodes += g.num_nodes;
    edges += static_cast<double>(g.undirected_edge_count());
  }
  if (!d.graphs.empty()) {
    s.mean_nodes = nodes / static_cast<double>(d.graphs.size());
    s.mean_edges = edges / static_cast<double>(d.graphs.size());
  }
  return s;
}

Dataset load_tu_dataset(const std::string& dir, const std::string& name) {
  const fs::path base(dir);
  const fs::path a_file = base / (name + "_A.txt");
  const fs::path ind_file = base / (name + "_graph_indicator.txt");
  const fs::path glab_file = base / (name + "_graph_labels.txt");
  const fs::path nlab_file = base / (name + "_node_labels.txt");

  const auto indicator_lines = read_lines(ind_file);
  const std::size_t num_nodes = indicator_lines.size();
  if (num_nodes == 0)
    throw std::runtime_error(ind_file.string() + ": empty indicator file");

  std::vector<long> node_graph(num_nodes);
  long num_graphs = 0;
  for (std::size_t i = 0; i < num_nodes; ++i) {
    const long gid = parse_int(indicator_lines[i], ind_file, i + 1);
    if (gid < 1)
      throw std::runtime_error(ind_file.filename().string() + ": line " +
                               std::to_string(i + 1) +
                               ": graph ids must be positive");
    node_graph[i] = gid - 1;
    num_graphs = std::max(num_graphs, gid);
  }

  const auto glab_lines = read_lines(glab_file);
  if (static_cast<long>(glab_lines.size()) != num_graphs)
    throw std::runtime_error(
        glab_file.filename().string() + ": inconsistent counts: " +
        std::to_string(glab_lines.size()) + " labels for " +
        std::to_string(num_graphs) + " graphs");
  std::vector<long> raw_glabels(glab_lines.size());
  for (std::size_t i = 0; i < glab_lines.size(); ++i)
    raw_glabels[i] = parse_int(glab_lines[i], glab_file, i + 1);

  // node labels are optional; fall back to a constant scalar feature
  std::vector<long> raw_nlabels;
  bool have_node_labels = fs::exists(nlab_file);
  if (have_node_labels) {
    const auto nlab_lines = read_lines(nlab_file);
    if (nlab_lines.size() != num_nodes)
      throw std::runtime_error(
          nlab_file.filename().string() + ": inconsistent counts: " +
          std::to_string(nlab_lines.size()) + " labels for " +
          std::to_string(num_nodes) + " nodes");
    raw_nlabels.resize(num_nodes);
    for (std::size_t i = 0; i < num_nodes; ++i)
      raw_nlabels[i] = parse_int(nlab_lines[i], nlab_file, i + 1);
  }

  // per-graph node ranges; the TU convention numbers nodes contiguously
  std::vector<long> first_node(static_cast<std::size_t>(num_graphs), -1);
  std::vector<long> graph_size(static_cast<std::size_t>(num_graphs), 0);
  for (std::size_t i = 0; i < num_nodes; ++i) {
    const long gid = node_graph[i];
    if (first_node[static_cast<std::size_t>(gid)] < 0)
      first_node[static_cast<std::size_t>(gid)] = static_cast<long>(i);
    ++graph_size[static_cast<std::size_t>(gid)];
  }
  for (long g = 0; g < num_graphs; ++g) {
    if (graph_size[static_cast<std::size_t>(g)] == 0)
      throw std::runtime_error(ind_file.filename().string() +
                               ": inconsistent counts: graph " +
                               std::to_string(g + 1) + " has no nodes");
    const long start = first_node[static_cast<std::size_t>(g)];
    for (long i = 0; i < graph_size[static_cast<std::size_t>(g)]; ++i)
      if (node_graph[static_cast<std::size_t>(start + i)] != g)
        throw std::runtime_error(ind_file.filename().string() +
                                 ": graph node ids are not contiguous");
  }

  const auto edge_lines = read_lines(a_file);
  std::vector<std::set<std::pair<int, int>>> edge_sets(
      static_cast<std::size_t>(num_graphs));
  bool asymmetric = false;
  bool self_loops = false;
  for (std::size_t ln = 0; ln < edge_lines.size(); ++ln) {
    if (edge_lines[ln].empty()) continue;
    auto [ga, gb] = parse_edge(edge_lines[ln], a_file, ln + 1);
    if (ga < 1 || gb < 1 || ga > static_cast<long>(num_nodes) ||
        gb > static_cast<long>(num_nodes))
      throw std::runtime_error(a_file.filename().string() + ": line " +
                               std::to_string(ln + 1) +
                               ": node id out of range");
    const long na = ga - 1, nb = gb - 1;
    const long gid = node_graph[static_cast<std::size_t>(na)];
    if (node_graph[static_cast<std::size_t>(nb)] != gid)
      throw std::runtime_error(a_file.filename().string() + ": line " +
                               std::to_string(ln + 1) +
                               ": edge crosses graph boundaries");
    if (na == nb) {
      self_loops = true;
      continue;
    }
    const long start = first_node[static_cast<std::size_t>(gid)];
    const int la = static_cast<int>(na - start);
    const int lb = static_cast<int>(nb - start);
    edge_sets[static_cast<std::size_t>(gid)].insert({la, lb});
  }
  for (const auto& set : edge_sets) {
    if (asymmetric) break;
    for (const auto& [a, b] : set)
      if (!set.count({b, a})) {
        asymmetric = true;
        break;
      }
  }
  if (asymmetric)
    std::cerr << "warning: " << a_file.filename().string()
              << " lists some edges in one direction only; symmetrizing\n";
  if (self_loops)
    std::cerr << "warning: " << a_file.filename().string()
              << " contains self-loops; dropped\n";

  // one-hot encoding over the distinct node labels, in sorted order
  std::map<long, int> nlabel_index;
  if (have_node_labels)
    for (long v : raw_nlabels) nlabel_index.emplace(v, 0);
  int next = 0;
  for (auto& [v, idx] : nlabel_index) idx = next++;
  const int feature_dim = have_node_labels ? next : 1;

  std::map<long, int> glabel_index;
  for (long v : raw_glabels) glabel_index.emplace(v, 0);
  next = 0;
  for (auto& [v, idx] : glabel_index) idx = next++;

  Dataset d;
  d.name = name;
  d.num_classes = next;
  d.feature_dim = feature_dim;
  d.graphs.reserve(static_cast<std::size_t>(num_graphs));
  for (long g = 0; g < num_graphs; ++g) {
    const long start = first_node[static_cast<std::size_t>(g)];
    const long size = graph_size[static_cast<std::size_t>(g)];
    std::vector<double> feats(static_cast<std::size_t>(size * feature_dim),
                              0.0);
    for (long i = 0; i < size; ++i) {
      if (have_node_labels) {
        const int idx =
            nlabel_index.at(raw_nlabels[static_cast<std::size_t>(start + i)]);
        feats[static_cast<std::size_t>(i * feature_dim + idx)] = 1.0;
      } else {
        feats[static_cast<std::size_t>(i)] = 1.0;
      }
    }
    std::vector<std::pair<int, int>> undirected(
        edge_sets[static_cast<std::size_t>(g)].begin(),
        edge_sets[static_cast<std::size_t>(g)].end());
    d.graphs.push_back(Graph::make(
        static_cast<int>(size), undirected,
        Tensor(static_cast<std::size_t>(size),
               static_cast<std::size_t>(feature_dim), std::move(feats)),
        glabel_index.at(raw_glabels[static_cast<std::size_t>(g)])));
  }
  return d;
}

void save_tu_dataset(const Dataset& d, const std::string& dir,
                     const std::string& name) {
  fs::create_directories(dir);
  const fs::path base(dir);
  std::ofstream a_os(base / (name + "_A.txt"));
  std::ofstream ind_os(base / (name + "_graph_indicator.txt"));
  std::ofstream glab_os(base / (name + "_graph_labels.txt"));
  std::ofstream nlab_os(base / (name + "_node_labels.txt"));
  if (!a_os || !ind_os || !glab_os || !nlab_os)
    throw std::runtime_error("save_tu_dataset: cannot write to " + dir);

  long offset = 1;  // TU node ids are global and 1-indexed
  for (std::size_t g = 0; g < d.graphs.size(); ++g) {
    const Graph& graph = d.graphs[g];
    glab_os << graph.label << "\n";
    for (int i = 0; i < graph.num_nodes; ++i) {
      ind_os << (g + 1) << "\n";
      // node label = one-hot argmax
      const auto& vals = graph.node_features.values();
      const std::size_t cols = graph.node_features.cols();
      std::size_t best = 0;
      for (std::size_t j = 1; j < cols; ++j)
        if (vals[static_cast<std::size_t>(i) * cols + j] >
            vals[static_cast<std::size_t>(i) * cols + best])
          best = j;
      nlab_os << best << "\n";
    }
    for (const auto& [a, b] : graph.edges)
      a_os << (offset + a) << ", " << (offset + b) << "\n";
    offset += graph.num_nodes;
  }
}

std::vector<int> FoldPlan::members_of(int fold) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] == fold) out.push_back(static_cast<int>(i));
  return out;
}

FoldPlan stratified_folds(const Dataset& d, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("stratified_folds: k must be >= 2");
  std::map<int, std::vector<int>> by_class;
  for (std::size_t i = 0; i < d.graphs.size(); ++i)
    by_class[d.graphs[i].label].push_back(static_cast<int>(i));
  for (const auto& [label, members] : by_class)
    if (static_cast<int>(members.size()) < k)
      throw std::invalid_argument(
          "stratified_folds: class " + std::to_string(label) + " has only " +
          std::to_string(members.size()) + " members for " +
          std::to_string(k) + " folds");

  Rng rng(seed);
  FoldPlan plan;
  plan.k = k;
  plan.assignments.assign(d.graphs.size(), -1);
  int offset = 0;  // rotates so remainders spread over folds
  for (auto& [label, members] : by_class) {
    rng.shuffle(members);
    for (std::size_t pos = 0; pos < members.size(); ++pos)
      plan.assignments[static_cast<std::size_t>(members[pos])] =
          (offset + static_cast<int>(pos)) % k;
    offset = (offset + static_cast<int>(members.size())) % k;
  }
  return plan;
}

Dataset synthetic_motif_dataset(int n, std::uint64_t seed) {
  if (n < 20)
    throw std::invalid_argument("synthetic_motif_dataset: need n >= 20");
  constexpr int kFeatureDim = 5;
  Rng rng(seed);

  Dataset d;
  d.name = "synthetic";
  d.num_classes = 2;
  d.feature_dim = kFeatureDim;
  d.graphs.reserve(static_cast<std::size_t>(n));

  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    const int nodes = 10 + rng.uniform_int(11);
    // marker counts are kept well separated between classes so the fraction
    // of marked nodes alone is discriminative
    const int markers =
        label == 1
            ? std::max(3, static_cast<int>(std::lround(0.35 * nodes)))
            : rng.uniform_int(3);

    std::vector<int> order(static_cast<std::size_t>(nodes));
    for (int v = 0; v < nodes; ++v) order[static_cast<std::size_t>(v)] = v;
    rng.shuffle(order);

    std::vector<double> feats(
        static_cast<std::size_t>(nodes) * kFeatureDim, 0.0);
    for (int v = 0; v < nodes; ++v) {
      const int node = order[static_cast<std::size_t>(v)];
      const int type = v < markers ? 0 : 1 + rng.uniform_int(kFeatureDim - 1);
      feats[static_cast<std::size_t>(node) * kFeatureDim +
            static_cast<std::size_t>(type)] = 1.0;
    }

    std::vector<std::pair<int, int>> edges;
    for (int v = 1; v < nodes; ++v) edges.emplace_back(v, rng.uniform_int(v));
    for (int extra = 0; extra < nodes / 2; ++extra) {
      const int a = rng.uniform_int(nodes);
      const int b = rng.uniform_int(nodes);
      if (a != b) edges.emplace_back(a, b);
    }

    d.graphs.push_back(Graph::make(
        nodes, edges,
        Tensor(static_cast<std::size_t>(nodes), kFeatureDim, std::move(feats)),
        markers >= 3 ? 1 : 0));
  }
  return d;
}

}  // namespace gsapool
