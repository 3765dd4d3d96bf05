#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "gsapool/dataset.hpp"

using namespace gsapool;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("gsapool_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream os(p);
  os << content;
}

// one triangle (label 1) and one isolated node (label 0)
void write_fixture(const fs::path& dir, const std::string& name) {
  write_file(dir / (name + "_A.txt"),
             "1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n");
  write_file(dir / (name + "_graph_indicator.txt"), "1\n1\n1\n2\n");
  write_file(dir / (name + "_graph_labels.txt"), "1\n-1\n");
  write_file(dir / (name + "_node_labels.txt"), "0\n1\n0\n2\n");
}

}  // namespace

TEST_CASE("loads a minimal two-graph fixture") {
  TempDir tmp;
  write_fixture(tmp.path, "TINY");
  Dataset d = load_tu_dataset(tmp.path.string(), "TINY");

  REQUIRE(d.graphs.size() == 2);
  CHECK(d.num_classes == 2);
  CHECK(d.feature_dim == 3);

  const Graph& tri = d.graphs[0];
  CHECK(tri.num_nodes == 3);
  CHECK(tri.undirected_edge_count() == 3);
  CHECK(tri.label == 1);  // raw labels {-1, 1} remap to {0, 1}

  const Graph& single = d.graphs[1];
  CHECK(single.num_nodes == 1);
  CHECK(single.undirected_edge_count() == 0);
  CHECK(single.label == 0);
  CHECK(single.node_features.values() == std::vector<double>{0.0, 0.0, 1.0});
}

TEST_CASE("missing files are reported by name") {
  TempDir tmp;
  write_fixture(tmp.path, "TINY");
  fs::remove(tmp.path / "TINY_graph_labels.txt");
  try {
    load_tu_dataset(tmp.path.string(), "TINY");
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("TINY_graph_labels.txt") !=
          std::string::npos);
  }
}

TEST_CASE("cross-graph edges are reported with their line number") {
  TempDir tmp;
  write_fixture(tmp.path, "TINY");
  write_file(tmp.path / "TINY_A.txt", "1, 2\n2, 1\n1, 4\n");
  try {
    load_tu_dataset(tmp.path.string(), "TINY");
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("crosses graph") != std::string::npos);
  }
}

TEST_CASE("inconsistent label counts are rejected") {
  TempDir tmp;
  write_fixture(tmp.path, "TINY");
  write_file(tmp.path / "TINY_graph_labels.txt", "1\n");
  CHECK_THROWS_AS(load_tu_dataset(tmp.path.string(), "TINY"),
                  std::runtime_error);
}

TEST_CASE("datasets without node labels fall back to constant features") {
  TempDir tmp;
  write_fixture(tmp.path, "TINY");
  fs::remove(tmp.path / "TINY_node_labels.txt");
  Dataset d = load_tu_dataset(tmp.path.string(), "TINY");
  CHECK(d.feature_dim == 1);
  CHECK(d.graphs[0].node_features.values() ==
        std::vector<double>{1.0, 1.0, 1.0});
}

TEST_CASE("one-directional edge files are symmetrized") {
  TempDir tmp;
  write_fixture(tmp.path, "TINY");
  write_file(tmp.path / "TINY_A.txt", "1, 2\n2, 3\n");  // forward only
  Dataset d = load_tu_dataset(tmp.path.string(), "TINY");
  CHECK(d.graphs[0].undirected_edge_count() == 2);
  d.graphs[0].validate();
}

TEST_CASE("edge lines tolerate whitespace variations") {
  TempDir tmp;
  write_fixture(tmp.path, "TINY");
  write_file(tmp.path / "TINY_A.txt", "1,2\n2,1\n  2 , 3 \n3,2\n");
  Dataset d = load_tu_dataset(tmp.path.string(), "TINY");
  CHECK(d.graphs[0].undirected_edge_count() == 2);
}

TEST_CASE("round trip through the TU format preserves structure") {
  Dataset d = synthetic_motif_dataset(30, 123);
  TempDir tmp;
  save_tu_dataset(d, tmp.path.string(), "ROUND");
  Dataset back = load_tu_dataset(tmp.path.string(), "ROUND");

  REQUIRE(back.graphs.size() == d.graphs.size());
  CHECK(back.num_classes == d.num_classes);
  CHECK(back.feature_dim == d.feature_dim);
  for (std::size_t i = 0; i < d.graphs.size(); ++i) {
    CHECK(back.graphs[i].num_nodes == d.graphs[i].num_nodes);
    CHECK(back.graphs[i].edges == d.graphs[i].edges);
    CHECK(back.graphs[i].label == d.graphs[i].label);
    CHECK(back.graphs[i].node_features.values() ==
          d.graphs[i].node_features.values());
  }
}

TEST_CASE("dataset statistics count undirected edges") {
  TempDir tmp;
  write_fixture(tmp.path, "TINY");
  Dataset d = load_tu_dataset(tmp.path.string(), "TINY");
  DatasetStats s = dataset_stats(d);
  CHECK(s.num_graphs == 2);
  CHECK(s.num_classes == 2);
  CHECK(s.mean_nodes == doctest::Approx(2.0));
  CHECK(s.mean_edges == doctest::Approx(1.5));
}

// ---- folds -------------------------------------------------------------------

namespace {

Dataset tiny_labeled_dataset(int per_class, int classes) {
  Dataset d;
  d.name = "tiny";
  d.num_classes = classes;
  d.feature_dim = 1;
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < per_class; ++i)
      d.graphs.push_back(Graph::make(2, {{0, 1}}, {}, c));
  return d;
}

}  // namespace

TEST_CASE("perfectly divisible folds hold one graph per class") {
  Dataset d = tiny_labeled_dataset(5, 2);
  FoldPlan plan = stratified_folds(d, 5, 99);
  for (int f = 0; f < 5; ++f) {
    std::map<int, int> class_counts;
    for (int idx : plan.members_of(f)) ++class_counts[d.graphs[idx].label];
    CHECK(class_counts[0] == 1);
    CHECK(class_counts[1] == 1);
  }
}

TEST_CASE("fold assignment is deterministic in the seed") {
  Dataset d = tiny_labeled_dataset(7, 3);
  FoldPlan a = stratified_folds(d, 4, 1234);
  FoldPlan b = stratified_folds(d, 4, 1234);
  CHECK(a.assignments == b.assignments);
  FoldPlan c = stratified_folds(d, 4, 1235);
  CHECK(a.assignments != c.assignments);
}

TEST_CASE("per-class fold counts differ by at most one") {
  Dataset d = tiny_labeled_dataset(13, 2);
  for (int i = 0; i < 3; ++i)
    d.graphs.push_back(Graph::make(2, {{0, 1}}, {}, 1));  // unbalance a bit
  FoldPlan plan = stratified_folds(d, 5, 42);

  for (int c = 0; c < 2; ++c) {
    int lo = 1 << 30, hi = 0;
    for (int f = 0; f < 5; ++f) {
      int count = 0;
      for (int idx : plan.members_of(f))
        if (d.graphs[static_cast<std::size_t>(idx)].label == c) ++count;
      lo = std::min(lo, count);
      hi = std::max(hi, count);
    }
    CHECK(hi - lo <= 1);
  }
}

TEST_CASE("every graph lands in exactly one fold") {
  Dataset d = tiny_labeled_dataset(10, 2);
  FoldPlan plan = stratified_folds(d, 4, 7);
  std::set<int> seen;
  for (int f = 0; f < 4; ++f)
    for (int idx : plan.members_of(f)) CHECK(seen.insert(idx).second);
  CHECK(seen.size() == d.graphs.size());
}

TEST_CASE("undersized classes are rejected") {
  Dataset d = tiny_labeled_dataset(3, 2);
  CHECK_THROWS_AS(stratified_folds(d, 4, 0), std::invalid_argument);
  CHECK_THROWS_AS(stratified_folds(d, 1, 0), std::invalid_argument);
}

TEST_CASE("a 4110-graph two-class split yields ten folds of 411") {
  // benchmark-sized check: class remainders complement each other, so the
  // rotating assignment keeps every fold at exactly n/k graphs
  Dataset d;
  d.name = "mock";
  d.num_classes = 2;
  d.feature_dim = 1;
  for (int i = 0; i < 4110; ++i)
    d.graphs.push_back(Graph::make(1, {}, {}, i < 2053 ? 0 : 1));
  FoldPlan plan = stratified_folds(d, 10, 42);
  for (int f = 0; f < 10; ++f)
    CHECK(plan.members_of(f).size() == 411);
}

// ---- synthetic generator ------------------------------------------------------

TEST_CASE("synthetic dataset is balanced and deterministic") {
  Dataset d = synthetic_motif_dataset(100, 7);
  REQUIRE(d.graphs.size() == 100);
  int per_class[2] = {0, 0};
  for (const Graph& g : d.graphs) ++per_class[g.label];
  CHECK(per_class[0] == 50);
  CHECK(per_class[1] == 50);

  Dataset again = synthetic_motif_dataset(100, 7);
  for (std::size_t i = 0; i < d.graphs.size(); ++i) {
    CHECK(again.graphs[i].edges == d.graphs[i].edges);
    CHECK(again.graphs[i].node_features.values() ==
          d.graphs[i].node_features.values());
    CHECK(again.graphs[i].label == d.graphs[i].label);
  }
}

TEST_CASE("synthetic graphs share a feature dimension and the label rule") {
  Dataset d = synthetic_motif_dataset(20, 3);
  for (const Graph& g : d.graphs) {
    CHECK(g.feature_dim() == d.feature_dim);
    CHECK(g.num_nodes >= 10);
    CHECK(g.num_nodes <= 20);
    int markers = 0;
    for (int i = 0; i < g.num_nodes; ++i)
      if (g.node_features.at(static_cast<std::size_t>(i), 0) == 1.0) ++markers;
    CHECK(g.label == (markers >= 3 ? 1 : 0));
    g.validate();
  }
}

TEST_CASE("synthetic generator rejects tiny requests") {
  CHECK_THROWS_AS(synthetic_motif_dataset(10, 0), std::invalid_argument);
}
