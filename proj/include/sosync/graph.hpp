#pragma once

#include <Eigen/Dense>
#include <map>
#include <utility>
#include <vector>

#include "sosync/errors.hpp"

namespace sosync {

// Unordered vertex pair, stored canonically with a < b. Vertices are
// 0-based internally; JSON/CLI surfaces are 1-based.
struct Edge {
  int a = 0;
  int b = 0;
  Edge() = default;
  Edge(int i, int j) : a(i < j ? i : j), b(i < j ? j : i) {}
  bool operator==(const Edge& o) const { return a == o.a && b == o.b; }
  bool operator<(const Edge& o) const { return a != o.a ? a < o.a : b < o.b; }
};

// Simple undirected graph: no self-loops, no duplicate edges. Edges are kept
// sorted lexicographically; that order defines incidence-matrix columns.
class Graph {
 public:
  Graph(int k, std::vector<Edge> edges);
  static Graph complete(int k);

  int vertex_count() const { return k_; }
  const std::vector<Edge>& edges() const { return edges_; }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  bool has_edge(int i, int j) const;
  std::vector<int> neighbors(int v) const;
  int degree(int v) const;
  Eigen::MatrixXd adjacency() const;

 private:
  int k_;
  std::vector<Edge> edges_;
};

// Column e: +1 at the larger endpoint, -1 at the smaller. B B^T equals the
// standard Laplacian exactly (integer arithmetic in doubles).
Eigen::MatrixXd incidence_matrix(const Graph& g);

// L = D - A.
Eigen::MatrixXd standard_laplacian(const Graph& g);

struct Components {
  int count = 0;
  std::vector<int> label;  // component index per vertex
};
Components connected_components(const Graph& g);

// Multigraph used while collapsing. Vertices keep their original labels;
// collapsed vertices disappear from `vertices()`.
class MultiGraph {
 public:
  explicit MultiGraph(const Graph& g);

  std::vector<int> vertices() const;
  int vertex_count() const;
  int multiplicity(int i, int j) const;
  int max_multiplicity() const;
  bool has_edge(int i, int j) const { return multiplicity(i, j) > 0; }
  const std::map<Edge, int>& edges() const { return mult_; }

  // Merge all of `group` into its smallest label. Internal edges vanish,
  // external multiplicities accumulate.
  int merge(const std::vector<int>& group);

 private:
  std::vector<bool> active_;
  std::map<Edge, int> mult_;
};

struct CollapseStep {
  enum class Kind { Pattern, MultiEdge };
  Kind kind;
  std::vector<int> absorbed;  // vertices merged away (ascending)
  int into;                   // surviving label (smallest of the group)
};

struct CollapseResult {
  bool reducible = false;  // final graph is a single vertex
  MultiGraph final_graph;
  std::vector<CollapseStep> trace;
};

// Repeatedly: find vertices i,l,m,p with (i,l),(i,m),(p,l),(p,m),(m,l) all
// present and merge the four; then merge any pair joined by more than one
// edge. First lexicographic match wins, so traces are deterministic.
CollapseResult collapse_analysis(const Graph& g);

}  // namespace sosync
