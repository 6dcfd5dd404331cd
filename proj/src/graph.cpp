#include "sosync/graph.hpp"

#include <algorithm>
#include <string>

namespace sosync {

Graph::Graph(int k, std::vector<Edge> edges) : k_(k), edges_(std::move(edges)) {
  if (k_ < 1) throw ConfigError("Graph: vertex count must be positive");
  std::sort(edges_.begin(), edges_.end());
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const auto& [a, b] = edges_[e];
    if (a < 0 || b >= k_) throw ConfigError("Graph: edge endpoint out of range");
    if (a == b) throw ConfigError("Graph: self-loops are not allowed");
    if (e > 0 && edges_[e] == edges_[e - 1]) throw ConfigError("Graph: duplicate edge");
  }
}

Graph Graph::complete(int k) {
  std::vector<Edge> edges;
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j) edges.emplace_back(i, j);
  return Graph(k, std::move(edges));
}

bool Graph::has_edge(int i, int j) const {
  if (i == j) return false;
  return std::binary_search(edges_.begin(), edges_.end(), Edge(i, j));
}

std::vector<int> Graph::neighbors(int v) const {
  std::vector<int> out;
  for (const auto& e : edges_) {
    if (e.a == v) out.push_back(e.b);
    if (e.b == v) out.push_back(e.a);
  }
  std::sort(out.begin(), out.end());
  return out;
}

int Graph::degree(int v) const { return static_cast<int>(neighbors(v).size()); }

Eigen::MatrixXd Graph::adjacency() const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k_, k_);
  for (const auto& e : edges_) {
    a(e.a, e.b) = 1.0;
    a(e.b, e.a) = 1.0;
  }
  return a;
}

Eigen::MatrixXd incidence_matrix(const Graph& g) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(g.vertex_count(), g.edge_count());
  for (int e = 0; e < g.edge_count(); ++e) {
    b(g.edges()[e].a, e) = -1.0;
    b(g.edges()[e].b, e) = 1.0;
  }
  return b;
}

Eigen::MatrixXd standard_laplacian(const Graph& g) {
  const int k = g.vertex_count();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(k, k);
  for (const auto& e : g.edges()) {
    l(e.a, e.a) += 1.0;
    l(e.b, e.b) += 1.0;
    l(e.a, e.b) -= 1.0;
    l(e.b, e.a) -= 1.0;
  }
  return l;
}

Components connected_components(const Graph& g) {
  const int k = g.vertex_count();
  Components c;
  c.label.assign(k, -1);
  std::vector<int> stack;
  for (int start = 0; start < k; ++start) {
    if (c.label[start] >= 0) continue;
    stack.push_back(start);
    c.label[start] = c.count;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int w : g.neighbors(v)) {
        if (c.label[w] < 0) {
          c.label[w] = c.count;
          stack.push_back(w);
        }
      }
    }
    ++c.count;
  }
  return c;
}

MultiGraph::MultiGraph(const Graph& g) : active_(g.vertex_count(), true) {
  for (const auto& e : g.edges()) mult_[e] = 1;
}

std::vector<int> MultiGraph::vertices() const {
  std::vector<int> out;
  for (int v = 0; v < static_cast<int>(active_.size()); ++v)
    if (active_[v]) out.push_back(v);
  return out;
}

int MultiGraph::vertex_count() const {
  return static_cast<int>(std::count(active_.begin(), active_.end(), true));
}

int MultiGraph::multiplicity(int i, int j) const {
  if (i == j) return 0;
  auto it = mult_.find(Edge(i, j));
  return it == mult_.end() ? 0 : it->second;
}

int MultiGraph::max_multiplicity() const {
  int m = 0;
  for (const auto& [e, c] : mult_) m = std::max(m, c);
  return m;
}

int MultiGraph::merge(const std::vector<int>& group) {
  const int target = *std::min_element(group.begin(), group.end());
  auto in_group = [&](int v) { return std::find(group.begin(), group.end(), v) != group.end(); };
  std::map<Edge, int> next;
  for (const auto& [e, c] : mult_) {
    int a = in_group(e.a) ? target : e.a;
    int b = in_group(e.b) ? target : e.b;
    if (a == b) continue;  // became internal
    next[Edge(a, b)] += c;
  }
  mult_ = std::move(next);
  for (int v : group)
    if (v != target) active_[v] = false;
  return target;
}

namespace {

// First (i,l,m,p) in lexicographic order with the five-edge pattern.
bool find_pattern(const MultiGraph& mg, std::vector<int>& out) {
  const std::vector<int> vs = mg.vertices();
  for (int i : vs)
    for (int l : vs) {
      if (l == i || !mg.has_edge(i, l)) continue;
      for (int m : vs) {
        if (m == i || m == l) continue;
        if (!mg.has_edge(i, m) || !mg.has_edge(m, l)) continue;
        for (int p : vs) {
          if (p == i || p == l || p == m) continue;
          if (mg.has_edge(p, l) && mg.has_edge(p, m)) {
            out = {i, l, m, p};
            return true;
          }
        }
      }
    }
  return false;
}

}  // namespace

CollapseResult collapse_analysis(const Graph& g) {
  CollapseResult res{false, MultiGraph(g), {}};
  MultiGraph& mg = res.final_graph;
  std::vector<int> pattern;
  while (find_pattern(mg, pattern)) {
    std::vector<int> group = pattern;
    std::sort(group.begin(), group.end());
    const int into = mg.merge(group);
    group.erase(std::find(group.begin(), group.end(), into));
    res.trace.push_back({CollapseStep::Kind::Pattern, group, into});

    for (;;) {
      Edge multi{};
      bool found = false;
      for (const auto& [e, c] : mg.edges()) {
        if (c > 1) {
          multi = e;
          found = true;
          break;
        }
      }
      if (!found) break;
      const int kept = mg.merge({multi.a, multi.b});
      res.trace.push_back({CollapseStep::Kind::MultiEdge, {multi.b == kept ? multi.a : multi.b}, kept});
    }
  }
  res.reducible = mg.vertex_count() == 1;
  return res;
}

}  // namespace sosync
