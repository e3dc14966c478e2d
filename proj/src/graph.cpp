#include "psan/graph.hpp"

#include <deque>
#include <string>

namespace psan {

Eigen::MatrixXi SyntacticGraph::a_tilde() const {
  Eigen::MatrixXi t = a;
  for (int i = 0; i < v; ++i) t(i, i) = 1;
  return t;
}

SyntacticGraph build_graph(int v, const std::vector<std::pair<int, int>>& edges,
                           int root) {
  if (v < 1) throw ValueError("build_graph: need at least one node");
  if (root < 0 || root >= v)
    throw StructuralError("build_graph: root " + std::to_string(root) +
                          " out of range for " + std::to_string(v) + " nodes");
  SyntacticGraph g;
  g.v = v;
  g.root = root;
  g.a = Eigen::MatrixXi::Zero(v, v);
  for (const auto& [i, j] : edges) {
    if (i < 0 || j < 0 || i >= v || j >= v)
      throw StructuralError("build_graph: edge (" + std::to_string(i) + ", " +
                            std::to_string(j) + ") out of range");
    if (i == j)
      throw StructuralError("build_graph: self-loop at node " +
                            std::to_string(i));
    g.a(i, j) = 1;
    g.a(j, i) = 1;
  }
  g.degrees.resize(static_cast<std::size_t>(v));
  for (int i = 0; i < v; ++i)
    g.degrees[static_cast<std::size_t>(i)] = 1 + g.a.row(i).sum();
  return g;
}

SyntacticGraph build_graph(const ParsedDiscourse& parse) {
  return build_graph(static_cast<int>(parse.forms.size()), parse.edges,
                     parse.root);
}

SyntacticGraph build_graph(const EncodedDiscourse& disc) {
  return build_graph(disc.len, disc.edges, disc.root);
}

std::set<int> keywords(const SyntacticGraph& g, int k) {
  if (k < 1) throw ConfigError("keywords: depth must be at least 1");
  std::set<int> seen{g.root};
  std::deque<std::pair<int, int>> frontier{{g.root, 0}};
  while (!frontier.empty()) {
    const auto [u, d] = frontier.front();
    frontier.pop_front();
    if (d == k) continue;
    for (int w = 0; w < g.v; ++w) {
      if (g.a(u, w) != 0 && seen.insert(w).second)
        frontier.push_back({w, d + 1});
    }
  }
  return seen;
}

}  // namespace psan
