#pragma once

#include <Eigen/Dense>

#include <set>
#include <utility>
#include <vector>

#include "psan/corpus.hpp"

namespace psan {

// Undirected dependency structure of one discourse. The adjacency matrix has
// a zero diagonal; degrees count the implicit self-loop, so an isolated node
// has degree 1 and the middle of a three-node chain has degree 3.
struct SyntacticGraph {
  int v = 0;
  Eigen::MatrixXi a;         // symmetric 0/1, zero diagonal
  std::vector<int> degrees;  // over a + I
  int root = 0;

  Eigen::MatrixXi a_tilde() const;  // a + I
};

SyntacticGraph build_graph(int v, const std::vector<std::pair<int, int>>& edges,
                           int root);
SyntacticGraph build_graph(const ParsedDiscourse& parse);
SyntacticGraph build_graph(const EncodedDiscourse& disc);

// Nodes within k hops of the root, root included. k must be at least 1.
std::set<int> keywords(const SyntacticGraph& g, int k);

}  // namespace psan
