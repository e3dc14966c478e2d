#pragma once

#include <random>
#include <string>
#include <vector>

#include "psan/attention.hpp"
#include "psan/graph.hpp"
#include "psan/tensor.hpp"

namespace psan {

// Stacked graph-convolution weights. The first layer maps the encoder width
// to the graph width; later layers stay at graph width.
template <typename Scalar>
struct GcnParamsT {
  std::vector<TensorT<Scalar>> w;  // layer l: d_in x d_out
  std::vector<TensorT<Scalar>> b;  // layer l: 1 x d_out

  int layers() const { return static_cast<int>(w.size()); }
  bool valid() const { return !w.empty(); }

  static GcnParamsT init(int d_in, int d_gcn, int layers,
                         std::mt19937_64& rng) {
    if (layers < 1) throw ConfigError("gcn: need at least one layer");
    if (d_in < 1 || d_gcn < 1) throw ConfigError("gcn: widths must be positive");
    GcnParamsT p;
    int cur = d_in;
    for (int l = 0; l < layers; ++l) {
      p.w.push_back(
          TensorT<Scalar>::param(detail::glorot<Scalar>(cur, d_gcn, rng)));
      p.b.push_back(TensorT<Scalar>::param(MatrixT<Scalar>::Zero(1, d_gcn)));
      cur = d_gcn;
    }
    return p;
  }
};

// Row-normalized self-looped adjacency: entry (i, j) is (A + I)_ij / d_i,
// where d_i counts node i's neighbors plus itself. Each node averages over
// its closed neighborhood, normalized by the receiving node's degree.
template <typename Scalar>
MatrixT<Scalar> normalized_adjacency(const SyntacticGraph& g) {
  MatrixT<Scalar> m = g.a_tilde().template cast<Scalar>();
  for (int i = 0; i < g.v; ++i)
    m.row(i) /= static_cast<Scalar>(g.degrees[static_cast<std::size_t>(i)]);
  return m;
}

// One graph convolution: h_i <- relu(sum_j (A+I)_ij W h_j / d_i + b).
template <typename Scalar>
TensorT<Scalar> gcn_layer(const TensorT<Scalar>& h, const SyntacticGraph& g,
                          const TensorT<Scalar>& w, const TensorT<Scalar>& b) {
  if (h.rows() != g.v)
    throw ShapeError("gcn_layer: " + std::to_string(h.rows()) +
                     " feature rows for " + std::to_string(g.v) + " nodes");
  if (h.cols() != w.rows())
    throw ShapeError("gcn_layer: feature width " + std::to_string(h.cols()) +
                     " does not match weight rows " + std::to_string(w.rows()));
  TensorT<Scalar> norm(normalized_adjacency<Scalar>(g));
  return relu(add_rowvec(matmul(norm, matmul(h, w)), b));
}

// Run the full stack over the discourse graph and read out the root row.
// The caller must have stripped padding: one feature row per graph node.
template <typename Scalar>
TensorT<Scalar> salient_repr(const TensorT<Scalar>& encoded,
                             const SyntacticGraph& g,
                             const GcnParamsT<Scalar>& p) {
  if (g.root < 0 || g.root >= g.v)
    throw StructuralError("salient_repr: root " + std::to_string(g.root) +
                          " out of range");
  if (encoded.rows() != g.v)
    throw ShapeError("salient_repr: padding must be removed before the graph "
                     "stack");
  TensorT<Scalar> h = encoded;
  for (int l = 0; l < p.layers(); ++l)
    h = gcn_layer(h, g, p.w[static_cast<std::size_t>(l)],
                  p.b[static_cast<std::size_t>(l)]);
  return row(h, g.root);
}

using GcnParams = GcnParamsT<double>;

}  // namespace psan
