#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "psan/errors.hpp"
#include "psan/random.hpp"
#include "psan/tensor.hpp"

namespace psan {

namespace detail {

template <typename Scalar>
MatrixT<Scalar> glorot(Eigen::Index rows, Eigen::Index cols,
                       std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  MatrixT<Scalar> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      m(i, j) = static_cast<Scalar>(uniform(rng, -limit, limit));
  return m;
}

}  // namespace detail

// Per-head query/key/value projections plus the output projection that mixes
// the concatenated heads back to model width. No biases; the projections are
// pure linear maps.
template <typename Scalar>
struct EncoderParamsT {
  std::vector<TensorT<Scalar>> wq, wk, wv;  // each d_model x d_k
  TensorT<Scalar> wo;                       // d_model x d_model

  int heads() const { return static_cast<int>(wq.size()); }
  int d_model() const { return static_cast<int>(wo.rows()); }
  int d_k() const {
    return wq.empty() ? 0 : static_cast<int>(wq[0].cols());
  }
  bool valid() const { return wo.valid(); }

  static EncoderParamsT init(int d_model, int heads, std::mt19937_64& rng) {
    if (d_model < 1 || heads < 1)
      throw ConfigError("encoder: model width and head count must be positive");
    if (d_model % heads != 0)
      throw ConfigError("encoder: head count " + std::to_string(heads) +
                        " does not divide model width " +
                        std::to_string(d_model));
    const int dk = d_model / heads;
    EncoderParamsT p;
    for (int h = 0; h < heads; ++h) {
      p.wq.push_back(
          TensorT<Scalar>::param(detail::glorot<Scalar>(d_model, dk, rng)));
      p.wk.push_back(
          TensorT<Scalar>::param(detail::glorot<Scalar>(d_model, dk, rng)));
      p.wv.push_back(
          TensorT<Scalar>::param(detail::glorot<Scalar>(d_model, dk, rng)));
    }
    p.wo =
        TensorT<Scalar>::param(detail::glorot<Scalar>(d_model, d_model, rng));
    return p;
  }
};

// softmax(Q K^T / sqrt(d_k)) V with an optional key-validity mask. Masked
// keys receive exactly zero weight; each query row's weights sum to one over
// the unmasked keys.
template <typename Scalar>
TensorT<Scalar> scaled_dot_attention(const TensorT<Scalar>& q,
                                     const TensorT<Scalar>& k,
                                     const TensorT<Scalar>& v,
                                     const Mask& mask = {}) {
  if (q.cols() != k.cols())
    throw ShapeError("attention: query and key widths differ");
  if (k.rows() != v.rows())
    throw ShapeError("attention: key and value counts differ");
  const Eigen::Index dk = q.cols();
  if (dk == 0) throw ConfigError("attention: zero-width heads");
  TensorT<Scalar> scores =
      scale(Scalar(1) / std::sqrt(static_cast<Scalar>(dk)),
            matmul(q, transpose(k)));
  TensorT<Scalar> weights = softmax(scores, 1, mask);
  return matmul(weights, v);
}

// Multi-head self-attention over the rows of x: project, attend per head,
// concatenate and mix. Padding positions are masked out of every head.
template <typename Scalar>
TensorT<Scalar> multi_head_encode(const TensorT<Scalar>& x,
                                  const EncoderParamsT<Scalar>& p,
                                  const Mask& mask = {}) {
  if (x.cols() != p.d_model())
    throw ShapeError("encode: input width " + std::to_string(x.cols()) +
                     " does not match model width " +
                     std::to_string(p.d_model()));
  std::vector<TensorT<Scalar>> heads;
  heads.reserve(p.wq.size());
  for (std::size_t h = 0; h < p.wq.size(); ++h) {
    TensorT<Scalar> q = matmul(x, p.wq[h]);
    TensorT<Scalar> k = matmul(x, p.wk[h]);
    TensorT<Scalar> v = matmul(x, p.wv[h]);
    heads.push_back(scaled_dot_attention(q, k, v, mask));
  }
  return matmul(concat(heads, 1), p.wo);
}

using EncoderParams = EncoderParamsT<double>;

}  // namespace psan
