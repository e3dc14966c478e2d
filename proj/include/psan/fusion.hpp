#pragma once

#include <random>
#include <string>
#include <vector>

#include "psan/attention.hpp"
#include "psan/tensor.hpp"

namespace psan {

// Bilinear fusion weights plus the final two-way classifier.
template <typename Scalar>
struct FusionParamsT {
  TensorT<Scalar> wf;  // d x d bilinear form; absent under mean fusion
  TensorT<Scalar> wc;  // d x 2
  TensorT<Scalar> bc;  // 1 x 2

  static FusionParamsT init(int d, bool with_bilinear, std::mt19937_64& rng) {
    if (d < 1) throw ConfigError("fusion: width must be positive");
    FusionParamsT p;
    if (with_bilinear)
      p.wf = TensorT<Scalar>::param(detail::glorot<Scalar>(d, d, rng));
    p.wc = TensorT<Scalar>::param(detail::glorot<Scalar>(d, 2, rng));
    p.bc = TensorT<Scalar>::param(MatrixT<Scalar>::Zero(1, 2));
    return p;
  }
};

// Masked average of the encoded message rows: the global representation.
template <typename Scalar>
TensorT<Scalar> global_repr(const TensorT<Scalar>& encoded,
                            const Mask& mask = {}) {
  return mean(encoded, 0, mask);
}

template <typename Scalar>
struct CausalRepresentationT {
  TensorT<Scalar> h_caul;  // 1 x d convex combination of the inputs
  TensorT<Scalar> alpha;   // 1 x (D+1) weights; the self slot comes first
};

// Score the global representation against itself and against every salient
// discourse representation through the bilinear form, softmax the scores,
// and blend. Stacking [h_glo; h_1; ...; h_D] lets one matrix product compute
// all scores and another the blend.
template <typename Scalar>
CausalRepresentationT<Scalar> dominance_fuse(
    const TensorT<Scalar>& h_glo, const std::vector<TensorT<Scalar>>& reprs,
    const TensorT<Scalar>& wf) {
  if (reprs.empty())
    throw ValueError("dominance_fuse: need at least one discourse");
  if (h_glo.rows() != 1)
    throw ShapeError("dominance_fuse: global representation must be one row");
  for (const auto& r : reprs)
    if (r.rows() != 1 || r.cols() != h_glo.cols())
      throw ShapeError("dominance_fuse: discourse representation shape "
                       "mismatch");
  if (wf.rows() != h_glo.cols() || wf.cols() != h_glo.cols())
    throw ShapeError("dominance_fuse: bilinear form must be square in the "
                     "representation width");

  std::vector<TensorT<Scalar>> rows;
  rows.reserve(reprs.size() + 1);
  rows.push_back(h_glo);
  for (const auto& r : reprs) rows.push_back(r);
  TensorT<Scalar> m = concat(rows, 0);  // (D+1) x d

  TensorT<Scalar> scores = matmul(matmul(h_glo, wf), transpose(m));
  CausalRepresentationT<Scalar> out;
  out.alpha = softmax(scores, 1);
  out.h_caul = matmul(out.alpha, m);
  return out;
}

template <typename Scalar>
TensorT<Scalar> classify_logits(const TensorT<Scalar>& h,
                                const FusionParamsT<Scalar>& p) {
  return add_rowvec(matmul(h, p.wc), p.bc);
}

// Class probabilities for one representation row.
template <typename Scalar>
TensorT<Scalar> classify(const TensorT<Scalar>& h,
                         const FusionParamsT<Scalar>& p) {
  return softmax(classify_logits(h, p), 1);
}

// Ties go to the negative class.
template <typename Scalar>
int predict_from_probs(const MatrixT<Scalar>& probs, Eigen::Index row = 0) {
  return probs(row, 1) > probs(row, 0) ? 1 : 0;
}

using FusionParams = FusionParamsT<double>;
using CausalRepresentation = CausalRepresentationT<double>;

}  // namespace psan
