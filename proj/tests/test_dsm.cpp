#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "psan/fusion.hpp"
#include "psan/random.hpp"
#include "psan/tensor.hpp"
#include "support/oracles.hpp"

namespace {

using psan::Tensor;

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c,
                              std::mt19937_64& rng) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = psan::uniform(rng, -1, 1);
  return m;
}

// Scalar re-computation of the dominance blend: bilinear scores of the
// global row against the stacked rows, softmax, convex combination.
void fuse_by_hand(const Eigen::MatrixXd& h_glo,
                  const std::vector<Eigen::MatrixXd>& reprs,
                  const Eigen::MatrixXd& wf, Eigen::VectorXd* alpha,
                  Eigen::RowVectorXd* h_caul) {
  const Eigen::Index d = h_glo.cols();
  const std::size_t rows = reprs.size() + 1;
  std::vector<Eigen::RowVectorXd> m;
  m.push_back(h_glo.row(0));
  for (const auto& r : reprs) m.push_back(r.row(0));

  Eigen::VectorXd scores(static_cast<Eigen::Index>(rows));
  for (std::size_t j = 0; j < rows; ++j) {
    double s = 0.0;
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = 0; b < d; ++b)
        s += h_glo(0, a) * wf(a, b) * m[j](b);
    scores(static_cast<Eigen::Index>(j)) = s;
  }
  const double top = scores.maxCoeff();
  Eigen::VectorXd e = (scores.array() - top).exp();
  *alpha = e / e.sum();
  h_caul->setZero(d);
  for (std::size_t j = 0; j < rows; ++j)
    *h_caul += (*alpha)(static_cast<Eigen::Index>(j)) * m[j];
}

}  // namespace

TEST_CASE("a lone discourse equal to the global row splits weight evenly") {
  std::mt19937_64 rng(501);
  Tensor h_glo(random_matrix(1, 6, rng));
  Tensor wf(random_matrix(6, 6, rng));
  const auto out = psan::dominance_fuse(h_glo, {h_glo}, wf);

  CHECK(out.alpha.rows() == 1);
  CHECK(out.alpha.cols() == 2);
  CHECK(out.alpha.value()(0, 0) == 0.5);
  CHECK(out.alpha.value()(0, 1) == 0.5);
  CHECK((out.h_caul.value() - h_glo.value()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a zero bilinear form spreads weight uniformly") {
  std::mt19937_64 rng(502);
  Tensor h_glo(random_matrix(1, 4, rng));
  std::vector<Tensor> reprs;
  for (int i = 0; i < 3; ++i) reprs.push_back(Tensor(random_matrix(1, 4, rng)));
  Tensor wf(Eigen::MatrixXd::Zero(4, 4));
  const auto out = psan::dominance_fuse(h_glo, reprs, wf);

  for (int j = 0; j < 4; ++j) CHECK(out.alpha.value()(0, j) == 0.25);
  Eigen::RowVectorXd mean =
      0.25 * (h_glo.value().row(0) + reprs[0].value().row(0) +
              reprs[1].value().row(0) + reprs[2].value().row(0));
  CHECK((out.h_caul.value().row(0) - mean).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("fusion matches a scalar loop") {
  std::mt19937_64 rng(503);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(
                                   psan::uniform_index(rng, 6));
    const std::size_t count = 1 + psan::uniform_index(rng, 4);
    Tensor h_glo(random_matrix(1, d, rng));
    Tensor wf(random_matrix(d, d, rng));
    std::vector<Tensor> reprs;
    std::vector<Eigen::MatrixXd> plain;
    for (std::size_t i = 0; i < count; ++i) {
      plain.push_back(random_matrix(1, d, rng));
      reprs.push_back(Tensor(plain.back()));
    }
    const auto out = psan::dominance_fuse(h_glo, reprs, wf);

    Eigen::VectorXd alpha;
    Eigen::RowVectorXd h_caul;
    fuse_by_hand(h_glo.value(), plain, wf.value(), &alpha, &h_caul);
    CHECK((out.alpha.value().row(0).transpose() - alpha)
              .cwiseAbs()
              .maxCoeff() < 1e-12);
    CHECK((out.h_caul.value().row(0) - h_caul).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("fusion weights form a convex combination") {
  std::mt19937_64 rng(504);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(
                                   psan::uniform_index(rng, 5));
    const std::size_t count = 1 + psan::uniform_index(rng, 5);
    Tensor h_glo(random_matrix(1, d, rng));
    Tensor wf(random_matrix(d, d, rng));
    std::vector<Tensor> reprs;
    for (std::size_t i = 0; i < count; ++i)
      reprs.push_back(Tensor(random_matrix(1, d, rng)));
    const auto out = psan::dominance_fuse(h_glo, reprs, wf);

    double sum = 0.0;
    for (Eigen::Index j = 0; j < out.alpha.cols(); ++j) {
      CHECK(out.alpha.value()(0, j) >= 0.0);
      sum += out.alpha.value()(0, j);
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);

    for (Eigen::Index c = 0; c < d; ++c) {
      double lo = h_glo.value()(0, c), hi = lo;
      for (const auto& r : reprs) {
        lo = std::min(lo, r.value()(0, c));
        hi = std::max(hi, r.value()(0, c));
      }
      CHECK(out.h_caul.value()(0, c) >= lo - 1e-12);
      CHECK(out.h_caul.value()(0, c) <= hi + 1e-12);
    }
  }
}

TEST_CASE("reordering discourses permutes their weights") {
  std::mt19937_64 rng(505);
  Tensor h_glo(random_matrix(1, 5, rng));
  Tensor wf(random_matrix(5, 5, rng));
  Tensor r0(random_matrix(1, 5, rng));
  Tensor r1(random_matrix(1, 5, rng));
  Tensor r2(random_matrix(1, 5, rng));

  const auto a = psan::dominance_fuse(h_glo, {r0, r1, r2}, wf);
  const auto b = psan::dominance_fuse(h_glo, {r2, r0, r1}, wf);

  CHECK(std::abs(a.alpha.value()(0, 0) - b.alpha.value()(0, 0)) < 1e-12);
  CHECK(std::abs(a.alpha.value()(0, 1) - b.alpha.value()(0, 2)) < 1e-12);
  CHECK(std::abs(a.alpha.value()(0, 2) - b.alpha.value()(0, 3)) < 1e-12);
  CHECK(std::abs(a.alpha.value()(0, 3) - b.alpha.value()(0, 1)) < 1e-12);
  CHECK((a.h_caul.value() - b.h_caul.value()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fusion gradients match finite differences") {
  std::mt19937_64 rng(506);
  Tensor h_glo = Tensor::param(random_matrix(1, 4, rng));
  Tensor wf = Tensor::param(random_matrix(4, 4, rng));
  Tensor r0 = Tensor::param(random_matrix(1, 4, rng));
  Tensor r1 = Tensor::param(random_matrix(1, 4, rng));

  const auto loss_value = [&]() {
    const auto out = psan::dominance_fuse(h_glo, {r0, r1}, wf);
    return psan::sum_all(psan::tanh(out.h_caul)).value()(0, 0);
  };

  {
    psan::Tape tape;
    const auto out = psan::dominance_fuse(h_glo, {r0, r1}, wf);
    auto loss = psan::sum_all(psan::tanh(out.h_caul));
    tape.backward(loss);
  }
  for (Tensor t : {h_glo, wf, r0, r1}) {
    const Eigen::MatrixXd analytic = t.grad();
    CHECK(oracle::fd_compare(t.raw_value(), analytic, loss_value).ok());
  }
}

TEST_CASE("the classifier is an affine map with softmax on top") {
  Eigen::MatrixXd h(1, 2);
  h << 1.0, 2.0;
  psan::FusionParams p;
  p.wc = Tensor(Eigen::MatrixXd::Identity(2, 2));
  Eigen::MatrixXd bc(1, 2);
  bc << 0.5, -0.5;
  p.bc = Tensor(bc);

  const Tensor logits = psan::classify_logits(Tensor(h), p);
  CHECK(logits.value()(0, 0) == 1.5);
  CHECK(logits.value()(0, 1) == 1.5);

  const Tensor probs = psan::classify(Tensor(h), p);
  CHECK(probs.value()(0, 0) == 0.5);
  CHECK(probs.value()(0, 1) == 0.5);

  Eigen::MatrixXd bc2(1, 2);
  bc2 << 0.0, 3.0;
  p.bc = Tensor(bc2);
  const Tensor shifted = psan::classify(Tensor(h), p);
  const double gap = std::exp(5.0 - 1.0);
  CHECK(shifted.value()(0, 1) ==
        doctest::Approx(gap / (1.0 + gap)).epsilon(1e-12));
}

TEST_CASE("prediction breaks ties toward the negative class") {
  Eigen::MatrixXd probs(3, 2);
  probs << 0.5, 0.5, 0.4, 0.6, 0.6, 0.4;
  CHECK(psan::predict_from_probs(probs, 0) == 0);
  CHECK(psan::predict_from_probs(probs, 1) == 1);
  CHECK(psan::predict_from_probs(probs, 2) == 0);
}

TEST_CASE("the global representation averages only live rows") {
  std::mt19937_64 rng(507);
  const Eigen::MatrixXd m = random_matrix(4, 3, rng);
  const psan::Mask mask{1, 1, 0, 0};
  const Tensor h = psan::global_repr(Tensor(m), mask);
  const Eigen::RowVectorXd want = 0.5 * (m.row(0) + m.row(1));
  CHECK((h.value().row(0) - want).cwiseAbs().maxCoeff() < 1e-14);

  const Tensor all = psan::global_repr(Tensor(m));
  const Eigen::RowVectorXd want_all = m.colwise().mean();
  CHECK((all.value().row(0) - want_all).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("fusion validates its inputs") {
  std::mt19937_64 rng(508);
  Tensor h_glo(random_matrix(1, 4, rng));
  Tensor wf(random_matrix(4, 4, rng));
  Tensor r(random_matrix(1, 4, rng));

  CHECK_THROWS_AS(psan::dominance_fuse(h_glo, {}, wf), psan::ValueError);
  CHECK_THROWS_AS(
      psan::dominance_fuse(Tensor(random_matrix(2, 4, rng)), {r}, wf),
      psan::ShapeError);
  CHECK_THROWS_AS(
      psan::dominance_fuse(h_glo, {Tensor(random_matrix(1, 3, rng))}, wf),
      psan::ShapeError);
  CHECK_THROWS_AS(
      psan::dominance_fuse(h_glo, {r}, Tensor(random_matrix(4, 3, rng))),
      psan::ShapeError);
  CHECK_THROWS_AS(psan::FusionParams::init(0, true, rng), psan::ConfigError);
}

TEST_CASE("init provides the bilinear form only when asked") {
  std::mt19937_64 rng(509);
  const auto with = psan::FusionParams::init(5, true, rng);
  CHECK(with.wf.valid());
  CHECK(with.wf.rows() == 5);
  CHECK(with.wf.cols() == 5);
  CHECK(with.wc.rows() == 5);
  CHECK(with.wc.cols() == 2);
  CHECK(with.bc.value().isZero(0.0));

  const auto without = psan::FusionParams::init(5, false, rng);
  CHECK_FALSE(without.wf.valid());
}
