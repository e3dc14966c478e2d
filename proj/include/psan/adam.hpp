#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "psan/errors.hpp"
#include "psan/tensor.hpp"

namespace psan {

// Adam with bias correction. The first step with gradient 1 moves a fresh
// parameter by -lr / (1 + eps); a zero gradient on fresh state moves nothing.
// Gradients are read from the tensors' accumulators; the caller zeroes them
// between steps.
template <typename Scalar>
class AdamT {
 public:
  using Matrix = MatrixT<Scalar>;

  explicit AdamT(Scalar lr = Scalar(0.001), Scalar beta1 = Scalar(0.9),
                 Scalar beta2 = Scalar(0.999), Scalar eps = Scalar(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  long step_count() const { return t_; }

  void step(std::vector<std::pair<std::string, TensorT<Scalar>>>& params) {
    if (slots_.empty()) {
      slots_.reserve(params.size());
      for (auto& [name, p] : params)
        slots_.push_back(Slot{Matrix::Zero(p.rows(), p.cols()),
                              Matrix::Zero(p.rows(), p.cols())});
    } else if (slots_.size() != params.size()) {
      throw ShapeError("adam: the parameter set changed between steps");
    }
    ++t_;
    const Scalar c1 = Scalar(1) - std::pow(beta1_, static_cast<Scalar>(t_));
    const Scalar c2 = Scalar(1) - std::pow(beta2_, static_cast<Scalar>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i].second;
      Slot& s = slots_[i];
      if (s.m.rows() != p.rows() || s.m.cols() != p.cols())
        throw ShapeError("adam: parameter '" + params[i].first +
                         "' changed shape");
      const Matrix g = p.grad();
      s.m = beta1_ * s.m + (Scalar(1) - beta1_) * g;
      s.v = beta2_ * s.v + (Scalar(1) - beta2_) * g.cwiseProduct(g);
      p.raw_value().array() -=
          lr_ * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps_);
    }
  }

 private:
  struct Slot {
    Matrix m, v;
  };

  Scalar lr_, beta1_, beta2_, eps_;
  std::vector<Slot> slots_;
  long t_ = 0;
};

using Adam = AdamT<double>;

}  // namespace psan
