#pragma once

// Independent reference implementations for the test suite. Everything here
// computes with plain nested vectors and explicit loops, so a bug in the
// library's matrix plumbing cannot hide inside its own oracle.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat from_eigen(const Eigen::MatrixXd& m) {
  Mat out(static_cast<std::size_t>(m.rows()),
          std::vector<double>(static_cast<std::size_t>(m.cols()), 0.0));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      out[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
  return out;
}

inline Eigen::MatrixXd to_eigen(const Mat& m) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(m.size()),
                      m.empty() ? 0 : static_cast<Eigen::Index>(m[0].size()));
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < m[r].size(); ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          m[r][c];
  return out;
}

// Scaled dot-product attention, one head, written as three nested loops.
// mask[j] == 0 hides key j; its weight is exactly zero.
inline Mat attention(const Mat& q, const Mat& k, const Mat& v,
                     const std::vector<std::uint8_t>* mask = nullptr) {
  const std::size_t n = q.size(), m = k.size(), dk = k.empty() ? 0 : k[0].size();
  const std::size_t dv = v.empty() ? 0 : v[0].size();
  Mat out(n, std::vector<double>(dv, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> score(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < dk; ++c) dot += q[i][c] * k[j][c];
      score[j] = dot / std::sqrt(static_cast<double>(dk));
    }
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j)
      if (!mask || (*mask)[j]) hi = std::max(hi, score[j]);
    double z = 0.0;
    std::vector<double> w(m, 0.0);
    for (std::size_t j = 0; j < m; ++j)
      if (!mask || (*mask)[j]) {
        w[j] = std::exp(score[j] - hi);
        z += w[j];
      }
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t c = 0; c < dv; ++c) out[i][c] += w[j] / z * v[j][c];
  }
  return out;
}

// One graph-convolution layer over an undirected edge list with self loops
// added: every node averages itself and its neighbours (receiver-degree
// normalization), applies the affine map, then a ReLU.
inline Mat gcn_layer(int n, const std::vector<std::pair<int, int>>& edges,
                     const Mat& h, const Mat& w, const std::vector<double>& b) {
  Mat adj(static_cast<std::size_t>(n),
          std::vector<double>(static_cast<std::size_t>(n), 0.0));
  for (int i = 0; i < n; ++i) adj[i][i] = 1.0;
  for (const auto& [a, c] : edges) adj[a][c] = adj[c][a] = 1.0;

  const std::size_t din = h[0].size(), dout = b.size();
  Mat out(static_cast<std::size_t>(n), std::vector<double>(dout, 0.0));
  for (int i = 0; i < n; ++i) {
    double deg = 0.0;
    for (int j = 0; j < n; ++j) deg += adj[i][j];
    for (std::size_t c = 0; c < dout; ++c) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j) {
        if (adj[i][j] == 0.0) continue;
        double hw = 0.0;
        for (std::size_t e = 0; e < din; ++e) hw += h[j][e] * w[e][c];
        acc += hw / deg;
      }
      acc += b[c];
      out[i][c] = acc > 0.0 ? acc : 0.0;
    }
  }
  return out;
}

struct Confusion {
  long tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Confusion confusion(const std::vector<int>& gold,
                           const std::vector<int>& pred) {
  Confusion c;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] == 1 && pred[i] == 1) ++c.tp;
    if (gold[i] == 0 && pred[i] == 1) ++c.fp;
    if (gold[i] == 1 && pred[i] == 0) ++c.fn;
    if (gold[i] == 0 && pred[i] == 0) ++c.tn;
  }
  return c;
}

inline double max_abs_diff(const Mat& a, const Eigen::MatrixXd& b) {
  double worst = 0.0;
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t c = 0; c < a[r].size(); ++c)
      worst = std::max(worst,
                       std::abs(a[r][c] - b(static_cast<Eigen::Index>(r),
                                            static_cast<Eigen::Index>(c))));
  return worst;
}

// Central finite differences against an analytic gradient, entry by entry.
// Matches when the gap is tiny in absolute terms or small relative to the
// magnitudes involved.
struct FdReport {
  long checked = 0, failed = 0;
  double worst_rel = 0.0;

  bool ok() const { return failed == 0; }
};

inline FdReport fd_compare(Eigen::MatrixXd& value,
                           const Eigen::MatrixXd& analytic,
                           const std::function<double()>& eval,
                           double step = 1e-5, double abs_tol = 1e-9,
                           double rel_tol = 1e-5) {
  FdReport rep;
  for (Eigen::Index r = 0; r < value.rows(); ++r)
    for (Eigen::Index c = 0; c < value.cols(); ++c) {
      const double orig = value(r, c);
      value(r, c) = orig + step;
      const double up = eval();
      value(r, c) = orig - step;
      const double down = eval();
      value(r, c) = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic(r, c);
      const double gap = std::abs(a - numeric);
      const double rel = gap / std::max(std::abs(a) + std::abs(numeric), 1e-300);
      ++rep.checked;
      if (gap >= abs_tol) {
        rep.worst_rel = std::max(rep.worst_rel, rel);
        if (rel > rel_tol) ++rep.failed;
      }
    }
  return rep;
}

}  // namespace oracle
