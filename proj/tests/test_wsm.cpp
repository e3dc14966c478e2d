#include <algorithm>
#include <deque>
#include <functional>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "psan/gcn.hpp"
#include "psan/gradcheck.hpp"
#include "psan/graph.hpp"
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

// A random tree plus a few shortcut edges, still simple and undirected.
std::pair<std::vector<std::pair<int, int>>, int> random_graph(
    int n, std::mt19937_64& rng) {
  auto [edges, root] = psan::random_tree(n, rng);
  std::set<std::pair<int, int>> have(edges.begin(), edges.end());
  const int extra = n > 2 ? static_cast<int>(psan::uniform_index(
                                rng, static_cast<std::size_t>(n / 2) + 1))
                          : 0;
  for (int t = 0; t < extra; ++t) {
    int a = static_cast<int>(
        psan::uniform_index(rng, static_cast<std::size_t>(n)));
    int b = static_cast<int>(
        psan::uniform_index(rng, static_cast<std::size_t>(n)));
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (have.insert({a, b}).second) edges.push_back({a, b});
  }
  return {edges, root};
}

std::vector<int> hop_distances(const psan::SyntacticGraph& g) {
  std::vector<int> dist(static_cast<std::size_t>(g.v), -1);
  std::deque<int> frontier{g.root};
  dist[static_cast<std::size_t>(g.root)] = 0;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop_front();
    for (int w = 0; w < g.v; ++w)
      if (g.a(u, w) != 0 && dist[static_cast<std::size_t>(w)] < 0) {
        dist[static_cast<std::size_t>(w)] = dist[static_cast<std::size_t>(u)] + 1;
        frontier.push_back(w);
      }
  }
  return dist;
}

std::vector<double> bias_vector(const Tensor& b) {
  std::vector<double> out(static_cast<std::size_t>(b.cols()));
  for (Eigen::Index j = 0; j < b.cols(); ++j)
    out[static_cast<std::size_t>(j)] = b.value()(0, j);
  return out;
}

}  // namespace

TEST_CASE("three-node chain degrees and averaging weights") {
  const auto g = psan::build_graph(3, {{0, 1}, {1, 2}}, 1);
  CHECK(g.v == 3);
  CHECK(g.degrees == std::vector<int>{2, 3, 2});

  const Eigen::MatrixXi t = g.a_tilde();
  CHECK(t == t.transpose());
  for (int i = 0; i < 3; ++i) CHECK(t(i, i) == 1);

  const Eigen::MatrixXd n = psan::normalized_adjacency<double>(g);
  Eigen::MatrixXd want(3, 3);
  want << 0.5, 0.5, 0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 0.5, 0.5;
  CHECK((n - want).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("graph construction rejects malformed input") {
  CHECK_THROWS_AS(psan::build_graph(0, {}, 0), psan::ValueError);
  CHECK_THROWS_AS(psan::build_graph(3, {{0, 1}}, 3), psan::StructuralError);
  CHECK_THROWS_AS(psan::build_graph(3, {{0, 1}}, -1), psan::StructuralError);
  CHECK_THROWS_AS(psan::build_graph(3, {{0, 3}}, 0), psan::StructuralError);
  CHECK_THROWS_AS(psan::build_graph(3, {{1, 1}}, 0), psan::StructuralError);
}

TEST_CASE("keyword sets grow outward from the root") {
  const auto chain =
      psan::build_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}}, 2);
  CHECK(psan::keywords(chain, 1) == std::set<int>{1, 2, 3});
  CHECK(psan::keywords(chain, 2) == std::set<int>{0, 1, 2, 3, 4});
  CHECK(psan::keywords(chain, 50) == std::set<int>{0, 1, 2, 3, 4});
  CHECK_THROWS_AS(psan::keywords(chain, 0), psan::ConfigError);
  CHECK_THROWS_AS(psan::keywords(chain, -2), psan::ConfigError);
}

TEST_CASE("keyword sets for the insulation sentence") {
  // "the devices need less thermal insulation", rooted at "need", with
  // "less" modifying "thermal" modifying "insulation".
  const auto g = psan::build_graph(
      6, {{0, 1}, {1, 2}, {2, 5}, {3, 4}, {4, 5}}, 2);
  CHECK(psan::keywords(g, 1) == std::set<int>{1, 2, 5});
  CHECK(psan::keywords(g, 2) == std::set<int>{0, 1, 2, 4, 5});
  CHECK(psan::keywords(g, 3) == std::set<int>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("keywords equal the nodes within k hops") {
  std::mt19937_64 rng(401);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + static_cast<int>(psan::uniform_index(rng, 9));
    const auto [edges, root] = random_graph(n, rng);
    const auto g = psan::build_graph(n, edges, root);
    const auto dist = hop_distances(g);
    for (int k = 1; k <= n; ++k) {
      std::set<int> want;
      for (int i = 0; i < n; ++i)
        if (dist[static_cast<std::size_t>(i)] >= 0 &&
            dist[static_cast<std::size_t>(i)] <= k)
          want.insert(i);
      CHECK(psan::keywords(g, k) == want);
    }
    const auto inner = psan::keywords(g, 1);
    const auto outer = psan::keywords(g, 2);
    CHECK(std::includes(outer.begin(), outer.end(), inner.begin(),
                        inner.end()));
  }
}

TEST_CASE("graph convolution matches a direct loop") {
  std::mt19937_64 rng(402);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(psan::uniform_index(rng, 10));
    const auto [edges, root] = random_graph(n, rng);
    const auto g = psan::build_graph(n, edges, root);

    Tensor h(random_matrix(n, 3, rng));
    Tensor w(random_matrix(3, 4, rng));
    Tensor b(random_matrix(1, 4, rng));
    const Tensor out = psan::gcn_layer(h, g, w, b);

    const auto want =
        oracle::gcn_layer(n, edges, oracle::from_eigen(h.value()),
                          oracle::from_eigen(w.value()), bias_vector(b));
    CHECK(oracle::max_abs_diff(want, out.value()) < 1e-10);
  }
}

TEST_CASE("three-node chain convolution by hand") {
  // Features 1, 10, 100 on a chain: ends average two nodes, the middle all
  // three. With identity weights and zero bias the outputs are exactly the
  // neighborhood means.
  const auto g = psan::build_graph(3, {{0, 1}, {1, 2}}, 1);
  Eigen::MatrixXd f(3, 1);
  f << 1.0, 10.0, 100.0;
  Tensor h(f);
  Tensor w(Eigen::MatrixXd::Identity(1, 1));
  Tensor b(Eigen::MatrixXd::Zero(1, 1));
  const Tensor out = psan::gcn_layer(h, g, w, b);
  CHECK(out.value()(0, 0) == doctest::Approx(11.0 / 2.0).epsilon(1e-12));
  CHECK(out.value()(1, 0) == doctest::Approx(111.0 / 3.0).epsilon(1e-12));
  CHECK(out.value()(2, 0) == doctest::Approx(110.0 / 2.0).epsilon(1e-12));
}

TEST_CASE("relabeling nodes permutes the convolution rows") {
  std::mt19937_64 rng(403);
  const int n = 6;
  const auto [edges, root] = random_graph(n, rng);
  const auto g = psan::build_graph(n, edges, root);

  std::vector<int> perm{4, 2, 0, 5, 1, 3};
  std::vector<std::pair<int, int>> mapped;
  for (const auto& [a, c] : edges)
    mapped.push_back({perm[static_cast<std::size_t>(a)],
                      perm[static_cast<std::size_t>(c)]});
  const auto g2 =
      psan::build_graph(n, mapped, perm[static_cast<std::size_t>(root)]);

  const Eigen::MatrixXd feat = random_matrix(n, 3, rng);
  Eigen::MatrixXd feat2(n, 3);
  for (int i = 0; i < n; ++i)
    feat2.row(perm[static_cast<std::size_t>(i)]) = feat.row(i);

  Tensor w(random_matrix(3, 3, rng));
  Tensor b(random_matrix(1, 3, rng));
  const Tensor out = psan::gcn_layer(Tensor(feat), g, w, b);
  const Tensor out2 = psan::gcn_layer(Tensor(feat2), g2, w, b);
  for (int i = 0; i < n; ++i)
    CHECK((out.value().row(i) -
           out2.value().row(perm[static_cast<std::size_t>(i)]))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
}

TEST_CASE("an isolated node applies the affine map and relu directly") {
  const auto g = psan::build_graph(1, {}, 0);
  Eigen::MatrixXd f(1, 3);
  f << 2.0, -1.0, 0.5;
  Eigen::MatrixXd wv(3, 2);
  wv << 1.0, -1.0, 2.0, 0.5, -4.0, 1.0;
  Eigen::MatrixXd bv(1, 2);
  bv << 0.25, -10.0;
  const Tensor out = psan::gcn_layer(Tensor(f), g, Tensor(wv), Tensor(bv));
  const Eigen::MatrixXd want =
      ((f * wv + bv).cwiseMax(0.0)).eval();
  CHECK((out.value() - want).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("salient representation reads the root row of the stack") {
  std::mt19937_64 rng(404);
  const int n = 5;
  const auto [edges, root] = random_graph(n, rng);
  const auto g = psan::build_graph(n, edges, root);

  auto p = psan::GcnParams::init(4, 3, 2, rng);
  Tensor h(random_matrix(n, 4, rng));
  const Tensor out = psan::salient_repr(h, g, p);
  CHECK(out.rows() == 1);
  CHECK(out.cols() == 3);

  auto stage = oracle::gcn_layer(n, edges, oracle::from_eigen(h.value()),
                                 oracle::from_eigen(p.w[0].value()),
                                 bias_vector(p.b[0]));
  stage = oracle::gcn_layer(n, edges, stage,
                            oracle::from_eigen(p.w[1].value()),
                            bias_vector(p.b[1]));
  for (int c = 0; c < 3; ++c)
    CHECK(std::abs(stage[static_cast<std::size_t>(root)]
                        [static_cast<std::size_t>(c)] -
                   out.value()(0, c)) < 1e-10);
}

TEST_CASE("stack gradients match finite differences") {
  std::mt19937_64 rng(405);
  const int n = 4;
  const auto [edges, root] = random_graph(n, rng);
  const auto g = psan::build_graph(n, edges, root);

  auto p = psan::GcnParams::init(3, 3, 2, rng);
  Tensor h = Tensor::param(random_matrix(n, 3, rng));

  const auto loss_value = [&]() {
    return psan::sum_all(psan::tanh(psan::salient_repr(h, g, p)))
        .value()(0, 0);
  };

  std::vector<Tensor> tracked{h, p.w[0], p.w[1], p.b[0], p.b[1]};
  {
    psan::Tape tape;
    auto loss = psan::sum_all(psan::tanh(psan::salient_repr(h, g, p)));
    tape.backward(loss);
  }
  for (auto& t : tracked) {
    const Eigen::MatrixXd analytic = t.grad();
    const auto rep = oracle::fd_compare(t.raw_value(), analytic, loss_value);
    CHECK(rep.ok());
  }
}

TEST_CASE("convolution and readout validate their shapes") {
  std::mt19937_64 rng(406);
  const auto g = psan::build_graph(3, {{0, 1}, {1, 2}}, 0);
  Tensor w(random_matrix(3, 3, rng));
  Tensor b(random_matrix(1, 3, rng));

  CHECK_THROWS_AS(psan::gcn_layer(Tensor(random_matrix(4, 3, rng)), g, w, b),
                  psan::ShapeError);
  CHECK_THROWS_AS(psan::gcn_layer(Tensor(random_matrix(3, 2, rng)), g, w, b),
                  psan::ShapeError);

  auto p = psan::GcnParams::init(3, 3, 1, rng);
  CHECK_THROWS_AS(
      psan::salient_repr(Tensor(random_matrix(5, 3, rng)), g, p),
      psan::ShapeError);

  auto broken = g;
  broken.root = 7;
  CHECK_THROWS_AS(
      psan::salient_repr(Tensor(random_matrix(3, 3, rng)), broken, p),
      psan::StructuralError);

  CHECK_THROWS_AS(psan::GcnParams::init(3, 3, 0, rng), psan::ConfigError);
  CHECK_THROWS_AS(psan::GcnParams::init(0, 3, 1, rng), psan::ConfigError);
}
