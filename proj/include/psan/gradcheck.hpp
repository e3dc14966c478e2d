#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "psan/corpus.hpp"
#include "psan/model.hpp"

namespace psan {

// Central-difference verification of the whole backward pass. One analytic
// backward over a small random batch, then every parameter entry (or a
// random sample of them) is nudged by +-step and compared against
// (f(x+h) - f(x-h)) / 2h. An entry passes when the gap is below abs_tol
// or the symmetric relative gap is below rel_tol.
struct GradCheckOptions {
  std::uint64_t seed = 7;
  int messages = 5;       // probe batch size
  int vocab = 37;         // real embedding rows; unk and pad come on top
  int d_model = 20;
  int heads = 4;
  int gcn_layers = 2;
  int gcn_dim = 20;
  Ablation ablation = Ablation::full;
  bool share_encoders = false;
  int max_tokens = 12;       // message length ceiling for the probe
  int max_discourses = 3;
  double step = 1e-4;
  double abs_tol = 1e-8;
  double rel_tol = 1e-4;
  long sample = -1;  // entries checked per parameter; -1 means all of them
};

struct GradCheckEntry {
  std::string param;
  int row = 0, col = 0;
  double analytic = 0.0, numeric = 0.0;
};

struct GradCheckReport {
  long checked = 0;
  long failed = 0;
  double worst_rel = 0.0;  // largest symmetric relative gap seen
  std::vector<GradCheckEntry> failures;  // at most ten, for diagnostics

  bool ok() const { return failed == 0; }
};

// Random fixtures, shared with the test suite. The tree is built by random
// attachment: every non-root node hangs off an earlier one, so the result
// is connected and acyclic with edges stored as sorted (low, high) pairs.
std::pair<std::vector<std::pair<int, int>>, int> random_tree(
    int n, std::mt19937_64& rng);

// A padded instance with contiguous token chunks as discourses, each with a
// random dependency tree. Token ids fall in [0, vocab).
EncodedMessage random_message(const std::string& id, int label, int vocab,
                              int pad_id, const PadSpec& pad, int max_tokens,
                              int max_discourses, std::mt19937_64& rng);

// vocab + 2 rows: random word vectors, then zero unk and pad rows.
Eigen::MatrixXd random_embeddings(int vocab, int dim, std::mt19937_64& rng);

GradCheckReport grad_check(const GradCheckOptions& opt = {},
                           std::ostream* log = nullptr);

}  // namespace psan
