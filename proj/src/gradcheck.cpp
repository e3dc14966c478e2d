#include "psan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "psan/random.hpp"
#include "psan/tensor.hpp"

namespace psan {

std::pair<std::vector<std::pair<int, int>>, int> random_tree(
    int n, std::mt19937_64& rng) {
  if (n < 1) throw ValueError("random_tree: need at least one node");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  seeded_shuffle(order, rng);
  std::vector<std::pair<int, int>> edges;
  for (std::size_t i = 1; i < order.size(); ++i) {
    const int child = order[i];
    const int parent = order[uniform_index(rng, i)];
    edges.emplace_back(std::min(parent, child), std::max(parent, child));
  }
  std::sort(edges.begin(), edges.end());
  return {std::move(edges), order[0]};
}

EncodedMessage random_message(const std::string& id, int label, int vocab,
                              int pad_id, const PadSpec& pad, int max_tokens,
                              int max_discourses, std::mt19937_64& rng) {
  if (max_tokens < 3) throw ValueError("random_message: max_tokens too small");
  EncodedMessage m;
  m.id = id;
  m.label = label;

  const int tokens =
      3 + static_cast<int>(uniform_index(rng, max_tokens - 2));
  std::vector<int> ids(static_cast<std::size_t>(tokens));
  for (int& t : ids) t = static_cast<int>(uniform_index(rng, vocab));

  m.msg_len = std::min(tokens, pad.msg_len);
  m.msg_ids.assign(ids.begin(), ids.begin() + m.msg_len);
  m.msg_ids.resize(static_cast<std::size_t>(pad.msg_len), pad_id);

  // Contiguous chunks of the token run become the discourses.
  int nd = 1 + static_cast<int>(uniform_index(
                   rng, std::min(max_discourses, tokens)));
  std::vector<int> cuts = {0, tokens};
  while (static_cast<int>(cuts.size()) - 1 < nd) {
    const int c = 1 + static_cast<int>(uniform_index(rng, tokens - 1));
    if (std::find(cuts.begin(), cuts.end(), c) == cuts.end())
      cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());

  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const int lo = cuts[k], hi = cuts[k + 1];
    EncodedDiscourse d;
    d.len = std::min(hi - lo, pad.disc_len);
    d.ids.assign(ids.begin() + lo, ids.begin() + lo + d.len);
    d.ids.resize(static_cast<std::size_t>(pad.disc_len), pad_id);
    auto [edges, root] = random_tree(d.len, rng);
    d.edges = std::move(edges);
    d.root = root;
    m.discourses.push_back(std::move(d));
  }
  return m;
}

Eigen::MatrixXd random_embeddings(int vocab, int dim, std::mt19937_64& rng) {
  Eigen::MatrixXd emb = Eigen::MatrixXd::Zero(vocab + 2, dim);
  for (int r = 0; r < vocab; ++r)
    for (int c = 0; c < dim; ++c) emb(r, c) = uniform(rng, -1.0, 1.0);
  return emb;
}

namespace {

double batch_loss(const PsanModel& model,
                  const std::vector<EncodedMessage>& batch,
                  const Eigen::MatrixXd& emb) {
  std::vector<Tensor> logits;
  std::vector<int> labels;
  logits.reserve(batch.size());
  for (const EncodedMessage& m : batch) {
    logits.push_back(model.forward(m, emb).logits);
    labels.push_back(m.label);
  }
  return cross_entropy(concat(logits, 0), labels).item();
}

}  // namespace

GradCheckReport grad_check(const GradCheckOptions& opt, std::ostream* log) {
  std::mt19937_64 rng(opt.seed);
  const Eigen::MatrixXd emb = random_embeddings(opt.vocab, opt.d_model, rng);
  const int pad_id = opt.vocab + 1;
  PadSpec pad;
  pad.msg_len = opt.max_tokens + 2;
  pad.disc_len = opt.max_tokens;

  std::vector<EncodedMessage> batch;
  for (int i = 0; i < opt.messages; ++i)
    batch.push_back(random_message("probe" + std::to_string(i), i % 2,
                                   opt.vocab, pad_id, pad, opt.max_tokens,
                                   opt.max_discourses, rng));

  PsanConfig pc;
  pc.d_model = opt.d_model;
  pc.heads = opt.heads;
  pc.gcn_layers = opt.gcn_layers;
  pc.gcn_dim = opt.gcn_dim;
  pc.ablation = opt.ablation;
  pc.share_encoders = opt.share_encoders;
  pc.validate();

  PsanModel model = PsanModel::init(pc, opt.seed + 1);
  auto params = model.named();

  // One analytic backward, grads copied out before any perturbation.
  std::vector<Eigen::MatrixXd> analytic;
  {
    Tape tape;
    std::vector<Tensor> logits;
    std::vector<int> labels;
    for (const EncodedMessage& m : batch) {
      logits.push_back(model.forward(m, emb).logits);
      labels.push_back(m.label);
    }
    Tensor loss = cross_entropy(concat(logits, 0), labels);
    tape.backward(loss);
    for (auto& [name, p] : params) analytic.push_back(p.grad());
  }
  for (auto& [name, p] : params) p.zero_grad();

  GradCheckReport report;
  std::mt19937_64 pick(opt.seed ^ 0xd1b54a32d192ed03ull);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& [name, p] = params[pi];
    Eigen::MatrixXd& value = p.raw_value();
    const long size = static_cast<long>(value.size());

    std::vector<long> entries;
    if (opt.sample < 0 || opt.sample >= size) {
      entries.resize(static_cast<std::size_t>(size));
      std::iota(entries.begin(), entries.end(), 0);
    } else {
      std::vector<long> all(static_cast<std::size_t>(size));
      std::iota(all.begin(), all.end(), 0);
      for (long k = 0; k < opt.sample; ++k) {
        const std::size_t j =
            k + uniform_index(pick, static_cast<std::size_t>(size - k));
        std::swap(all[static_cast<std::size_t>(k)], all[j]);
      }
      entries.assign(all.begin(), all.begin() + opt.sample);
    }

    long failed_here = 0;
    for (const long e : entries) {
      const int r = static_cast<int>(e % value.rows());
      const int c = static_cast<int>(e / value.rows());
      const double orig = value(r, c);
      value(r, c) = orig + opt.step;
      const double up = batch_loss(model, batch, emb);
      value(r, c) = orig - opt.step;
      const double down = batch_loss(model, batch, emb);
      value(r, c) = orig;

      const double numeric = (up - down) / (2.0 * opt.step);
      const double a = analytic[pi](r, c);
      const double gap = std::abs(a - numeric);
      const double rel = gap / std::max(std::abs(a) + std::abs(numeric),
                                        1e-300);
      ++report.checked;
      if (gap >= opt.abs_tol) report.worst_rel = std::max(report.worst_rel, rel);
      if (gap >= opt.abs_tol && rel > opt.rel_tol) {
        ++report.failed;
        ++failed_here;
        if (report.failures.size() < 10)
          report.failures.push_back({name, r, c, a, numeric});
      }
    }
    if (log)
      *log << name << ": " << entries.size() << " entries, " << failed_here
           << " mismatched\n";
  }
  return report;
}

}  // namespace psan
