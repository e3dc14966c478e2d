#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "psan/attention.hpp"
#include "psan/corpus.hpp"
#include "psan/fusion.hpp"
#include "psan/gcn.hpp"
#include "psan/graph.hpp"
#include "psan/tensor.hpp"

namespace psan {

// Which piece of the pyramid to replace with a baseline, if any.
enum class Ablation {
  full,
  wsm_root,    // salient repr = encoded root row, no graph stack
  wsm_ave,     // salient repr = masked mean of the encoded discourse
  dsm_ave_sd,  // unweighted mean of [global; discourse reprs]
};

inline std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::wsm_root: return "wsm-root";
    case Ablation::wsm_ave: return "wsm-ave";
    case Ablation::dsm_ave_sd: return "dsm-ave-sd";
  }
  return "full";
}

inline Ablation ablation_from_string(const std::string& s) {
  if (s == "full") return Ablation::full;
  if (s == "wsm-root") return Ablation::wsm_root;
  if (s == "wsm-ave") return Ablation::wsm_ave;
  if (s == "dsm-ave-sd") return Ablation::dsm_ave_sd;
  throw ConfigError("unknown ablation mode '" + s + "'");
}

struct PsanConfig {
  int d_model = 50;
  int heads = 5;
  int gcn_layers = 2;
  int gcn_dim = 50;
  Ablation ablation = Ablation::full;
  bool share_encoders = false;

  // The graph stack feeds the fusion only in these modes.
  bool uses_gcn() const {
    return ablation == Ablation::full || ablation == Ablation::dsm_ave_sd;
  }
  bool uses_bilinear() const { return ablation != Ablation::dsm_ave_sd; }
  // Projection aligning graph width with model width when they diverge.
  bool needs_projection() const { return uses_gcn() && gcn_dim != d_model; }

  void validate() const {
    if (d_model < 1) throw ConfigError("config: d_model must be positive");
    if (heads < 1) throw ConfigError("config: heads must be positive");
    if (d_model % heads != 0)
      throw ConfigError("config: heads must divide d_model");
    if (gcn_layers < 1)
      throw ConfigError("config: gcn_layers must be positive");
    if (gcn_dim < 1) throw ConfigError("config: gcn_dim must be positive");
  }
};

template <typename Scalar>
struct ForwardResultT {
  TensorT<Scalar> logits;  // 1 x 2
  TensorT<Scalar> alpha;   // 1 x (D+1) fusion weights, self slot first
};

template <typename Scalar>
struct PsanModelT {
  PsanConfig cfg;
  EncoderParamsT<Scalar> msg_enc;
  EncoderParamsT<Scalar> disc_enc;  // unused when encoders are shared
  GcnParamsT<Scalar> gcn;
  FusionParamsT<Scalar> fusion;
  TensorT<Scalar> proj;  // gcn_dim x d_model, only when widths diverge

  static PsanModelT init(const PsanConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    PsanModelT m;
    m.cfg = cfg;
    std::mt19937_64 rng(seed);
    m.msg_enc = EncoderParamsT<Scalar>::init(cfg.d_model, cfg.heads, rng);
    if (!cfg.share_encoders)
      m.disc_enc = EncoderParamsT<Scalar>::init(cfg.d_model, cfg.heads, rng);
    if (cfg.uses_gcn())
      m.gcn = GcnParamsT<Scalar>::init(cfg.d_model, cfg.gcn_dim,
                                       cfg.gcn_layers, rng);
    m.fusion =
        FusionParamsT<Scalar>::init(cfg.d_model, cfg.uses_bilinear(), rng);
    if (cfg.needs_projection())
      m.proj = TensorT<Scalar>::param(
          detail::glorot<Scalar>(cfg.gcn_dim, cfg.d_model, rng));
    return m;
  }

  // Stable name -> tensor listing of every trainable parameter; the order
  // never changes for a fixed configuration.
  std::vector<std::pair<std::string, TensorT<Scalar>>> named() const {
    std::vector<std::pair<std::string, TensorT<Scalar>>> out;
    auto add_encoder = [&](const std::string& prefix,
                           const EncoderParamsT<Scalar>& e) {
      for (int h = 0; h < e.heads(); ++h) {
        const std::string hp = prefix + ".h" + std::to_string(h);
        out.emplace_back(hp + ".wq", e.wq[static_cast<std::size_t>(h)]);
        out.emplace_back(hp + ".wk", e.wk[static_cast<std::size_t>(h)]);
        out.emplace_back(hp + ".wv", e.wv[static_cast<std::size_t>(h)]);
      }
      out.emplace_back(prefix + ".wo", e.wo);
    };
    add_encoder("msg_enc", msg_enc);
    if (!cfg.share_encoders) add_encoder("disc_enc", disc_enc);
    if (cfg.uses_gcn()) {
      for (int l = 0; l < gcn.layers(); ++l) {
        const std::string lp = "gcn.l" + std::to_string(l);
        out.emplace_back(lp + ".w", gcn.w[static_cast<std::size_t>(l)]);
        out.emplace_back(lp + ".b", gcn.b[static_cast<std::size_t>(l)]);
      }
    }
    if (cfg.uses_bilinear()) out.emplace_back("fusion.wf", fusion.wf);
    out.emplace_back("fusion.wc", fusion.wc);
    out.emplace_back("fusion.bc", fusion.bc);
    if (cfg.needs_projection()) out.emplace_back("fusion.proj", proj);
    return out;
  }

  // Embedding rows for an id sequence, as a constant input tensor.
  static TensorT<Scalar> gather(const Eigen::MatrixXd& emb,
                                const std::vector<int>& ids) {
    MatrixT<Scalar> x(static_cast<Eigen::Index>(ids.size()), emb.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const int id = ids[i];
      if (id < 0 || id >= emb.rows())
        throw ValueError("gather: vocab id " + std::to_string(id) +
                         " outside the embedding table");
      x.row(static_cast<Eigen::Index>(i)) =
          emb.row(id).template cast<Scalar>();
    }
    return TensorT<Scalar>(std::move(x));
  }

  ForwardResultT<Scalar> forward(const EncodedMessage& m,
                                 const Eigen::MatrixXd& emb) const {
    if (static_cast<int>(emb.cols()) != cfg.d_model)
      throw ShapeError("forward: embedding width " +
                       std::to_string(emb.cols()) +
                       " does not match model width " +
                       std::to_string(cfg.d_model));
    if (m.discourses.empty())
      throw ValueError("forward: message '" + m.id + "' has no discourses");

    // Message view: encode the whole token sequence, pool the real tokens.
    TensorT<Scalar> xs = gather(emb, m.msg_ids);
    Mask msg_mask(m.msg_ids.size(), 0);
    for (int i = 0; i < m.msg_len; ++i)
      msg_mask[static_cast<std::size_t>(i)] = 1;
    TensorT<Scalar> hs = multi_head_encode(xs, msg_enc, msg_mask);
    TensorT<Scalar> h_glo = global_repr(hs, msg_mask);

    const EncoderParamsT<Scalar>& denc =
        cfg.share_encoders ? msg_enc : disc_enc;

    // Discourse view: encode each discourse, then reduce it to one salient
    // row through the graph stack (or an ablation baseline).
    std::vector<TensorT<Scalar>> salient;
    salient.reserve(m.discourses.size());
    for (const EncodedDiscourse& d : m.discourses) {
      TensorT<Scalar> xd = gather(emb, d.ids);
      Mask dmask(d.ids.size(), 0);
      for (int i = 0; i < d.len; ++i) dmask[static_cast<std::size_t>(i)] = 1;
      TensorT<Scalar> hd = multi_head_encode(xd, denc, dmask);
      TensorT<Scalar> s;
      switch (cfg.ablation) {
        case Ablation::full:
        case Ablation::dsm_ave_sd:
          s = salient_repr(top_rows(hd, d.len), build_graph(d), gcn);
          break;
        case Ablation::wsm_root:
          s = row(hd, d.root);
          break;
        case Ablation::wsm_ave:
          s = mean(hd, 0, dmask);
          break;
      }
      if (cfg.needs_projection()) s = matmul(s, proj);
      salient.push_back(std::move(s));
    }

    ForwardResultT<Scalar> out;
    TensorT<Scalar> h_caul;
    if (cfg.ablation == Ablation::dsm_ave_sd) {
      std::vector<TensorT<Scalar>> rows;
      rows.reserve(salient.size() + 1);
      rows.push_back(h_glo);
      for (auto& s : salient) rows.push_back(s);
      h_caul = mean(concat(rows, 0), 0);
      out.alpha = TensorT<Scalar>(MatrixT<Scalar>::Constant(
          1, static_cast<Eigen::Index>(rows.size()),
          Scalar(1) / static_cast<Scalar>(rows.size())));
    } else {
      CausalRepresentationT<Scalar> cr =
          dominance_fuse(h_glo, salient, fusion.wf);
      h_caul = cr.h_caul;
      out.alpha = cr.alpha;
    }
    out.logits = classify_logits(h_caul, fusion);
    return out;
  }
};

using PsanModel = PsanModelT<double>;
using ForwardResult = ForwardResultT<double>;

}  // namespace psan
