#include "psan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "psan/adam.hpp"
#include "psan/random.hpp"

namespace psan {

using nlohmann::json;

// ---- dataset ----

const std::vector<int>& Dataset::split(const std::string& name) const {
  if (name == "train") return splits.train;
  if (name == "dev") return splits.dev;
  if (name == "test") return splits.test;
  throw ValueError("unknown split '" + name + "'");
}

namespace {

std::string split_of(const Dataset& ds, int idx) {
  auto in = [&](const std::vector<int>& v) {
    return std::find(v.begin(), v.end(), idx) != v.end();
  };
  if (in(ds.splits.train)) return "train";
  if (in(ds.splits.dev)) return "dev";
  if (in(ds.splits.test)) return "test";
  throw StructuralError("instance " + std::to_string(idx) +
                        " belongs to no split");
}

json metrics_json(const Metrics& m) {
  return json{{"precision", m.precision()},
              {"recall", m.recall()},
              {"f1", m.f1()},
              {"tp", m.tp},
              {"fp", m.fp},
              {"fn", m.fn},
              {"tn", m.tn}};
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);

  {
    Checkpoint emb;
    emb.params.emplace_back("embedding", ds.embeddings);
    save_checkpoint(dir / "embeddings.bin", emb);
  }

  {
    json meta{{"dim", ds.dim},
              {"unk_id", ds.unk_id},
              {"pad_id", ds.pad_id},
              {"msg_len", ds.pad.msg_len},
              {"disc_len", ds.pad.disc_len},
              {"split_seed", ds.split_seed},
              {"counts",
               {{"train", ds.splits.train.size()},
                {"dev", ds.splits.dev.size()},
                {"test", ds.splits.test.size()}}}};
    std::ofstream os(dir / "meta.json");
    os << meta.dump(2) << "\n";
    if (!os) throw FormatError("cannot write " + (dir / "meta.json").string());
  }

  std::ofstream os(dir / "instances.jsonl");
  if (!os)
    throw FormatError("cannot write " + (dir / "instances.jsonl").string());
  for (std::size_t i = 0; i < ds.instances.size(); ++i) {
    const EncodedMessage& m = ds.instances[i];
    json discs = json::array();
    for (const EncodedDiscourse& d : m.discourses) {
      json edges = json::array();
      for (const auto& [a, b] : d.edges) edges.push_back({a, b});
      discs.push_back(json{{"ids", d.ids},
                           {"len", d.len},
                           {"root", d.root},
                           {"root_reassigned", d.root_reassigned},
                           {"edges", edges}});
    }
    os << json{{"id", m.id},
               {"label", m.label},
               {"split", split_of(ds, static_cast<int>(i))},
               {"msg_ids", m.msg_ids},
               {"msg_len", m.msg_len},
               {"discourses", discs}}
              .dump()
       << "\n";
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;

  {
    std::ifstream is(dir / "meta.json");
    if (!is) throw FormatError("cannot open " + (dir / "meta.json").string());
    json meta;
    try {
      is >> meta;
    } catch (const json::exception& e) {
      throw FormatError("meta.json: " + std::string(e.what()));
    }
    ds.dim = meta.at("dim").get<int>();
    ds.unk_id = meta.at("unk_id").get<int>();
    ds.pad_id = meta.at("pad_id").get<int>();
    ds.pad.msg_len = meta.at("msg_len").get<int>();
    ds.pad.disc_len = meta.at("disc_len").get<int>();
    ds.split_seed = meta.at("split_seed").get<std::uint64_t>();
  }

  {
    Checkpoint emb = load_checkpoint(dir / "embeddings.bin");
    const Eigen::MatrixXd* m = emb.find("embedding");
    if (!m) throw FormatError("embeddings.bin has no 'embedding' entry");
    ds.embeddings = *m;
    if (static_cast<int>(ds.embeddings.cols()) != ds.dim)
      throw FormatError("embedding width disagrees with meta.json");
  }

  std::ifstream is(dir / "instances.jsonl");
  if (!is)
    throw FormatError("cannot open " + (dir / "instances.jsonl").string());
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("instances.jsonl line " + std::to_string(lineno) +
                        ": " + e.what());
    }
    EncodedMessage m;
    try {
      m.id = j.at("id").get<std::string>();
      m.label = j.at("label").get<int>();
      m.msg_ids = j.at("msg_ids").get<std::vector<int>>();
      m.msg_len = j.at("msg_len").get<int>();
      for (const json& dj : j.at("discourses")) {
        EncodedDiscourse d;
        d.ids = dj.at("ids").get<std::vector<int>>();
        d.len = dj.at("len").get<int>();
        d.root = dj.at("root").get<int>();
        d.root_reassigned = dj.at("root_reassigned").get<bool>();
        for (const json& ej : dj.at("edges"))
          d.edges.emplace_back(ej.at(0).get<int>(), ej.at(1).get<int>());
        m.discourses.push_back(std::move(d));
      }
      const std::string split = j.at("split").get<std::string>();
      const int idx = static_cast<int>(ds.instances.size());
      if (split == "train")
        ds.splits.train.push_back(idx);
      else if (split == "dev")
        ds.splits.dev.push_back(idx);
      else if (split == "test")
        ds.splits.test.push_back(idx);
      else
        throw FormatError("instances.jsonl line " + std::to_string(lineno) +
                          ": unknown split '" + split + "'");
    } catch (const json::exception& e) {
      throw FormatError("instances.jsonl line " + std::to_string(lineno) +
                        ": " + e.what());
    }
    ds.instances.push_back(std::move(m));
  }
  if (ds.instances.empty()) throw FormatError("instances.jsonl is empty");
  return ds;
}

Dataset preprocess_corpus(const std::vector<Message>& messages,
                          const std::vector<ParsedDiscourse>& parses,
                          const EmbeddingTable& table, const PadSpec& pad,
                          std::uint64_t split_seed,
                          const ConnectiveList& connectives,
                          std::ostream* warnings) {
  Dataset ds;
  ds.embeddings = table.matrix;
  ds.dim = table.dim;
  ds.unk_id = table.unk_id;
  ds.pad_id = table.pad_id;
  ds.pad = pad;
  ds.split_seed = split_seed;

  const auto index = index_parses(parses);
  std::vector<int> labels;
  for (const Message& raw : messages) {
    Message msg = raw;
    msg.discourses = segment_message(msg.text, connectives);
    const std::vector<ParsedDiscourse> mp = parses_for_message(msg, index);
    for (const ParsedDiscourse& p : mp)
      if (!p.connected && warnings)
        *warnings << "warning: message '" << msg.id << "' discourse "
                  << p.disc_index
                  << ": parse is disconnected from its root\n";
    EncodedMessage enc = encode_and_pad(msg, mp, table, pad);
    if (warnings)
      for (std::size_t d = 0; d < enc.discourses.size(); ++d)
        if (enc.discourses[d].root_reassigned)
          *warnings << "warning: message '" << msg.id << "' discourse " << d
                    << ": root lost to truncation, moved to token "
                    << enc.discourses[d].root << "\n";
    labels.push_back(enc.label);
    ds.instances.push_back(std::move(enc));
  }
  ds.splits = split_dataset(labels, split_seed);
  return ds;
}

// ---- train / evaluate ----

namespace {

std::vector<std::pair<std::string, Tensor>> named_params(PsanModel& model) {
  return model.named();
}

void zero_all(std::vector<std::pair<std::string, Tensor>>& params) {
  for (auto& [name, p] : params) p.zero_grad();
}

}  // namespace

Checkpoint checkpoint_from_model(const PsanModel& model) {
  Checkpoint ck;
  for (const auto& [name, p] : model.named())
    ck.params.emplace_back(name, p.value());
  ck.meta["format"] = "1";
  ck.meta["d_model"] = std::to_string(model.cfg.d_model);
  ck.meta["heads"] = std::to_string(model.cfg.heads);
  ck.meta["gcn_layers"] = std::to_string(model.cfg.gcn_layers);
  ck.meta["gcn_dim"] = std::to_string(model.cfg.gcn_dim);
  ck.meta["ablation"] = to_string(model.cfg.ablation);
  ck.meta["share_encoders"] = model.cfg.share_encoders ? "true" : "false";
  return ck;
}

PsanModel model_from_checkpoint(const Checkpoint& ck) {
  auto need = [&](const std::string& key) -> std::string {
    const auto it = ck.meta.find(key);
    if (it == ck.meta.end())
      throw FormatError("checkpoint: missing metadata '" + key + "'");
    return it->second;
  };
  PsanConfig cfg;
  cfg.d_model = std::stoi(need("d_model"));
  cfg.heads = std::stoi(need("heads"));
  cfg.gcn_layers = std::stoi(need("gcn_layers"));
  cfg.gcn_dim = std::stoi(need("gcn_dim"));
  cfg.ablation = ablation_from_string(need("ablation"));
  cfg.share_encoders = need("share_encoders") == "true";

  PsanModel model = PsanModel::init(cfg, 0);
  auto params = model.named();
  if (params.size() != ck.params.size())
    throw FormatError("checkpoint: expected " +
                      std::to_string(params.size()) + " parameters, found " +
                      std::to_string(ck.params.size()));
  for (auto& [name, p] : params) {
    const Eigen::MatrixXd* m = ck.find(name);
    if (!m) throw FormatError("checkpoint: missing parameter '" + name + "'");
    if (m->rows() != p.rows() || m->cols() != p.cols())
      throw FormatError("checkpoint: parameter '" + name +
                        "' has the wrong shape");
    p.raw_value() = *m;
  }
  return model;
}

EvalOutput evaluate(const PsanModel& model, const Dataset& ds,
                    const std::vector<int>& indices) {
  EvalOutput out;
  std::vector<int> gold, pred;
  for (const int idx : indices) {
    const EncodedMessage& m = ds.instances[static_cast<std::size_t>(idx)];
    const ForwardResult fr = model.forward(m, ds.embeddings);
    const Tensor probs = softmax(fr.logits, 1);
    Prediction p;
    p.id = m.id;
    p.p_positive = probs.value()(0, 1);
    p.prediction = predict_from_probs(probs.value());
    p.alpha.assign(fr.alpha.value().data(),
                   fr.alpha.value().data() + fr.alpha.value().size());
    gold.push_back(m.label);
    pred.push_back(p.prediction);
    out.predictions.push_back(std::move(p));
  }
  out.metrics = confusion(gold, pred);
  return out;
}

TrainResult train(const TrainConfig& cfg, const Dataset& ds,
                  std::uint64_t seed, std::ostream* log) {
  cfg.validate();
  if (ds.splits.train.empty() || ds.splits.dev.empty())
    throw ValueError("train: empty train or dev split");
  PsanConfig pc = cfg.model;
  pc.d_model = ds.dim;
  pc.validate();

  PsanModel model = PsanModel::init(pc, seed);
  auto params = named_params(model);
  Adam adam(cfg.lr);
  std::mt19937_64 shuffle_rng(seed ^ 0x9e3779b97f4a7c15ull);

  TrainResult result;
  double best_f1 = -1.0;
  int stale = 0;

  std::vector<int> order = ds.splits.train;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    seeded_shuffle(order, shuffle_rng);
    double loss_sum = 0.0;
    long seen = 0;
    for (std::size_t at = 0; at < order.size();
         at += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(
          order.size(), at + static_cast<std::size_t>(cfg.batch_size));
      Tape tape;
      std::vector<Tensor> logits;
      std::vector<int> labels;
      for (std::size_t i = at; i < stop; ++i) {
        const EncodedMessage& m =
            ds.instances[static_cast<std::size_t>(order[i])];
        logits.push_back(model.forward(m, ds.embeddings).logits);
        labels.push_back(m.label);
      }
      Tensor loss = cross_entropy(concat(logits, 0), labels);
      if (!std::isfinite(loss.item()))
        throw NumericError("train: non-finite loss at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(at / cfg.batch_size));
      tape.backward(loss);
      adam.step(params);
      zero_all(params);
      loss_sum += loss.item() * static_cast<double>(stop - at);
      seen += static_cast<long>(stop - at);
    }

    EpochPoint point;
    point.train_loss = loss_sum / static_cast<double>(seen);
    point.dev = evaluate(model, ds, ds.splits.dev).metrics;
    result.trace.push_back(point);
    if (log)
      *log << "epoch " << epoch << ": loss " << point.train_loss
           << ", dev F1 " << point.dev.f1() << "\n";

    if (point.dev.f1() > best_f1) {
      best_f1 = point.dev.f1();
      result.best = checkpoint_from_model(model);
      result.best_epoch = epoch;
      result.best_dev = point.dev;
      stale = 0;
    } else {
      ++stale;
      if (stale >= cfg.patience) break;
    }
  }
  return result;
}

// ---- experiments ----

std::string ExperimentReport::to_json() const {
  json seeds = json::array();
  for (const SeedReport& s : per_seed)
    seeds.push_back(json{{"seed", s.seed},
                         {"best_epoch", s.best_epoch},
                         {"epochs_run", s.epochs_run},
                         {"dev", metrics_json(s.dev)},
                         {"test", metrics_json(s.test)}});
  json j{{"f1_definition", "positive-class"},
         {"ablation", to_string(cfg.model.ablation)},
         {"gcn_layers", cfg.model.gcn_layers},
         {"seeds", seeds},
         {"mean",
          {{"dev_f1", mean_dev_f1},
           {"dev_precision", mean_dev_precision},
           {"dev_recall", mean_dev_recall},
           {"test_f1", mean_test_f1},
           {"test_precision", mean_test_precision},
           {"test_recall", mean_test_recall}}}};
  return j.dump(2);
}

void aggregate(ExperimentReport& report) {
  const double n = static_cast<double>(report.per_seed.size());
  report.mean_dev_f1 = report.mean_test_f1 = 0.0;
  report.mean_dev_precision = report.mean_dev_recall = 0.0;
  report.mean_test_precision = report.mean_test_recall = 0.0;
  if (report.per_seed.empty()) return;
  for (const SeedReport& s : report.per_seed) {
    report.mean_dev_f1 += s.dev.f1();
    report.mean_dev_precision += s.dev.precision();
    report.mean_dev_recall += s.dev.recall();
    report.mean_test_f1 += s.test.f1();
    report.mean_test_precision += s.test.precision();
    report.mean_test_recall += s.test.recall();
  }
  report.mean_dev_f1 /= n;
  report.mean_dev_precision /= n;
  report.mean_dev_recall /= n;
  report.mean_test_f1 /= n;
  report.mean_test_precision /= n;
  report.mean_test_recall /= n;
}

ExperimentReport run_experiment(const TrainConfig& cfg, const Dataset& ds,
                                const std::filesystem::path& outdir,
                                std::ostream* log) {
  ExperimentReport report;
  report.cfg = cfg;
  for (const std::uint64_t seed : cfg.seeds) {
    if (log) *log << "seed " << seed << "\n";
    TrainResult tr = train(cfg, ds, seed, nullptr);
    const PsanModel best = model_from_checkpoint(tr.best);
    SeedReport sr;
    sr.seed = seed;
    sr.best_epoch = tr.best_epoch;
    sr.epochs_run = static_cast<int>(tr.trace.size());
    sr.dev = tr.best_dev;
    sr.test = evaluate(best, ds, ds.splits.test).metrics;
    report.per_seed.push_back(sr);

    if (!outdir.empty()) {
      const std::filesystem::path sdir =
          outdir / ("seed" + std::to_string(seed));
      std::filesystem::create_directories(sdir);
      save_checkpoint(sdir / "checkpoint.bin", tr.best);
      json j{{"seed", seed},
             {"best_epoch", tr.best_epoch},
             {"epochs_run", sr.epochs_run},
             {"dev", metrics_json(sr.dev)},
             {"test", metrics_json(sr.test)}};
      std::ofstream os(sdir / "metrics.json");
      os << j.dump(2) << "\n";
    }
  }
  aggregate(report);
  if (!outdir.empty()) {
    std::filesystem::create_directories(outdir);
    std::ofstream os(outdir / "report.json");
    os << report.to_json() << "\n";
  }
  return report;
}

std::vector<ExperimentReport> run_ablations(
    const TrainConfig& cfg, const Dataset& ds,
    const std::filesystem::path& outdir, std::ostream* log) {
  const std::vector<Ablation> modes = {Ablation::full, Ablation::wsm_root,
                                       Ablation::wsm_ave,
                                       Ablation::dsm_ave_sd};
  std::vector<ExperimentReport> reports;
  for (const Ablation mode : modes) {
    TrainConfig mc = cfg;
    mc.model.ablation = mode;
    if (log) *log << "ablation " << to_string(mode) << "\n";
    const std::filesystem::path sub =
        outdir.empty() ? outdir : outdir / to_string(mode);
    reports.push_back(run_experiment(mc, ds, sub, log));
  }
  if (!outdir.empty()) {
    std::ofstream os(outdir / "summary.tsv");
    os << "mode\tmean_dev_f1\tmean_test_f1\tdelta_test_f1_vs_full\n";
    const double full_test = reports[0].mean_test_f1;
    for (const ExperimentReport& r : reports)
      os << to_string(r.cfg.model.ablation) << "\t" << r.mean_dev_f1 << "\t"
         << r.mean_test_f1 << "\t" << r.mean_test_f1 - full_test << "\n";
  }
  return reports;
}

std::vector<ExperimentReport> run_depth_sweep(
    const TrainConfig& cfg, const Dataset& ds, const std::vector<int>& ks,
    const std::filesystem::path& outdir, std::ostream* log) {
  if (ks.empty()) throw ConfigError("depth sweep: no depths given");
  std::vector<ExperimentReport> reports;
  for (const int k : ks) {
    if (k < 1) throw ConfigError("depth sweep: depths must be positive");
    TrainConfig kc = cfg;
    kc.model.gcn_layers = k;
    if (log) *log << "depth " << k << "\n";
    const std::filesystem::path sub =
        outdir.empty() ? outdir : outdir / ("k" + std::to_string(k));
    reports.push_back(run_experiment(kc, ds, sub, log));
  }
  if (!outdir.empty()) {
    std::ofstream os(outdir / "sweep.tsv");
    os << "k\tmean_dev_f1\tmean_test_f1\tseeds\n";
    for (std::size_t i = 0; i < ks.size(); ++i)
      os << ks[i] << "\t" << reports[i].mean_dev_f1 << "\t"
         << reports[i].mean_test_f1 << "\t" << cfg.seeds.size() << "\n";
  }
  return reports;
}

}  // namespace psan
