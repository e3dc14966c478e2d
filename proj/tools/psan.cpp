// psan: discourse segmentation, corpus preprocessing, and the pyramid
// salient-aware network's training and evaluation pipeline in one tool.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data or format
// error, 3 numeric failure. Diagnostics go to standard error; results go to
// files or standard output. Every command loads all of its inputs before it
// creates any output file, so a bad invocation never leaves partial results.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "psan/config.hpp"
#include "psan/corpus.hpp"
#include "psan/gradcheck.hpp"
#include "psan/graph.hpp"
#include "psan/trainer.hpp"

namespace {

using nlohmann::json;

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw psan::FormatError("cannot write " + path.string());
  return os;
}

json metrics_json(const psan::Metrics& m) {
  return json{{"precision", m.precision()}, {"recall", m.recall()},
              {"f1", m.f1()},               {"tp", m.tp},
              {"fp", m.fp},                 {"fn", m.fn},
              {"tn", m.tn}};
}

int run_segment(const std::string& in, const std::string& connectives,
                const std::string& out) {
  const auto messages = psan::load_messages_jsonl_file(in);
  const auto conn = psan::load_connectives_file(connectives);

  std::ofstream file;
  if (!out.empty()) file = open_output(out);
  std::ostream& os = out.empty() ? std::cout : file;

  for (const psan::Message& msg : messages) {
    json discs = json::array();
    for (const psan::Discourse& d : psan::segment_message(msg.text, conn)) {
      json tokens = json::array();
      for (const psan::Token& t : d.tokens) tokens.push_back(t.surface);
      discs.push_back(json{{"begin", d.begin},
                           {"end", d.end},
                           {"text", msg.text.substr(d.begin, d.end - d.begin)},
                           {"tokens", tokens}});
    }
    os << json{{"id", msg.id}, {"discourses", discs}}.dump() << "\n";
  }
  return 0;
}

int run_preprocess(const std::string& messages, const std::string& parses,
                   const std::string& embeddings,
                   const std::string& connectives, const std::string& out,
                   std::uint64_t seed, int msg_len, int disc_len,
                   bool dump_graphs) {
  if (msg_len < 1 || disc_len < 1)
    throw psan::ConfigError("padding lengths must be positive");
  const auto msgs = psan::load_messages_jsonl_file(messages);
  const auto parsed = psan::load_conllu_file(parses);
  const auto table = psan::load_embeddings_file(embeddings);
  const auto conn = psan::load_connectives_file(connectives);

  psan::PadSpec pad;
  pad.msg_len = msg_len;
  pad.disc_len = disc_len;
  const psan::Dataset ds =
      psan::preprocess_corpus(msgs, parsed, table, pad, seed, conn, &std::cerr);
  psan::save_dataset(out, ds);

  if (dump_graphs) {
    std::ofstream os = open_output(std::filesystem::path(out) / "graphs.txt");
    for (const psan::EncodedMessage& m : ds.instances)
      for (std::size_t d = 0; d < m.discourses.size(); ++d) {
        const psan::EncodedDiscourse& disc = m.discourses[d];
        os << "# " << m.id << " disc " << d << "\n";
        os << "root=" << disc.root << "\n";
        for (const auto& [a, b] : disc.edges) os << a << " " << b << "\n";
      }
  }

  std::cerr << "preprocessed " << ds.instances.size() << " messages ("
            << ds.splits.train.size() << " train, " << ds.splits.dev.size()
            << " dev, " << ds.splits.test.size() << " test) to " << out
            << "\n";
  return 0;
}

int run_train(const std::string& config, const std::string& data,
              const std::string& out, std::int64_t seed) {
  psan::TrainConfig cfg = psan::TrainConfig::load(config);
  if (seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(seed)};
  const psan::Dataset ds = psan::load_dataset(data);
  const psan::ExperimentReport report =
      psan::run_experiment(cfg, ds, out, &std::cerr);
  std::cout << report.to_json() << "\n";
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& data,
             const std::string& split, const std::string& out) {
  const psan::Checkpoint ck = psan::load_checkpoint(checkpoint);
  const psan::Dataset ds = psan::load_dataset(data);
  const psan::PsanModel model = psan::model_from_checkpoint(ck);
  const psan::EvalOutput ev = psan::evaluate(model, ds, ds.split(split));

  if (!out.empty()) {
    std::ofstream os = open_output(out);
    for (const psan::Prediction& p : ev.predictions)
      os << json{{"id", p.id},
                 {"p_positive", p.p_positive},
                 {"prediction", p.prediction},
                 {"alpha", p.alpha}}
                .dump()
         << "\n";
  }
  std::cout << json{{"split", split}, {"metrics", metrics_json(ev.metrics)}}
                   .dump(2)
            << "\n";
  return 0;
}

int run_ablate(const std::string& config, const std::string& data,
               const std::string& out) {
  const psan::TrainConfig cfg = psan::TrainConfig::load(config);
  const psan::Dataset ds = psan::load_dataset(data);
  const auto reports = psan::run_ablations(cfg, ds, out, &std::cerr);
  for (const psan::ExperimentReport& r : reports)
    std::cout << psan::to_string(r.cfg.model.ablation) << "\tdev_f1="
              << r.mean_dev_f1 << "\ttest_f1=" << r.mean_test_f1 << "\n";
  return 0;
}

int run_sweep(const std::string& config, const std::string& data,
              const std::string& out, const std::vector<int>& ks) {
  const psan::TrainConfig cfg = psan::TrainConfig::load(config);
  const psan::Dataset ds = psan::load_dataset(data);
  const auto reports = psan::run_depth_sweep(cfg, ds, ks, out, &std::cerr);
  for (std::size_t i = 0; i < ks.size(); ++i)
    std::cout << "k=" << ks[i] << "\tdev_f1=" << reports[i].mean_dev_f1
              << "\ttest_f1=" << reports[i].mean_test_f1 << "\n";
  return 0;
}

int run_gradcheck(std::uint64_t seed, long sample, int messages, int d_model,
                  int heads, int layers, bool share) {
  psan::GradCheckOptions opt;
  opt.seed = seed;
  opt.sample = sample;
  opt.messages = messages;
  opt.d_model = d_model;
  opt.gcn_dim = d_model;
  opt.heads = heads;
  opt.gcn_layers = layers;
  opt.share_encoders = share;
  const psan::GradCheckReport report = psan::grad_check(opt, &std::cout);
  std::cout << "checked " << report.checked << " entries, " << report.failed
            << " mismatched (worst relative gap " << report.worst_rel
            << ")\n";
  if (!report.ok()) {
    for (const psan::GradCheckEntry& f : report.failures)
      std::cerr << "mismatch " << f.param << "(" << f.row << "," << f.col
                << "): analytic " << f.analytic << " vs numeric " << f.numeric
                << "\n";
    throw psan::NumericError("gradient check failed");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pyramid salient-aware network for causal explanation "
               "detection: segmentation, preprocessing, training and "
               "evaluation."};
  app.require_subcommand(1);

  std::string in, out, messages, parses, embeddings, connectives, config,
      data, checkpoint, split = "test";
  std::uint64_t seed = 1;
  std::int64_t train_seed = -1;
  int msg_len = 100, disc_len = 30;
  bool dump_graphs = false, share = false;
  std::vector<int> ks = {1, 2, 3, 4};
  long sample = -1;
  int gc_messages = 5, gc_dmodel = 20, gc_heads = 4, gc_layers = 2;
  std::uint64_t gc_seed = 7;

  CLI::App* seg = app.add_subcommand(
      "segment", "Split messages into discourses, one JSON object per line");
  seg->add_option("--in", in, "messages JSONL file")->required();
  seg->add_option("--connectives", connectives, "connective list file")
      ->required();
  seg->add_option("--out", out, "output path (default: standard output)");

  CLI::App* pre = app.add_subcommand(
      "preprocess",
      "Segment, attach parses, encode and split a corpus into a dataset "
      "directory");
  pre->add_option("--messages", messages, "messages JSONL file")->required();
  pre->add_option("--parses", parses, "dependency parses (CoNLL-U)")
      ->required();
  pre->add_option("--embeddings", embeddings, "pretrained word vectors")
      ->required();
  pre->add_option("--connectives", connectives, "connective list file")
      ->required();
  pre->add_option("--out", out, "dataset output directory")->required();
  pre->add_option("--seed", seed, "split shuffling seed (default 1)");
  pre->add_option("--msg-len", msg_len, "message padding length (default 100)");
  pre->add_option("--disc-len", disc_len,
                  "discourse padding length (default 30)");
  pre->add_flag("--dump-graphs", dump_graphs,
                "also write every dependency graph to graphs.txt");

  CLI::App* train = app.add_subcommand(
      "train", "Train over the configured seeds and report dev/test metrics");
  train->add_option("--config", config, "key=value run configuration")
      ->required();
  train->add_option("--data", data, "preprocessed dataset directory")
      ->required();
  train->add_option("--out", out, "run output directory")->required();
  train->add_option("--seed", train_seed,
                    "train this single seed instead of the configured list");

  CLI::App* ev = app.add_subcommand("eval",
                                    "Evaluate a checkpoint on one split");
  ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  ev->add_option("--data", data, "preprocessed dataset directory")->required();
  ev->add_option("--split", split, "train, dev or test (default test)");
  ev->add_option("--out", out, "also write per-message predictions JSONL");

  CLI::App* abl = app.add_subcommand(
      "ablate",
      "Run the full model and its three replacement baselines end to end");
  abl->add_option("--config", config, "key=value run configuration")
      ->required();
  abl->add_option("--data", data, "preprocessed dataset directory")
      ->required();
  abl->add_option("--out", out, "output directory")->required();

  CLI::App* sw = app.add_subcommand(
      "sweep", "Train once per graph-stack depth and tabulate F1 against k");
  sw->add_option("--config", config, "key=value run configuration")
      ->required();
  sw->add_option("--data", data, "preprocessed dataset directory")->required();
  sw->add_option("--out", out, "output directory")->required();
  sw->add_option("--ks", ks, "depths to sweep (default 1,2,3,4)")
      ->delimiter(',');

  CLI::App* gc = app.add_subcommand(
      "gradcheck",
      "Verify the backward pass against central finite differences");
  gc->add_option("--seed", gc_seed, "probe seed (default 7)");
  gc->add_option("--sample", sample,
                 "entries checked per parameter (default: all)");
  gc->add_option("--messages", gc_messages, "probe batch size (default 5)");
  gc->add_option("--d-model", gc_dmodel, "embedding width (default 20)");
  gc->add_option("--heads", gc_heads, "attention heads (default 4)");
  gc->add_option("--layers", gc_layers, "graph-stack depth (default 2)");
  gc->add_flag("--share-encoders", share,
               "share message and discourse encoder parameters");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (seg->parsed()) return run_segment(in, connectives, out);
    if (pre->parsed())
      return run_preprocess(messages, parses, embeddings, connectives, out,
                            seed, msg_len, disc_len, dump_graphs);
    if (train->parsed()) return run_train(config, data, out, train_seed);
    if (ev->parsed()) return run_eval(checkpoint, data, split, out);
    if (abl->parsed()) return run_ablate(config, data, out);
    if (sw->parsed()) return run_sweep(config, data, out, ks);
    if (gc->parsed())
      return run_gradcheck(gc_seed, sample, gc_messages, gc_dmodel, gc_heads,
                           gc_layers, share);
  } catch (const psan::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const psan::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const psan::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
