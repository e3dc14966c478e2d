#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "psan/checkpoint.hpp"
#include "psan/config.hpp"
#include "psan/corpus.hpp"
#include "psan/metrics.hpp"
#include "psan/model.hpp"

namespace psan {

// A preprocessed corpus: encoded instances, fixed splits and the embedding
// matrix, everything the trainer needs without touching raw text again.
struct Dataset {
  std::vector<EncodedMessage> instances;
  Splits splits;
  Eigen::MatrixXd embeddings;
  int dim = 0;
  int unk_id = 0, pad_id = 0;
  PadSpec pad;
  std::uint64_t split_seed = 1;

  const std::vector<int>& split(const std::string& name) const;
};

void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

// Raw corpus files -> segmented, parsed, encoded, split dataset.
Dataset preprocess_corpus(const std::vector<Message>& messages,
                          const std::vector<ParsedDiscourse>& parses,
                          const EmbeddingTable& table, const PadSpec& pad,
                          std::uint64_t split_seed,
                          const ConnectiveList& connectives,
                          std::ostream* warnings = nullptr);

struct EpochPoint {
  double train_loss = 0.0;
  Metrics dev;
};

struct TrainResult {
  Checkpoint best;      // parameters of the best dev-F1 epoch, plus config meta
  int best_epoch = 0;   // 1-based
  Metrics best_dev;
  std::vector<EpochPoint> trace;
};

// One training run: Adam over shuffled batches, dev F1 after every epoch,
// early stop after `patience` epochs without improvement, best checkpoint
// returned. Fully deterministic in (config, dataset, seed).
TrainResult train(const TrainConfig& cfg, const Dataset& ds,
                  std::uint64_t seed, std::ostream* log = nullptr);

struct Prediction {
  std::string id;
  double p_positive = 0.0;
  int prediction = 0;
  std::vector<double> alpha;
};

struct EvalOutput {
  Metrics metrics;
  std::vector<Prediction> predictions;
};

EvalOutput evaluate(const PsanModel& model, const Dataset& ds,
                    const std::vector<int>& indices);

// Checkpoint glue: model parameters plus enough metadata to rebuild.
Checkpoint checkpoint_from_model(const PsanModel& model);
PsanModel model_from_checkpoint(const Checkpoint& ck);

struct SeedReport {
  std::uint64_t seed = 0;
  int best_epoch = 0;
  int epochs_run = 0;
  Metrics dev, test;
};

struct ExperimentReport {
  TrainConfig cfg;
  std::vector<SeedReport> per_seed;
  double mean_dev_f1 = 0.0, mean_test_f1 = 0.0;
  double mean_dev_precision = 0.0, mean_dev_recall = 0.0;
  double mean_test_precision = 0.0, mean_test_recall = 0.0;

  std::string to_json() const;
};

void aggregate(ExperimentReport& report);

// Train once per configured seed, evaluate dev and test, and average.
// When outdir is non-empty, per-seed checkpoints and metrics land in
// outdir/seed<k>/ and the aggregate in outdir/report.json.
ExperimentReport run_experiment(const TrainConfig& cfg, const Dataset& ds,
                                const std::filesystem::path& outdir = {},
                                std::ostream* log = nullptr);

// The three replacement baselines next to the full model, each a complete
// multi-seed experiment. Writes outdir/<mode>/report.json and a summary
// table with deltas against the full model.
std::vector<ExperimentReport> run_ablations(
    const TrainConfig& cfg, const Dataset& ds,
    const std::filesystem::path& outdir = {}, std::ostream* log = nullptr);

// Multi-seed experiment per graph-stack depth; emits a TSV of k versus F1.
std::vector<ExperimentReport> run_depth_sweep(
    const TrainConfig& cfg, const Dataset& ds, const std::vector<int>& ks,
    const std::filesystem::path& outdir = {}, std::ostream* log = nullptr);

}  // namespace psan
