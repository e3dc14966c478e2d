#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "psan/corpus.hpp"
#include "psan/model.hpp"

namespace psan {

// Training knobs, read from a flat key=value file. Model width (d_model) is
// fixed by the embedding table at load time; everything else lives here.
struct TrainConfig {
  int batch_size = 5;
  double lr = 0.001;
  int max_epochs = 100;
  int patience = 10;  // epochs without a dev F1 improvement before stopping
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  PadSpec pad;
  PsanConfig model;

  void validate() const;
  std::string to_string() const;

  static TrainConfig parse(std::istream& is);
  static TrainConfig load(const std::string& path);
};

}  // namespace psan
