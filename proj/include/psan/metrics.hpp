#pragma once

#include <string>
#include <vector>

#include "psan/errors.hpp"

namespace psan {

// Confusion counts with precision/recall/F1 for the positive class.
struct Metrics {
  long tp = 0, fp = 0, fn = 0, tn = 0;

  double precision() const {
    return tp + fp == 0 ? 0.0 : static_cast<double>(tp) /
                                    static_cast<double>(tp + fp);
  }
  double recall() const {
    return tp + fn == 0 ? 0.0 : static_cast<double>(tp) /
                                    static_cast<double>(tp + fn);
  }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
};

inline Metrics confusion(const std::vector<int>& gold,
                         const std::vector<int>& pred) {
  if (gold.size() != pred.size())
    throw ValueError("confusion: " + std::to_string(gold.size()) +
                     " gold labels vs " + std::to_string(pred.size()) +
                     " predictions");
  Metrics m;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] == 1)
      (pred[i] == 1 ? m.tp : m.fn)++;
    else
      (pred[i] == 1 ? m.fp : m.tn)++;
  }
  return m;
}

}  // namespace psan
