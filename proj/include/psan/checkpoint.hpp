#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace psan {

// A named map of double matrices plus string metadata, stored in a small
// versioned binary container. Round trips are value exact: matrices are
// written as raw little-endian doubles in column-major order.
struct Checkpoint {
  std::vector<std::pair<std::string, Eigen::MatrixXd>> params;
  std::map<std::string, std::string> meta;

  const Eigen::MatrixXd* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace psan
