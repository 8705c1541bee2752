#pragma once

// Named tensors behind a text manifest:
//
//   bnav-checkpoint 1
//   meta <key> <value...>
//   vocab <count>
//   <token>            (count lines)
//   tensor <name> <rows> <cols>
//   data
//   <raw little-endian float64, row-major, tensors in manifest order>
//
// Tensors and meta keys are written sorted by name.

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace bnav {

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::string> vocab;
  std::map<std::string, Eigen::MatrixXd> tensors;

  /// Throws ValidationError when absent.
  const std::string& meta_value(const std::string& key) const;
  const Eigen::MatrixXd& tensor(const std::string& name) const;

  bool operator==(const Checkpoint& other) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
/// Throws IoError and ParseError.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace bnav
