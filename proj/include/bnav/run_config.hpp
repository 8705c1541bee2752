#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

#include "bnav/translator.hpp"
#include "bnav/world_gen.hpp"

namespace bnav {

/// Flat key=value settings shared by every navctl command. Only known keys
/// are accepted; each has a default.
class RunConfig {
 public:
  RunConfig();

  /// Throws ValidationError for unknown keys.
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool explicitly_set(const std::string& key) const { return explicit_.count(key) != 0; }

  /// Reads `key = value` lines; `#` starts a comment. Throws IoError and
  /// ParseError.
  void merge_file(const std::string& path);

  /// Sorted `key=value` lines.
  std::string to_text() const;
  std::uint64_t hash() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> explicit_;
};

ModelConfig model_config(const RunConfig& rc);
DatasetSpec dataset_spec(const RunConfig& rc);

}  // namespace bnav
