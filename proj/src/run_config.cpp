#include "bnav/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>

#include "bnav/errors.hpp"
#include "bnav/rng.hpp"

namespace bnav {

namespace {

// Keys outside the model block.
const std::map<std::string, std::string>& extra_defaults() {
  static const std::map<std::string, std::string> d = {
      {"n_train_graphs", "20"},
      {"n_new_graphs", "5"},
      {"train_routes", "25"},
      {"test_repeated_routes", "5"},
      {"test_new_routes", "20"},
      {"double_fraction", "0"},
      {"suboptimal_fraction", "0.05"},
      {"min_rooms", "6"},
      {"max_rooms", "16"},
      {"min_plan_length", "2"},
      {"max_plan_length", "14"},
      {"dataset", "data/manifest.txt"},
      {"checkpoint", "run/model.ckpt"},
      {"splits", "test-repeated,test-new"},
      {"graph", ""},
      {"start", ""},
      {"instruction", ""},
      {"attention", ""},
      {"resume", "false"},
  };
  return d;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long long to_int(const RunConfig& rc, const std::string& k) {
  const auto& v = rc.get(k);
  long long x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw ValidationError(k + ": not an integer: '" + v + "'");
  return x;
}

double to_double(const RunConfig& rc, const std::string& k) {
  const auto& v = rc.get(k);
  double x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw ValidationError(k + ": not a number: '" + v + "'");
  return x;
}

}  // namespace

RunConfig::RunConfig() {
  values_ = config_to_map(ModelConfig{});
  for (const auto& [k, v] : extra_defaults()) values_[k] = v;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown config key '" + key + "'");
  it->second = value;
  explicit_.insert(key);
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown config key '" + key + "'");
  return it->second;
}

void RunConfig::merge_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (!values_.count(key)) throw ParseError(lineno, "unknown config key '" + key + "'");
    set(key, trim(line.substr(eq + 1)));
  }
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t RunConfig::hash() const { return fnv1a64(to_text()); }

ModelConfig model_config(const RunConfig& rc) {
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : config_to_map(ModelConfig{})) kv[k] = rc.get(k);
  return config_from_map(kv);
}

DatasetSpec dataset_spec(const RunConfig& rc) {
  DatasetSpec s;
  s.n_train_graphs = static_cast<int>(to_int(rc, "n_train_graphs"));
  s.n_new_graphs = static_cast<int>(to_int(rc, "n_new_graphs"));
  s.train_routes_per_graph = static_cast<int>(to_int(rc, "train_routes"));
  s.test_repeated_routes_per_graph = static_cast<int>(to_int(rc, "test_repeated_routes"));
  s.test_new_routes_per_graph = static_cast<int>(to_int(rc, "test_new_routes"));
  s.double_fraction = to_double(rc, "double_fraction");
  s.suboptimal_fraction = to_double(rc, "suboptimal_fraction");
  s.min_rooms = static_cast<int>(to_int(rc, "min_rooms"));
  s.max_rooms = static_cast<int>(to_int(rc, "max_rooms"));
  s.min_plan_length = static_cast<int>(to_int(rc, "min_plan_length"));
  s.max_plan_length = static_cast<int>(to_int(rc, "max_plan_length"));
  const auto& seed = rc.get("seed");
  std::uint64_t x = 0;
  auto [p, ec] = std::from_chars(seed.data(), seed.data() + seed.size(), x);
  if (ec != std::errc() || p != seed.data() + seed.size()) throw ValidationError("seed: not an unsigned integer");
  s.seed = x;
  validate(s);
  return s;
}

}  // namespace bnav
