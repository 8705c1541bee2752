#include "bnav/embedding.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "bnav/errors.hpp"
#include "bnav/rng.hpp"

namespace bnav {

Vocabulary::Vocabulary() {
  tokens_.emplace_back(kUnknown);
  index_.emplace(std::string(kUnknown), 0);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  Vocabulary v;
  for (auto& t : tokens) {
    if (t == kUnknown) continue;
    v.index_.emplace(t, v.tokens_.size());
    v.tokens_.push_back(std::move(t));
  }
  return v;
}

Vocabulary Vocabulary::from_corpus(const std::vector<std::vector<std::string>>& docs) {
  std::set<std::string> seen;
  for (const auto& d : docs) seen.insert(d.begin(), d.end());
  return from_tokens({seen.begin(), seen.end()});
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(token);
  return it == index_.end() ? 0 : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.find(token) != index_.end(); }

Eigen::VectorXd hashed_vector(std::string_view token, std::uint64_t seed, Eigen::Index dim) {
  Rng rng(derive_seed(seed, {fnv1a64(token)}));
  Eigen::VectorXd v(dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = gaussian(rng) * scale;
  return v;
}

EmbeddingTable random_embeddings(const Vocabulary& vocab, Eigen::Index dim, std::uint64_t seed) {
  EmbeddingTable t{vocab, Eigen::MatrixXd(static_cast<Eigen::Index>(vocab.size()), dim), vocab.size()};
  for (std::size_t i = 0; i < vocab.size(); ++i)
    t.vectors.row(static_cast<Eigen::Index>(i)) = hashed_vector(vocab.tokens()[i], seed, dim).transpose();
  return t;
}

EmbeddingTable load_pretrained(const std::string& path, const Vocabulary& vocab, Eigen::Index dim,
                               std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file " + path);
  EmbeddingTable t{vocab, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(vocab.size()), dim), 0};
  std::vector<bool> loaded(vocab.size(), false);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    Eigen::VectorXd v(dim);
    Eigen::Index n = 0;
    std::string field;
    while (ss >> field) {
      if (n == dim) throw ParseError(lineno, "expected " + std::to_string(dim) + " values after '" + token + "'");
      double x = 0.0;
      auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), x);
      if (ec != std::errc() || p != field.data() + field.size() || !std::isfinite(x))
        throw ParseError(lineno, "bad float '" + field + "'");
      v[n++] = x;
    }
    if (n != dim)
      throw ParseError(lineno, "expected " + std::to_string(dim) + " values after '" + token + "', got " +
                                   std::to_string(n));
    if (!vocab.contains(token)) continue;
    const auto id = vocab.id(token);
    t.vectors.row(static_cast<Eigen::Index>(id)) = v.transpose();
    loaded[id] = true;
  }

  double norm_sum = 0.0;
  std::size_t n_loaded = 0;
  for (std::size_t i = 0; i < vocab.size(); ++i)
    if (loaded[i]) {
      norm_sum += t.vectors.row(static_cast<Eigen::Index>(i)).norm();
      ++n_loaded;
    }
  const double target = n_loaded ? norm_sum / static_cast<double>(n_loaded) : 1.0;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (loaded[i]) continue;
    Eigen::VectorXd v = hashed_vector(vocab.tokens()[i], seed, dim);
    const double nv = v.norm();
    if (nv > 0) v *= target / nv;
    t.vectors.row(static_cast<Eigen::Index>(i)) = v.transpose();
    ++t.oov_count;
  }
  return t;
}

}  // namespace bnav
