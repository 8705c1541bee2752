#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace bnav {

/// Token list with index 0 reserved for the unknown token.
class Vocabulary {
 public:
  static constexpr std::string_view kUnknown = "<unk>";

  Vocabulary();
  /// Adds every token once; order of first appearance is ignored, the result
  /// is sorted after the unknown token.
  static Vocabulary from_corpus(const std::vector<std::vector<std::string>>& docs);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  /// Row of `token`, or 0 for unknown tokens.
  std::size_t id(std::string_view token) const;
  bool contains(std::string_view token) const;

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

struct EmbeddingTable {
  Vocabulary vocab;
  Eigen::MatrixXd vectors;  ///< one row per vocabulary token
  std::size_t oov_count = 0;

  Eigen::Index dim() const { return vectors.cols(); }
  auto row(std::string_view token) const { return vectors.row(static_cast<Eigen::Index>(vocab.id(token))); }
};

/// Deterministic random vector for a token; depends only on (token, seed, dim).
Eigen::VectorXd hashed_vector(std::string_view token, std::uint64_t seed, Eigen::Index dim);

/// Every row hash-seeded, scaled to unit expected norm.
EmbeddingTable random_embeddings(const Vocabulary& vocab, Eigen::Index dim, std::uint64_t seed);

/// `token f1 ... f<dim>` per line. Tokens missing from the file get hashed
/// vectors rescaled to the mean norm of the loaded rows. Throws ParseError
/// and IoError.
EmbeddingTable load_pretrained(const std::string& path, const Vocabulary& vocab, Eigen::Index dim = 100,
                               std::uint64_t seed = 0);

}  // namespace bnav
