#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace iqs {

inline constexpr std::size_t kDefaultMaxTokens = 500'000;

struct Neighbor {
  std::string token;
  double distance = 0.0;

  bool operator==(const Neighbor&) const = default;
};

/// Immutable token -> unit vector map.
///
/// Vectors are L2-normalized on insertion, so the cosine distance between two
/// stored tokens is `1 - dot`. Lookups are case-sensitive; callers normalize
/// case before asking. Safe to share between threads once built.
class EmbeddingStore {
 public:
  using TokenId = std::size_t;

  EmbeddingStore() = default;

  /// Builds a store from raw vectors. Zero-norm vectors are skipped and
  /// counted; later duplicates of a token are ignored.
  /// Throws ContractViolation if dim is 0 or any vector has another length.
  static EmbeddingStore from_vectors(
      std::size_t dim,
      const std::vector<std::pair<std::string, std::vector<double>>>& entries);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t token_count() const noexcept { return tokens_.size(); }
  std::size_t skipped_zero_norm() const noexcept { return skipped_zero_norm_; }

  bool contains(std::string_view token) const { return id_of(token).has_value(); }
  std::optional<TokenId> id_of(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  /// Unit vector for `token`, or nullopt when absent.
  std::optional<std::span<const double>> vector(std::string_view token) const;
  std::span<const double> vector(TokenId id) const;

  /// Cosine distance between two stored tokens; exactly 0 for id_a == id_b.
  double distance(TokenId id_a, TokenId id_b) const;

  /// Up to k neighbors of `token` (excluding itself), ascending by distance
  /// with ties broken by token. nullopt when `token` is absent.
  std::optional<std::vector<Neighbor>> nearest_neighbors(std::string_view token,
                                                         std::size_t k) const;

 private:
  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const noexcept {
      return std::hash<std::string_view>{}(s);
    }
  };

  bool insert(std::string token, std::span<const double> raw);

  std::size_t dim_ = 0;
  std::size_t skipped_zero_norm_ = 0;
  std::vector<std::string> tokens_;
  std::vector<double> data_;  // token_count x dim, row-major
  std::unordered_map<std::string, TokenId, StringHash, std::equal_to<>> ids_;

  friend EmbeddingStore load_embeddings(const std::filesystem::path&,
                                        std::optional<std::size_t>);
};

/// Reads a whitespace-separated text vector file (word2vec/fastText/GloVe
/// text layout). An optional "<count> <dim>" header line is detected and
/// skipped. When `max_tokens` is set only that many vectors are read.
///
/// Throws IoError if the file cannot be opened, ParseError for a malformed
/// line and FormatError when a line's dimension disagrees with the first.
EmbeddingStore load_embeddings(const std::filesystem::path& path,
                               std::optional<std::size_t> max_tokens = kDefaultMaxTokens);

/// 1 - cos(u, v), clamped to [0, 2].
/// Throws ContractViolation on a dimension mismatch or a zero vector.
double cosine_distance(std::span<const double> u, std::span<const double> v);

}  // namespace iqs
