#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "iqs/embeddings.hpp"

namespace iqs {

/// Unique tokens in first-occurrence order.
using TokenList = std::vector<std::string>;

enum class WordClass { Noun, Verb, Adjective, Number, Other };

std::optional<WordClass> parse_word_class(std::string_view name);

using WordClassLexicon = std::unordered_map<std::string, WordClass>;
using SynonymLexicon = std::unordered_map<std::string, std::vector<std::string>>;

/// Bundled English stopword list.
const std::unordered_set<std::string>& default_stopwords();

struct TokenizerConfig {
  std::unordered_set<std::string> stopwords = default_stopwords();
  std::optional<WordClassLexicon> wordclass_lexicon;
  std::size_t entity_max_ngram = 3;
  bool lowercase = true;

  /// Throws ValidationError when entity_max_ngram is 0.
  void validate() const;
};

struct Expansions {
  bool synonyms = false;
  bool knn = false;
};

inline constexpr std::size_t kDefaultKnnK = 3;

class UntokenizablePrototype : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PrototypeDocument {
  std::string raw_text;
  TokenList words;            // filtered prototype words
  TokenList candidate_vocab;  // words plus expansions; queries draw from here
};

/// Lowercased word sequence with URLs and @-mentions removed and hashtag
/// bodies kept. No stopword, vocabulary or entity processing. Used for the
/// lexical baselines and for indexing.
std::vector<std::string> lexical_tokens(std::string_view text, const TokenizerConfig& config);

/// Filtered word set of `text`: entity n-grams found in `store` collapse to
/// one underscore-joined token, stopwords and out-of-vocabulary tokens are
/// dropped, duplicates removed keeping the first occurrence. Idempotent under
/// re-tokenizing the space-joined output.
TokenList tokenize(std::string_view text, const TokenizerConfig& config,
                   const EmbeddingStore& store);

TokenList expand_synonyms(const TokenList& words, const SynonymLexicon& lexicon);
TokenList expand_knn(const TokenList& words, const EmbeddingStore& store, std::size_t k);

/// Throws UntokenizablePrototype when no usable words remain.
PrototypeDocument build_prototype(std::string_view text, const TokenizerConfig& config,
                                  const EmbeddingStore& store, Expansions expansions = {},
                                  const SynonymLexicon* synonyms = nullptr,
                                  std::size_t knn_k = kDefaultKnnK);

/// Non-owning bundle of everything needed to (re)build prototypes and result
/// word sets consistently. Referents must outlive the pipeline.
struct TextPipeline {
  const TokenizerConfig* config = nullptr;
  const EmbeddingStore* store = nullptr;
  Expansions expansions{};
  const SynonymLexicon* synonyms = nullptr;
  std::size_t knn_k = kDefaultKnnK;

  PrototypeDocument prototype(std::string_view text) const {
    return build_prototype(text, *config, *store, expansions, synonyms, knn_k);
  }
  TokenList words(std::string_view text) const { return tokenize(text, *config, *store); }
};

// Lexicon files. Each throws IoError / ParseError naming path and line.
std::unordered_set<std::string> load_stopwords(const std::filesystem::path& path);
SynonymLexicon load_synonym_lexicon(const std::filesystem::path& path);
WordClassLexicon load_wordclass_lexicon(const std::filesystem::path& path);

}  // namespace iqs
