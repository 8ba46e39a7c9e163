#pragma once

// Shared test fixtures: the three-word store, random stores and corpora.

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "iqs/embeddings.hpp"
#include "iqs/relevance.hpp"
#include "iqs/textprep.hpp"

namespace iqs::testing {

// dog=(1,0), cat=(0.8,0.6), car=(0,1)
inline EmbeddingStore three_word_store() {
  return EmbeddingStore::from_vectors(
      2, {{"dog", {1.0, 0.0}}, {"cat", {0.8, 0.6}}, {"car", {0.0, 1.0}}});
}

inline TokenizerConfig small_config(std::vector<std::string> stopwords = {"the", "and"}) {
  TokenizerConfig cfg;
  cfg.stopwords = {stopwords.begin(), stopwords.end()};
  return cfg;
}

inline ResultDoc doc_with_words(std::string id, TokenList words) {
  ResultDoc d;
  d.id = std::move(id);
  for (const auto& w : words) {
    if (!d.text.empty()) d.text.push_back(' ');
    d.text += w;
  }
  d.words = std::move(words);
  return d;
}

inline PrototypeDocument prototype_of(TokenList words) {
  PrototypeDocument p;
  for (const auto& w : words) {
    if (!p.raw_text.empty()) p.raw_text.push_back(' ');
    p.raw_text += w;
  }
  p.words = words;
  p.candidate_vocab = std::move(words);
  return p;
}

inline std::string word_name(std::size_t i) { return "w" + std::to_string(i); }

/// `n` tokens w0..w{n-1} with random Gaussian vectors.
inline EmbeddingStore random_store(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::pair<std::string, std::vector<double>>> entries;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(dim);
    for (auto& x : v) x = g(rng);
    entries.emplace_back(word_name(i), std::move(v));
  }
  return EmbeddingStore::from_vectors(dim, entries);
}

/// Distinct random tokens from the store, between lo and hi of them.
inline TokenList random_words(const EmbeddingStore& store, std::size_t lo, std::size_t hi,
                              std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> count(lo, hi);
  std::vector<std::string> all = store.tokens();
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(count(rng), all.size()));
  return all;
}

}  // namespace iqs::testing
