#include "iqs/textprep.hpp"

#include <algorithm>
#include <fstream>

#include "iqs/errors.hpp"

namespace iqs {

namespace {

// Decodes one UTF-8 code point starting at text[pos]; advances pos.
// Invalid sequences yield U+FFFD and consume a single byte.
char32_t next_code_point(std::string_view text, std::size_t& pos) {
  const auto lead = static_cast<unsigned char>(text[pos]);
  std::size_t len = 0;
  char32_t cp = 0;
  if (lead < 0x80) {
    ++pos;
    return lead;
  } else if ((lead & 0xE0) == 0xC0) {
    len = 2;
    cp = lead & 0x1F;
  } else if ((lead & 0xF0) == 0xE0) {
    len = 3;
    cp = lead & 0x0F;
  } else if ((lead & 0xF8) == 0xF0) {
    len = 4;
    cp = lead & 0x07;
  } else {
    ++pos;
    return 0xFFFD;
  }
  if (pos + len > text.size()) {
    ++pos;
    return 0xFFFD;
  }
  for (std::size_t i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(text[pos + i]);
    if ((b & 0xC0) != 0x80) {
      ++pos;
      return 0xFFFD;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  pos += len;
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Letters and digits continue a word; everything else separates words.
// Outside ASCII this is a block-level approximation: punctuation, symbol,
// and emoji blocks separate; all other scripts count as letters.
bool is_word_char(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || (cp >= '0' && cp <= '9');
  }
  if (cp == 0xFFFD) return false;
  if (cp <= 0xBF) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;
  if (cp == 0xD7 || cp == 0xF7) return false;
  if (cp >= 0x2000 && cp <= 0x2BFF) return false;
  if (cp >= 0x3000 && cp <= 0x303F) return false;
  if (cp >= 0xFE00 && cp <= 0xFE0F) return false;
  if (cp >= 0xFE30 && cp <= 0xFE4F) return false;
  if (cp >= 0xFF00 && cp <= 0xFF0F) return false;
  if (cp >= 0xFF1A && cp <= 0xFF20) return false;
  if (cp >= 0x1F000 && cp <= 0x1FAFF) return false;
  return true;
}

char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 32;
  if (cp < 0x80) return cp;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
  if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 0x20;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
  return cp;
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    char c = s[i];
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
    if (c != prefix[i]) return false;
  }
  return true;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string join(const TokenList& tokens, char sep) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(sep);
    out += t;
  }
  return out;
}

void push_unique(TokenList& out, std::unordered_set<std::string>& seen, const std::string& t) {
  if (seen.insert(t).second) out.push_back(t);
}

// Single pass: stopwords out, greedy longest entity match, vocabulary
// filter, dedupe.
TokenList tokenize_once(std::string_view text, const TokenizerConfig& config,
                        const EmbeddingStore& store) {
  std::vector<std::string> seq;
  for (auto& t : lexical_tokens(text, config)) {
    if (!config.stopwords.contains(t)) seq.push_back(std::move(t));
  }

  TokenList out;
  std::unordered_set<std::string> seen;
  const std::size_t max_n = std::max<std::size_t>(config.entity_max_ngram, 1);
  std::size_t i = 0;
  while (i < seq.size()) {
    std::size_t consumed = 1;
    for (std::size_t n = std::min(max_n, seq.size() - i); n >= 2; --n) {
      std::string joined = seq[i];
      for (std::size_t j = 1; j < n; ++j) {
        joined.push_back('_');
        joined += seq[i + j];
      }
      if (store.contains(joined) && !config.stopwords.contains(joined)) {
        push_unique(out, seen, joined);
        consumed = n;
        break;
      }
    }
    if (consumed == 1 && store.contains(seq[i])) push_unique(out, seen, seq[i]);
    i += consumed;
  }
  return out;
}

}  // namespace

std::optional<WordClass> parse_word_class(std::string_view name) {
  if (name == "noun") return WordClass::Noun;
  if (name == "verb") return WordClass::Verb;
  if (name == "adjective") return WordClass::Adjective;
  if (name == "number") return WordClass::Number;
  if (name == "other") return WordClass::Other;
  return std::nullopt;
}

const std::unordered_set<std::string>& default_stopwords() {
  static const std::unordered_set<std::string> words = {
      "a",          "about",   "above",   "after",    "again",     "against", "all",
      "am",         "an",      "and",     "any",      "are",       "aren",    "as",
      "at",         "be",      "because", "been",     "before",    "being",   "below",
      "between",    "both",    "but",     "by",       "can",       "cannot",  "could",
      "couldn",     "d",       "did",     "didn",     "do",        "does",    "doesn",
      "doing",      "don",     "down",    "during",   "each",      "few",     "for",
      "from",       "further", "had",     "hadn",     "has",       "hasn",    "have",
      "haven",      "having",  "he",      "her",      "here",      "hers",    "herself",
      "him",        "himself", "his",     "how",      "i",         "if",      "in",
      "into",       "is",      "isn",     "it",       "its",       "itself",  "just",
      "ll",         "m",       "me",      "more",     "most",      "mustn",   "my",
      "myself",     "no",      "nor",     "not",      "now",       "o",       "of",
      "off",        "on",      "once",    "only",     "or",        "other",   "ought",
      "our",        "ours",    "ourselves", "out",    "over",      "own",     "re",
      "rt",         "s",       "same",    "shan",     "she",       "should",  "shouldn",
      "so",         "some",    "such",    "t",        "than",      "that",    "the",
      "their",      "theirs",  "them",    "themselves", "then",    "there",   "these",
      "they",       "this",    "those",   "through",  "to",        "too",     "under",
      "until",      "up",      "ve",      "very",     "via",       "was",     "wasn",
      "we",         "were",    "weren",   "what",     "when",      "where",   "which",
      "while",      "who",     "whom",    "why",      "will",      "with",    "won",
      "would",      "wouldn",  "y",       "you",      "your",      "yours",   "yourself",
      "yourselves", "also",    "amp",     "http",     "https",     "www",     "co",
      "yet",        "may",     "might",   "must",     "shall",     "us",      "let",
  };
  return words;
}

void TokenizerConfig::validate() const {
  if (entity_max_ngram == 0) {
    throw ValidationError("entity_max_ngram must be >= 1", {"entity_max_ngram"});
  }
}

std::vector<std::string> lexical_tokens(std::string_view text, const TokenizerConfig& config) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && is_space(text[pos])) ++pos;
    std::size_t end = pos;
    while (end < text.size() && !is_space(text[end])) ++end;
    std::string_view chunk = text.substr(pos, end - pos);
    pos = end;
    if (chunk.empty()) continue;
    if (starts_with_ci(chunk, "http://") || starts_with_ci(chunk, "https://") ||
        starts_with_ci(chunk, "www.") || chunk.front() == '@') {
      continue;
    }
    while (!chunk.empty() && chunk.front() == '#') chunk.remove_prefix(1);

    std::string current;
    std::size_t i = 0;
    while (i < chunk.size()) {
      char32_t cp = next_code_point(chunk, i);
      if (is_word_char(cp)) {
        append_utf8(current, config.lowercase ? to_lower(cp) : cp);
      } else if (!current.empty()) {
        out.push_back(std::move(current));
        current.clear();
      }
    }
    if (!current.empty()) out.push_back(std::move(current));
  }
  return out;
}

TokenList tokenize(std::string_view text, const TokenizerConfig& config,
                   const EmbeddingStore& store) {
  // Re-tokenizing the joined output can expose new entity adjacencies once
  // stopwords and duplicates are gone; iterate to a fixed point.
  constexpr int kMaxPasses = 16;
  TokenList current = tokenize_once(text, config, store);
  for (int pass = 1; pass < kMaxPasses; ++pass) {
    TokenList next = tokenize_once(join(current, ' '), config, store);
    if (next == current) break;
    current = std::move(next);
  }
  return current;
}

TokenList expand_synonyms(const TokenList& words, const SynonymLexicon& lexicon) {
  TokenList out;
  std::unordered_set<std::string> seen;
  for (const auto& w : words) push_unique(out, seen, w);
  for (const auto& w : words) {
    auto it = lexicon.find(w);
    if (it == lexicon.end()) continue;
    for (const auto& syn : it->second) push_unique(out, seen, syn);
  }
  return out;
}

TokenList expand_knn(const TokenList& words, const EmbeddingStore& store, std::size_t k) {
  if (k == 0) throw ContractViolation("expand_knn: k must be >= 1");
  TokenList out;
  std::unordered_set<std::string> seen;
  for (const auto& w : words) push_unique(out, seen, w);
  for (const auto& w : words) {
    auto neighbors = store.nearest_neighbors(w, k);
    if (!neighbors) continue;
    for (const auto& n : *neighbors) push_unique(out, seen, n.token);
  }
  return out;
}

PrototypeDocument build_prototype(std::string_view text, const TokenizerConfig& config,
                                  const EmbeddingStore& store, Expansions expansions,
                                  const SynonymLexicon* synonyms, std::size_t knn_k) {
  PrototypeDocument doc;
  doc.raw_text = std::string(text);
  TokenList words = tokenize(text, config, store);
  if (config.wordclass_lexicon) {
    const auto& lex = *config.wordclass_lexicon;
    std::erase_if(words, [&](const std::string& w) {
      auto it = lex.find(w);
      return it != lex.end() && it->second == WordClass::Other;
    });
  }
  if (words.empty()) {
    throw UntokenizablePrototype("prototype has no usable words after filtering");
  }

  TokenList vocab = words;
  std::unordered_set<std::string> seen(words.begin(), words.end());
  auto admit = [&](const TokenList& expanded) {
    for (const auto& raw : expanded) {
      std::string t = raw;
      if (config.lowercase) {
        // Synonym lexicons may carry capitalized entries.
        std::string lowered;
        std::size_t i = 0;
        while (i < t.size()) append_utf8(lowered, to_lower(next_code_point(t, i)));
        t = std::move(lowered);
      }
      if (!store.contains(t) || config.stopwords.contains(t)) continue;
      push_unique(vocab, seen, t);
    }
  };
  if (expansions.synonyms && synonyms != nullptr) admit(expand_synonyms(words, *synonyms));
  if (expansions.knn) admit(expand_knn(words, store, knn_k));

  doc.words = std::move(words);
  doc.candidate_vocab = std::move(vocab);
  return doc;
}

namespace {

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    fn(std::string_view(line), line_no);
  }
}

}  // namespace

std::unordered_set<std::string> load_stopwords(const std::filesystem::path& path) {
  std::unordered_set<std::string> words;
  for_each_line(path, [&](std::string_view line, std::size_t) {
    std::string w(trim(line));
    std::string lowered;
    std::size_t i = 0;
    while (i < w.size()) append_utf8(lowered, to_lower(next_code_point(w, i)));
    words.insert(std::move(lowered));
  });
  return words;
}

SynonymLexicon load_synonym_lexicon(const std::filesystem::path& path) {
  SynonymLexicon lexicon;
  for_each_line(path, [&](std::string_view line, std::size_t line_no) {
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw ParseError(path.string(), line_no, "expected '<word>\\t<syn1>,<syn2>,...'");
    }
    std::string word(trim(line.substr(0, tab)));
    if (word.empty()) throw ParseError(path.string(), line_no, "empty headword");
    auto& syns = lexicon[word];
    std::string_view rest = line.substr(tab + 1);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      std::string_view item = trim(rest.substr(0, comma));
      if (!item.empty()) {
        std::string syn(item);
        std::replace(syn.begin(), syn.end(), ' ', '_');
        if (syn != word && std::find(syns.begin(), syns.end(), syn) == syns.end()) {
          syns.push_back(std::move(syn));
        }
      }
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
  });
  return lexicon;
}

WordClassLexicon load_wordclass_lexicon(const std::filesystem::path& path) {
  WordClassLexicon lexicon;
  for_each_line(path, [&](std::string_view line, std::size_t line_no) {
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw ParseError(path.string(), line_no, "expected '<word>\\t<class>'");
    }
    auto cls = parse_word_class(trim(line.substr(tab + 1)));
    if (!cls) {
      throw ParseError(path.string(), line_no,
                       "unknown word class '" + std::string(trim(line.substr(tab + 1))) +
                           "' (noun|verb|adjective|number|other)");
    }
    lexicon[std::string(trim(line.substr(0, tab)))] = *cls;
  });
  return lexicon;
}

}  // namespace iqs
