#include "iqs/searchsim.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "iqs/errors.hpp"

namespace iqs {

Query::Query(std::vector<std::string> terms) : terms_(std::move(terms)) {
  if (terms_.empty()) throw ContractViolation("a query needs at least one term");
  key_ = terms_;
  std::sort(key_.begin(), key_.end());
  if (std::adjacent_find(key_.begin(), key_.end()) != key_.end()) {
    throw ContractViolation("query terms must be distinct");
  }
}

bool Query::contains(std::string_view term) const {
  return std::binary_search(key_.begin(), key_.end(), term);
}

std::string Query::to_string() const {
  std::string out;
  for (const auto& t : terms_) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

std::vector<RawDocument> load_corpus_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path.string());
  std::vector<RawDocument> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path.string(), line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(path.string(), line_no, "expected a JSON object");
    RawDocument doc;
    if (auto it = j.find("id"); it != j.end() && it->is_string()) {
      doc.id = it->get<std::string>();
    } else if (it != j.end() && it->is_number_integer()) {
      doc.id = std::to_string(it->get<std::int64_t>());
    } else {
      throw ParseError(path.string(), line_no, "missing string field \"id\"");
    }
    if (auto it = j.find("text"); it != j.end() && it->is_string()) {
      doc.text = it->get<std::string>();
    } else {
      throw ParseError(path.string(), line_no, "missing string field \"text\"");
    }
    if (auto it = j.find("timestamp"); it != j.end() && !it->is_null()) {
      if (!it->is_number_integer()) {
        throw ParseError(path.string(), line_no, "\"timestamp\" must be an integer");
      }
      doc.timestamp = it->get<std::int64_t>();
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

BooleanIndex BooleanIndex::build(std::vector<RawDocument> corpus, const TokenizerConfig& config,
                                 const EmbeddingStore& store) {
  {
    std::unordered_map<std::string_view, int> seen;
    for (const auto& d : corpus) {
      if (++seen[d.id] > 1) throw IngestionError("duplicate document id '" + d.id + "'");
    }
  }

  // Result order: dated docs newest first, then undated; ties by id descending.
  std::sort(corpus.begin(), corpus.end(), [](const RawDocument& a, const RawDocument& b) {
    if (a.timestamp.has_value() != b.timestamp.has_value()) return a.timestamp.has_value();
    if (a.timestamp && *a.timestamp != *b.timestamp) return *a.timestamp > *b.timestamp;
    return a.id > b.id;
  });

  BooleanIndex index;
  index.docs_.reserve(corpus.size());
  const std::size_t max_n = std::max<std::size_t>(config.entity_max_ngram, 1);
  for (auto& raw : corpus) {
    const auto pos = static_cast<std::uint32_t>(index.docs_.size());
    const auto tokens = lexical_tokens(raw.text, config);
    auto post = [&](const std::string& term) {
      auto& list = index.postings_[term];
      if (list.empty() || list.back() != pos) list.push_back(pos);
    };
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      post(tokens[i]);
      std::string joined = tokens[i];
      for (std::size_t n = 2; n <= max_n && i + n <= tokens.size(); ++n) {
        joined.push_back('_');
        joined += tokens[i + n - 1];
        if (store.contains(joined)) post(joined);
      }
    }
    index.id_to_pos_.emplace(raw.id, pos);
    index.docs_.push_back(make_result_doc(std::move(raw.id), std::move(raw.text), raw.timestamp,
                                          config, store));
  }
  return index;
}

std::size_t BooleanIndex::posting_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [term, list] : postings_) n += list.size();
  return n;
}

std::vector<std::string> BooleanIndex::postings(std::string_view term) const {
  std::vector<std::string> ids;
  if (auto it = postings_.find(std::string(term)); it != postings_.end()) {
    for (auto pos : it->second) ids.push_back(docs_[pos].id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

const ResultDoc* BooleanIndex::find(std::string_view id) const {
  auto it = id_to_pos_.find(std::string(id));
  return it == id_to_pos_.end() ? nullptr : &docs_[it->second];
}

std::vector<ResultDoc> BooleanIndex::search(const Query& query, std::size_t rlimit) const {
  if (rlimit == 0) throw ContractViolation("search: rlimit must be >= 1");
  std::vector<const std::vector<std::uint32_t>*> lists;
  lists.reserve(query.size());
  for (const auto& term : query.key()) {
    auto it = postings_.find(term);
    if (it == postings_.end()) return {};
    lists.push_back(&it->second);
  }
  std::sort(lists.begin(), lists.end(),
            [](const auto* a, const auto* b) { return a->size() < b->size(); });

  // Positions are result ranks, so walking the shortest list in order yields
  // results already sorted and lets us stop at rlimit.
  std::vector<std::size_t> cursors(lists.size(), 0);
  std::vector<ResultDoc> out;
  for (auto pos : *lists.front()) {
    bool all = true;
    for (std::size_t i = 1; i < lists.size() && all; ++i) {
      const auto& list = *lists[i];
      auto& c = cursors[i];
      c = static_cast<std::size_t>(
          std::lower_bound(list.begin() + static_cast<std::ptrdiff_t>(c), list.end(), pos) -
          list.begin());
      all = c < list.size() && list[c] == pos;
    }
    if (!all) continue;
    out.push_back(docs_[pos]);
    if (out.size() >= rlimit) break;
  }
  return out;
}

}  // namespace iqs
