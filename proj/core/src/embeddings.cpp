#include "iqs/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>

#include "iqs/errors.hpp"

namespace iqs {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t') ++end;
    fields.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return fields;
}

bool parse_double(std::string_view s, double& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_size(std::string_view s, std::size_t& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace

EmbeddingStore EmbeddingStore::from_vectors(
    std::size_t dim,
    const std::vector<std::pair<std::string, std::vector<double>>>& entries) {
  if (dim == 0) throw ContractViolation("embedding dim must be positive");
  EmbeddingStore store;
  store.dim_ = dim;
  for (const auto& [token, values] : entries) {
    if (values.size() != dim) {
      throw ContractViolation("vector for '" + token + "' has length " +
                              std::to_string(values.size()) + ", expected " +
                              std::to_string(dim));
    }
    store.insert(token, values);
  }
  return store;
}

bool EmbeddingStore::insert(std::string token, std::span<const double> raw) {
  double norm_sq = 0.0;
  for (double x : raw) norm_sq += x * x;
  const double norm = std::sqrt(norm_sq);
  if (!(norm > 0.0)) {
    ++skipped_zero_norm_;
    return false;
  }
  if (ids_.contains(token)) return false;
  const TokenId id = tokens_.size();
  for (double x : raw) data_.push_back(x / norm);
  ids_.emplace(token, id);
  tokens_.push_back(std::move(token));
  return true;
}

std::optional<EmbeddingStore::TokenId> EmbeddingStore::id_of(std::string_view token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::span<const double>> EmbeddingStore::vector(std::string_view token) const {
  auto id = id_of(token);
  if (!id) return std::nullopt;
  return vector(*id);
}

std::span<const double> EmbeddingStore::vector(TokenId id) const {
  if (id >= tokens_.size()) throw ContractViolation("token id out of range");
  return {data_.data() + id * dim_, dim_};
}

double EmbeddingStore::distance(TokenId id_a, TokenId id_b) const {
  if (id_a == id_b) return 0.0;
  const double* a = data_.data() + id_a * dim_;
  const double* b = data_.data() + id_b * dim_;
  double dot = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) dot += a[i] * b[i];
  return std::clamp(1.0 - dot, 0.0, 2.0);
}

std::optional<std::vector<Neighbor>> EmbeddingStore::nearest_neighbors(std::string_view token,
                                                                       std::size_t k) const {
  if (k == 0) throw ContractViolation("nearest_neighbors: k must be >= 1");
  auto self = id_of(token);
  if (!self) return std::nullopt;

  std::vector<std::pair<double, TokenId>> scored;
  scored.reserve(tokens_.size());
  for (TokenId id = 0; id < tokens_.size(); ++id) {
    if (id == *self) continue;
    scored.emplace_back(distance(*self, id), id);
  }
  auto less = [this](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return tokens_[a.second] < tokens_[b.second];
  };
  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end(), less);

  std::vector<Neighbor> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    out.push_back({tokens_[scored[i].second], scored[i].first});
  }
  return out;
}

EmbeddingStore load_embeddings(const std::filesystem::path& path,
                               std::optional<std::size_t> max_tokens) {
  if (max_tokens && *max_tokens == 0) {
    throw ContractViolation("load_embeddings: max_tokens must be positive");
  }
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embeddings file: " + path.string());

  const std::string where = path.string();
  EmbeddingStore store;
  std::optional<std::size_t> header_dim;
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  std::size_t loaded = 0;
  bool first_content_line = true;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split_fields(line);
    if (fields.empty()) continue;

    if (first_content_line) {
      first_content_line = false;
      std::size_t count = 0;
      std::size_t dim = 0;
      if (fields.size() == 2 && parse_size(fields[0], count) && parse_size(fields[1], dim)) {
        if (dim == 0) throw ParseError(where, line_no, "header declares zero dimensions");
        header_dim = dim;
        continue;
      }
    }

    if (fields.size() < 2) {
      throw ParseError(where, line_no, "expected a token followed by vector components");
    }
    const std::size_t dim = fields.size() - 1;
    const std::size_t expected = store.dim_ != 0 ? store.dim_ : header_dim.value_or(dim);
    if (dim != expected) {
      throw FormatError(where, line_no,
                        "vector has " + std::to_string(dim) + " components, expected " +
                            std::to_string(expected));
    }
    values.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      if (!parse_double(fields[i + 1], values[i])) {
        throw ParseError(where, line_no,
                         "non-numeric component '" + std::string(fields[i + 1]) + "'");
      }
    }
    store.dim_ = dim;
    store.insert(std::string(fields[0]), values);
    if (max_tokens && ++loaded >= *max_tokens) break;
  }

  if (store.skipped_zero_norm_ > 0) {
    std::cerr << "warning: " << where << ": skipped " << store.skipped_zero_norm_
              << " zero-norm vector(s)\n";
  }
  return store;
}

double cosine_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ContractViolation("cosine_distance: dimension mismatch");
  double dot = 0.0;
  double nu = 0.0;
  double nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (!(nu > 0.0) || !(nv > 0.0)) throw ContractViolation("cosine_distance: zero vector");
  return std::clamp(1.0 - dot / (std::sqrt(nu) * std::sqrt(nv)), 0.0, 2.0);
}

}  // namespace iqs
