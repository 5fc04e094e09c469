#pragma once

#include "autoftp/common.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace autoftp {

// Word vectors keyed by vocabulary entry. Rows of `vectors` follow `words`.
//
// File format (embeddings.vec): first line "V d", then one line per word
// "word f1 ... fd", whitespace separated.
class EmbeddingProvider {
 public:
  EmbeddingProvider() = default;

  EmbeddingProvider(std::vector<std::string> words, Matrix vectors)
      : words_(std::move(words)), vectors_(std::move(vectors)) {
    require_shape(static_cast<Eigen::Index>(words_.size()) == vectors_.rows(),
                  "embedding rows must match vocabulary size");
    if (!vectors_.allFinite()) throw Error(ErrorKind::ParseError, "non-finite embedding value");
    index_.reserve(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) {
      if (!index_.emplace(words_[i], i).second) {
        throw Error(ErrorKind::ParseError, "duplicate embedding word '" + words_[i] + "'");
      }
    }
  }

  std::size_t size() const { return words_.size(); }
  Eigen::Index dim() const { return vectors_.cols(); }
  bool empty() const { return words_.empty(); }

  bool contains(const std::string& w) const { return index_.count(w) != 0; }

  // Row index of `w`, or -1 when out of vocabulary.
  std::ptrdiff_t find(const std::string& w) const {
    auto it = index_.find(w);
    return it == index_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
  }

  Vector vector(const std::string& w) const {
    const auto i = find(w);
    if (i < 0) throw Error(ErrorKind::DanglingReference, "word '" + w + "' not in vocabulary");
    return vectors_.row(i).transpose();
  }

  const std::vector<std::string>& words() const { return words_; }
  const Matrix& vectors() const { return vectors_; }

 private:
  std::vector<std::string> words_;
  Matrix vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline void write_embeddings(const std::filesystem::path& path, const EmbeddingProvider& provider) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + path.string());
  out << provider.size() << ' ' << provider.dim() << '\n';
  for (std::size_t i = 0; i < provider.size(); ++i) {
    out << provider.words()[i];
    for (Eigen::Index j = 0; j < provider.dim(); ++j) {
      out << ' ' << format_double(provider.vectors()(static_cast<Eigen::Index>(i), j));
    }
    out << '\n';
  }
}

inline EmbeddingProvider read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "empty embeddings file", 1);
  std::int64_t vocab = 0, dim = 0;
  {
    std::istringstream header(line);
    std::string a, b;
    if (!(header >> a >> b) || !parse_int(a, vocab) || !parse_int(b, dim) || vocab < 0 || dim <= 0) {
      throw Error(ErrorKind::ParseError, "bad embeddings header '" + line + "'", 1);
    }
  }

  std::vector<std::string> words;
  words.reserve(static_cast<std::size_t>(vocab));
  Matrix vectors(vocab, dim);
  std::int64_t line_no = 1;
  for (std::int64_t row = 0; row < vocab; ++row) {
    ++line_no;
    if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "truncated embeddings file", line_no);
    std::istringstream fields(line);
    std::string word, tok;
    if (!(fields >> word)) throw Error(ErrorKind::ParseError, "missing word", line_no);
    for (std::int64_t j = 0; j < dim; ++j) {
      double v = 0.0;
      if (!(fields >> tok) || !parse_double(tok, v)) {
        throw Error(ErrorKind::ParseError, "bad vector component", line_no);
      }
      vectors(row, j) = v;
    }
    if (fields >> tok) throw Error(ErrorKind::ParseError, "too many vector components", line_no);
    words.push_back(std::move(word));
  }
  return EmbeddingProvider(std::move(words), std::move(vectors));
}

}  // namespace autoftp
