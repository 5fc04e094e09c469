#pragma once

#include "autoftp/common.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace autoftp {

// Plain-text tensor dump:
//
//   autoftp-tensors 1
//   <count>
//   <name> <rows> <cols>
//   <row-major values, one row per line, shortest round-trip decimal>
//   ...
//
// Values are written with std::to_chars, so reading a file back yields the
// exact same bits.
using NamedTensor = std::pair<std::string, Matrix>;

inline void write_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + path.string());
  out << "autoftp-tensors 1\n" << tensors.size() << '\n';
  for (const auto& [name, m] : tensors) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (j) out << ' ';
        out << format_double(m(i, j));
      }
      out << '\n';
    }
  }
}

inline std::vector<NamedTensor> read_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingArtifact, "cannot open " + path.string());
  std::string magic;
  int version = 0;
  std::size_t count = 0;
  if (!(in >> magic >> version >> count) || magic != "autoftp-tensors" || version != 1) {
    throw Error(ErrorKind::ParseError, path.string() + ": not a tensor dump");
  }
  std::vector<NamedTensor> tensors;
  for (std::size_t k = 0; k < count; ++k) {
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    if (!(in >> name >> rows >> cols) || rows < 0 || cols < 0) {
      throw Error(ErrorKind::ParseError, path.string() + ": bad tensor header");
    }
    Matrix m(rows, cols);
    std::string tok;
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        double v = 0.0;
        if (!(in >> tok) || !parse_double(tok, v)) {
          throw Error(ErrorKind::ParseError, path.string() + ": bad value in " + name);
        }
        m(i, j) = v;
      }
    }
    tensors.emplace_back(std::move(name), std::move(m));
  }
  return tensors;
}

inline const Matrix& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& [n, m] : tensors)
    if (n == name) return m;
  throw Error(ErrorKind::MissingArtifact, "tensor '" + name + "' not in checkpoint");
}

}  // namespace autoftp
