#pragma once

#include "autoftp/common.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace autoftp {

// Standard-deviation products below this are treated as zero.
inline constexpr double kStdGuard = 1e-12;

/* ===========================================================================
 * Topic masks
 * ========================================================================= */

// K-of-T binary selector. The k-th set bit (ascending topic index) is paired
// with embedding dimension k.
class TopicMask {
 public:
  TopicMask() = default;

  explicit TopicMask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (std::size_t t = 0; t < bits_.size(); ++t) {
      if (bits_[t] > 1) throw Error(ErrorKind::InvalidConfig, "mask bits must be 0 or 1");
      if (bits_[t]) selected_.push_back(static_cast<int>(t));
    }
  }

  static TopicMask from_indices(int num_topics, const std::vector<int>& indices) {
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(num_topics), 0);
    for (int i : indices) {
      if (i < 0 || i >= num_topics) throw Error(ErrorKind::InvalidConfig, "mask index out of range");
      bits[static_cast<std::size_t>(i)] = 1;
    }
    return TopicMask(std::move(bits));
  }

  // "0101" -> topics {1, 3}.
  static TopicMask parse(const std::string& s) {
    std::vector<std::uint8_t> bits;
    for (char c : s) {
      if (c != '0' && c != '1') throw Error(ErrorKind::ParseError, "mask string must be 0/1: " + s);
      bits.push_back(static_cast<std::uint8_t>(c - '0'));
    }
    return TopicMask(std::move(bits));
  }

  int num_topics() const { return static_cast<int>(bits_.size()); }
  int popcount() const { return static_cast<int>(selected_.size()); }
  const std::vector<int>& selected() const { return selected_; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }
  bool test(int t) const { return bits_[static_cast<std::size_t>(t)] != 0; }

  std::string str() const {
    std::string s;
    for (auto b : bits_) s.push_back(b ? '1' : '0');
    return s;
  }

  bool operator==(const TopicMask& o) const { return bits_ == o.bits_; }
  bool operator<(const TopicMask& o) const { return bits_ < o.bits_; }

 private:
  std::vector<std::uint8_t> bits_;
  std::vector<int> selected_;
};

inline Vector select_topics(const Vector& t, const TopicMask& mask) {
  require_shape(t.size() == mask.num_topics(), "topic vector length vs mask");
  Vector out(mask.popcount());
  for (int k = 0; k < mask.popcount(); ++k) out[k] = t[mask.selected()[static_cast<std::size_t>(k)]];
  return out;
}

inline Matrix select_topic_columns(const Matrix& topic_matrix, const TopicMask& mask) {
  require_shape(topic_matrix.cols() == mask.num_topics(), "topic matrix columns vs mask");
  Matrix out(topic_matrix.rows(), mask.popcount());
  for (int k = 0; k < mask.popcount(); ++k) out.col(k) = topic_matrix.col(mask.selected()[static_cast<std::size_t>(k)]);
  return out;
}

/* ===========================================================================
 * Point-wise alignment
 * ========================================================================= */

struct PointwiseResult {
  double loss = 0.0;
  Vector correlations;  // per entity; 0 where guarded
  Matrix grad;          // dLoss/dR
};

// L_P = -sum_n pearson(t_n, r_n), taken across the K paired coordinates.
inline PointwiseResult pointwise_loss(const Matrix& topics, const Matrix& emb) {
  require_shape(topics.rows() == emb.rows() && topics.cols() == emb.cols(), "T_check and R shapes differ");
  const Eigen::Index N = emb.rows(), K = emb.cols();
  PointwiseResult out;
  out.correlations = Vector::Zero(N);
  out.grad = Matrix::Zero(N, K);
  for (Eigen::Index n = 0; n < N; ++n) {
    const Vector a = topics.row(n).transpose().array() - topics.row(n).mean();
    const Vector b = emb.row(n).transpose().array() - emb.row(n).mean();
    const double na = a.norm(), nb = b.norm();
    // population std product = |a||b| / K
    if (na * nb / static_cast<double>(K) < kStdGuard) continue;
    const double rho = a.dot(b) / (na * nb);
    out.correlations[n] = rho;
    out.loss -= rho;
    out.grad.row(n) = -(a / (na * nb) - rho * b / (nb * nb)).transpose();
  }
  return out;
}

/* ===========================================================================
 * Pair-wise alignment
 * ========================================================================= */

// Pearson similarity between the columns of `m` (rows are entities). Entries
// whose std product is below the guard are 0; the diagonal is 1.
inline Matrix pearson_similarity(const Matrix& m) {
  require_shape(m.rows() >= 2, "similarity needs at least 2 entities");
  const Eigen::Index N = m.rows(), K = m.cols();
  const Matrix c = m.rowwise() - m.colwise().mean();
  const Vector norms = c.colwise().norm().transpose();
  Matrix s = Matrix::Identity(K, K);
  for (Eigen::Index i = 0; i < K; ++i) {
    for (Eigen::Index j = i + 1; j < K; ++j) {
      if (norms[i] * norms[j] / static_cast<double>(N) < kStdGuard) continue;
      s(i, j) = s(j, i) = c.col(i).dot(c.col(j)) / (norms[i] * norms[j]);
    }
  }
  return s;
}

// Chain rule through pearson_similarity: given dL/dS (K x K, every entry
// treated independently), returns dL/dM.
inline Matrix pearson_similarity_backward(const Matrix& m, const Matrix& d_sim) {
  require_shape(d_sim.rows() == m.cols() && d_sim.cols() == m.cols(), "dS shape");
  const Eigen::Index N = m.rows(), K = m.cols();
  const Matrix c = m.rowwise() - m.colwise().mean();
  const Vector norms = c.colwise().norm().transpose();
  Matrix grad = Matrix::Zero(N, K);
  for (Eigen::Index i = 0; i < K; ++i) {
    for (Eigen::Index j = i + 1; j < K; ++j) {
      if (norms[i] * norms[j] / static_cast<double>(N) < kStdGuard) continue;
      const double sij = c.col(i).dot(c.col(j)) / (norms[i] * norms[j]);
      const double g = d_sim(i, j) + d_sim(j, i);
      if (g == 0.0) continue;
      grad.col(i) += g * (c.col(j) / (norms[i] * norms[j]) - sij * c.col(i) / (norms[i] * norms[i]));
      grad.col(j) += g * (c.col(i) / (norms[i] * norms[j]) - sij * c.col(j) / (norms[j] * norms[j]));
    }
  }
  return grad;
}

// S' over embedding dimensions.
inline Matrix feature_similarity(const Matrix& emb) { return pearson_similarity(emb); }

// S over the selected topic-density columns.
inline Matrix topic_similarity(const Matrix& topic_matrix, const TopicMask& mask) {
  return pearson_similarity(select_topic_columns(topic_matrix, mask));
}

struct PairwiseResult {
  double loss = 0.0;
  Matrix grad;  // dLoss/dS'
};

// L_C = ||S - S'||_F (not squared).
inline PairwiseResult pairwise_loss(const Matrix& s, const Matrix& s_prime) {
  require_shape(s.rows() == s_prime.rows() && s.cols() == s_prime.cols(), "S and S' shapes differ");
  PairwiseResult out;
  out.loss = (s - s_prime).norm();
  out.grad = (s_prime - s) / std::max(out.loss, kStdGuard);
  return out;
}

struct AlignmentReport {
  double pointwise = 0.0;  // L_P
  double pairwise = 0.0;   // L_C
  Vector correlations;
  Matrix s;
  Matrix s_prime;
};

inline AlignmentReport alignment_report(const Matrix& topic_matrix, const Matrix& emb, const TopicMask& mask) {
  AlignmentReport r;
  auto pw = pointwise_loss(select_topic_columns(topic_matrix, mask), emb);
  r.pointwise = pw.loss;
  r.correlations = pw.correlations;
  r.s = topic_similarity(topic_matrix, mask);
  r.s_prime = feature_similarity(emb);
  r.pairwise = pairwise_loss(r.s, r.s_prime).loss;
  return r;
}

inline nlohmann::json to_json(const AlignmentReport& r) {
  auto mat = [](const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      std::vector<double> row(m.cols());
      for (Eigen::Index j = 0; j < m.cols(); ++j) row[j] = m(i, j);
      rows.push_back(row);
    }
    return rows;
  };
  nlohmann::json j;
  j["L_P"] = r.pointwise;
  j["L_C"] = r.pairwise;
  j["correlations"] = std::vector<double>(r.correlations.data(), r.correlations.data() + r.correlations.size());
  j["S"] = mat(r.s);
  j["S_prime"] = mat(r.s_prime);
  return j;
}

}  // namespace autoftp
