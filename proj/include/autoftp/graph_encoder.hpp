#pragma once

#include "autoftp/checkpoint.hpp"
#include "autoftp/common.hpp"

#include <algorithm>
#include <filesystem>
#include <vector>

namespace autoftp {

// Two-layer GCN encoder shared by every entity and both graph kinds:
//   Z = A_hat * relu(A_hat * X * W1) * W2,  X = I_C by default.
struct EncoderParams {
  Matrix w1;  // C x H
  Matrix w2;  // H x K

  Eigen::Index num_categories() const { return w1.rows(); }
  Eigen::Index hidden() const { return w1.cols(); }
  Eigen::Index embed_dim() const { return w2.cols(); }

  static EncoderParams zeros_like(const EncoderParams& p) {
    return {Matrix::Zero(p.w1.rows(), p.w1.cols()), Matrix::Zero(p.w2.rows(), p.w2.cols())};
  }

  EncoderParams& operator+=(const EncoderParams& o) {
    w1 += o.w1;
    w2 += o.w2;
    return *this;
  }

  bool finite() const { return w1.allFinite() && w2.allFinite(); }
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
inline Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Engine& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = uniform(rng, -limit, limit);
  return m;
}

inline EncoderParams init_encoder(Eigen::Index categories, Eigen::Index hidden, Eigen::Index embed_dim,
                                  std::uint64_t seed) {
  Engine rng = make_stream(seed, 0x454e43);
  EncoderParams p;
  p.w1 = glorot_uniform(categories, hidden, rng);
  p.w2 = glorot_uniform(hidden, embed_dim, rng);
  return p;
}

// Intermediate activations kept for the backward pass.
struct EncoderCache {
  Matrix pre;     // A_hat X W1
  Matrix hidden;  // relu(pre)
  Matrix mixed;   // A_hat hidden
  Matrix z;       // mixed W2
};

inline EncoderCache encode_forward(const EncoderParams& params, const Matrix& a_hat, const Matrix& x) {
  require_shape(a_hat.rows() == a_hat.cols(), "A_hat must be square");
  require_shape(x.rows() == a_hat.rows() && x.cols() == params.w1.rows(), "node features vs A_hat/W1");
  require_shape(params.w1.cols() == params.w2.rows(), "W1 columns vs W2 rows");
  EncoderCache c;
  c.pre = a_hat * (x * params.w1);
  c.hidden = c.pre.cwiseMax(0.0);
  c.mixed = a_hat * c.hidden;
  c.z = c.mixed * params.w2;
  return c;
}

inline EncoderCache encode_forward(const EncoderParams& params, const Matrix& a_hat) {
  require_shape(a_hat.rows() == params.w1.rows(), "A_hat size vs W1 rows");
  return encode_forward(params, a_hat, Matrix::Identity(a_hat.rows(), a_hat.rows()));
}

inline Matrix encode(const EncoderParams& params, const Matrix& a_hat, const Matrix& x) {
  return encode_forward(params, a_hat, x).z;
}

inline Matrix encode(const EncoderParams& params, const Matrix& a_hat) {
  return encode_forward(params, a_hat).z;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Mean squared error between sigmoid(Z Z^T) and the target over all C^2 entries.
inline double reconstruction_loss(const Matrix& z, const Matrix& target) {
  require_shape(target.rows() == z.rows() && target.cols() == z.rows(), "target must be C x C");
  const Matrix rec = (z * z.transpose()).unaryExpr([](double v) { return sigmoid(v); });
  return (rec - target).squaredNorm() / static_cast<double>(target.size());
}

// d(reconstruction_loss)/dZ.
inline Matrix reconstruction_grad(const Matrix& z, const Matrix& target) {
  require_shape(target.rows() == z.rows() && target.cols() == z.rows(), "target must be C x C");
  const Matrix rec = (z * z.transpose()).unaryExpr([](double v) { return sigmoid(v); });
  const Matrix g = (2.0 / static_cast<double>(target.size())) *
                   ((rec - target).array() * rec.array() * (1.0 - rec.array())).matrix();
  return (g + g.transpose()) * z;
}

// Mean of Z rows over present categories.
inline Vector pool_present(const Matrix& z, const std::vector<bool>& present) {
  require_shape(static_cast<Eigen::Index>(present.size()) == z.rows(), "present mask vs Z rows");
  Vector acc = Vector::Zero(z.cols());
  double count = 0.0;
  for (Eigen::Index c = 0; c < z.rows(); ++c) {
    if (!present[static_cast<std::size_t>(c)]) continue;
    acc += z.row(c).transpose();
    count += 1.0;
  }
  if (count == 0.0) throw Error(ErrorKind::NoPresentCategories, "entity has no present category");
  return acc / count;
}

// r = (pool(Z_d) + pool(Z_m)) / 2.
inline Vector pool_and_aggregate(const Matrix& z_d, const Matrix& z_m, const std::vector<bool>& present) {
  require_shape(z_d.rows() == z_m.rows() && z_d.cols() == z_m.cols(), "Z_d and Z_m shapes differ");
  return 0.5 * (pool_present(z_d, present) + pool_present(z_m, present));
}

// dL/dZ_d (== dL/dZ_m) given dL/dr.
inline Matrix pool_backward(const Vector& dr, const std::vector<bool>& present) {
  const auto C = static_cast<Eigen::Index>(present.size());
  const double count = static_cast<double>(std::count(present.begin(), present.end(), true));
  if (count == 0.0) throw Error(ErrorKind::NoPresentCategories, "entity has no present category");
  Matrix dz = Matrix::Zero(C, dr.size());
  for (Eigen::Index c = 0; c < C; ++c) {
    if (present[static_cast<std::size_t>(c)]) dz.row(c) = (0.5 / count) * dr.transpose();
  }
  return dz;
}

// Accumulates dL/dW1, dL/dW2 for one graph given dL/dZ. X = I.
inline void encoder_backward(const EncoderParams& params, const Matrix& a_hat, const EncoderCache& cache,
                             const Matrix& dz, EncoderParams& grad) {
  require_shape(dz.rows() == cache.z.rows() && dz.cols() == cache.z.cols(), "dZ shape");
  grad.w2.noalias() += cache.mixed.transpose() * dz;
  const Matrix d_mixed = dz * params.w2.transpose();
  const Matrix d_hidden = a_hat.transpose() * d_mixed;
  const Matrix d_pre = (cache.pre.array() > 0.0).select(d_hidden, 0.0);
  grad.w1.noalias() += a_hat.transpose() * d_pre;
}

inline void save_encoder(const std::filesystem::path& path, const EncoderParams& p) {
  write_tensors(path, {{"w1", p.w1}, {"w2", p.w2}});
}

inline EncoderParams load_encoder(const std::filesystem::path& path) {
  auto t = read_tensors(path);
  EncoderParams p{find_tensor(t, "w1"), find_tensor(t, "w2")};
  require_shape(p.w1.cols() == p.w2.rows(), "checkpoint W1/W2 shapes");
  return p;
}

}  // namespace autoftp
