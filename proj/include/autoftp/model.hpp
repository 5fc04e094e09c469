#pragma once

#include "autoftp/alignment.hpp"
#include "autoftp/checkpoint.hpp"
#include "autoftp/common.hpp"
#include "autoftp/graph_encoder.hpp"
#include "autoftp/spatial_graphs.hpp"

#include <optional>
#include <string>
#include <vector>

namespace autoftp {

/* ===========================================================================
 * Regression head: c* = v2 . relu(V1^T r + b1) + b2
 * ========================================================================= */

struct RegressionHead {
  Matrix v1;  // K x H_r
  Vector b1;  // H_r
  Vector v2;  // H_r
  double b2 = 0.0;

  static RegressionHead zeros_like(const RegressionHead& h) {
    return {Matrix::Zero(h.v1.rows(), h.v1.cols()), Vector::Zero(h.b1.size()), Vector::Zero(h.v2.size()), 0.0};
  }

  RegressionHead& operator+=(const RegressionHead& o) {
    v1 += o.v1;
    b1 += o.b1;
    v2 += o.v2;
    b2 += o.b2;
    return *this;
  }

  bool finite() const { return v1.allFinite() && b1.allFinite() && v2.allFinite() && std::isfinite(b2); }
};

inline RegressionHead init_head(Eigen::Index embed_dim, Eigen::Index hidden, std::uint64_t seed) {
  Engine rng = make_stream(seed, 0x48454144);
  RegressionHead h;
  h.v1 = glorot_uniform(embed_dim, hidden, rng);
  h.b1 = Vector::Zero(hidden);
  h.v2 = glorot_uniform(hidden, 1, rng).col(0);
  h.b2 = 0.0;
  return h;
}

// One prediction per row of `emb`.
inline Vector head_predict(const RegressionHead& head, const Matrix& emb) {
  require_shape(emb.cols() == head.v1.rows(), "embedding width vs head input");
  const Matrix hidden = ((emb * head.v1).rowwise() + head.b1.transpose()).cwiseMax(0.0);
  return (hidden * head.v2).array() + head.b2;
}

struct RegressionResult {
  double loss = 0.0;
  Vector pred;
  Matrix d_emb;         // dL/dR
  RegressionHead d_head;
};

// L_Reg = mean((c - c*)^2) on whatever scale `target` is given in.
inline RegressionResult regression_loss(const Matrix& emb, const RegressionHead& head, const Vector& target) {
  require_shape(emb.rows() == target.size(), "one target per embedding row");
  require_shape(emb.cols() == head.v1.rows(), "embedding width vs head input");
  const auto N = static_cast<double>(emb.rows());
  const Matrix pre = (emb * head.v1).rowwise() + head.b1.transpose();
  const Matrix hidden = pre.cwiseMax(0.0);
  RegressionResult out;
  out.pred = (hidden * head.v2).array() + head.b2;
  const Vector err = out.pred - target;
  out.loss = err.squaredNorm() / N;
  if (!std::isfinite(out.loss)) throw Error(ErrorKind::NonFiniteLoss, "regression loss is not finite");

  const Vector d_pred = (2.0 / N) * err;
  const Matrix d_pre = (pre.array() > 0.0).select(d_pred * head.v2.transpose(), 0.0);
  out.d_head.v1 = emb.transpose() * d_pre;
  out.d_head.b1 = d_pre.colwise().sum().transpose();
  out.d_head.v2 = hidden.transpose() * d_pred;
  out.d_head.b2 = d_pred.sum();
  out.d_emb = d_pre * head.v1.transpose();
  return out;
}

inline void save_head(const std::filesystem::path& path, const RegressionHead& h) {
  Matrix b2(1, 1);
  b2(0, 0) = h.b2;
  write_tensors(path, {{"v1", h.v1}, {"b1", h.b1}, {"v2", h.v2}, {"b2", b2}});
}

inline RegressionHead load_head(const std::filesystem::path& path) {
  auto t = read_tensors(path);
  RegressionHead h;
  h.v1 = find_tensor(t, "v1");
  h.b1 = find_tensor(t, "b1").col(0);
  h.v2 = find_tensor(t, "v2").col(0);
  h.b2 = find_tensor(t, "b2")(0, 0);
  require_shape(h.b1.size() == h.v1.cols() && h.v2.size() == h.v1.cols(), "head checkpoint shapes");
  return h;
}

/* ===========================================================================
 * Metrics
 * ========================================================================= */

struct Metrics {
  double rmse = 0.0;
  double mae = 0.0;
  double mape = 0.0;  // percent
  double msle = 0.0;
};

inline Metrics compute_metrics(const Vector& pred, const Vector& truth) {
  require_shape(pred.size() == truth.size() && truth.size() > 0, "pred and truth sizes");
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    if (!(truth[i] > 0.0)) throw Error(ErrorKind::InvalidTruth, "truth values must be positive", i);
  }
  const Vector err = pred - truth;
  Metrics m;
  m.rmse = std::sqrt(err.squaredNorm() / static_cast<double>(err.size()));
  m.mae = err.cwiseAbs().mean();
  m.mape = 100.0 * (err.cwiseAbs().array() / truth.array()).mean();
  const Vector clipped = pred.cwiseMax(-1.0 + 1e-9);
  m.msle = ((truth.array() + 1.0).log() - (clipped.array() + 1.0).log()).square().mean();
  return m;
}

inline nlohmann::json to_json(const Metrics& m) {
  return {{"rmse", m.rmse}, {"mae", m.mae}, {"mape", m.mape}, {"msle", m.msle}};
}

/* ===========================================================================
 * Composite loss over a batch of entities
 * ========================================================================= */

// Everything the closed loop needs per entity, precomputed once.
struct PreparedData {
  int num_categories = 0;
  std::vector<std::int64_t> entity_ids;
  std::vector<Matrix> a_hat_d, a_hat_m;    // normalized propagation matrices
  std::vector<Matrix> target_d, target_m;  // [0, 1] reconstruction targets
  std::vector<std::vector<bool>> present;
  Matrix topic_matrix;                     // N x T
  Vector prices;                           // original scale
  Vector prices_std;                       // standardized with training statistics
  double price_mean = 0.0;
  double price_std = 1.0;

  std::size_t size() const { return entity_ids.size(); }
};

inline PreparedData prepare_data(const std::vector<EntityGraphs>& graphs, const Matrix& topic_matrix,
                                 const Vector& prices) {
  require_shape(static_cast<Eigen::Index>(graphs.size()) == topic_matrix.rows() &&
                    topic_matrix.rows() == prices.size(),
                "graphs, topic rows and prices must align");
  PreparedData d;
  d.num_categories = graphs.empty() ? 0 : static_cast<int>(graphs.front().distance.rows());
  for (const auto& g : graphs) {
    d.entity_ids.push_back(g.entity_id);
    d.target_d.push_back(g.distance);
    d.target_m.push_back(g.mobility);
    d.a_hat_d.push_back(normalize_adjacency(g.distance));
    d.a_hat_m.push_back(normalize_adjacency(g.mobility));
    d.present.push_back(g.present);
  }
  d.topic_matrix = topic_matrix;
  d.prices = prices;
  d.prices_std = prices;
  return d;
}

// Zero mean, unit (population) variance over `train`.
inline void standardize_prices(PreparedData& d, const std::vector<std::size_t>& train) {
  double mean = 0.0;
  for (auto i : train) mean += d.prices[static_cast<Eigen::Index>(i)];
  mean /= static_cast<double>(train.size());
  double var = 0.0;
  for (auto i : train) {
    const double e = d.prices[static_cast<Eigen::Index>(i)] - mean;
    var += e * e;
  }
  var /= static_cast<double>(train.size());
  d.price_mean = mean;
  d.price_std = var > 0.0 ? std::sqrt(var) : 1.0;
  d.prices_std = (d.prices.array() - d.price_mean) / d.price_std;
}

struct Model {
  EncoderParams encoder;
  RegressionHead head;

  static Model zeros_like(const Model& m) {
    return {EncoderParams::zeros_like(m.encoder), RegressionHead::zeros_like(m.head)};
  }
  bool finite() const { return encoder.finite() && head.finite(); }
};

inline Model init_model(Eigen::Index categories, Eigen::Index hidden, Eigen::Index embed_dim,
                        Eigen::Index head_hidden, std::uint64_t seed) {
  return {init_encoder(categories, hidden, embed_dim, seed), init_head(embed_dim, head_hidden, seed)};
}

// Which of the four losses take part, and their weights.
struct LossSpec {
  bool rec = true;
  bool point = true;
  bool pair = true;
  bool reg = true;
  double w_rec = 1.0;
  double w_point = 1.0;
  double w_pair = 1.0;
  double w_reg = 1.0;
};

struct LossBreakdown {
  double rec = 0.0;    // L_R
  double point = 0.0;  // L_P
  double pair = 0.0;   // L_C
  double reg = 0.0;    // L_Reg
  double total = 0.0;  // weighted sum of the included parts
};

// Embeddings of `batch` (rows in batch order).
inline Matrix embed(const EncoderParams& enc, const PreparedData& data, const std::vector<std::size_t>& batch) {
  Matrix r(static_cast<Eigen::Index>(batch.size()), enc.embed_dim());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto n = batch[b];
    r.row(static_cast<Eigen::Index>(b)) =
        pool_and_aggregate(encode(enc, data.a_hat_d[n]), encode(enc, data.a_hat_m[n]), data.present[n]).transpose();
  }
  return r;
}

// L_R + L_P + L_C + L_Reg (each gated by `spec`) over `batch`, and the exact
// gradient of the weighted total when `grad` is non-null. L_P and L_C need a
// mask; without one they are skipped regardless of `spec`.
//   L_R   mean over entities and both graphs of the per-graph MSE
//   L_P   -sum_n pearson(t_check_n, r_n)
//   L_C   ||S - S'||_F on the batch
//   L_Reg mean squared error on standardized prices
inline LossBreakdown composite_loss(const Model& model, const PreparedData& data,
                                    const std::vector<std::size_t>& batch, const TopicMask* mask,
                                    const LossSpec& spec, Model* grad = nullptr) {
  const auto B = static_cast<Eigen::Index>(batch.size());
  require_shape(B >= 2, "a batch needs at least 2 entities");
  const bool use_point = spec.point && mask != nullptr;
  const bool use_pair = spec.pair && mask != nullptr;

  std::vector<EncoderCache> cache_d(batch.size()), cache_m(batch.size());
  Matrix r(B, model.encoder.embed_dim());
  LossBreakdown out;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto n = batch[b];
    cache_d[b] = encode_forward(model.encoder, data.a_hat_d[n]);
    cache_m[b] = encode_forward(model.encoder, data.a_hat_m[n]);
    r.row(static_cast<Eigen::Index>(b)) = pool_and_aggregate(cache_d[b].z, cache_m[b].z, data.present[n]).transpose();
    if (spec.rec) {
      out.rec += reconstruction_loss(cache_d[b].z, data.target_d[n]) +
                 reconstruction_loss(cache_m[b].z, data.target_m[n]);
    }
  }
  out.rec /= 2.0 * static_cast<double>(B);

  Matrix d_r = Matrix::Zero(B, r.cols());

  if (use_point || use_pair) {
    Matrix topics(B, data.topic_matrix.cols());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      topics.row(static_cast<Eigen::Index>(b)) = data.topic_matrix.row(static_cast<Eigen::Index>(batch[b]));
    }
    require_shape(mask->popcount() == r.cols(), "mask popcount must equal embedding width K");
    if (use_point) {
      auto pw = pointwise_loss(select_topic_columns(topics, *mask), r);
      out.point = pw.loss;
      if (grad) d_r += spec.w_point * pw.grad;
    }
    if (use_pair) {
      auto pc = pairwise_loss(topic_similarity(topics, *mask), feature_similarity(r));
      out.pair = pc.loss;
      if (grad) d_r += spec.w_pair * pearson_similarity_backward(r, pc.grad);
    }
  }

  if (spec.reg) {
    Vector y(B);
    for (std::size_t b = 0; b < batch.size(); ++b) y[static_cast<Eigen::Index>(b)] = data.prices_std[static_cast<Eigen::Index>(batch[b])];
    auto rg = regression_loss(r, model.head, y);
    out.reg = rg.loss;
    if (grad) {
      d_r += spec.w_reg * rg.d_emb;
      grad->head = rg.d_head;
      grad->head.v1 *= spec.w_reg;
      grad->head.b1 *= spec.w_reg;
      grad->head.v2 *= spec.w_reg;
      grad->head.b2 *= spec.w_reg;
    }
  }

  if (spec.rec) out.total += spec.w_rec * out.rec;
  if (use_point) out.total += spec.w_point * out.point;
  if (use_pair) out.total += spec.w_pair * out.pair;
  if (spec.reg) out.total += spec.w_reg * out.reg;

  if (!std::isfinite(out.total)) throw Error(ErrorKind::NonFiniteLoss, "composite loss is not finite");

  if (grad) {
    grad->encoder = EncoderParams::zeros_like(model.encoder);
    if (!spec.reg) grad->head = RegressionHead::zeros_like(model.head);
    const double rec_scale = spec.w_rec / (2.0 * static_cast<double>(B));
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto n = batch[b];
      const Matrix dz_pool = pool_backward(d_r.row(static_cast<Eigen::Index>(b)).transpose(), data.present[n]);
      Matrix dz_d = dz_pool, dz_m = dz_pool;
      if (spec.rec) {
        dz_d += rec_scale * reconstruction_grad(cache_d[b].z, data.target_d[n]);
        dz_m += rec_scale * reconstruction_grad(cache_m[b].z, data.target_m[n]);
      }
      encoder_backward(model.encoder, data.a_hat_d[n], cache_d[b], dz_d, grad->encoder);
      encoder_backward(model.encoder, data.a_hat_m[n], cache_m[b], dz_m, grad->encoder);
    }
    if (!grad->finite()) throw Error(ErrorKind::NonFiniteGradient, "composite gradient is not finite");
  }
  return out;
}

inline void apply_gradient(Model& model, const Model& grad, double lr) {
  model.encoder.w1 -= lr * grad.encoder.w1;
  model.encoder.w2 -= lr * grad.encoder.w2;
  model.head.v1 -= lr * grad.head.v1;
  model.head.b1 -= lr * grad.head.b1;
  model.head.v2 -= lr * grad.head.v2;
  model.head.b2 -= lr * grad.head.b2;
}

// Full-batch gradient descent; returns the loss seen at the start of every
// epoch.
inline std::vector<LossBreakdown> train_epochs(Model& model, const PreparedData& data,
                                               const std::vector<std::size_t>& batch, const TopicMask* mask,
                                               const LossSpec& spec, double lr, int epochs) {
  std::vector<LossBreakdown> curve;
  curve.reserve(static_cast<std::size_t>(std::max(0, epochs)));
  Model grad = Model::zeros_like(model);
  for (int e = 0; e < epochs; ++e) {
    curve.push_back(composite_loss(model, data, batch, mask, spec, &grad));
    apply_gradient(model, grad, lr);
  }
  return curve;
}

// Downstream regressor on frozen embeddings (head parameters only).
inline void fit_head(RegressionHead& head, const Matrix& emb, const Vector& target, double lr, int epochs) {
  for (int e = 0; e < epochs; ++e) {
    auto rg = regression_loss(emb, head, target);
    head.v1 -= lr * rg.d_head.v1;
    head.b1 -= lr * rg.d_head.b1;
    head.v2 -= lr * rg.d_head.v2;
    head.b2 -= lr * rg.d_head.b2;
    if (!head.finite()) throw Error(ErrorKind::NonFiniteGradient, "head parameters diverged");
  }
}

}  // namespace autoftp
