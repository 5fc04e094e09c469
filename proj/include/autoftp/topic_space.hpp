#pragma once

#include "autoftp/common.hpp"
#include "autoftp/corpus.hpp"
#include "autoftp/embeddings.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace autoftp {

/* ===========================================================================
 * Keywords
 * ========================================================================= */

struct Keyword {
  std::string word;
  double score = 0.0;
};

struct KeywordSet {
  std::int64_t entity_id = -1;
  std::vector<Keyword> keywords;  // descending score, ties lexicographic
};

// Lowercases ASCII and splits on whitespace and ASCII punctuation. Bytes >= 0x80
// are kept as word characters so UTF-8 words survive intact.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char ch : text) {
    if (ch >= 0x80 || std::isalnum(ch) || ch == '_') {
      cur.push_back(static_cast<char>(ch < 0x80 ? std::tolower(ch) : ch));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

struct TextRankOptions {
  int window = 4;
  int top_m = 30;
  double damping = 0.85;
  double tol = 1e-6;
  int max_iter = 100;
};

// Co-occurrence graph over the in-vocabulary tokens: two distinct words are
// linked (weight += 1) every time they appear fewer than `window` positions
// apart. Scores come from damped power iteration; dangling nodes spread their
// mass uniformly so the scores always sum to 1.
inline KeywordSet extract_keywords(std::string_view text, const TextRankOptions& opt,
                                   const EmbeddingProvider& provider) {
  if (opt.window < 2) throw Error(ErrorKind::InvalidConfig, "TextRank window must be >= 2");

  std::vector<std::string> tokens;
  for (auto& tok : tokenize(text)) {
    if (provider.contains(tok)) tokens.push_back(std::move(tok));
  }
  if (tokens.empty()) throw Error(ErrorKind::EmptyDocument, "no in-vocabulary tokens");

  std::map<std::string, std::size_t> node_of;
  for (const auto& t : tokens) node_of.emplace(t, 0);
  std::vector<std::string> nodes;
  nodes.reserve(node_of.size());
  for (auto& [w, id] : node_of) {
    id = nodes.size();
    nodes.push_back(w);
  }
  const std::size_t n = nodes.size();

  Matrix weight = Matrix::Zero(n, n);
  const std::size_t win = static_cast<std::size_t>(opt.window);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto a = node_of[tokens[i]];
    for (std::size_t j = i + 1; j < tokens.size() && j - i < win; ++j) {
      const auto b = node_of[tokens[j]];
      if (a == b) continue;
      weight(a, b) += 1.0;
      weight(b, a) += 1.0;
    }
  }

  const Vector out_weight = weight.rowwise().sum();
  Vector score = Vector::Constant(n, 1.0 / n);
  const double base = (1.0 - opt.damping) / n;
  for (int it = 0; it < opt.max_iter; ++it) {
    double dangling = 0.0;
    Vector flow = Vector::Zero(n);
    for (std::size_t j = 0; j < n; ++j) {
      if (out_weight[j] > 0.0) {
        flow += weight.row(j).transpose() * (score[j] / out_weight[j]);
      } else {
        dangling += score[j];
      }
    }
    Vector next = (base + opt.damping * dangling / n) * Vector::Ones(n) + opt.damping * flow;
    const double delta = (next - score).lpNorm<1>();
    score = std::move(next);
    if (delta < opt.tol) break;
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return nodes[a] < nodes[b];
  });

  KeywordSet out;
  const std::size_t keep = std::min(n, static_cast<std::size_t>(std::max(0, opt.top_m)));
  for (std::size_t i = 0; i < keep; ++i) out.keywords.push_back({nodes[order[i]], score[order[i]]});
  return out;
}

/* ===========================================================================
 * Gaussian mixture with diagonal covariances
 * ========================================================================= */

struct TopicModel {
  Matrix means;       // T x d
  Matrix variances;   // T x d
  Vector weights;     // T
  std::vector<double> loglik_trace;
  double var_floor = 1e-6;

  Eigen::Index num_topics() const { return means.rows(); }
  Eigen::Index dim() const { return means.cols(); }

  // log(pi_t) + log N(x | mu_t, diag(var_t)) for every component.
  Vector log_joint(const Eigen::Ref<const Vector>& x) const {
    Vector out(num_topics());
    for (Eigen::Index t = 0; t < num_topics(); ++t) {
      double acc = 0.0;
      for (Eigen::Index j = 0; j < dim(); ++j) {
        const double v = variances(t, j);
        const double diff = x[j] - means(t, j);
        acc += std::log(2.0 * M_PI * v) + diff * diff / v;
      }
      out[t] = std::log(weights[t]) - 0.5 * acc;
    }
    return out;
  }

  // Posterior over components; sums to 1.
  Vector responsibilities(const Eigen::Ref<const Vector>& x) const {
    Vector lj = log_joint(x);
    const double m = lj.maxCoeff();
    Vector p = (lj.array() - m).exp().matrix();
    return p / p.sum();
  }
};

struct GmmOptions {
  int max_iter = 200;
  double tol = 1e-6;
  double var_floor = 1e-6;
};

namespace detail {

inline double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace detail

// EM on the rows of `points`. Means are seeded k-means++ style (first uniformly,
// then by squared distance), followed by one hard assignment to set initial
// variances and weights.
inline TopicModel fit_gmm(const Matrix& points, int num_topics, std::uint64_t seed,
                          const GmmOptions& opt = {}) {
  const Eigen::Index n = points.rows(), d = points.cols();
  if (num_topics < 2) throw Error(ErrorKind::InvalidConfig, "GMM needs T >= 2");
  if (n < num_topics) {
    throw Error(ErrorKind::TooFewPoints,
                std::to_string(n) + " points for " + std::to_string(num_topics) + " topics");
  }
  const Eigen::Index T = num_topics;
  Engine rng = make_stream(seed, 0x474d4d);

  TopicModel model;
  model.var_floor = opt.var_floor;
  model.means = Matrix(T, d);

  std::vector<Eigen::Index> centers;
  centers.push_back(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n))));
  Vector dist2 = (points.rowwise() - points.row(centers[0])).rowwise().squaredNorm();
  while (static_cast<Eigen::Index>(centers.size()) < T) {
    Eigen::Index pick;
    if (dist2.sum() > 0.0) {
      pick = static_cast<Eigen::Index>(categorical(rng, dist2));
    } else {
      pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n)));
    }
    centers.push_back(pick);
    dist2 = dist2.cwiseMin((points.rowwise() - points.row(pick)).rowwise().squaredNorm());
  }
  for (Eigen::Index t = 0; t < T; ++t) model.means.row(t) = points.row(centers[t]);

  const Vector global_mean = points.colwise().mean().transpose();
  const Vector global_var =
      ((points.rowwise() - global_mean.transpose()).array().square().colwise().sum() / n)
          .matrix()
          .transpose()
          .cwiseMax(opt.var_floor);

  {
    Matrix sum = Matrix::Zero(T, d), sq = Matrix::Zero(T, d);
    Vector count = Vector::Zero(T);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (model.means.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
      count[best] += 1.0;
      sum.row(best) += points.row(i);
    }
    model.weights = Vector(T);
    model.variances = Matrix(T, d);
    for (Eigen::Index t = 0; t < T; ++t) {
      if (count[t] > 0.0) model.means.row(t) = sum.row(t) / count[t];
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (model.means.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
      sq.row(best) += (points.row(i) - model.means.row(best)).array().square().matrix();
    }
    for (Eigen::Index t = 0; t < T; ++t) {
      if (count[t] > 0.0) {
        model.variances.row(t) = (sq.row(t) / count[t]).cwiseMax(opt.var_floor);
      } else {
        model.variances.row(t) = global_var.transpose();
      }
      model.weights[t] = std::max(count[t], 1.0);
    }
    model.weights /= model.weights.sum();
  }

  Matrix resp(n, T);
  for (int it = 0; it < opt.max_iter; ++it) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Vector lj = model.log_joint(points.row(i).transpose());
      const double lse = detail::log_sum_exp(lj);
      ll += lse;
      resp.row(i) = (lj.array() - lse).exp().matrix().transpose();
    }
    const bool stop = !model.loglik_trace.empty() && ll - model.loglik_trace.back() < opt.tol;
    model.loglik_trace.push_back(ll);
    if (stop || it + 1 == opt.max_iter) break;

    const Vector nk = resp.colwise().sum().transpose();
    for (Eigen::Index t = 0; t < T; ++t) {
      if (nk[t] < 1e-12) continue;
      const Vector mu = (resp.col(t).transpose() * points).transpose() / nk[t];
      Vector var = Vector::Zero(d);
      for (Eigen::Index i = 0; i < n; ++i) {
        var += resp(i, t) * (points.row(i).transpose() - mu).array().square().matrix();
      }
      model.means.row(t) = mu.transpose();
      model.variances.row(t) = (var / nk[t]).cwiseMax(opt.var_floor).transpose();
    }
    model.weights = nk / nk.sum();
  }
  return model;
}

/* ===========================================================================
 * Entity topic distributions and labels
 * ========================================================================= */

// Unweighted mean of the keyword posteriors; uniform when there are no keywords.
inline Vector entity_topic_distribution(const TopicModel& model, const KeywordSet& kws,
                                        const EmbeddingProvider& provider) {
  const Eigen::Index T = model.num_topics();
  if (kws.keywords.empty()) return Vector::Constant(T, 1.0 / static_cast<double>(T));
  Vector acc = Vector::Zero(T);
  for (const auto& kw : kws.keywords) acc += model.responsibilities(provider.vector(kw.word));
  acc /= static_cast<double>(kws.keywords.size());
  return acc / acc.sum();
}

// Per topic, the `top_k_words` vocabulary words closest to the component mean
// by cosine similarity.
inline std::vector<std::vector<std::string>> topic_labels(const TopicModel& model,
                                                          const EmbeddingProvider& provider,
                                                          int top_k_words = 3) {
  const auto& words = provider.words();
  const Matrix& vecs = provider.vectors();
  const Vector norms = vecs.rowwise().norm();
  std::vector<std::vector<std::string>> labels;
  std::vector<std::size_t> order(words.size());

  for (Eigen::Index t = 0; t < model.num_topics(); ++t) {
    const Vector mu = model.means.row(t).transpose();
    const double mu_norm = mu.norm();
    Vector sim = Vector::Zero(static_cast<Eigen::Index>(words.size()));
    if (mu_norm > 0.0) {
      for (std::size_t w = 0; w < words.size(); ++w) {
        const auto wi = static_cast<Eigen::Index>(w);
        if (norms[wi] > 0.0) sim[wi] = vecs.row(wi).dot(mu) / (norms[wi] * mu_norm);
      }
    }
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t keep = std::min(order.size(), static_cast<std::size_t>(std::max(0, top_k_words)));
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const auto sa = sim[static_cast<Eigen::Index>(a)];
                        const auto sb = sim[static_cast<Eigen::Index>(b)];
                        if (sa != sb) return sa > sb;
                        return words[a] < words[b];
                      });
    std::vector<std::string> lab;
    for (std::size_t i = 0; i < keep; ++i) lab.push_back(words[order[i]]);
    labels.push_back(std::move(lab));
  }
  return labels;
}

/* ===========================================================================
 * Whole-corpus topic space
 * ========================================================================= */

struct TopicSpaceOptions {
  int num_topics = 16;
  TextRankOptions textrank;
  GmmOptions gmm;
  int label_words = 3;
};

struct TopicSpace {
  std::vector<KeywordSet> keywords;  // one per entity, corpus order
  TopicModel model;
  Matrix topic_matrix;               // N x T, rows t_n
  std::vector<std::vector<std::string>> labels;
};

// Keywords per entity, one GMM over the deduplicated union of keyword
// embeddings (word order lexicographic), then t_n for every entity.
inline TopicSpace build_topic_space(const Corpus& corpus, const EmbeddingProvider& provider,
                                    const TopicSpaceOptions& opt, std::uint64_t seed) {
  TopicSpace space;
  std::set<std::string> pooled;
  for (const auto& e : corpus.entities) {
    KeywordSet kws;
    try {
      kws = extract_keywords(e.text, opt.textrank, provider);
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::EmptyDocument) throw;
    }
    kws.entity_id = e.entity_id;
    for (const auto& kw : kws.keywords) pooled.insert(kw.word);
    space.keywords.push_back(std::move(kws));
  }

  Matrix points(static_cast<Eigen::Index>(pooled.size()), provider.dim());
  Eigen::Index row = 0;
  for (const auto& w : pooled) points.row(row++) = provider.vector(w).transpose();
  space.model = fit_gmm(points, opt.num_topics, seed, opt.gmm);

  space.topic_matrix = Matrix(static_cast<Eigen::Index>(corpus.size()), opt.num_topics);
  for (std::size_t n = 0; n < corpus.size(); ++n) {
    space.topic_matrix.row(static_cast<Eigen::Index>(n)) =
        entity_topic_distribution(space.model, space.keywords[n], provider).transpose();
  }
  space.labels = topic_labels(space.model, provider, opt.label_words);
  return space;
}

inline nlohmann::json topics_to_json(const TopicModel& model,
                                     const std::vector<std::vector<std::string>>& labels) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index t = 0; t < model.num_topics(); ++t) {
    nlohmann::json j;
    j["id"] = t;
    j["mean_norm"] = model.means.row(t).norm();
    j["weight"] = model.weights[t];
    j["labels"] = labels[static_cast<std::size_t>(t)];
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace autoftp
