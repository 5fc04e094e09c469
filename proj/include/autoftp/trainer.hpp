#pragma once

#include "autoftp/alignment.hpp"
#include "autoftp/common.hpp"
#include "autoftp/config.hpp"
#include "autoftp/corpus.hpp"
#include "autoftp/model.hpp"
#include "autoftp/pso_selector.hpp"
#include "autoftp/spatial_graphs.hpp"
#include "autoftp/topic_space.hpp"

#include <algorithm>
#include <atomic>
#include <functional>
#include <map>
#include <string>
#include <thread>
#include <vector>

namespace autoftp {

/* ===========================================================================
 * Ablation variants
 * ========================================================================= */

enum class Variant { R, RP, RC, RPC, Full };

inline const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = {Variant::R, Variant::RP, Variant::RC, Variant::RPC, Variant::Full};
  return v;
}

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::R: return "R";
    case Variant::RP: return "R+P";
    case Variant::RC: return "R+C";
    case Variant::RPC: return "R+P+C";
    case Variant::Full: return "full";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (auto v : all_variants())
    if (to_string(v) == s) return v;
  throw Error(ErrorKind::UnknownVariant, "unknown variant '" + s + "' (expected R, R+P, R+C, R+P+C or full)");
}

// Losses that take part in training and fitness for `v`.
inline LossSpec loss_spec(Variant v, const Config& cfg) {
  LossSpec s;
  s.rec = true;
  s.point = v == Variant::RP || v == Variant::RPC || v == Variant::Full;
  s.pair = v == Variant::RC || v == Variant::RPC || v == Variant::Full;
  s.reg = v == Variant::Full;
  s.w_rec = cfg.w_rec;
  s.w_point = cfg.w_point;
  s.w_pair = cfg.w_pair;
  s.w_reg = cfg.w_reg;
  return s;
}

/* ===========================================================================
 * Splits
 * ========================================================================= */

struct Splits {
  std::vector<std::size_t> train, val, test;  // entity positions, ascending
};

inline Splits make_splits(std::size_t n, double val_frac, double test_frac, std::uint64_t seed) {
  const auto n_test = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(test_frac * static_cast<double>(n))));
  const auto n_val = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(val_frac * static_cast<double>(n))));
  if (n < n_test + n_val + 2) {
    throw Error(ErrorKind::InvalidConfig, "corpus of " + std::to_string(n) + " entities is too small for the requested splits");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Engine rng = make_stream(seed, 0x53504c54);
  shuffle(order, rng);
  Splits s;
  s.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test),
               order.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), order.end());
  for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

/* ===========================================================================
 * Particle evaluation
 * ========================================================================= */

struct FitnessReport {
  TopicMask mask;
  LossBreakdown losses;  // validation split, after the inner epochs
  bool flagged = false;  // training or evaluation went non-finite
  double fitness() const { return flagged ? kInf : losses.total; }
};

// Trains a private copy of `snapshot` for `epochs` on the training split with
// `mask`, then scores the losses on the validation split.
inline FitnessReport evaluate_particle(const TopicMask& mask, const PreparedData& data, const Splits& splits,
                                       const Model& snapshot, const LossSpec& spec, double lr, int epochs) {
  FitnessReport rep;
  rep.mask = mask;
  try {
    Model model = snapshot;
    train_epochs(model, data, splits.train, &mask, spec, lr, epochs);
    rep.losses = composite_loss(model, data, splits.val, &mask, spec);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NonFiniteLoss && e.kind() != ErrorKind::NonFiniteGradient) throw;
    rep.flagged = true;
    rep.losses.total = kInf;
  }
  return rep;
}

// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware).
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  std::size_t workers = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : static_cast<std::size_t>(threads);
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/* ===========================================================================
 * Closed loop
 * ========================================================================= */

struct OuterRecord {
  int iter = 0;
  double gbest_fitness = kInf;
  TopicMask gbest_mask;
  std::vector<FitnessReport> particles;
};

struct PairingResult {
  Variant variant = Variant::Full;
  bool aligned = true;
  TopicMask mask;
  std::vector<std::int64_t> entity_ids;
  Matrix embeddings;                  // N x K, corpus order
  Vector predictions;                 // N, original price scale
  std::vector<int> dim_topics;        // dimension k -> topic id
  Metrics test_metrics;
  Metrics val_metrics;
  std::vector<LossBreakdown> warm_curve;
  std::vector<LossBreakdown> final_curve;
  std::vector<OuterRecord> pso_trace;
  bool pso_converged = false;
  Splits splits;
  double price_mean = 0.0;
  double price_std = 1.0;
  double mean_corr_warm = 0.0;   // training split, gbest mask, warm-start encoder
  double mean_corr_final = 0.0;  // training split, gbest mask, final encoder
  AlignmentReport final_alignment;
  TopicSpace topics;
  Model model;
};

namespace detail {

inline double mean_correlation(const EncoderParams& enc, const PreparedData& data, const std::vector<std::size_t>& idx,
                               const TopicMask& mask) {
  Matrix topics(static_cast<Eigen::Index>(idx.size()), data.topic_matrix.cols());
  for (std::size_t b = 0; b < idx.size(); ++b) topics.row(static_cast<Eigen::Index>(b)) = data.topic_matrix.row(static_cast<Eigen::Index>(idx[b]));
  return pointwise_loss(select_topic_columns(topics, mask), embed(enc, data, idx)).correlations.mean();
}

}  // namespace detail

// Topic space -> graphs -> warm start -> PSO over masks -> final training with
// the best mask -> downstream regressor -> test metrics.
// `on_outer`, when set, sees every outer-iteration record as soon as it exists.
inline PairingResult run(const Corpus& corpus, const EmbeddingProvider& provider, const Config& cfg, Variant variant,
                         const std::function<void(const OuterRecord&)>& on_outer = {}) {
  cfg.validate();
  const std::uint64_t seed = cfg.seed;
  PairingResult res;
  res.variant = variant;
  res.aligned = variant != Variant::R;

  TopicSpaceOptions topt;
  topt.num_topics = cfg.num_topics;
  topt.textrank.window = cfg.window;
  topt.textrank.top_m = cfg.top_m;
  topt.label_words = cfg.label_words;
  res.topics = build_topic_space(corpus, provider, topt, seed);

  std::vector<EntityGraphs> graphs;
  graphs.reserve(corpus.size());
  Vector prices(static_cast<Eigen::Index>(corpus.size()));
  for (std::size_t n = 0; n < corpus.size(); ++n) {
    graphs.push_back(build_entity_graphs(corpus, n));
    prices[static_cast<Eigen::Index>(n)] = corpus.entities[n].price;
  }
  PreparedData data = prepare_data(graphs, res.topics.topic_matrix, prices);
  res.entity_ids = data.entity_ids;

  res.splits = make_splits(corpus.size(), cfg.val_frac, cfg.test_frac, seed);
  standardize_prices(data, res.splits.train);
  res.price_mean = data.price_mean;
  res.price_std = data.price_std;

  const LossSpec spec = loss_spec(variant, cfg);
  LossSpec warm_spec = spec;
  warm_spec.point = warm_spec.pair = false;

  Model model = init_model(corpus.num_categories, cfg.hidden, cfg.k, cfg.head_hidden, seed);
  res.warm_curve = train_epochs(model, data, res.splits.train, nullptr, warm_spec, cfg.lr, cfg.epochs_warm);
  const Model snapshot = model;

  PsoParams pso;
  pso.inertia = cfg.inertia;
  pso.c1 = cfg.c1;
  pso.c2 = cfg.c2;
  pso.vmax = cfg.vmax;
  Swarm swarm = init_swarm(cfg.particles, cfg.num_topics, cfg.k, seed);

  // Evaluation is a pure function of (snapshot, mask), so repeated masks reuse
  // their first report.
  std::map<TopicMask, FitnessReport> cache;
  for (int iter = 0; iter < cfg.max_outer; ++iter) {
    std::vector<TopicMask> pending;
    for (const auto& p : swarm.particles) {
      if (!cache.count(p.position) && std::find(pending.begin(), pending.end(), p.position) == pending.end()) {
        pending.push_back(p.position);
      }
    }
    std::vector<FitnessReport> fresh(pending.size());
    parallel_for(pending.size(), cfg.threads, [&](std::size_t i) {
      fresh[i] = evaluate_particle(pending[i], data, res.splits, snapshot, spec, cfg.lr, cfg.epochs_inner);
    });
    for (std::size_t i = 0; i < pending.size(); ++i) cache.emplace(pending[i], fresh[i]);

    OuterRecord rec;
    rec.iter = iter;
    std::vector<double> fitness;
    for (const auto& p : swarm.particles) {
      rec.particles.push_back(cache.at(p.position));
      fitness.push_back(rec.particles.back().fitness());
    }
    step(swarm, fitness, pso);
    rec.gbest_fitness = swarm.gbest_fitness;
    rec.gbest_mask = swarm.gbest;
    if (on_outer) on_outer(rec);
    res.pso_trace.push_back(std::move(rec));
    if (converged(swarm, cfg.patience, cfg.tol)) {
      res.pso_converged = true;
      break;
    }
  }
  res.mask = swarm.gbest;
  res.dim_topics = res.mask.selected();

  model = snapshot;
  res.final_curve = train_epochs(model, data, res.splits.train, &res.mask, spec, cfg.lr, cfg.epochs_final);

  // Downstream regressor on the frozen final embeddings, identical for every variant.
  const Matrix train_emb = embed(model.encoder, data, res.splits.train);
  Vector train_y(static_cast<Eigen::Index>(res.splits.train.size()));
  for (std::size_t b = 0; b < res.splits.train.size(); ++b) {
    train_y[static_cast<Eigen::Index>(b)] = data.prices_std[static_cast<Eigen::Index>(res.splits.train[b])];
  }
  fit_head(model.head, train_emb, train_y, cfg.lr, cfg.epochs_head);
  res.model = model;

  std::vector<std::size_t> all(corpus.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  res.embeddings = embed(model.encoder, data, all);
  res.predictions = (head_predict(model.head, res.embeddings).array() * data.price_std + data.price_mean).matrix();

  auto metrics_on = [&](const std::vector<std::size_t>& idx) {
    Vector pred(static_cast<Eigen::Index>(idx.size())), truth(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t b = 0; b < idx.size(); ++b) {
      pred[static_cast<Eigen::Index>(b)] = res.predictions[static_cast<Eigen::Index>(idx[b])];
      truth[static_cast<Eigen::Index>(b)] = data.prices[static_cast<Eigen::Index>(idx[b])];
    }
    return compute_metrics(pred, truth);
  };
  res.test_metrics = metrics_on(res.splits.test);
  res.val_metrics = metrics_on(res.splits.val);

  res.mean_corr_warm = detail::mean_correlation(snapshot.encoder, data, res.splits.train, res.mask);
  res.mean_corr_final = detail::mean_correlation(model.encoder, data, res.splits.train, res.mask);
  {
    Matrix topics(static_cast<Eigen::Index>(res.splits.train.size()), data.topic_matrix.cols());
    for (std::size_t b = 0; b < res.splits.train.size(); ++b) {
      topics.row(static_cast<Eigen::Index>(b)) = data.topic_matrix.row(static_cast<Eigen::Index>(res.splits.train[b]));
    }
    res.final_alignment = alignment_report(topics, train_emb, res.mask);
  }
  return res;
}

inline PairingResult run_ablation(const Corpus& corpus, const EmbeddingProvider& provider, const Config& cfg,
                                  const std::string& variant) {
  return run(corpus, provider, cfg, parse_variant(variant));
}

}  // namespace autoftp
