#include "autoftp/report.hpp"
#include "autoftp/trainer.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <set>

using namespace autoftp;

namespace {

Config small_config() {
  Config c;
  c.synth = support::small_synth();
  c.num_topics = 6;
  c.k = 3;
  c.hidden = 8;
  c.head_hidden = 8;
  c.epochs_warm = 20;
  c.epochs_inner = 5;
  c.epochs_final = 30;
  c.epochs_head = 60;
  c.particles = 4;
  c.max_outer = 4;
  c.patience = 2;
  c.seed = 3;
  return c;
}

const SynthWorld& small_world() {
  static const SynthWorld w = generate_synthetic(support::small_synth(), 3);
  return w;
}

void expect_same(const PairingResult& a, const PairingResult& b) {
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(a.embeddings, b.embeddings);
  EXPECT_EQ(a.predictions, b.predictions);
  EXPECT_EQ(a.test_metrics.rmse, b.test_metrics.rmse);
  ASSERT_EQ(a.pso_trace.size(), b.pso_trace.size());
  for (std::size_t i = 0; i < a.pso_trace.size(); ++i) EXPECT_EQ(a.pso_trace[i].gbest_fitness, b.pso_trace[i].gbest_fitness);
  EXPECT_EQ(a.model.encoder.w1, b.model.encoder.w1);
  EXPECT_EQ(a.model.head.v1, b.model.head.v1);
}

// Topic matrix whose first four columns are the planted mixtures and whose
// other eight are unrelated noise, shuffled into random positions.
struct PlantedFixture {
  PreparedData data;
  Splits splits;
  TopicMask planted;
  std::vector<int> others;
};

PlantedFixture planted_fixture(std::uint64_t seed) {
  SynthConfig sc;
  sc.num_entities = 100;
  sc.num_topics = 4;
  sc.vocab_size = 80;
  sc.doc_length = 10;
  const auto world = generate_synthetic(sc, seed);
  Engine rng = make_stream(seed, 77);
  std::vector<int> cols(12);
  for (int i = 0; i < 12; ++i) cols[static_cast<std::size_t>(i)] = i;
  shuffle(cols, rng);

  Matrix tm(100, 12);
  for (Eigen::Index n = 0; n < 100; ++n) {
    const Vector noise = dirichlet(rng, Vector::Constant(8, 0.3));
    for (int j = 0; j < 4; ++j) tm(n, cols[static_cast<std::size_t>(j)]) = 0.5 * world.truth.mixtures(n, j);
    for (int j = 0; j < 8; ++j) tm(n, cols[static_cast<std::size_t>(4 + j)]) = 0.5 * noise[j];
  }
  std::vector<EntityGraphs> graphs;
  Vector prices(100);
  for (std::size_t n = 0; n < 100; ++n) {
    graphs.push_back(build_entity_graphs(world.corpus, n));
    prices[static_cast<Eigen::Index>(n)] = world.corpus.entities[n].price;
  }
  PlantedFixture f;
  f.data = prepare_data(graphs, tm, prices);
  f.splits = make_splits(100, 0.2, 0.2, seed);
  standardize_prices(f.data, f.splits.train);
  f.planted = TopicMask::from_indices(12, {cols[0], cols[1], cols[2], cols[3]});
  f.others.assign(cols.begin() + 4, cols.end());
  return f;
}

}  // namespace

TEST(RegressionLoss, ExactHeadGivesZero) {
  Matrix emb(3, 1);
  emb << 1, 2, 5;
  RegressionHead h{Matrix::Ones(1, 1), Vector::Zero(1), Vector::Ones(1), 0.0};
  EXPECT_EQ(regression_loss(emb, h, emb.col(0)).loss, 0.0);
}

TEST(RegressionLoss, ZeroHeadOnStandardizedPricesIsOne) {
  Engine rng = make_stream(1, 0);
  Vector y = support::random_matrix(50, 1, rng, 10, 90).col(0);
  y = (y.array() - y.mean()) / std::sqrt((y.array() - y.mean()).square().mean());
  const RegressionHead zero = RegressionHead::zeros_like(init_head(3, 4, 1));
  EXPECT_NEAR(regression_loss(support::random_matrix(50, 3, rng), zero, y).loss, 1.0, 1e-9);
}

TEST(RegressionLoss, HandComputedMse) {
  Matrix emb(3, 2);
  emb << 1, 0, 0, 1, 1, 1;
  RegressionHead h{Matrix::Identity(2, 2), Vector::Zero(2), Vector(2), 0.5};
  h.v2 << 2, -1;
  Vector y(3);
  y << 2, 0, 1;
  // predictions 2.5, -0.5, 1.5
  EXPECT_NEAR(regression_loss(emb, h, y).loss, (0.25 + 0.25 + 0.25) / 3, 1e-12);
}

TEST(Metrics, Examples) {
  Vector t(2), p(2);
  t << 100, 200;
  p << 110, 180;
  const auto m = compute_metrics(p, t);
  EXPECT_NEAR(m.rmse, std::sqrt(250.0), 1e-12);
  EXPECT_NEAR(m.mae, 15.0, 1e-12);
  EXPECT_NEAR(m.mape, 10.0, 1e-12);
  const double l1 = std::log(101.0) - std::log(111.0), l2 = std::log(201.0) - std::log(181.0);
  EXPECT_NEAR(m.msle, (l1 * l1 + l2 * l2) / 2, 1e-15);

  const auto zero = compute_metrics(t, t);
  EXPECT_EQ(zero.rmse, 0.0);
  EXPECT_EQ(zero.mae, 0.0);
  EXPECT_EQ(zero.mape, 0.0);
  EXPECT_EQ(zero.msle, 0.0);
}

TEST(Metrics, RmseDominatesMae) {
  Engine rng = make_stream(2, 0);
  for (int i = 0; i < 200; ++i) {
    const Vector t = support::random_matrix(7, 1, rng, 1, 100).col(0);
    const Vector p = support::random_matrix(7, 1, rng, -10, 120).col(0);
    const auto m = compute_metrics(p, t);
    EXPECT_GE(m.rmse, m.mae - 1e-12);
    EXPECT_TRUE(std::isfinite(m.msle));
  }
}

TEST(Metrics, RejectsNonPositiveTruth) {
  Vector t(2), p(2);
  t << 1, 0;
  p << 1, 1;
  try {
    compute_metrics(p, t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidTruth);
  }
}

TEST(CompositeLoss, GradientMatchesCentralDifferences) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto data = support::random_data(6, 4, 6, seed);
    const Model m = init_model(4, 5, 2, 3, seed);
    const auto mask = TopicMask::parse("010010");
    EXPECT_LT(support::composite_fd_error(m, data, support::iota(6), &mask, LossSpec{}), 1e-4) << "seed " << seed;
  }
}

TEST(CompositeLoss, TotalIsWeightedSumOfParts) {
  const auto data = support::random_data(6, 4, 6, 4);
  const Model m = init_model(4, 5, 2, 3, 4);
  const auto mask = TopicMask::parse("100100");
  const auto l = composite_loss(m, data, support::iota(6), &mask, LossSpec{});
  EXPECT_EQ(l.total, l.rec + l.point + l.pair + l.reg);
  LossSpec w;
  w.w_rec = 0.5;
  w.w_point = 2;
  w.w_pair = 0.25;
  w.w_reg = 3;
  const auto lw = composite_loss(m, data, support::iota(6), &mask, w);
  EXPECT_NEAR(lw.total, 0.5 * l.rec + 2 * l.point + 0.25 * l.pair + 3 * l.reg, 1e-12);
}

TEST(CompositeLoss, Preconditions) {
  const auto data = support::random_data(6, 4, 6, 5);
  const Model m = init_model(4, 5, 2, 3, 5);
  const auto wrong = TopicMask::parse("111000");
  EXPECT_THROW(composite_loss(m, data, support::iota(6), &wrong, LossSpec{}), Error);
  const auto ok = TopicMask::parse("110000");
  EXPECT_THROW(composite_loss(m, data, {0}, &ok, LossSpec{}), Error);
  Model bad = m;
  bad.encoder.w1(0, 0) = std::nan("");
  try {
    composite_loss(bad, data, support::iota(6), &ok, LossSpec{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFiniteLoss);
  }
}

TEST(Splits, PartitionIsDisjointAndDeterministic) {
  const auto s = make_splits(50, 0.2, 0.2, 9);
  EXPECT_EQ(s.test.size(), 10u);
  EXPECT_EQ(s.val.size(), 10u);
  EXPECT_EQ(s.train.size(), 30u);
  std::set<std::size_t> all;
  for (const auto* v : {&s.train, &s.val, &s.test}) {
    EXPECT_TRUE(std::is_sorted(v->begin(), v->end()));
    all.insert(v->begin(), v->end());
  }
  EXPECT_EQ(all.size(), 50u);
  EXPECT_EQ(make_splits(50, 0.2, 0.2, 9).val, s.val);
  EXPECT_NE(make_splits(50, 0.2, 0.2, 10).val, s.val);
  EXPECT_THROW(make_splits(5, 0.2, 0.2, 1), Error);
}

TEST(ParallelFor, VisitsEveryIndexAndRethrows) {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(100, 4, [&](std::size_t i) { ++hits[i]; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) {
                 if (i == 7) throw Error(ErrorKind::ShapeMismatch, "x");
               }),
               Error);
}

TEST(EvaluateParticle, ZeroInnerEpochsScoresTheSnapshot) {
  const auto data = support::random_data(12, 4, 6, 6);
  const Splits s = make_splits(12, 0.25, 0.25, 6);
  const Model snap = init_model(4, 5, 2, 3, 6);
  const auto mask = TopicMask::parse("001100");
  const auto rep = evaluate_particle(mask, data, s, snap, LossSpec{}, 0.01, 0);
  const auto direct = composite_loss(snap, data, s.val, &mask, LossSpec{});
  EXPECT_EQ(rep.losses.total, direct.total);
  EXPECT_EQ(rep.losses.point, direct.point);
  EXPECT_FALSE(rep.flagged);
}

TEST(EvaluateParticle, DeterministicAndSnapshotUntouched) {
  const auto data = support::random_data(12, 4, 6, 7);
  const Splits s = make_splits(12, 0.25, 0.25, 7);
  const Model snap = init_model(4, 5, 2, 3, 7);
  const Model copy = snap;
  const auto mask = TopicMask::parse("100001");
  const auto a = evaluate_particle(mask, data, s, snap, LossSpec{}, 0.01, 10);
  const auto b = evaluate_particle(mask, data, s, snap, LossSpec{}, 0.01, 10);
  EXPECT_EQ(a.losses.total, b.losses.total);
  EXPECT_EQ(snap.encoder.w1, copy.encoder.w1);
}

TEST(EvaluateParticle, DivergenceIsFlagged) {
  const auto data = support::random_data(12, 4, 6, 8);
  const Splits s = make_splits(12, 0.25, 0.25, 8);
  const Model snap = init_model(4, 5, 2, 3, 8);
  const auto rep = evaluate_particle(TopicMask::parse("100001"), data, s, snap, LossSpec{}, 1e200, 5);
  EXPECT_TRUE(rep.flagged);
  EXPECT_EQ(rep.fitness(), kInf);
}

TEST(EvaluateParticle, PlantedMaskBeatsDisjointMask) {
  Config cfg;
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto f = planted_fixture(seed);
    const LossSpec spec = loss_spec(Variant::Full, cfg);
    LossSpec warm = spec;
    warm.point = warm.pair = false;
    Model snap = init_model(f.data.num_categories, cfg.hidden, 4, cfg.head_hidden, seed);
    train_epochs(snap, f.data, f.splits.train, nullptr, warm, cfg.lr, cfg.epochs_warm);

    Engine rng = make_stream(seed, 78);
    std::vector<int> pick = f.others;
    shuffle(pick, rng);
    pick.resize(4);
    const auto disjoint = TopicMask::from_indices(12, pick);
    const double planted = evaluate_particle(f.planted, f.data, f.splits, snap, spec, cfg.lr, cfg.epochs_inner).fitness();
    const double other = evaluate_particle(disjoint, f.data, f.splits, snap, spec, cfg.lr, cfg.epochs_inner).fitness();
    wins += planted < other;
  }
  EXPECT_GE(wins, 8);
}

TEST(Variants, NamesAndCompositions) {
  for (auto v : all_variants()) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_THROW(parse_variant("R+Q"), Error);
  const Config cfg;
  const auto r = loss_spec(Variant::R, cfg);
  EXPECT_TRUE(r.rec && !r.point && !r.pair && !r.reg);
  const auto rpc = loss_spec(Variant::RPC, cfg);
  EXPECT_TRUE(rpc.rec && rpc.point && rpc.pair && !rpc.reg);
  const auto full = loss_spec(Variant::Full, cfg);
  EXPECT_TRUE(full.rec && full.point && full.pair && full.reg);
}

TEST(Run, DeterministicAcrossReruns) {
  const Config cfg = small_config();
  const auto a = run(small_world().corpus, small_world().embeddings, cfg, Variant::Full);
  const auto b = run(small_world().corpus, small_world().embeddings, cfg, Variant::Full);
  expect_same(a, b);
}

TEST(Run, ThreadCountDoesNotChangeResults) {
  Config cfg = small_config();
  const auto a = run(small_world().corpus, small_world().embeddings, cfg, Variant::Full);
  cfg.threads = 3;
  const auto b = run(small_world().corpus, small_world().embeddings, cfg, Variant::Full);
  expect_same(a, b);
}

TEST(Run, FullResultIsConsistent) {
  const Config cfg = small_config();
  const auto r = run(small_world().corpus, small_world().embeddings, cfg, Variant::Full);
  EXPECT_TRUE(r.aligned);
  EXPECT_EQ(r.mask.popcount(), cfg.k);
  EXPECT_EQ(r.embeddings.rows(), 40);
  EXPECT_EQ(r.embeddings.cols(), cfg.k);
  EXPECT_EQ(r.dim_topics, r.mask.selected());
  EXPECT_EQ(static_cast<int>(r.warm_curve.size()), cfg.epochs_warm);
  EXPECT_EQ(static_cast<int>(r.final_curve.size()), cfg.epochs_final);
  EXPECT_LE(static_cast<int>(r.pso_trace.size()), cfg.max_outer);
  for (std::size_t i = 1; i < r.pso_trace.size(); ++i) EXPECT_LE(r.pso_trace[i].gbest_fitness, r.pso_trace[i - 1].gbest_fitness);
  EXPECT_EQ(r.pso_trace.back().gbest_mask, r.mask);
  EXPECT_GE(r.test_metrics.rmse, r.test_metrics.mae);
  EXPECT_TRUE(r.predictions.allFinite());
  for (const auto& l : r.warm_curve) {
    EXPECT_EQ(l.point, 0.0);
    EXPECT_EQ(l.pair, 0.0);
  }
}

TEST(Run, VariantLossCompositions) {
  const Config cfg = small_config();
  auto dir = support::scratch("variants");
  std::set<std::string> traces;
  for (auto v : all_variants()) {
    const auto r = run(small_world().corpus, small_world().embeddings, cfg, v);
    const auto spec = loss_spec(v, cfg);
    EXPECT_EQ(r.aligned, v != Variant::R);
    for (const auto& rec : r.pso_trace) {
      for (const auto& p : rec.particles) {
        const auto& l = p.losses;
        EXPECT_EQ(l.total, l.rec + l.point + l.pair + l.reg);
        if (!spec.point) EXPECT_EQ(l.point, 0.0);
        if (!spec.pair) EXPECT_EQ(l.pair, 0.0);
        if (!spec.reg) EXPECT_EQ(l.reg, 0.0);
        if (v == Variant::R) EXPECT_EQ(p.fitness(), l.rec);
      }
    }
    write_run(dir / to_string(v), r, cfg);
    traces.insert(support::slurp(dir / to_string(v) / "pso_trace.jsonl"));
  }
  EXPECT_EQ(traces.size(), 5u);
}

TEST(Run, RunAblationFullMatchesRun) {
  const Config cfg = small_config();
  expect_same(run_ablation(small_world().corpus, small_world().embeddings, cfg, "full"),
              run(small_world().corpus, small_world().embeddings, cfg, Variant::Full));
  EXPECT_THROW(run_ablation(small_world().corpus, small_world().embeddings, cfg, "bogus"), Error);
}

TEST(Report, RunDirectoryContents) {
  const Config cfg = small_config();
  const auto r = run(small_world().corpus, small_world().embeddings, cfg, Variant::Full);
  auto dir = support::scratch("rundir");
  write_run(dir, r, cfg);
  for (const char* f : {"report.json", "pairing.json", "topics.json", "embeddings.csv", "entity_topics.csv",
                        "pso_trace.jsonl", "pso_trace.csv", "loss_curves.csv", "encoder.ckpt", "head.ckpt"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  const auto rep = nlohmann::json::parse(support::slurp(dir / "report.json"));
  EXPECT_EQ(rep["seed"].get<std::uint64_t>(), cfg.seed);
  EXPECT_EQ(rep["config"]["encoder"]["K"].get<int>(), cfg.k);
  EXPECT_EQ(rep["final_mask"].get<std::string>(), r.mask.str());
  EXPECT_EQ(rep["losses"]["final"][0].size(), 5u);
  EXPECT_EQ(rep["splits"]["test"].size(), r.splits.test.size());

  const std::string header = support::slurp(dir / "embeddings.csv").substr(0, support::slurp(dir / "embeddings.csv").find('\n'));
  const int t0 = r.dim_topics[0];
  EXPECT_EQ(header.rfind("entity_id,dim0_topic" + std::to_string(t0) + "_" + r.topics.labels[static_cast<std::size_t>(t0)][0], 0), 0u);

  const auto first = nlohmann::json::parse(support::slurp(dir / "pso_trace.jsonl").substr(0, support::slurp(dir / "pso_trace.jsonl").find('\n')));
  for (const char* key : {"iter", "gbest_fitness", "gbest_mask", "per_particle_fitness"}) EXPECT_TRUE(first.contains(key)) << key;

  const auto ev = evaluate_run(dir, small_world().corpus);
  EXPECT_LT((ev.predictions - r.predictions).cwiseAbs().maxCoeff(), 1e-9);

  const std::string table = pair_report(dir);
  for (int k = 0; k < cfg.k; ++k) {
    const auto& lab = r.topics.labels[static_cast<std::size_t>(r.dim_topics[static_cast<std::size_t>(k)])];
    EXPECT_NE(table.find(lab[0] + ", " + lab[1] + ", " + lab[2]), std::string::npos);
  }
}

TEST(Report, ComparisonTableHasOneRowPerVariant) {
  std::vector<VariantMetrics> rows;
  for (auto v : all_variants()) rows.push_back({to_string(v), Metrics{1, 2, 3, 4}});
  const std::string t = comparison_table(rows);
  EXPECT_EQ(std::count(t.begin(), t.end(), '\n'), 6);
  EXPECT_NE(t.find("RMSE"), std::string::npos);
  EXPECT_NE(t.find("MSLE"), std::string::npos);
}
