#include "autoftp/corpus.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <Eigen/QR>

using namespace autoftp;

namespace {

void write_fixture(const std::filesystem::path& dir) {
  support::spit(dir / "entities.csv", "entity_id,price\n1,50\n2,75.5\n3,120\n");
  support::spit(dir / "pois.csv",
                "poi_id,entity_id,category_id,x,y\n"
                "10,1,0,0,0\n11,1,1,100,0\n"
                "20,2,1,0,0\n21,2,2,0,50\n22,2,0,10,10\n"
                "30,3,2,5,5\n");
  support::spit(dir / "trips.csv", "trip_id,entity_id,origin_poi_id,dest_poi_id\n1,1,10,11\n2,2,20,21\n");
  support::spit(dir / "texts.jsonl",
                "{\"entity_id\": 1, \"text\": \"quiet park\"}\n"
                "{\"entity_id\": 2, \"text\": \"busy mall\"}\n"
                "{\"entity_id\": 3, \"text\": \"school\"}\n");
}

ErrorKind load_error(const std::filesystem::path& dir, std::int64_t* detail = nullptr) {
  try {
    load_corpus(dir);
  } catch (const Error& e) {
    if (detail) *detail = e.detail();
    return e.kind();
  }
  ADD_FAILURE() << "load_corpus accepted a bad corpus";
  return ErrorKind::ParseError;
}

std::string dir_digest(const std::filesystem::path& dir) {
  std::string all;
  for (const char* f : {"entities.csv", "pois.csv", "trips.csv", "texts.jsonl", "embeddings.vec", "synth_truth.json"}) {
    all += f;
    all += support::slurp(dir / f);
  }
  return all;
}

}  // namespace

TEST(LoadCorpus, ThreeEntityFixture) {
  auto dir = support::scratch("corpus3");
  write_fixture(dir);
  const Corpus c = load_corpus(dir);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c.num_categories, 3);
  EXPECT_EQ(c.entities[1].price, 75.5);
  EXPECT_EQ(c.entities[1].text, "busy mall");
  EXPECT_EQ(c.entity_pois(1).size(), 3u);
  EXPECT_EQ(c.entity_trips(0).front().dest_poi_id, 11);
  EXPECT_TRUE(c.entity_trips(2).empty());
}

TEST(LoadCorpus, ExplicitCategoryCount) {
  auto dir = support::scratch("corpus_c");
  write_fixture(dir);
  EXPECT_EQ(load_corpus(dir, 20).num_categories, 20);
  EXPECT_THROW(load_corpus(dir, 2), Error);
}

TEST(LoadCorpus, DanglingEntityReference) {
  auto dir = support::scratch("corpus_dangling");
  write_fixture(dir);
  support::spit(dir / "pois.csv", support::slurp(dir / "pois.csv") + "40,99,0,0,0\n");
  std::int64_t detail = 0;
  EXPECT_EQ(load_error(dir, &detail), ErrorKind::DanglingReference);
  EXPECT_EQ(detail, 99);
}

TEST(LoadCorpus, ZeroPriceRejected) {
  auto dir = support::scratch("corpus_price");
  write_fixture(dir);
  support::spit(dir / "entities.csv", "entity_id,price\n1,50\n2,0\n3,120\n");
  EXPECT_EQ(load_error(dir), ErrorKind::NonPositivePrice);
  support::spit(dir / "entities.csv", "entity_id,price\n1,50\n2,-3\n3,120\n");
  EXPECT_EQ(load_error(dir), ErrorKind::NonPositivePrice);
}

TEST(LoadCorpus, EntityWithoutPois) {
  auto dir = support::scratch("corpus_empty");
  write_fixture(dir);
  support::spit(dir / "pois.csv", "poi_id,entity_id,category_id,x,y\n10,1,0,0,0\n11,1,1,100,0\n20,2,1,0,0\n21,2,2,0,50\n");
  support::spit(dir / "trips.csv", "trip_id,entity_id,origin_poi_id,dest_poi_id\n");
  EXPECT_EQ(load_error(dir), ErrorKind::EmptyEntity);
}

TEST(LoadCorpus, TripCrossingEntitiesRejected) {
  auto dir = support::scratch("corpus_cross");
  write_fixture(dir);
  support::spit(dir / "trips.csv", "trip_id,entity_id,origin_poi_id,dest_poi_id\n1,1,10,20\n");
  EXPECT_EQ(load_error(dir), ErrorKind::DanglingReference);
  support::spit(dir / "trips.csv", "trip_id,entity_id,origin_poi_id,dest_poi_id\n1,1,10,777\n");
  EXPECT_EQ(load_error(dir), ErrorKind::DanglingReference);
}

TEST(LoadCorpus, MalformedRowsReportLine) {
  auto dir = support::scratch("corpus_malformed");
  write_fixture(dir);
  support::spit(dir / "pois.csv", "poi_id,entity_id,category_id,x,y\n10,1,0,0,0\n11,1,one,100,0\n");
  std::int64_t line = 0;
  EXPECT_EQ(load_error(dir, &line), ErrorKind::ParseError);
  EXPECT_EQ(line, 3);
  write_fixture(dir);
  support::spit(dir / "entities.csv", "id,price\n1,50\n");
  EXPECT_EQ(load_error(dir), ErrorKind::ParseError);
}

TEST(LoadCorpus, MissingFile) {
  auto dir = support::scratch("corpus_missing");
  write_fixture(dir);
  std::filesystem::remove(dir / "texts.jsonl");
  EXPECT_EQ(load_error(dir), ErrorKind::MissingFile);
}

TEST(Synthetic, DeterministicForFixedSeed) {
  SynthConfig cfg;
  cfg.num_entities = 50;
  cfg.num_categories = 10;
  cfg.num_topics = 8;
  auto a = support::scratch("synth_a"), b = support::scratch("synth_b");
  write_synthetic(a, generate_synthetic(cfg, 7));
  write_synthetic(b, generate_synthetic(cfg, 7));
  EXPECT_EQ(dir_digest(a), dir_digest(b));
  auto c = support::scratch("synth_c");
  write_synthetic(c, generate_synthetic(cfg, 8));
  EXPECT_NE(dir_digest(a), dir_digest(c));
}

TEST(Synthetic, RoundTripsThroughLoader) {
  const SynthConfig cfg = support::small_synth();
  const auto world = generate_synthetic(cfg, 3);
  auto dir = support::scratch("synth_rt");
  write_synthetic(dir, world);
  const Corpus back = load_corpus(dir);
  ASSERT_EQ(back.size(), world.corpus.size());
  EXPECT_EQ(back.pois.size(), world.corpus.pois.size());
  EXPECT_EQ(back.trips.size(), world.corpus.trips.size());
  for (std::size_t n = 0; n < back.size(); ++n) {
    EXPECT_EQ(back.entities[n].price, world.corpus.entities[n].price);
    EXPECT_EQ(back.entities[n].text, world.corpus.entities[n].text);
    EXPECT_GT(back.entities[n].price, 0.0);
  }
  EXPECT_EQ(read_embeddings(dir / "embeddings.vec").vectors(), world.embeddings.vectors());
}

TEST(Synthetic, TwentyCategories) {
  SynthConfig cfg = support::small_synth();
  cfg.num_categories = 20;
  const auto world = generate_synthetic(cfg, 1);
  EXPECT_EQ(world.corpus.num_categories, 20);
  auto dir = support::scratch("synth_c20");
  write_synthetic(dir, world);
  EXPECT_EQ(load_corpus(dir).num_categories, 20);
}

// With zero noise the log price is affine in (z, g): an ordinary least-squares
// fit must recover the planted coefficients.
TEST(Synthetic, NoiselessPriceIsRecoveredByLeastSquares) {
  SynthConfig cfg = support::small_synth();
  cfg.num_entities = 60;
  cfg.price_noise = 0.0;
  const auto world = generate_synthetic(cfg, 11);
  const int N = cfg.num_entities, T = cfg.num_topics;
  Matrix X(N, T + 1);
  Vector y(N);
  for (int n = 0; n < N; ++n) {
    X.row(n).head(T) = world.truth.mixtures.row(n);
    X(n, T) = world.truth.graph_stat[n];
    y[n] = std::log(world.corpus.entities[static_cast<std::size_t>(n)].price);
  }
  // Mixture rows sum to one, so the intercept folds into the topic weights.
  const Vector coef = X.colPivHouseholderQr().solve(y);
  for (int t = 0; t < T; ++t) EXPECT_NEAR(coef[t], world.truth.beta[t] + world.truth.log_scale, 1e-9);
  EXPECT_NEAR(coef[T], world.truth.gamma, 1e-9);
}

TEST(Synthetic, WordClustersAreSeparable) {
  SynthConfig cfg;
  cfg.num_entities = 20;
  cfg.num_topics = 4;
  cfg.vocab_size = 200;
  const auto world = generate_synthetic(cfg, 5);
  const Matrix& vecs = world.embeddings.vectors();
  int nearest_own = 0;
  for (Eigen::Index w = 0; w < vecs.rows(); ++w) {
    Eigen::Index best = 0;
    (world.truth.anchors.rowwise() - vecs.row(w)).rowwise().squaredNorm().minCoeff(&best);
    if (best == world.truth.word_topic[static_cast<std::size_t>(w)]) ++nearest_own;
  }
  EXPECT_GE(nearest_own, 190);
}

TEST(Synthetic, InvalidConfigRejected) {
  SynthConfig cfg;
  cfg.vocab_size = 5;
  try {
    generate_synthetic(cfg, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }
}
