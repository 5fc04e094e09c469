#pragma once

#include "autoftp/common.hpp"
#include "autoftp/embeddings.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace autoftp {

struct PoiRecord {
  std::int64_t poi_id = 0;
  std::int64_t entity_id = 0;
  int category_id = 0;
  double x = 0.0;  // meters
  double y = 0.0;
};

struct TripRecord {
  std::int64_t trip_id = 0;
  std::int64_t entity_id = 0;
  std::int64_t origin_poi_id = 0;
  std::int64_t dest_poi_id = 0;
};

struct SpatialEntity {
  std::int64_t entity_id = 0;
  std::string text;
  double price = 0.0;
  std::vector<std::size_t> pois;   // indices into Corpus::pois
  std::vector<std::size_t> trips;  // indices into Corpus::trips
};

struct Corpus {
  std::vector<SpatialEntity> entities;
  std::vector<PoiRecord> pois;
  std::vector<TripRecord> trips;
  int num_categories = 0;

  std::size_t size() const { return entities.size(); }

  std::vector<PoiRecord> entity_pois(std::size_t n) const {
    std::vector<PoiRecord> out;
    out.reserve(entities[n].pois.size());
    for (auto i : entities[n].pois) out.push_back(pois[i]);
    return out;
  }

  std::vector<TripRecord> entity_trips(std::size_t n) const {
    std::vector<TripRecord> out;
    out.reserve(entities[n].trips.size());
    for (auto i : entities[n].trips) out.push_back(trips[i]);
    return out;
  }
};

namespace detail {

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

inline void expect_header(const std::vector<std::string>& lines, const std::string& header,
                          const std::string& file) {
  if (lines.empty() || lines.front() != header) {
    throw Error(ErrorKind::ParseError, file + ": expected header '" + header + "'", 1);
  }
}

inline std::vector<std::string_view> csv_fields(const std::string& line, std::size_t expected,
                                                const std::string& file, std::int64_t line_no) {
  auto fields = split(line, ',');
  if (fields.size() != expected) {
    throw Error(ErrorKind::ParseError, file + ": expected " + std::to_string(expected) + " fields",
                line_no);
  }
  return fields;
}

inline std::int64_t field_int(std::string_view s, const std::string& file, std::int64_t line_no) {
  std::int64_t v = 0;
  if (!parse_int(s, v)) throw Error(ErrorKind::ParseError, file + ": bad integer '" + std::string(s) + "'", line_no);
  return v;
}

inline double field_double(std::string_view s, const std::string& file, std::int64_t line_no) {
  double v = 0.0;
  if (!parse_double(s, v)) throw Error(ErrorKind::ParseError, file + ": bad number '" + std::string(s) + "'", line_no);
  return v;
}

}  // namespace detail

// Reads entities.csv, pois.csv, trips.csv and texts.jsonl from `dir` and
// cross-validates every reference. `num_categories` <= 0 infers C as the
// largest category id + 1.
inline Corpus load_corpus(const std::filesystem::path& dir, int num_categories = 0) {
  using detail::field_double;
  using detail::field_int;

  Corpus corpus;
  std::unordered_map<std::int64_t, std::size_t> entity_index;

  {
    const std::string file = "entities.csv";
    auto lines = detail::read_lines(dir / file);
    detail::expect_header(lines, "entity_id,price", file);
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto ln = static_cast<std::int64_t>(i + 1);
      auto f = detail::csv_fields(lines[i], 2, file, ln);
      SpatialEntity e;
      e.entity_id = field_int(f[0], file, ln);
      e.price = field_double(f[1], file, ln);
      if (!(e.price > 0.0) || !std::isfinite(e.price)) {
        throw Error(ErrorKind::NonPositivePrice, "entity " + std::to_string(e.entity_id), e.entity_id);
      }
      if (!entity_index.emplace(e.entity_id, corpus.entities.size()).second) {
        throw Error(ErrorKind::ParseError, file + ": duplicate entity_id " + std::to_string(e.entity_id), ln);
      }
      corpus.entities.push_back(std::move(e));
    }
  }
  if (corpus.entities.size() < 2) throw Error(ErrorKind::ParseError, "corpus needs at least 2 entities");

  std::unordered_map<std::int64_t, std::size_t> poi_index;
  int max_category = -1;
  {
    const std::string file = "pois.csv";
    auto lines = detail::read_lines(dir / file);
    detail::expect_header(lines, "poi_id,entity_id,category_id,x,y", file);
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto ln = static_cast<std::int64_t>(i + 1);
      auto f = detail::csv_fields(lines[i], 5, file, ln);
      PoiRecord p;
      p.poi_id = field_int(f[0], file, ln);
      p.entity_id = field_int(f[1], file, ln);
      const auto cat = field_int(f[2], file, ln);
      p.x = field_double(f[3], file, ln);
      p.y = field_double(f[4], file, ln);
      if (cat < 0 || cat > 1'000'000) throw Error(ErrorKind::ParseError, file + ": bad category_id", ln);
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw Error(ErrorKind::ParseError, file + ": non-finite coordinate", ln);
      p.category_id = static_cast<int>(cat);
      auto it = entity_index.find(p.entity_id);
      if (it == entity_index.end()) {
        throw Error(ErrorKind::DanglingReference, file + ": unknown entity " + std::to_string(p.entity_id), p.entity_id);
      }
      if (!poi_index.emplace(p.poi_id, corpus.pois.size()).second) {
        throw Error(ErrorKind::ParseError, file + ": duplicate poi_id " + std::to_string(p.poi_id), ln);
      }
      corpus.entities[it->second].pois.push_back(corpus.pois.size());
      max_category = std::max(max_category, p.category_id);
      corpus.pois.push_back(p);
    }
  }

  {
    const std::string file = "trips.csv";
    auto lines = detail::read_lines(dir / file);
    detail::expect_header(lines, "trip_id,entity_id,origin_poi_id,dest_poi_id", file);
    std::unordered_set<std::int64_t> trip_ids;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto ln = static_cast<std::int64_t>(i + 1);
      auto f = detail::csv_fields(lines[i], 4, file, ln);
      TripRecord t;
      t.trip_id = field_int(f[0], file, ln);
      t.entity_id = field_int(f[1], file, ln);
      t.origin_poi_id = field_int(f[2], file, ln);
      t.dest_poi_id = field_int(f[3], file, ln);
      auto it = entity_index.find(t.entity_id);
      if (it == entity_index.end()) {
        throw Error(ErrorKind::DanglingReference, file + ": unknown entity " + std::to_string(t.entity_id), t.entity_id);
      }
      for (auto pid : {t.origin_poi_id, t.dest_poi_id}) {
        auto pit = poi_index.find(pid);
        if (pit == poi_index.end()) {
          throw Error(ErrorKind::DanglingReference, file + ": unknown poi " + std::to_string(pid), pid);
        }
        if (corpus.pois[pit->second].entity_id != t.entity_id) {
          throw Error(ErrorKind::DanglingReference,
                      file + ": poi " + std::to_string(pid) + " belongs to another entity", pid);
        }
      }
      if (t.origin_poi_id == t.dest_poi_id) throw Error(ErrorKind::ParseError, file + ": origin equals destination", ln);
      if (!trip_ids.insert(t.trip_id).second) {
        throw Error(ErrorKind::ParseError, file + ": duplicate trip_id " + std::to_string(t.trip_id), ln);
      }
      corpus.entities[it->second].trips.push_back(corpus.trips.size());
      corpus.trips.push_back(t);
    }
  }

  {
    const std::string file = "texts.jsonl";
    auto lines = detail::read_lines(dir / file);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto ln = static_cast<std::int64_t>(i + 1);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(lines[i]);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseError, file + ": " + e.what(), ln);
      }
      if (!j.is_object() || !j.contains("entity_id") || !j.contains("text") ||
          !j["entity_id"].is_number_integer() || !j["text"].is_string()) {
        throw Error(ErrorKind::ParseError, file + ": expected {\"entity_id\": int, \"text\": string}", ln);
      }
      const auto id = j["entity_id"].get<std::int64_t>();
      auto it = entity_index.find(id);
      if (it == entity_index.end()) {
        throw Error(ErrorKind::DanglingReference, file + ": unknown entity " + std::to_string(id), id);
      }
      corpus.entities[it->second].text += j["text"].get<std::string>();
    }
  }

  for (const auto& e : corpus.entities) {
    if (e.pois.empty()) throw Error(ErrorKind::EmptyEntity, "entity " + std::to_string(e.entity_id) + " has no POIs", e.entity_id);
  }

  if (num_categories > 0) {
    if (max_category >= num_categories) {
      throw Error(ErrorKind::ParseError, "category id " + std::to_string(max_category) + " exceeds configured C");
    }
    corpus.num_categories = num_categories;
  } else {
    corpus.num_categories = max_category + 1;
  }
  return corpus;
}

inline void write_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("entities.csv");
    out << "entity_id,price\n";
    for (const auto& e : corpus.entities) out << e.entity_id << ',' << format_double(e.price) << '\n';
  }
  {
    auto out = open("pois.csv");
    out << "poi_id,entity_id,category_id,x,y\n";
    for (const auto& p : corpus.pois) {
      out << p.poi_id << ',' << p.entity_id << ',' << p.category_id << ',' << format_double(p.x) << ','
          << format_double(p.y) << '\n';
    }
  }
  {
    auto out = open("trips.csv");
    out << "trip_id,entity_id,origin_poi_id,dest_poi_id\n";
    for (const auto& t : corpus.trips) {
      out << t.trip_id << ',' << t.entity_id << ',' << t.origin_poi_id << ',' << t.dest_poi_id << '\n';
    }
  }
  {
    auto out = open("texts.jsonl");
    for (const auto& e : corpus.entities) {
      nlohmann::json j;
      j["entity_id"] = e.entity_id;
      j["text"] = e.text;
      out << j.dump() << '\n';
    }
  }
}

/* ---------------------------------------------------------------------------
 * Synthetic world.
 *
 * Each entity n draws a latent topic mixture z_n. The mixture drives the words
 * of its description, the category mix and placement of its POIs (every topic
 * owns a district of the unit square and a category preference), and its
 * price: log(price) = beta . z_n + gamma * g_n + noise + log_scale, where g_n
 * is the fraction of categories present.
 * ------------------------------------------------------------------------- */

struct SynthConfig {
  int num_entities = 300;
  int num_categories = 10;
  int num_topics = 8;        // planted topics
  int vocab_size = 400;
  int embed_dim = 16;
  int doc_length = 80;
  int pois_mean = 30;
  int trips_mean = 60;
  double topic_alpha = 0.3;  // Dirichlet concentration of z_n
  double anchor_scale = 1.0;
  double word_noise = 0.25;
  double extent = 1000.0;    // meters
  double topic_price_scale = 1.0;
  double graph_price_scale = 0.3;
  double price_noise = 0.05;
  double price_mean = 60.0;

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidConfig, m); };
    if (num_entities < 10) fail("synth.N must be >= 10");
    if (num_categories < 3) fail("synth.C must be >= 3");
    if (num_topics < 2) fail("synth.T_true must be >= 2");
    if (vocab_size < 10 * num_topics) fail("synth.V must be >= 10 * synth.T_true");
    if (embed_dim < 1) fail("synth.d must be >= 1");
    if (doc_length < 1) fail("synth.doc_length must be >= 1");
    if (pois_mean < 1) fail("synth.pois_mean must be >= 1");
    if (trips_mean < 0) fail("synth.trips_mean must be >= 0");
    if (!(topic_alpha > 0.0)) fail("synth.topic_alpha must be > 0");
    if (!(anchor_scale > 0.0)) fail("synth.anchor_scale must be > 0");
    if (!(word_noise >= 0.0)) fail("synth.word_noise must be >= 0");
    if (!(extent > 0.0)) fail("synth.extent must be > 0");
    if (!(price_noise >= 0.0)) fail("synth.price_noise must be >= 0");
    if (!(price_mean > 0.0)) fail("synth.price_mean must be > 0");
  }
};

// Ground truth kept alongside a generated corpus for recovery checks.
struct SynthTruth {
  Matrix anchors;                  // T_true x d
  std::vector<int> word_topic;     // planted topic of every vocabulary word
  Matrix mixtures;                 // N x T_true, rows are z_n
  Matrix category_prefs;           // T_true x C
  Vector beta;                     // T_true
  double gamma = 0.0;
  Vector graph_stat;               // N, fraction of categories present
  Vector log_noise;                // N, price noise added in log space
  double log_scale = 0.0;
};

struct SynthWorld {
  Corpus corpus;
  EmbeddingProvider embeddings;
  SynthTruth truth;
};

inline std::string synth_word(int index) {
  std::ostringstream s;
  s << 'w' << std::setw(4) << std::setfill('0') << index;
  return s.str();
}

inline SynthWorld generate_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int N = cfg.num_entities, C = cfg.num_categories, T = cfg.num_topics, V = cfg.vocab_size;
  const int d = cfg.embed_dim;

  Engine rng = make_stream(seed, 0);
  SynthWorld world;
  SynthTruth& truth = world.truth;

  truth.anchors = Matrix(T, d);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < d; ++j) truth.anchors(t, j) = normal(rng, 0.0, cfg.anchor_scale);

  std::vector<std::string> words(V);
  std::vector<std::vector<int>> pools(T);
  Matrix word_vecs(V, d);
  truth.word_topic.resize(V);
  for (int w = 0; w < V; ++w) {
    const int t = w % T;
    words[w] = synth_word(w);
    truth.word_topic[w] = t;
    pools[t].push_back(w);
    for (int j = 0; j < d; ++j) word_vecs(w, j) = truth.anchors(t, j) + normal(rng, 0.0, cfg.word_noise);
  }
  world.embeddings = EmbeddingProvider(words, word_vecs);

  // Zipf-like frequencies inside every pool.
  std::vector<Vector> pool_freq(T);
  for (int t = 0; t < T; ++t) {
    pool_freq[t] = Vector(static_cast<Eigen::Index>(pools[t].size()));
    for (std::size_t r = 0; r < pools[t].size(); ++r) pool_freq[t][r] = 1.0 / std::sqrt(r + 1.0);
  }

  truth.category_prefs = Matrix(T, C);
  for (int t = 0; t < T; ++t) {
    Vector pref = dirichlet(rng, Vector::Constant(C, 0.3));
    truth.category_prefs.row(t) = (0.9 * pref.array() + 0.1 / C).matrix().transpose();
  }
  Matrix districts(T, 2);
  for (int t = 0; t < T; ++t) {
    districts(t, 0) = uniform(rng, 0.1, 0.9);
    districts(t, 1) = uniform(rng, 0.1, 0.9);
  }

  truth.beta = Vector(T);
  for (int t = 0; t < T; ++t) truth.beta[t] = cfg.topic_price_scale * uniform(rng, -1.0, 1.0);
  truth.gamma = cfg.graph_price_scale;

  truth.mixtures = Matrix(N, T);
  truth.graph_stat = Vector(N);
  truth.log_noise = Vector(N);
  Vector log_form(N);

  Corpus& corpus = world.corpus;
  corpus.num_categories = C;
  std::int64_t next_poi = 0, next_trip = 0;

  for (int n = 0; n < N; ++n) {
    SpatialEntity e;
    e.entity_id = n;
    const Vector z = dirichlet(rng, Vector::Constant(T, cfg.topic_alpha));
    truth.mixtures.row(n) = z.transpose();

    std::string text;
    for (int i = 0; i < cfg.doc_length; ++i) {
      const auto t = categorical(rng, z);
      const auto r = categorical(rng, pool_freq[t]);
      if (i > 0) text += (i % 12 == 0) ? ". " : " ";
      text += words[pools[t][r]];
    }
    e.text = text + ".";

    const int poi_count = std::max(2, static_cast<int>(std::lround(cfg.pois_mean * uniform(rng, 0.5, 1.5))));
    std::vector<bool> present(C, false);
    const std::size_t first_poi = corpus.pois.size();
    for (int i = 0; i < poi_count; ++i) {
      const auto t = categorical(rng, z);
      const auto c = categorical(rng, truth.category_prefs.row(t).transpose());
      PoiRecord p;
      p.poi_id = next_poi++;
      p.entity_id = n;
      p.category_id = static_cast<int>(c);
      p.x = cfg.extent * (districts(t, 0) + normal(rng, 0.0, 0.08));
      p.y = cfg.extent * (districts(t, 1) + normal(rng, 0.0, 0.08));
      present[c] = true;
      e.pois.push_back(corpus.pois.size());
      corpus.pois.push_back(p);
    }

    // Gravity trips inside the entity: weight 1 / (1 + distance in km).
    const int trip_count = std::max(0, static_cast<int>(std::lround(cfg.trips_mean * uniform(rng, 0.5, 1.5))));
    Vector weights(poi_count);
    for (int i = 0; i < trip_count; ++i) {
      const auto o = uniform_index(rng, static_cast<std::size_t>(poi_count));
      const auto& po = corpus.pois[first_poi + o];
      for (int k = 0; k < poi_count; ++k) {
        const auto& pk = corpus.pois[first_poi + k];
        const double dist_km = std::hypot(po.x - pk.x, po.y - pk.y) / 1000.0;
        weights[k] = (static_cast<std::size_t>(k) == o) ? 0.0 : 1.0 / (1.0 + dist_km);
      }
      const auto dst = categorical(rng, weights);
      TripRecord tr;
      tr.trip_id = next_trip++;
      tr.entity_id = n;
      tr.origin_poi_id = po.poi_id;
      tr.dest_poi_id = corpus.pois[first_poi + dst].poi_id;
      e.trips.push_back(corpus.trips.size());
      corpus.trips.push_back(tr);
    }

    const double g = static_cast<double>(std::count(present.begin(), present.end(), true)) / C;
    truth.graph_stat[n] = g;
    truth.log_noise[n] = cfg.price_noise > 0.0 ? normal(rng, 0.0, cfg.price_noise) : 0.0;
    log_form[n] = truth.beta.dot(z) + truth.gamma * g + truth.log_noise[n];
    corpus.entities.push_back(std::move(e));
  }

  const double mean_exp = log_form.array().exp().mean();
  truth.log_scale = std::log(cfg.price_mean) - std::log(mean_exp);
  for (int n = 0; n < N; ++n) corpus.entities[n].price = std::exp(log_form[n] + truth.log_scale);
  return world;
}

inline nlohmann::json truth_to_json(const SynthTruth& truth) {
  auto mat = [](const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      std::vector<double> row(m.cols());
      for (Eigen::Index j = 0; j < m.cols(); ++j) row[j] = m(i, j);
      rows.push_back(row);
    }
    return rows;
  };
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json j;
  j["anchors"] = mat(truth.anchors);
  j["word_topic"] = truth.word_topic;
  j["mixtures"] = mat(truth.mixtures);
  j["category_prefs"] = mat(truth.category_prefs);
  j["beta"] = vec(truth.beta);
  j["gamma"] = truth.gamma;
  j["graph_stat"] = vec(truth.graph_stat);
  j["log_noise"] = vec(truth.log_noise);
  j["log_scale"] = truth.log_scale;
  return j;
}

// Writes the corpus files, embeddings.vec and synth_truth.json.
inline void write_synthetic(const std::filesystem::path& dir, const SynthWorld& world) {
  write_corpus(dir, world.corpus);
  write_embeddings(dir / "embeddings.vec", world.embeddings);
  std::ofstream out(dir / "synth_truth.json", std::ios::binary);
  out << truth_to_json(world.truth).dump(1) << '\n';
}

}  // namespace autoftp
