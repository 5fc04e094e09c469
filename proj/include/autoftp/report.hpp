#pragma once

#include "autoftp/common.hpp"
#include "autoftp/config.hpp"
#include "autoftp/model.hpp"
#include "autoftp/trainer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace autoftp {

// Files written into a run directory:
//   report.json        metrics, mask, loss traces, resolved config, split ids
//   embeddings.csv     entity_id + K columns "dim<k>_topic<id>_<top word>"
//   pairing.json       dimension -> topic id and label words
//   topics.json        per topic {id, mean_norm, weight, labels}
//   entity_topics.csv  entity_id + T topic probabilities
//   pso_trace.jsonl    one record per outer iteration
//   pso_trace.csv      iter, gbest, mean and min particle fitness (for plotting)
//   loss_curves.csv    phase, epoch and the four losses (for plotting)
//   encoder.ckpt, head.ckpt   tensor dumps of the trained parameters

inline nlohmann::json to_json(const LossBreakdown& l) {
  return {{"L_R", l.rec}, {"L_P", l.point}, {"L_C", l.pair}, {"L_Reg", l.reg}, {"total", l.total}};
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + path.string());
  return out;
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingArtifact, "missing " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
}

inline std::vector<std::int64_t> ids_of(const PairingResult& r, const std::vector<std::size_t>& idx) {
  std::vector<std::int64_t> out;
  for (auto i : idx) out.push_back(r.entity_ids[i]);
  return out;
}

}  // namespace detail

inline std::string embedding_column(int dim, int topic, const std::vector<std::string>& labels) {
  std::string col = "dim" + std::to_string(dim) + "_topic" + std::to_string(topic);
  if (!labels.empty()) col += "_" + labels.front();
  return col;
}

// Non-finite fitness values serialize as null.
inline nlohmann::json outer_record_json(const OuterRecord& rec) {
  nlohmann::json j;
  j["iter"] = rec.iter;
  j["gbest_fitness"] = rec.gbest_fitness;
  j["gbest_mask"] = rec.gbest_mask.str();
  std::vector<double> fit;
  std::vector<bool> flagged;
  nlohmann::json parts = nlohmann::json::array();
  for (const auto& p : rec.particles) {
    fit.push_back(p.fitness());
    flagged.push_back(p.flagged);
    auto pj = to_json(p.losses);
    pj["mask"] = p.mask.str();
    parts.push_back(std::move(pj));
  }
  j["per_particle_fitness"] = fit;
  j["flagged"] = flagged;
  j["per_particle"] = parts;
  return j;
}

inline nlohmann::json pairing_to_json(const PairingResult& r) {
  nlohmann::json dims = nlohmann::json::array();
  for (std::size_t k = 0; k < r.dim_topics.size(); ++k) {
    const int t = r.dim_topics[k];
    dims.push_back({{"dim", k}, {"topic", t}, {"labels", r.topics.labels[static_cast<std::size_t>(t)]}});
  }
  return {{"variant", to_string(r.variant)}, {"aligned", r.aligned}, {"mask", r.mask.str()}, {"dimensions", dims}};
}

inline nlohmann::json report_to_json(const PairingResult& r, const Config& cfg) {
  nlohmann::json j;
  j["variant"] = to_string(r.variant);
  j["aligned"] = r.aligned;
  j["seed"] = cfg.seed;
  j["config"] = config_to_json(cfg);
  j["metrics"] = {{"test", to_json(r.test_metrics)}, {"val", to_json(r.val_metrics)}};
  j["final_mask"] = r.mask.str();
  j["selected_topics"] = r.mask.selected();

  const LossSpec spec = loss_spec(r.variant, cfg);
  j["included_losses"] = {{"L_R", spec.rec}, {"L_P", spec.point}, {"L_C", spec.pair}, {"L_Reg", spec.reg}};
  nlohmann::json warm = nlohmann::json::array(), fin = nlohmann::json::array(), gbest = nlohmann::json::array();
  for (const auto& l : r.warm_curve) warm.push_back(to_json(l));
  for (const auto& l : r.final_curve) fin.push_back(to_json(l));
  for (const auto& rec : r.pso_trace) gbest.push_back(rec.gbest_fitness);
  j["losses"] = {{"warm", warm}, {"final", fin}, {"gbest_trace", gbest}};
  j["pso"] = {{"iterations", r.pso_trace.size()}, {"converged", r.pso_converged}};

  j["splits"] = {{"train", detail::ids_of(r, r.splits.train)},
                 {"val", detail::ids_of(r, r.splits.val)},
                 {"test", detail::ids_of(r, r.splits.test)}};
  j["price_standardization"] = {{"mean", r.price_mean}, {"std", r.price_std}};
  j["alignment"] = {{"mean_corr_warm", r.mean_corr_warm},
                    {"mean_corr_final", r.mean_corr_final},
                    {"L_P", r.final_alignment.pointwise},
                    {"L_C", r.final_alignment.pairwise}};
  j["num_categories"] = r.model.encoder.num_categories();
  return j;
}

inline void write_run(const std::filesystem::path& dir, const PairingResult& r, const Config& cfg) {
  std::filesystem::create_directories(dir);
  {
    auto out = detail::open_out(dir / "report.json");
    out << report_to_json(r, cfg).dump(2) << '\n';
  }
  {
    auto out = detail::open_out(dir / "pairing.json");
    out << pairing_to_json(r).dump(2) << '\n';
  }
  {
    auto out = detail::open_out(dir / "topics.json");
    out << topics_to_json(r.topics.model, r.topics.labels).dump(2) << '\n';
  }
  {
    auto out = detail::open_out(dir / "embeddings.csv");
    out << "entity_id";
    for (std::size_t k = 0; k < r.dim_topics.size(); ++k) {
      const int t = r.dim_topics[k];
      out << ',' << embedding_column(static_cast<int>(k), t, r.topics.labels[static_cast<std::size_t>(t)]);
    }
    out << '\n';
    for (Eigen::Index n = 0; n < r.embeddings.rows(); ++n) {
      out << r.entity_ids[static_cast<std::size_t>(n)];
      for (Eigen::Index k = 0; k < r.embeddings.cols(); ++k) out << ',' << format_double(r.embeddings(n, k));
      out << '\n';
    }
  }
  {
    auto out = detail::open_out(dir / "entity_topics.csv");
    const Matrix& tm = r.topics.topic_matrix;
    out << "entity_id";
    for (Eigen::Index t = 0; t < tm.cols(); ++t) out << ",topic" << t;
    out << '\n';
    for (Eigen::Index n = 0; n < tm.rows(); ++n) {
      out << r.entity_ids[static_cast<std::size_t>(n)];
      for (Eigen::Index t = 0; t < tm.cols(); ++t) out << ',' << format_double(tm(n, t));
      out << '\n';
    }
  }
  {
    auto jl = detail::open_out(dir / "pso_trace.jsonl");
    auto csv = detail::open_out(dir / "pso_trace.csv");
    csv << "iter,gbest_fitness,mean_fitness,min_fitness\n";
    for (const auto& rec : r.pso_trace) {
      jl << outer_record_json(rec).dump() << '\n';
      std::vector<double> fit;
      for (const auto& p : rec.particles) fit.push_back(p.fitness());

      double sum = 0.0, lo = kInf;
      for (double f : fit) {
        sum += f;
        lo = std::min(lo, f);
      }
      csv << rec.iter << ',' << format_double(rec.gbest_fitness) << ','
          << format_double(sum / static_cast<double>(fit.size())) << ',' << format_double(lo) << '\n';
    }
  }
  {
    auto out = detail::open_out(dir / "loss_curves.csv");
    out << "phase,epoch,L_R,L_P,L_C,L_Reg,total\n";
    auto dump = [&](const char* phase, const std::vector<LossBreakdown>& curve) {
      for (std::size_t e = 0; e < curve.size(); ++e) {
        const auto& l = curve[e];
        out << phase << ',' << e << ',' << format_double(l.rec) << ',' << format_double(l.point) << ','
            << format_double(l.pair) << ',' << format_double(l.reg) << ',' << format_double(l.total) << '\n';
      }
    };
    dump("warm", r.warm_curve);
    dump("final", r.final_curve);
  }
  save_encoder(dir / "encoder.ckpt", r.model.encoder);
  save_head(dir / "head.ckpt", r.model.head);
}

/* ---------------------------------------------------------------------------
 * Ablation comparison table
 * ------------------------------------------------------------------------- */

struct VariantMetrics {
  std::string variant;
  Metrics metrics;
};

inline std::string comparison_table(const std::vector<VariantMetrics>& rows) {
  std::ostringstream s;
  s << std::left << std::setw(12) << "variant" << std::right << std::setw(12) << "RMSE" << std::setw(12) << "MAE"
    << std::setw(12) << "MAPE" << std::setw(12) << "MSLE" << '\n';
  s << std::fixed;
  for (const auto& r : rows) {
    s << std::left << std::setw(12) << r.variant << std::right << std::setprecision(3) << std::setw(12)
      << r.metrics.rmse << std::setw(12) << r.metrics.mae << std::setw(12) << r.metrics.mape << std::setprecision(4)
      << std::setw(12) << r.metrics.msle << '\n';
  }
  return s.str();
}

inline void write_comparison(const std::filesystem::path& path, const std::vector<VariantMetrics>& rows) {
  auto out = detail::open_out(path);
  out << "variant,rmse,mae,mape,msle\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << format_double(r.metrics.rmse) << ',' << format_double(r.metrics.mae) << ','
        << format_double(r.metrics.mape) << ',' << format_double(r.metrics.msle) << '\n';
  }
}

/* ---------------------------------------------------------------------------
 * Reading a run directory back
 * ------------------------------------------------------------------------- */

// Human-readable pairing table: one row per embedding dimension, then the
// top topics of every entity when entity_topics.csv is present.
inline std::string pair_report(const std::filesystem::path& run_dir, int entity_top = 3) {
  const auto pairing = detail::read_json(run_dir / "pairing.json");
  const auto topics = detail::read_json(run_dir / "topics.json");

  std::map<int, std::vector<std::string>> labels;
  for (const auto& t : topics) labels[t.at("id").get<int>()] = t.at("labels").get<std::vector<std::string>>();

  std::ostringstream s;
  s << "variant " << pairing.at("variant").get<std::string>() << "  mask " << pairing.at("mask").get<std::string>();
  if (!pairing.at("aligned").get<bool>()) s << "  [unaligned]";
  s << '\n';
  s << "dim  topic  labels\n";
  for (const auto& d : pairing.at("dimensions")) {
    const int topic = d.at("topic").get<int>();
    s << std::setw(3) << d.at("dim").get<int>() << "  " << std::setw(5) << topic << "  ";
    const auto it = labels.find(topic);
    const auto& words = it != labels.end() ? it->second : d.at("labels").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < words.size(); ++i) s << (i ? ", " : "") << words[i];
    s << '\n';
  }

  std::ifstream et(run_dir / "entity_topics.csv");
  if (et) {
    s << "\nentity  top topics\n";
    std::string line;
    std::getline(et, line);
    while (std::getline(et, line)) {
      if (line.empty()) continue;
      auto f = split(line, ',');
      std::vector<std::pair<double, int>> probs;
      for (std::size_t t = 1; t < f.size(); ++t) {
        double p = 0.0;
        parse_double(f[t], p);
        probs.emplace_back(p, static_cast<int>(t - 1));
      }
      std::stable_sort(probs.begin(), probs.end(), [](auto& a, auto& b) { return a.first > b.first; });
      s << std::setw(6) << f[0] << "  ";
      for (std::size_t i = 0; i < probs.size() && i < static_cast<std::size_t>(entity_top); ++i) {
        s << (i ? ", " : "") << "topic" << probs[i].second << " (" << std::fixed << std::setprecision(3)
          << probs[i].first << ")";
        s.unsetf(std::ios::floatfield);
      }
      s << '\n';
    }
  }
  return s.str();
}

struct Evaluation {
  std::vector<std::int64_t> entity_ids;
  Vector predictions;
  Metrics metrics;
};

// Scores every entity of `corpus` with the checkpoints stored in `run_dir`.
inline Evaluation evaluate_run(const std::filesystem::path& run_dir, const Corpus& corpus) {
  const auto report = detail::read_json(run_dir / "report.json");
  Model model{load_encoder(run_dir / "encoder.ckpt"), load_head(run_dir / "head.ckpt")};
  const double mean = report.at("price_standardization").at("mean").get<double>();
  const double std = report.at("price_standardization").at("std").get<double>();
  if (model.encoder.num_categories() != corpus.num_categories) {
    throw Error(ErrorKind::ShapeMismatch, "corpus has " + std::to_string(corpus.num_categories) +
                                              " categories, checkpoint expects " +
                                              std::to_string(model.encoder.num_categories()));
  }
  std::vector<EntityGraphs> graphs;
  Vector prices(static_cast<Eigen::Index>(corpus.size()));
  for (std::size_t n = 0; n < corpus.size(); ++n) {
    graphs.push_back(build_entity_graphs(corpus, n));
    prices[static_cast<Eigen::Index>(n)] = corpus.entities[n].price;
  }
  const PreparedData data = prepare_data(graphs, Matrix::Zero(static_cast<Eigen::Index>(corpus.size()), 1), prices);
  std::vector<std::size_t> all(corpus.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  Evaluation ev;
  ev.entity_ids = data.entity_ids;
  ev.predictions = (head_predict(model.head, embed(model.encoder, data, all)).array() * std + mean).matrix();
  ev.metrics = compute_metrics(ev.predictions, prices);
  return ev;
}

}  // namespace autoftp
