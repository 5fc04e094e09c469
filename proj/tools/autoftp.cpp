// autoftp command-line driver.
//
//   autoftp synth       --out DIR [--config FILE] [--seed S]
//   autoftp train       --data DIR --out DIR [--config FILE] [--variant V|all]
//   autoftp ablate      --data DIR --out DIR [--config FILE]
//   autoftp evaluate    --run-dir DIR --data DIR [--out FILE]
//   autoftp pair-report --run-dir DIR [--top N]
//
// Exit codes: 0 ok, 1 bad input data, 2 bad config, 3 numeric failure,
// 4 missing artifact.

#include "autoftp/config.hpp"
#include "autoftp/corpus.hpp"
#include "autoftp/embeddings.hpp"
#include "autoftp/report.hpp"
#include "autoftp/spatial_graphs.hpp"
#include "autoftp/trainer.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace autoftp;

namespace {

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::UnknownVariant: return 2;
    case ErrorKind::NonFiniteLoss:
    case ErrorKind::NonFiniteGradient: return 3;
    case ErrorKind::MissingArtifact:
    case ErrorKind::MissingFile: return 4;
    default: return 1;
  }
}

struct ConfigFlags {
  std::string path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<int> k;
  std::vector<std::string> overrides;  // section.key=value

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", path, "INI config file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "override run.seed");
    cmd->add_option("--threads", threads, "override run.threads (0 = all cores)");
    cmd->add_option("--K", k, "override encoder.K");
    cmd->add_option("--set", overrides, "override any key, e.g. --set pso.P=20");
  }

  // File, then AUTOFTP_SEED, then flags.
  Config resolve() const {
    Config cfg;
    if (!path.empty()) {
      std::ifstream in(path);
      if (!in) throw Error(ErrorKind::InvalidConfig, "cannot open config " + path);
      cfg = parse_config(in);
    }
    if (const char* env = std::getenv("AUTOFTP_SEED")) set_config_value(cfg, "run.seed", env);
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw Error(ErrorKind::InvalidConfig, "--set expects key=value, got '" + o + "'");
      set_config_value(cfg, o.substr(0, eq), o.substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    if (k) cfg.k = *k;
    cfg.validate();
    return cfg;
  }
};

struct DataSet {
  Corpus corpus;
  EmbeddingProvider provider;
};

DataSet load_data(const Config& cfg, const std::string& data_flag, const std::string& emb_flag) {
  const fs::path dir = data_flag.empty() ? fs::path(cfg.data_dir) : fs::path(data_flag);
  if (dir.empty()) throw Error(ErrorKind::InvalidConfig, "no data directory (--data or data.dir)");
  const fs::path emb = emb_flag.empty() ? dir / "embeddings.vec" : fs::path(emb_flag);
  return {load_corpus(dir, cfg.num_categories), read_embeddings(emb)};
}

void dump_graphs(const fs::path& out, const Corpus& corpus) {
  fs::create_directories(out / "graphs");
  for (std::size_t n = 0; n < corpus.size(); ++n) {
    std::ofstream f(out / "graphs" / (std::to_string(corpus.entities[n].entity_id) + ".json"));
    f << graphs_to_json(build_entity_graphs(corpus, n)).dump() << '\n';
  }
}

// Trains one variant into `out`. The PSO trace is appended as it grows so a
// numeric failure leaves a partial trace behind.
PairingResult train_one(const DataSet& ds, const Config& cfg, Variant v, const fs::path& out) {
  fs::create_directories(out);
  const fs::path trace_path = out / "pso_trace.jsonl";
  std::ofstream trace(trace_path, std::ios::binary);
  try {
    auto res = run(ds.corpus, ds.provider, cfg, v, [&](const OuterRecord& rec) {
      trace << outer_record_json(rec).dump() << '\n';
      trace.flush();
    });
    trace.close();
    write_run(out, res, cfg);
    return res;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::NonFiniteLoss || e.kind() == ErrorKind::NonFiniteGradient) {
      std::cerr << "partial trace: " << trace_path.string() << '\n';
    }
    throw;
  }
}

int cmd_synth(const ConfigFlags& flags, const std::string& out) {
  const Config cfg = flags.resolve();
  const SynthWorld world = generate_synthetic(cfg.synth, cfg.seed);
  write_synthetic(out, world);
  std::cout << "wrote " << world.corpus.size() << " entities, " << world.corpus.pois.size() << " POIs, "
            << world.corpus.trips.size() << " trips to " << out << '\n';
  return 0;
}

int cmd_train(const ConfigFlags& flags, const std::string& data, const std::string& emb, const std::string& variant,
              const std::string& out, bool graphs) {
  const Config cfg = flags.resolve();
  std::vector<Variant> variants;
  if (variant == "all") {
    variants = all_variants();
  } else {
    variants.push_back(parse_variant(variant));
  }
  const DataSet ds = load_data(cfg, data, emb);
  if (graphs) dump_graphs(out, ds.corpus);

  std::vector<VariantMetrics> rows;
  for (auto v : variants) {
    const fs::path dir = variants.size() == 1 ? fs::path(out) : fs::path(out) / to_string(v);
    std::cerr << "training " << to_string(v) << " -> " << dir.string() << '\n';
    const auto res = train_one(ds, cfg, v, dir);
    rows.push_back({to_string(v), res.test_metrics});
  }
  if (rows.size() > 1) write_comparison(fs::path(out) / "comparison.csv", rows);
  std::cout << comparison_table(rows);
  return 0;
}

int cmd_evaluate(const std::string& run_dir, const std::string& data, const std::string& out) {
  const Corpus corpus = load_corpus(data);
  const Evaluation ev = evaluate_run(run_dir, corpus);
  std::cout << comparison_table({{"eval", ev.metrics}});
  if (!out.empty()) {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw Error(ErrorKind::MissingFile, "cannot write " + out);
    f << "entity_id,prediction,price\n";
    for (std::size_t n = 0; n < ev.entity_ids.size(); ++n) {
      f << ev.entity_ids[n] << ',' << format_double(ev.predictions[static_cast<Eigen::Index>(n)]) << ','
        << format_double(corpus.entities[n].price) << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topic-feature pairing for spatial entity embeddings"};
  app.require_subcommand(1);

  ConfigFlags synth_flags, train_flags, ablate_flags;
  std::string out, data, emb, variant = "full", run_dir;
  bool graphs = false;
  int top = 3;

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth_flags.attach(synth);
  synth->add_option("--out", out, "output corpus directory")->required();

  auto* train = app.add_subcommand("train", "train one variant (or all) and write a run directory");
  train_flags.attach(train);
  train->add_option("--data", data, "corpus directory (default data.dir)");
  train->add_option("--embeddings", emb, "word vectors (default <data>/embeddings.vec)");
  train->add_option("--variant", variant, "R, R+P, R+C, R+P+C, full or all");
  train->add_option("--out", out, "run directory")->required();
  train->add_flag("--dump-graphs", graphs, "write per-entity graphs to <out>/graphs");

  auto* ablate = app.add_subcommand("ablate", "train all five variants and compare");
  ablate_flags.attach(ablate);
  ablate->add_option("--data", data, "corpus directory (default data.dir)");
  ablate->add_option("--embeddings", emb, "word vectors (default <data>/embeddings.vec)");
  ablate->add_option("--out", out, "output directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "score a trained run on a corpus");
  evaluate->add_option("--run-dir", run_dir, "run directory")->required();
  evaluate->add_option("--data", data, "corpus directory")->required();
  evaluate->add_option("--out", out, "predictions CSV");

  auto* pair = app.add_subcommand("pair-report", "print the dimension-topic pairing");
  pair->add_option("--run-dir", run_dir, "run directory")->required();
  pair->add_option("--top", top, "topics listed per entity")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*synth) return cmd_synth(synth_flags, out);
    if (*train) return cmd_train(train_flags, data, emb, variant, out, graphs);
    if (*ablate) return cmd_train(ablate_flags, data, emb, "all", out, false);
    if (*evaluate) return cmd_evaluate(run_dir, data, out);
    if (*pair) {
      std::cout << pair_report(run_dir, top);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
