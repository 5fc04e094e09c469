#pragma once

#include "autoftp/common.hpp"
#include "autoftp/corpus.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

namespace autoftp {

// Run configuration. On disk it is an INI file:
//
//   # comment            ; comment
//   [section]
//   key = value
//
// Sections: data, synth, topics, encoder, pso, losses, eval, run. Unknown
// sections or keys are rejected so typos do not silently fall back to defaults.
struct Config {
  // [data]
  std::string data_dir;
  int num_categories = 0;  // 0 = infer from pois.csv

  // [synth]
  SynthConfig synth;

  // [topics]
  int num_topics = 16;
  int window = 4;
  int top_m = 30;
  int label_words = 3;

  // [encoder]
  int hidden = 16;
  int k = 8;
  int head_hidden = 16;
  double lr = 0.01;
  int epochs_warm = 100;
  int epochs_inner = 15;
  int epochs_final = 300;
  int epochs_head = 500;

  // [pso]
  int particles = 10;
  double inertia = 0.72;
  double c1 = 1.49;
  double c2 = 1.49;
  double vmax = 4.0;
  int patience = 10;
  double tol = 1e-4;
  int max_outer = 30;

  // [losses]
  double w_rec = 1.0;
  double w_point = 1.0;
  double w_pair = 1.0;
  double w_reg = 1.0;

  // [eval]
  double val_frac = 0.2;
  double test_frac = 0.2;

  // [run]
  std::uint64_t seed = 1;
  int threads = 1;  // 0 = hardware concurrency

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidConfig, m); };
    if (num_topics < 2) fail("topics.T must be >= 2");
    if (k < 1) fail("encoder.K must be >= 1");
    if (k > num_topics) {
      fail("encoder.K (" + std::to_string(k) + ") must not exceed topics.T (" + std::to_string(num_topics) + ")");
    }
    if (window < 2) fail("topics.window must be >= 2");
    if (top_m < 1) fail("topics.top_m must be >= 1");
    if (label_words < 1) fail("topics.label_words must be >= 1");
    if (hidden < 1 || head_hidden < 1) fail("encoder.H and encoder.head_hidden must be >= 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) fail("encoder.lr must be > 0");
    if (epochs_warm < 0 || epochs_inner < 0 || epochs_final < 0 || epochs_head < 0) fail("encoder.E_* must be >= 0");
    if (particles < 2) fail("pso.P must be >= 2");
    if (!(vmax > 0.0)) fail("pso.vmax must be > 0");
    if (patience < 1) fail("pso.patience must be >= 1");
    if (!(tol >= 0.0)) fail("pso.tol must be >= 0");
    if (max_outer < 1) fail("pso.max_outer must be >= 1");
    for (double w : {w_rec, w_point, w_pair, w_reg}) {
      if (!(w >= 0.0) || !std::isfinite(w)) fail("losses.w_* must be finite and >= 0");
    }
    if (!(val_frac > 0.0 && val_frac <= 0.5)) fail("eval.val_frac must be in (0, 0.5]");
    if (!(test_frac > 0.0 && test_frac <= 0.5)) fail("eval.test_frac must be in (0, 0.5]");
    if (threads < 0) fail("run.threads must be >= 0");
    synth.validate();
  }
};

namespace detail {

template <typename T>
T parse_value(const std::string& key, const std::string& raw) {
  std::istringstream in(raw);
  T v{};
  in >> v;
  if (in.fail() || !(in >> std::ws).eof()) throw Error(ErrorKind::InvalidConfig, key + ": cannot parse '" + raw + "'");
  return v;
}

using Setter = std::function<void(Config&, const std::string&, const std::string&)>;

template <typename T>
Setter bind(T Config::*member) {
  return [member](Config& c, const std::string& key, const std::string& raw) { c.*member = parse_value<T>(key, raw); };
}

template <typename T>
Setter bind_synth(T SynthConfig::*member) {
  return [member](Config& c, const std::string& key, const std::string& raw) {
    c.synth.*member = parse_value<T>(key, raw);
  };
}

inline const std::map<std::string, Setter>& config_setters() {
  static const std::map<std::string, Setter> setters = {
      {"data.dir", [](Config& c, const std::string&, const std::string& raw) { c.data_dir = raw; }},
      {"data.C", bind(&Config::num_categories)},
      {"synth.N", bind_synth(&SynthConfig::num_entities)},
      {"synth.C", bind_synth(&SynthConfig::num_categories)},
      {"synth.T_true", bind_synth(&SynthConfig::num_topics)},
      {"synth.V", bind_synth(&SynthConfig::vocab_size)},
      {"synth.d", bind_synth(&SynthConfig::embed_dim)},
      {"synth.doc_length", bind_synth(&SynthConfig::doc_length)},
      {"synth.pois_mean", bind_synth(&SynthConfig::pois_mean)},
      {"synth.trips_mean", bind_synth(&SynthConfig::trips_mean)},
      {"synth.topic_alpha", bind_synth(&SynthConfig::topic_alpha)},
      {"synth.anchor_scale", bind_synth(&SynthConfig::anchor_scale)},
      {"synth.word_noise", bind_synth(&SynthConfig::word_noise)},
      {"synth.extent", bind_synth(&SynthConfig::extent)},
      {"synth.topic_price_scale", bind_synth(&SynthConfig::topic_price_scale)},
      {"synth.graph_price_scale", bind_synth(&SynthConfig::graph_price_scale)},
      {"synth.price_noise", bind_synth(&SynthConfig::price_noise)},
      {"synth.price_mean", bind_synth(&SynthConfig::price_mean)},
      {"topics.T", bind(&Config::num_topics)},
      {"topics.window", bind(&Config::window)},
      {"topics.top_m", bind(&Config::top_m)},
      {"topics.label_words", bind(&Config::label_words)},
      {"encoder.H", bind(&Config::hidden)},
      {"encoder.K", bind(&Config::k)},
      {"encoder.head_hidden", bind(&Config::head_hidden)},
      {"encoder.lr", bind(&Config::lr)},
      {"encoder.E_warm", bind(&Config::epochs_warm)},
      {"encoder.E_inner", bind(&Config::epochs_inner)},
      {"encoder.E_final", bind(&Config::epochs_final)},
      {"encoder.E_head", bind(&Config::epochs_head)},
      {"pso.P", bind(&Config::particles)},
      {"pso.w", bind(&Config::inertia)},
      {"pso.c1", bind(&Config::c1)},
      {"pso.c2", bind(&Config::c2)},
      {"pso.vmax", bind(&Config::vmax)},
      {"pso.patience", bind(&Config::patience)},
      {"pso.tol", bind(&Config::tol)},
      {"pso.max_outer", bind(&Config::max_outer)},
      {"losses.w_R", bind(&Config::w_rec)},
      {"losses.w_P", bind(&Config::w_point)},
      {"losses.w_C", bind(&Config::w_pair)},
      {"losses.w_Reg", bind(&Config::w_reg)},
      {"eval.val_frac", bind(&Config::val_frac)},
      {"eval.test_frac", bind(&Config::test_frac)},
      {"run.seed", bind(&Config::seed)},
      {"run.threads", bind(&Config::threads)},
  };
  return setters;
}

}  // namespace detail

// Applies "section.key" = value; throws InvalidConfig for unknown keys.
inline void set_config_value(Config& cfg, const std::string& dotted_key, const std::string& value) {
  const auto& setters = detail::config_setters();
  auto it = setters.find(dotted_key);
  if (it == setters.end()) throw Error(ErrorKind::InvalidConfig, "unknown config key '" + dotted_key + "'");
  it->second(cfg, dotted_key, value);
}

inline Config parse_config(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorKind::InvalidConfig, e.what());
  }
  Config cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw Error(ErrorKind::InvalidConfig, "key '" + section + "' outside a section");
    for (const auto& [key, value] : body) set_config_value(cfg, section + "." + key, value.data());
  }
  return cfg;
}

// Reads and validates `path`. AUTOFTP_SEED, when set, overrides run.seed.
inline Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot open config " + path.string());
  Config cfg = parse_config(in);
  if (const char* env = std::getenv("AUTOFTP_SEED")) set_config_value(cfg, "run.seed", env);
  cfg.validate();
  return cfg;
}

// Resolved configuration for reports. run.threads is left out: it never
// changes results.
inline nlohmann::json config_to_json(const Config& c) {
  nlohmann::json j;
  j["data"] = {{"dir", c.data_dir}, {"C", c.num_categories}};
  j["synth"] = {{"N", c.synth.num_entities},
                {"C", c.synth.num_categories},
                {"T_true", c.synth.num_topics},
                {"V", c.synth.vocab_size},
                {"d", c.synth.embed_dim},
                {"doc_length", c.synth.doc_length},
                {"pois_mean", c.synth.pois_mean},
                {"trips_mean", c.synth.trips_mean},
                {"topic_alpha", c.synth.topic_alpha},
                {"anchor_scale", c.synth.anchor_scale},
                {"word_noise", c.synth.word_noise},
                {"extent", c.synth.extent},
                {"topic_price_scale", c.synth.topic_price_scale},
                {"graph_price_scale", c.synth.graph_price_scale},
                {"price_noise", c.synth.price_noise},
                {"price_mean", c.synth.price_mean}};
  j["topics"] = {{"T", c.num_topics}, {"window", c.window}, {"top_m", c.top_m}, {"label_words", c.label_words}};
  j["encoder"] = {{"H", c.hidden},           {"K", c.k},
                  {"head_hidden", c.head_hidden}, {"lr", c.lr},
                  {"E_warm", c.epochs_warm},  {"E_inner", c.epochs_inner},
                  {"E_final", c.epochs_final}, {"E_head", c.epochs_head}};
  j["pso"] = {{"P", c.particles}, {"w", c.inertia},       {"c1", c.c1},   {"c2", c.c2},
              {"vmax", c.vmax},   {"patience", c.patience}, {"tol", c.tol}, {"max_outer", c.max_outer}};
  j["losses"] = {{"w_R", c.w_rec}, {"w_P", c.w_point}, {"w_C", c.w_pair}, {"w_Reg", c.w_reg}};
  j["eval"] = {{"val_frac", c.val_frac}, {"test_frac", c.test_frac}};
  j["run"] = {{"seed", c.seed}};
  return j;
}

}  // namespace autoftp
