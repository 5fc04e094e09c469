#pragma once

#include "autoftp/common.hpp"
#include "autoftp/corpus.hpp"
#include "autoftp/model.hpp"
#include "autoftp/spatial_graphs.hpp"

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace support {

using autoftp::Matrix;
using autoftp::Vector;

// Fresh, empty scratch directory.
inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() /
           ("autoftp_" + name + "_" + std::to_string(static_cast<long>(::getpid())));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, autoftp::Engine& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = autoftp::uniform(rng, lo, hi);
  return m;
}

// Symmetric, zero diagonal, entries in [0, 1].
inline Matrix random_graph(Eigen::Index c, autoftp::Engine& rng) {
  Matrix a = Matrix::Zero(c, c);
  for (Eigen::Index i = 0; i < c; ++i)
    for (Eigen::Index j = i + 1; j < c; ++j) a(i, j) = a(j, i) = autoftp::uniform01(rng);
  return a;
}

// In-memory data for the composite loss: n entities over c categories with t
// topics. Prices are standardized over all entities.
inline autoftp::PreparedData random_data(int n, int c, int t, std::uint64_t seed) {
  autoftp::Engine rng = autoftp::make_stream(seed, 99);
  std::vector<autoftp::EntityGraphs> graphs;
  Matrix topics(n, t);
  Vector prices(n);
  for (int i = 0; i < n; ++i) {
    autoftp::EntityGraphs g;
    g.entity_id = i;
    g.distance = random_graph(c, rng);
    g.mobility = random_graph(c, rng);
    g.present.assign(static_cast<std::size_t>(c), true);
    if (c > 2) g.present[static_cast<std::size_t>(i % c)] = false;
    graphs.push_back(g);
    topics.row(i) = autoftp::dirichlet(rng, Vector::Constant(t, 1.0)).transpose();
    prices[i] = autoftp::uniform(rng, 20.0, 100.0);
  }
  auto data = autoftp::prepare_data(graphs, topics, prices);
  std::vector<std::size_t> all(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i);
  autoftp::standardize_prices(data, all);
  return data;
}

inline std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

// Visits every scalar parameter of a model (encoder then head).
template <typename Fn>
void for_each_param(autoftp::Model& m, Fn&& fn) {
  for (Eigen::Index i = 0; i < m.encoder.w1.size(); ++i) fn("w1", m.encoder.w1.data()[i]);
  for (Eigen::Index i = 0; i < m.encoder.w2.size(); ++i) fn("w2", m.encoder.w2.data()[i]);
  for (Eigen::Index i = 0; i < m.head.v1.size(); ++i) fn("v1", m.head.v1.data()[i]);
  for (Eigen::Index i = 0; i < m.head.b1.size(); ++i) fn("b1", m.head.b1.data()[i]);
  for (Eigen::Index i = 0; i < m.head.v2.size(); ++i) fn("v2", m.head.v2.data()[i]);
  fn("b2", m.head.b2);
}

// Largest relative error between the analytic composite gradient and central
// differences with step h.
inline double composite_fd_error(const autoftp::Model& model, const autoftp::PreparedData& data,
                                 const std::vector<std::size_t>& batch, const autoftp::TopicMask* mask,
                                 const autoftp::LossSpec& spec, double h = 1e-5) {
  autoftp::Model grad = autoftp::Model::zeros_like(model);
  autoftp::composite_loss(model, data, batch, mask, spec, &grad);
  std::vector<double> analytic;
  for_each_param(grad, [&](const char*, double& g) { analytic.push_back(g); });

  autoftp::Model probe = model;
  std::size_t k = 0;
  double worst = 0.0;
  for_each_param(probe, [&](const char*, double& p) {
    const double orig = p;
    p = orig + h;
    const double up = autoftp::composite_loss(probe, data, batch, mask, spec).total;
    p = orig - h;
    const double down = autoftp::composite_loss(probe, data, batch, mask, spec).total;
    p = orig;
    worst = std::max(worst, rel_err(analytic[k++], (up - down) / (2.0 * h)));
  });
  return worst;
}

inline autoftp::SynthConfig small_synth() {
  autoftp::SynthConfig s;
  s.num_entities = 40;
  s.num_categories = 6;
  s.num_topics = 4;
  s.vocab_size = 120;
  s.doc_length = 40;
  s.pois_mean = 12;
  s.trips_mean = 20;
  return s;
}

}  // namespace support
