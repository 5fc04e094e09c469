#pragma once

#include "autoftp/common.hpp"
#include "autoftp/corpus.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <span>
#include <unordered_map>
#include <vector>

namespace autoftp {

// Per-entity category graphs. Node c is POI category c for every entity.
struct EntityGraphs {
  std::int64_t entity_id = -1;
  Matrix distance;   // C x C affinity in [0, 1]
  Matrix mobility;   // C x C trip flow in [0, 1]
  std::vector<bool> present;
};

namespace detail {

// Min-max over all C*C entries; left alone when constant.
inline void min_max_scale(Matrix& m) {
  const double lo = m.minCoeff(), hi = m.maxCoeff();
  if (hi > lo) m = ((m.array() - lo) / (hi - lo)).matrix();
}

}  // namespace detail

// Gaussian affinity of the mean inter-category distance. The bandwidth is the
// median of this entity's finite category-pair distances (1 when fewer than
// two pairs exist).
inline Matrix build_distance_graph(std::span<const PoiRecord> pois, int num_categories) {
  if (pois.empty()) throw Error(ErrorKind::NoPois, "distance graph needs at least one POI");
  const Eigen::Index C = num_categories;
  Matrix sum = Matrix::Zero(C, C), count = Matrix::Zero(C, C);
  for (std::size_t a = 0; a < pois.size(); ++a) {
    for (std::size_t b = a + 1; b < pois.size(); ++b) {
      const int i = pois[a].category_id, j = pois[b].category_id;
      if (i == j) continue;
      if (i >= C || j >= C) throw Error(ErrorKind::ShapeMismatch, "category id out of range");
      const double dist = std::hypot(pois[a].x - pois[b].x, pois[a].y - pois[b].y);
      sum(i, j) += dist;
      sum(j, i) += dist;
      count(i, j) += 1.0;
      count(j, i) += 1.0;
    }
  }

  std::vector<double> finite;
  for (Eigen::Index i = 0; i < C; ++i)
    for (Eigen::Index j = i + 1; j < C; ++j)
      if (count(i, j) > 0.0) finite.push_back(sum(i, j) / count(i, j));

  double sigma = 1.0;
  if (finite.size() >= 2) {
    std::vector<double> sorted = finite;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    sigma = (m % 2 == 1) ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
    if (!(sigma > 0.0)) sigma = 1.0;
  }

  Matrix a = Matrix::Zero(C, C);
  for (Eigen::Index i = 0; i < C; ++i) {
    for (Eigen::Index j = i + 1; j < C; ++j) {
      if (count(i, j) == 0.0) continue;
      const double ratio = (sum(i, j) / count(i, j)) / sigma;
      a(i, j) = a(j, i) = std::exp(-ratio * ratio);
    }
  }
  detail::min_max_scale(a);
  return a;
}

// Undirected trip counts between endpoint categories, zero diagonal, scaled to
// [0, 1].
inline Matrix build_mobility_graph(std::span<const TripRecord> trips, std::span<const PoiRecord> pois,
                                   int num_categories) {
  const Eigen::Index C = num_categories;
  std::unordered_map<std::int64_t, int> category_of;
  for (const auto& p : pois) category_of.emplace(p.poi_id, p.category_id);

  Matrix f = Matrix::Zero(C, C);
  for (const auto& t : trips) {
    auto o = category_of.find(t.origin_poi_id), d = category_of.find(t.dest_poi_id);
    if (o == category_of.end() || d == category_of.end()) {
      throw Error(ErrorKind::DanglingReference, "trip endpoint not among entity POIs", t.trip_id);
    }
    if (o->second == d->second) continue;
    f(o->second, d->second) += 1.0;
    f(d->second, o->second) += 1.0;
  }
  detail::min_max_scale(f);
  return f;
}

// D^{-1/2} (A + I) D^{-1/2} with D the row sums of A + I.
inline Matrix normalize_adjacency(const Matrix& a) {
  require_shape(a.rows() == a.cols(), "adjacency must be square");
  Matrix with_loops = a + Matrix::Identity(a.rows(), a.cols());
  const Vector inv_sqrt = with_loops.rowwise().sum().cwiseSqrt().cwiseInverse();
  return inv_sqrt.asDiagonal() * with_loops * inv_sqrt.asDiagonal();
}

inline EntityGraphs build_entity_graphs(const Corpus& corpus, std::size_t n) {
  const auto pois = corpus.entity_pois(n);
  const auto trips = corpus.entity_trips(n);
  EntityGraphs g;
  g.entity_id = corpus.entities[n].entity_id;
  g.distance = build_distance_graph(pois, corpus.num_categories);
  g.mobility = build_mobility_graph(trips, pois, corpus.num_categories);
  g.present.assign(static_cast<std::size_t>(corpus.num_categories), false);
  for (const auto& p : pois) g.present[static_cast<std::size_t>(p.category_id)] = true;
  return g;
}

inline nlohmann::json graphs_to_json(const EntityGraphs& g) {
  auto mat = [](const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      std::vector<double> row(m.cols());
      for (Eigen::Index j = 0; j < m.cols(); ++j) row[j] = m(i, j);
      rows.push_back(row);
    }
    return rows;
  };
  nlohmann::json j;
  j["entity_id"] = g.entity_id;
  j["distance"] = mat(g.distance);
  j["mobility"] = mat(g.mobility);
  std::vector<int> present(g.present.begin(), g.present.end());
  j["present"] = present;
  return j;
}

}  // namespace autoftp
