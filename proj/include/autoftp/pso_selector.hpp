#pragma once

#include "autoftp/alignment.hpp"
#include "autoftp/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

namespace autoftp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct PsoParams {
  double inertia = 0.72;
  double c1 = 1.49;
  double c2 = 1.49;
  double vmax = 4.0;
};

struct Particle {
  TopicMask position;
  Vector velocity;
  TopicMask pbest;
  double pbest_fitness = kInf;
  bool flagged = false;  // last reported fitness was non-finite
  Engine rng;
};

struct Swarm {
  int num_topics = 0;
  int k = 0;
  std::vector<Particle> particles;
  TopicMask gbest;
  double gbest_fitness = kInf;
  int iteration = 0;
  std::vector<double> gbest_trace;  // gbest fitness after every step
};

// Uniform K-subset from the particle's own stream.
inline TopicMask random_mask(int num_topics, int k, Engine& rng) {
  std::vector<int> idx(static_cast<std::size_t>(num_topics));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(i) + uniform_index(rng, static_cast<std::size_t>(num_topics - i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(k));
  return TopicMask::from_indices(num_topics, idx);
}

inline Swarm init_swarm(int num_particles, int num_topics, int k, std::uint64_t seed) {
  if (k < 1 || k > num_topics) {
    throw Error(ErrorKind::InvalidConfig, "need 1 <= K <= T (K=" + std::to_string(k) + ", T=" + std::to_string(num_topics) + ")");
  }
  if (num_particles < 2) throw Error(ErrorKind::InvalidConfig, "swarm needs at least 2 particles");
  Swarm s;
  s.num_topics = num_topics;
  s.k = k;
  for (int i = 0; i < num_particles; ++i) {
    Particle p;
    p.rng = make_stream(seed, 0x50534f00ULL + static_cast<std::uint64_t>(i));
    p.position = random_mask(num_topics, k, p.rng);
    p.velocity = Vector::Zero(num_topics);
    p.pbest = p.position;
    s.particles.push_back(std::move(p));
  }
  s.gbest = s.particles.front().position;
  return s;
}

// Sets the K bits with the largest probability (ties -> lower index).
inline TopicMask repair_mask(const Vector& prob, int k) {
  std::vector<int> idx(static_cast<std::size_t>(prob.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return prob[a] > prob[b]; });
  idx.resize(static_cast<std::size_t>(k));
  return TopicMask::from_indices(static_cast<int>(prob.size()), idx);
}

// Records the fitness of every particle's current position, then moves the
// swarm with sigmoid-transfer binary PSO. Non-finite fitness counts as +inf.
inline void step(Swarm& swarm, const std::vector<double>& fitnesses, const PsoParams& params = {}) {
  require_shape(fitnesses.size() == swarm.particles.size(), "one fitness per particle");
  for (std::size_t i = 0; i < swarm.particles.size(); ++i) {
    auto& p = swarm.particles[i];
    const double f = std::isfinite(fitnesses[i]) ? fitnesses[i] : kInf;
    p.flagged = !std::isfinite(fitnesses[i]);
    if (f < p.pbest_fitness) {
      p.pbest = p.position;
      p.pbest_fitness = f;
    }
    if (p.pbest_fitness < swarm.gbest_fitness) {
      swarm.gbest = p.pbest;
      swarm.gbest_fitness = p.pbest_fitness;
    }
  }
  swarm.gbest_trace.push_back(swarm.gbest_fitness);
  ++swarm.iteration;

  const int T = swarm.num_topics;
  for (auto& p : swarm.particles) {
    Vector u1(T), u2(T);
    for (int t = 0; t < T; ++t) u1[t] = uniform01(p.rng);
    for (int t = 0; t < T; ++t) u2[t] = uniform01(p.rng);
    for (int t = 0; t < T; ++t) {
      const double x = p.position.test(t) ? 1.0 : 0.0;
      const double pb = p.pbest.test(t) ? 1.0 : 0.0;
      const double gb = swarm.gbest.test(t) ? 1.0 : 0.0;
      const double v = params.inertia * p.velocity[t] + params.c1 * u1[t] * (pb - x) +
                       params.c2 * u2[t] * (gb - x);
      p.velocity[t] = std::clamp(v, -params.vmax, params.vmax);
    }
    const Vector prob = (1.0 / (1.0 + (-p.velocity.array()).exp())).matrix();
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(T));
    int ones = 0;
    for (int t = 0; t < T; ++t) {
      bits[static_cast<std::size_t>(t)] = uniform01(p.rng) < prob[t] ? 1 : 0;
      ones += bits[static_cast<std::size_t>(t)];
    }
    p.position = ones == swarm.k ? TopicMask(std::move(bits)) : repair_mask(prob, swarm.k);
  }
}

// True iff gbest improved by less than `tol` over the last `patience` steps.
inline bool converged(const Swarm& swarm, int patience, double tol) {
  const auto& tr = swarm.gbest_trace;
  if (patience < 1 || tr.size() <= static_cast<std::size_t>(patience)) return false;
  const double improvement = tr[tr.size() - 1 - static_cast<std::size_t>(patience)] - tr.back();
  return improvement < tol;
}

}  // namespace autoftp
