#pragma once

// Evolution strategies: Gaussian parameter perturbations, centered-rank
// fitness shaping, antithetic sampling, plain gradient ascent on the mean.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hzdrl/env.hpp"
#include "hzdrl/parallel.hpp"

namespace hzdrl {

struct EsConfig {
  int population = 32;
  double sigma = 0.05;
  double learning_rate = 0.02;
  int iterations = 300;
  bool antithetic = true;
  std::uint64_t seed = 0;
  int workers = 1;
  double budget_seconds = 0.0;  // 0 = no wall-clock limit

  void validate() const {
    if (population < 1) throw std::invalid_argument("es.population must be >= 1");
    if (antithetic && population % 2 != 0) throw std::invalid_argument("es.population must be even when antithetic");
    if (!(sigma > 0.0)) throw std::invalid_argument("es.sigma must be > 0");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("es.learning_rate must be > 0");
    if (iterations < 0) throw std::invalid_argument("es.iterations must be >= 0");
    if (workers < 1) throw std::invalid_argument("es.workers must be >= 1");
    if (budget_seconds < 0.0) throw std::invalid_argument("es.budget_seconds must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const EsConfig& c) {
  j = {{"population", c.population}, {"sigma", c.sigma},     {"learning_rate", c.learning_rate},
       {"iterations", c.iterations}, {"antithetic", c.antithetic}, {"budget_seconds", c.budget_seconds}};
}

inline void from_json(const nlohmann::json& j, EsConfig& c) {
  c.population = j.value("population", c.population);
  c.sigma = j.value("sigma", c.sigma);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.iterations = j.value("iterations", c.iterations);
  c.antithetic = j.value("antithetic", c.antithetic);
  c.budget_seconds = j.value("budget_seconds", c.budget_seconds);
}

/// One row of a training trace. wall_seconds is informational only.
struct TraceRow {
  int iteration = 0;
  double mean_return = 0.0;
  double best_return = 0.0;
  double wall_seconds = 0.0;
};

/// Ranks mapped linearly onto [-0.5, 0.5]; tied values share their mean
/// rank, so equal fitness always gets equal weight.
inline Eigen::VectorXd centered_ranks(const Eigen::VectorXd& f) {
  const Eigen::Index n = f.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  if (n < 2) return out;
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return f[a] < f[b]; });
  for (Eigen::Index lo = 0; lo < n;) {
    Eigen::Index hi = lo + 1;
    while (hi < n && f[idx[hi]] == f[idx[lo]]) ++hi;
    const double rank = 0.5 * static_cast<double>(lo + hi - 1);
    for (Eigen::Index r = lo; r < hi; ++r) out[idx[r]] = rank / static_cast<double>(n - 1) - 0.5;
    lo = hi;
  }
  return out;
}

/// Deterministic stream seed for (run seed, iteration, slot).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

/// Perturbation directions for one iteration: N standard normal vectors,
/// arranged as (+xi, -xi) pairs when antithetic.
inline std::vector<Eigen::VectorXd> es_noise(const EsConfig& cfg, int iteration, Eigen::Index dim) {
  std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(iteration), 1));
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Eigen::VectorXd> xi(cfg.population);
  const int draws = cfg.antithetic ? cfg.population / 2 : cfg.population;
  for (int i = 0; i < draws; ++i) {
    Eigen::VectorXd v(dim);
    for (Eigen::Index k = 0; k < dim; ++k) v[k] = n(rng);
    if (cfg.antithetic) {
      xi[2 * i] = v;
      xi[2 * i + 1] = -v;
    } else {
      xi[i] = v;
    }
  }
  return xi;
}

/// Gradient-ascent step from shaped fitness: lr / (N sigma) * sum F_i xi_i.
inline Eigen::VectorXd es_update(const std::vector<Eigen::VectorXd>& xi, const Eigen::VectorXd& shaped,
                                 const EsConfig& cfg) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(xi.front().size());
  for (std::size_t i = 0; i < xi.size(); ++i) g += shaped[static_cast<Eigen::Index>(i)] * xi[i];
  return cfg.learning_rate / (static_cast<double>(xi.size()) * cfg.sigma) * g;
}

struct EsResult {
  Eigen::VectorXd theta;
  std::vector<TraceRow> trace;
  bool stopped_by_budget = false;
};

/// Maximizes fitness(theta, episode_seed). Every sample in an iteration
/// shares the same episode seed. The trace row for iteration k describes
/// the population evaluated around the k-th mean.
template <typename Fitness>
EsResult es_optimize(Eigen::VectorXd theta, const EsConfig& cfg, const Fitness& fitness,
                     const std::function<void(const TraceRow&)>& on_iteration = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  EsResult res;
  for (int it = 0; it < cfg.iterations; ++it) {
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (cfg.budget_seconds > 0.0 && elapsed > cfg.budget_seconds) {
      res.stopped_by_budget = true;
      break;
    }
    const std::vector<Eigen::VectorXd> xi = es_noise(cfg, it, theta.size());
    const std::uint64_t episode_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(it), 2);
    const std::vector<double> f = parallel_map<double>(xi.size(), cfg.workers, [&](std::size_t i) {
      return static_cast<double>(fitness(Eigen::VectorXd(theta + cfg.sigma * xi[i]), episode_seed));
    });
    const Eigen::VectorXd fv = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
    theta += es_update(xi, centered_ranks(fv), cfg);

    TraceRow row;
    row.iteration = it;
    row.mean_return = fv.mean();
    row.best_return = fv.maxCoeff();
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.trace.push_back(row);
    if (on_iteration) on_iteration(row);
  }
  res.theta = std::move(theta);
  return res;
}

// ---------------------------------------------------------------------------
// Walking policy training

/// Final-layer biases set so the policy outputs `reference` at any input;
/// hidden and output weights are small random values.
inline void warm_start(PolicyParams& policy, const StepCommand& reference, std::uint64_t seed,
                       double weight_scale = 0.1) {
  std::mt19937_64 rng(seed);
  policy.net.randomize(rng, weight_scale);
  Eigen::VectorXd y(policy.n_out());
  y.head<kNumFreeCoeffs>() = extract_free_params(reference.coeffs);
  if (policy.outputs_kd()) y[kNumFreeCoeffs] = reference.kd;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const Interval& b = policy.output_bounds[static_cast<std::size_t>(i)];
    const double margin = 1e-3 * b.width();
    y[i] = std::clamp(y[i], b.lo + margin, b.hi - margin);
  }
  const std::size_t last = policy.net.num_layers() - 1;
  policy.net.bias(last) = policy.unsquash(y);
  policy.net.weight(last) *= 0.1;
}

struct TrainResult {
  PolicyParams policy;
  std::vector<TraceRow> trace;
  bool stopped_by_budget = false;
};

/// ES on the walking task. Fitness is the undiscounted episode reward.
inline TrainResult es_train(const PolicyParams& init, const EsConfig& cfg, const SimConfig& sim,
                            const EpisodeConfig& ep, const std::function<void(const TraceRow&)>& on_iteration = {}) {
  auto fitness = [&](const Eigen::VectorXd& theta, std::uint64_t seed) {
    PolicyParams p = init;
    p.unflatten(theta);
    return rollout(MlpGaitSource{&p, sim.bounds}, sim, ep, seed).total_reward;
  };
  EsResult r = es_optimize(init.flatten(), cfg, fitness, on_iteration);
  TrainResult out;
  out.policy = init;
  out.policy.unflatten(r.theta);
  out.trace = std::move(r.trace);
  out.stopped_by_budget = r.stopped_by_budget;
  return out;
}

inline void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << "iteration,mean_return,best_return,wall_seconds\n";
  char buf[160];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.3f\n", r.iteration, r.mean_return, r.best_return, r.wall_seconds);
    f << buf;
  }
  if (!f) throw std::runtime_error("failed writing " + path);
}

}  // namespace hzdrl
