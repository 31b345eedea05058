#pragma once

// Proximal policy optimization with a clipped surrogate, GAE advantages and
// a separate value network. Exploration is Gaussian noise on the policy's
// pre-logistic outputs with a learned, state-independent log-std, so every
// sampled action stays inside the output bounds.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "hzdrl/es.hpp"

namespace hzdrl {

struct PpoConfig {
  double clip_epsilon = 0.2;
  double gae_lambda = 0.95;
  double gamma = 0.99;  // per decision
  std::vector<int> value_hidden{32, 32};
  int epochs = 4;
  int minibatch = 64;
  int episodes_per_batch = 16;
  int iterations = 100;
  double policy_lr = 3e-4;
  double value_lr = 1e-3;
  double initial_log_std = -1.0;
  bool normalize_advantages = true;
  std::uint64_t seed = 0;
  int workers = 1;
  double budget_seconds = 0.0;

  void validate() const {
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw std::invalid_argument("ppo.clip_epsilon must be in (0, 1)");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw std::invalid_argument("ppo.gae_lambda must be in [0, 1]");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("ppo.gamma must be in (0, 1]");
    for (int h : value_hidden)
      if (h <= 0) throw std::invalid_argument("ppo.value_hidden sizes must be positive");
    if (epochs < 1) throw std::invalid_argument("ppo.epochs must be >= 1");
    if (minibatch < 1) throw std::invalid_argument("ppo.minibatch must be >= 1");
    if (episodes_per_batch < 1) throw std::invalid_argument("ppo.episodes_per_batch must be >= 1");
    if (iterations < 0) throw std::invalid_argument("ppo.iterations must be >= 0");
    if (!(policy_lr > 0.0) || !(value_lr > 0.0)) throw std::invalid_argument("ppo learning rates must be > 0");
    if (workers < 1) throw std::invalid_argument("ppo.workers must be >= 1");
    if (budget_seconds < 0.0) throw std::invalid_argument("ppo.budget_seconds must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const PpoConfig& c) {
  j = {{"clip_epsilon", c.clip_epsilon},
       {"gae_lambda", c.gae_lambda},
       {"gamma", c.gamma},
       {"value_hidden", c.value_hidden},
       {"epochs", c.epochs},
       {"minibatch", c.minibatch},
       {"episodes_per_batch", c.episodes_per_batch},
       {"iterations", c.iterations},
       {"policy_lr", c.policy_lr},
       {"value_lr", c.value_lr},
       {"initial_log_std", c.initial_log_std},
       {"normalize_advantages", c.normalize_advantages},
       {"budget_seconds", c.budget_seconds}};
}

inline void from_json(const nlohmann::json& j, PpoConfig& c) {
  c.clip_epsilon = j.value("clip_epsilon", c.clip_epsilon);
  c.gae_lambda = j.value("gae_lambda", c.gae_lambda);
  c.gamma = j.value("gamma", c.gamma);
  c.value_hidden = j.value("value_hidden", c.value_hidden);
  c.epochs = j.value("epochs", c.epochs);
  c.minibatch = j.value("minibatch", c.minibatch);
  c.episodes_per_batch = j.value("episodes_per_batch", c.episodes_per_batch);
  c.iterations = j.value("iterations", c.iterations);
  c.policy_lr = j.value("policy_lr", c.policy_lr);
  c.value_lr = j.value("value_lr", c.value_lr);
  c.initial_log_std = j.value("initial_log_std", c.initial_log_std);
  c.normalize_advantages = j.value("normalize_advantages", c.normalize_advantages);
  c.budget_seconds = j.value("budget_seconds", c.budget_seconds);
}

// ---------------------------------------------------------------------------
// Estimators and losses

/// A_t = sum_l (gamma lambda)^l delta_{t+l}, delta_t = r_t + gamma V_{t+1} - V_t.
/// `values` carries one bootstrap entry past the last reward.
inline std::vector<double> gae_advantages(const std::vector<double>& rewards, const std::vector<double>& values,
                                          double gamma, double lambda) {
  if (values.size() != rewards.size() + 1)
    throw std::invalid_argument("gae_advantages: values must have length rewards + 1");
  std::vector<double> adv(rewards.size());
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    const double delta = rewards[t] + gamma * values[t + 1] - values[t];
    acc = delta + gamma * lambda * acc;
    adv[t] = acc;
  }
  return adv;
}

inline double ppo_clip_loss(double ratio, double advantage, double epsilon) {
  if (!(ratio > 0.0)) throw std::invalid_argument("probability ratio must be > 0");
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

inline double ppo_clip_loss(const std::vector<double>& ratios, const std::vector<double>& advantages,
                            double epsilon) {
  if (ratios.size() != advantages.size() || ratios.empty())
    throw std::invalid_argument("ppo_clip_loss: ratios and advantages must be non-empty and equal length");
  double s = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) s += ppo_clip_loss(ratios[i], advantages[i], epsilon);
  return s / static_cast<double>(ratios.size());
}

/// Diagonal Gaussian log-density of z with mean mu and log-std s.
inline double gaussian_log_prob(const Eigen::VectorXd& z, const Eigen::VectorXd& mu, const Eigen::VectorXd& log_std) {
  constexpr double kLog2Pi = 1.8378770664093453;
  const Eigen::ArrayXd w = (z - mu).array() / log_std.array().exp();
  return -0.5 * w.square().sum() - log_std.sum() - 0.5 * kLog2Pi * static_cast<double>(z.size());
}

// ---------------------------------------------------------------------------
// Agent

struct PpoAgent {
  PolicyParams policy;  // mean of the pre-logistic outputs
  Eigen::VectorXd log_std;
  Mlp value;
};

inline PpoAgent make_ppo_agent(const PolicyParams& policy, const PpoConfig& cfg, std::uint64_t seed) {
  PpoAgent a;
  a.policy = policy;
  a.log_std = Eigen::VectorXd::Constant(policy.n_out(), cfg.initial_log_std);
  std::vector<int> sizes{policy.net.inputs()};
  sizes.insert(sizes.end(), cfg.value_hidden.begin(), cfg.value_hidden.end());
  sizes.push_back(1);
  a.value = Mlp(sizes);
  std::mt19937_64 rng(seed);
  a.value.randomize(rng, 1.0);
  return a;
}

struct PpoSample {
  Eigen::VectorXd obs;
  Eigen::VectorXd z;  // sampled pre-logistic action
  double log_prob_old = 0.0;
  double advantage = 0.0;
  double value_target = 0.0;
};

/// Mean clipped surrogate over `batch` (to be maximized) and its gradient
/// with respect to the mean network's parameters and the log-std.
inline double ppo_surrogate(const PolicyParams& policy, const Eigen::VectorXd& log_std,
                            const std::vector<PpoSample>& batch, double epsilon, Eigen::VectorXd* grad_net = nullptr,
                            Eigen::VectorXd* grad_log_std = nullptr) {
  if (batch.empty()) throw std::invalid_argument("ppo_surrogate: empty batch");
  if (grad_net) *grad_net = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(policy.param_count()));
  if (grad_log_std) *grad_log_std = Eigen::VectorXd::Zero(log_std.size());
  const Eigen::ArrayXd inv_var = (-2.0 * log_std.array()).exp();
  const double n = static_cast<double>(batch.size());
  double total = 0.0;
  Mlp::Tape tape;
  for (const auto& s : batch) {
    const Eigen::VectorXd mu = policy.net.forward(s.obs, tape);
    const double ratio = std::exp(gaussian_log_prob(s.z, mu, log_std) - s.log_prob_old);
    const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
    const double unclipped_term = ratio * s.advantage;
    const double clipped_term = clipped * s.advantage;
    total += std::min(unclipped_term, clipped_term);
    // The min picks the unclipped branch exactly when it is not larger.
    if (unclipped_term <= clipped_term && (grad_net || grad_log_std)) {
      const double c = ratio * s.advantage / n;  // d term / d log_prob
      const Eigen::ArrayXd diff = (s.z - mu).array();
      if (grad_net) policy.net.backward(tape, Eigen::VectorXd(c * diff * inv_var), *grad_net);
      if (grad_log_std) *grad_log_std += Eigen::VectorXd(c * (diff.square() * inv_var - 1.0));
    }
  }
  return total / n;
}

/// Vanilla policy-gradient estimate: mean of A * grad log pi.
inline void policy_gradient(const PolicyParams& policy, const Eigen::VectorXd& log_std,
                            const std::vector<PpoSample>& batch, Eigen::VectorXd& grad_net,
                            Eigen::VectorXd& grad_log_std) {
  grad_net = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(policy.param_count()));
  grad_log_std = Eigen::VectorXd::Zero(log_std.size());
  const Eigen::ArrayXd inv_var = (-2.0 * log_std.array()).exp();
  const double n = static_cast<double>(batch.size());
  Mlp::Tape tape;
  for (const auto& s : batch) {
    const Eigen::VectorXd mu = policy.net.forward(s.obs, tape);
    const Eigen::ArrayXd diff = (s.z - mu).array();
    const double c = s.advantage / n;
    policy.net.backward(tape, Eigen::VectorXd(c * diff * inv_var), grad_net);
    grad_log_std += Eigen::VectorXd(c * (diff.square() * inv_var - 1.0));
  }
}

/// Mean of 0.5 (V(obs) - target)^2 and its gradient.
inline double value_loss(const Mlp& value, const std::vector<PpoSample>& batch, Eigen::VectorXd* grad = nullptr) {
  if (batch.empty()) throw std::invalid_argument("value_loss: empty batch");
  if (grad) *grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(value.param_count()));
  const double n = static_cast<double>(batch.size());
  double total = 0.0;
  Mlp::Tape tape;
  for (const auto& s : batch) {
    const double err = value.forward(s.obs, tape)[0] - s.value_target;
    total += 0.5 * err * err;
    if (grad) value.backward(tape, Eigen::VectorXd::Constant(1, err / n), *grad);
  }
  return total / n;
}

/// Adam on a flat parameter vector (descent direction = +grad).
struct Adam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Eigen::VectorXd m, v;
  int t = 0;

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    if (m.size() != params.size()) {
      m = Eigen::VectorXd::Zero(params.size());
      v = Eigen::VectorXd::Zero(params.size());
    }
    ++t;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1, t), c2 = 1.0 - std::pow(beta2, t);
    params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

// ---------------------------------------------------------------------------
// Environments and training loop

/// Result of one decision in a PPO environment.
struct PpoEnvStep {
  double reward = 0.0;
  bool done = false;
  Eigen::VectorXd obs;
};

/// Walking task as a PPO environment: one decision per walking step; the
/// decision's reward is the sum of its simulation-step rewards.
class WalkingPpoEnv {
 public:
  WalkingPpoEnv(const PolicyParams& policy, SimConfig sim, EpisodeConfig ep)
      : learns_kd_(policy.outputs_kd()), fixed_kd_(policy.fixed_kd), env_(sim, ep), bounds_(sim.bounds) {}

  Eigen::VectorXd reset(std::uint64_t seed) { return env_.reset(seed).vector(); }

  PpoEnvStep step(const Eigen::VectorXd& y) {
    const FreeCoeffs free = y.head<kNumFreeCoeffs>();
    const double kd = learns_kd_ ? y[kNumFreeCoeffs] : fixed_kd_;
    const WalkingStepResult r = env_.step({expand_free_params(free, bounds_), kd});
    return {r.reward, r.done, r.next.vector()};
  }

 private:
  bool learns_kd_;
  double fixed_kd_;
  WalkingEnv env_;
  GaitBounds bounds_;
};

struct PpoEpisode {
  std::vector<Eigen::VectorXd> obs;  // one past the last decision
  std::vector<Eigen::VectorXd> z;
  std::vector<double> log_prob;
  std::vector<double> rewards;
  bool terminal = false;  // ended by termination rather than a cap
};

template <typename Env>
PpoEpisode collect_episode(Env& env, const PpoAgent& agent, std::uint64_t env_seed, std::uint64_t noise_seed,
                           int max_decisions = 100000) {
  PpoEpisode e;
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> n(0.0, 1.0);
  const Eigen::VectorXd sd = agent.log_std.array().exp();
  e.obs.push_back(env.reset(env_seed));
  for (int k = 0; k < max_decisions; ++k) {
    const Eigen::VectorXd mu = agent.policy.net.forward(e.obs.back());
    Eigen::VectorXd z(mu.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = mu[i] + sd[i] * n(rng);
    const PpoEnvStep s = env.step(agent.policy.squash(z));
    e.z.push_back(z);
    e.log_prob.push_back(gaussian_log_prob(z, mu, agent.log_std));
    e.rewards.push_back(s.reward);
    e.obs.push_back(s.obs);
    if (s.done) {
      e.terminal = true;
      break;
    }
  }
  return e;
}

struct PpoResult {
  PpoAgent agent;
  std::vector<TraceRow> trace;
  bool stopped_by_budget = false;
};

/// `make_env()` returns a fresh environment; one is built per episode so
/// episodes can run concurrently.
template <typename MakeEnv>
PpoResult ppo_train(PpoAgent agent, const PpoConfig& cfg, const MakeEnv& make_env,
                    const std::function<void(const TraceRow&)>& on_iteration = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  PpoResult res;
  Adam policy_opt{cfg.policy_lr}, value_opt{cfg.value_lr};
  const Eigen::Index n_net = static_cast<Eigen::Index>(agent.policy.param_count());

  for (int it = 0; it < cfg.iterations; ++it) {
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (cfg.budget_seconds > 0.0 && elapsed > cfg.budget_seconds) {
      res.stopped_by_budget = true;
      break;
    }
    const auto episodes = parallel_map<PpoEpisode>(cfg.episodes_per_batch, cfg.workers, [&](std::size_t k) {
      auto env = make_env();
      return collect_episode(env, agent, derive_seed(cfg.seed, static_cast<std::uint64_t>(it), 100 + k),
                             derive_seed(cfg.seed, static_cast<std::uint64_t>(it), 100000 + k));
    });

    std::vector<PpoSample> batch;
    std::vector<double> returns;
    for (const auto& e : episodes) {
      std::vector<double> values(e.obs.size());
      for (std::size_t t = 0; t < e.obs.size(); ++t) values[t] = agent.value.forward(e.obs[t])[0];
      if (e.terminal) values.back() = 0.0;
      const std::vector<double> adv = gae_advantages(e.rewards, values, cfg.gamma, cfg.gae_lambda);
      for (std::size_t t = 0; t < e.rewards.size(); ++t)
        batch.push_back({e.obs[t], e.z[t], e.log_prob[t], adv[t], adv[t] + values[t]});
      returns.push_back(std::accumulate(e.rewards.begin(), e.rewards.end(), 0.0));
    }
    if (cfg.normalize_advantages && batch.size() > 1) {
      double mean = 0.0, sq = 0.0;
      for (const auto& s : batch) mean += s.advantage;
      mean /= static_cast<double>(batch.size());
      for (const auto& s : batch) sq += (s.advantage - mean) * (s.advantage - mean);
      const double sd = std::sqrt(sq / static_cast<double>(batch.size())) + 1e-8;
      for (auto& s : batch) s.advantage = (s.advantage - mean) / sd;
    }

    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(it), 3));
    std::vector<std::size_t> order(batch.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.minibatch)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.minibatch));
        std::vector<PpoSample> mb;
        for (std::size_t i = start; i < end; ++i) mb.push_back(batch[order[i]]);

        Eigen::VectorXd g_net, g_std;
        ppo_surrogate(agent.policy, agent.log_std, mb, cfg.clip_epsilon, &g_net, &g_std);
        Eigen::VectorXd theta(n_net + agent.log_std.size());
        theta << agent.policy.flatten(), agent.log_std;
        Eigen::VectorXd grad(theta.size());
        grad << -g_net, -g_std;  // ascent on the surrogate
        policy_opt.step(theta, grad);
        agent.policy.unflatten(theta.head(n_net));
        agent.log_std = theta.tail(agent.log_std.size());

        Eigen::VectorXd g_v;
        value_loss(agent.value, mb, &g_v);
        Eigen::VectorXd w = agent.value.flatten();
        value_opt.step(w, g_v);
        agent.value.unflatten(w);
      }
    }

    TraceRow row;
    row.iteration = it;
    row.mean_return = std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());
    row.best_return = *std::max_element(returns.begin(), returns.end());
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.trace.push_back(row);
    if (on_iteration) on_iteration(row);
  }
  res.agent = std::move(agent);
  return res;
}

/// PPO on the walking task; the deterministic policy is the Gaussian mean.
inline TrainResult ppo_train_walking(const PolicyParams& init, const PpoConfig& cfg, const SimConfig& sim,
                                     const EpisodeConfig& ep,
                                     const std::function<void(const TraceRow&)>& on_iteration = {}) {
  PpoAgent agent = make_ppo_agent(init, cfg, derive_seed(cfg.seed, 0, 4));
  PpoResult r = ppo_train(std::move(agent), cfg, [&] { return WalkingPpoEnv(init, sim, ep); }, on_iteration);
  TrainResult out;
  out.policy = std::move(r.agent.policy);
  out.trace = std::move(r.trace);
  out.stopped_by_budget = r.stopped_by_budget;
  return out;
}

}  // namespace hzdrl
