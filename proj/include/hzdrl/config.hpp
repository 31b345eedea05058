#pragma once

// Experiment configuration: one JSON file naming the robot, simulator,
// policy variant, trainer and episode settings. Problems are reported with
// the dotted key that caused them.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>

#include "hzdrl/es.hpp"
#include "hzdrl/ppo.hpp"
#include "hzdrl/reference_gait.hpp"

namespace hzdrl {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct PolicyConfig {
  int n_out = 21;
  Interval kd_range{10.0, 60.0};
  double fixed_kd = 50.0;
  std::string warm_start;  // reference gait file; empty = random initialization
  double init_scale = 0.1;
};

enum class Trainer { kEs, kPpo };

struct ExperimentConfig {
  std::filesystem::path source;  // config file, for resolving relative paths
  std::filesystem::path robot_path;
  SimConfig sim;
  PolicyConfig policy;
  Trainer trainer = Trainer::kEs;
  EsConfig es;
  PpoConfig ppo;
  EpisodeConfig episode;
  GaitSearchConfig reference_gait;
  std::string out_dir = "runs/default";
  std::optional<std::uint64_t> seed;
  nlohmann::json raw;  // the parsed document, for hashing

  PolicyParams make_policy_params() const {
    return make_policy(policy.n_out, sim.bounds, policy.kd_range, policy.fixed_kd);
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::string& prefix, const std::set<std::string>& known) {
  if (!j.is_object()) throw ConfigError(prefix, "must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError(prefix.empty() ? k : prefix + "." + k, "unknown key");
}

/// Runs `fn`, tagging any exception with `key`.
template <typename Fn>
void with_key(const std::string& key, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key, e.what());
  }
}

/// Parses a section, attributing JSON type errors to the exact key.
template <typename T>
T parse_section(const nlohmann::json& j, const std::string& prefix) {
  for (const auto& [k, v] : j.items()) {
    try {
      (void)nlohmann::json{{k, v}}.get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(prefix + "." + k, e.what());
    } catch (const std::exception&) {
      // range problems are reported below with the full section in view
    }
  }
  T out{};
  with_key(prefix, [&] { out = j.get<T>(); });
  return out;
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base.parent_path() / path;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& source = {}) {
  using detail::with_key;
  detail::reject_unknown(j, "", {"robot", "integrator", "phase", "bounds", "gains", "policy", "trainer", "es", "ppo",
                                 "episode", "reference_gait", "out", "seed"});
  ExperimentConfig c;
  c.source = source;
  c.raw = j;

  if (j.contains("robot")) {
    with_key("robot", [&] {
      c.robot_path = detail::resolve(source, j.at("robot").get<std::string>());
      std::ifstream f(c.robot_path);
      if (!f) throw ConfigError("robot", "robot file not found: " + c.robot_path.string());
      nlohmann::json rj;
      try {
        rj = nlohmann::json::parse(f);
      } catch (const std::exception& e) {
        throw ConfigError("robot", c.robot_path.string() + ": " + e.what());
      }
      c.sim.robot = rj.get<RobotParams>();
    });
  }
  if (j.contains("integrator")) {
    detail::reject_unknown(j["integrator"], "integrator",
                           {"dt", "guard_tolerance", "event_bisection_tol", "friction_coefficient",
                            "divergence_bound"});
    c.sim.integrator = detail::parse_section<IntegratorConfig>(j["integrator"], "integrator");
  }
  if (j.contains("phase")) {
    detail::reject_unknown(j["phase"], "phase", {"p_begin", "p_end"});
    c.sim.phase = detail::parse_section<PhaseConfig>(j["phase"], "phase");
  }
  if (j.contains("bounds")) {
    detail::reject_unknown(j["bounds"], "bounds", {"hip", "knee"});
    c.sim.bounds = detail::parse_section<GaitBounds>(j["bounds"], "bounds");
  }
  if (j.contains("gains")) {
    const auto& g = j["gains"];
    detail::reject_unknown(g, "gains", {"kp", "torque_limit"});
    with_key("gains.kp", [&] { c.sim.gains.kp = g.value("kp", c.sim.gains.kp); });
    with_key("gains.torque_limit", [&] { c.sim.gains.torque_limit = g.value("torque_limit", c.sim.gains.torque_limit); });
    with_key("gains", [&] { c.sim.gains.validate(); });
  }
  if (j.contains("policy")) {
    const auto& p = j["policy"];
    detail::reject_unknown(p, "policy", {"n_out", "kd_range", "fixed_kd", "warm_start", "init_scale"});
    with_key("policy.n_out", [&] {
      c.policy.n_out = p.value("n_out", c.policy.n_out);
      if (c.policy.n_out != kNumFreeCoeffs && c.policy.n_out != kNumFreeCoeffs + 1)
        throw std::invalid_argument("must be 20 or 21");
    });
    with_key("policy.kd_range", [&] {
      if (p.contains("kd_range")) c.policy.kd_range = p.at("kd_range").get<Interval>();
      if (!(c.policy.kd_range.lo >= 0.0)) throw std::invalid_argument("must be non-negative");
    });
    with_key("policy.fixed_kd", [&] {
      c.policy.fixed_kd = p.value("fixed_kd", c.policy.fixed_kd);
      if (!(c.policy.fixed_kd >= 0.0)) throw std::invalid_argument("must be >= 0");
    });
    with_key("policy.init_scale", [&] { c.policy.init_scale = p.value("init_scale", c.policy.init_scale); });
    if (p.contains("warm_start")) {
      with_key("policy.warm_start", [&] {
        const auto path = detail::resolve(source, p.at("warm_start").get<std::string>());
        if (!std::filesystem::exists(path)) throw std::invalid_argument("file not found: " + path.string());
        c.policy.warm_start = path.string();
      });
    }
  }
  if (j.contains("trainer")) {
    with_key("trainer", [&] {
      const std::string t = j.at("trainer").get<std::string>();
      if (t == "es") c.trainer = Trainer::kEs;
      else if (t == "ppo") c.trainer = Trainer::kPpo;
      else throw std::invalid_argument("must be \"es\" or \"ppo\", got \"" + t + "\"");
    });
  }
  if (j.contains("es")) {
    detail::reject_unknown(j["es"], "es",
                           {"population", "sigma", "learning_rate", "iterations", "antithetic", "budget_seconds"});
    c.es = detail::parse_section<EsConfig>(j["es"], "es");
    with_key("es", [&] { c.es.validate(); });
  }
  if (j.contains("ppo")) {
    detail::reject_unknown(j["ppo"], "ppo",
                           {"clip_epsilon", "gae_lambda", "gamma", "value_hidden", "epochs", "minibatch",
                            "episodes_per_batch", "iterations", "policy_lr", "value_lr", "initial_log_std",
                            "normalize_advantages", "budget_seconds"});
    c.ppo = detail::parse_section<PpoConfig>(j["ppo"], "ppo");
    with_key("ppo", [&] { c.ppo.validate(); });
  }
  if (j.contains("episode")) {
    detail::reject_unknown(j["episode"], "episode",
                           {"max_sim_steps", "gamma", "v_d_range", "mid_episode_resample", "resample_step",
                            "initial_speed", "fall_penalty", "window", "seed"});
    c.episode = detail::parse_section<EpisodeConfig>(j["episode"], "episode");
  }
  if (j.contains("reference_gait")) {
    detail::reject_unknown(j["reference_gait"], "reference_gait",
                           {"restarts", "max_sweeps", "init_noise", "initial_step", "min_step", "nominal_speed",
                            "horizon_steps", "min_walking_steps", "max_evaluations", "budget_seconds", "kd_range",
                            "kd_initial", "stability_weight", "contraction_weight", "contraction_target"});
    c.reference_gait = detail::parse_section<GaitSearchConfig>(j["reference_gait"], "reference_gait");
  }
  if (j.contains("out")) with_key("out", [&] { c.out_dir = j.at("out").get<std::string>(); });
  if (j.contains("seed")) {
    with_key("seed", [&] {
      const auto& v = j.at("seed");
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        throw std::invalid_argument("must be a non-negative integer");
      c.seed = j.at("seed").get<std::uint64_t>();
    });
  }
  return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config", "config file not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const std::exception& e) {
    throw ConfigError("config", path.string() + ": " + e.what());
  }
  return parse_experiment_config(j, path);
}

/// FNV-1a over the compact serialization; stable across runs and platforms.
inline std::string config_hash(const nlohmann::json& j) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace hzdrl
