// hzdrl command-line tool: training, evaluation and reference-gait search.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hzdrl/config.hpp"

#ifndef HZDRL_GIT_VERSION
#define HZDRL_GIT_VERSION HZDRL_VERSION
#endif

namespace fs = std::filesystem;
using namespace hzdrl;
using nlohmann::json;

namespace {

/// Failure that maps onto an exit code and an error JSON document.
struct CliError : std::runtime_error {
  CliError(std::string type, const std::string& msg, int code, json extra = json::object())
      : std::runtime_error(msg), type(std::move(type)), code(code), extra(std::move(extra)) {}
  std::string type;
  int code;
  json extra;
};

int emit_error(const std::string& type, const std::string& message, int code, const json& extra = json::object()) {
  json e = {{"ok", false}, {"error", {{"type", type}, {"message", message}}}};
  for (const auto& [k, v] : extra.items()) e["error"][k] = v;
  std::cerr << e.dump() << std::endl;
  return code;
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int workers = default_workers();
  std::string out;
  std::optional<int> budget_seconds;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "experiment config JSON")->required();
  app->add_option("--seed", c.seed, "run seed (falls back to the config's seed)");
  app->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
  app->add_option("--out", c.out, "output directory (falls back to the config's out)");
  app->add_option("--budget-seconds", c.budget_seconds, "wall-clock budget")->check(CLI::NonNegativeNumber);
}

struct Context {
  ExperimentConfig cfg;
  std::uint64_t seed = 0;
  int workers = 1;
  fs::path out;
};

Context make_context(const Common& c) {
  Context ctx;
  ctx.cfg = load_experiment_config(c.config);
  if (c.seed) ctx.seed = *c.seed;
  else if (ctx.cfg.seed) ctx.seed = *ctx.cfg.seed;
  else throw ConfigError("seed", "a seed is required (--seed or the config's \"seed\")");
  ctx.workers = c.workers;
  ctx.out = c.out.empty() ? fs::path(ctx.cfg.out_dir) : fs::path(c.out);
  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  if (ec) throw CliError("io", "cannot create output directory " + ctx.out.string() + ": " + ec.message(), 3);
  return ctx;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw CliError("io", "cannot open " + path.string() + " for writing", 3);
  f << j.dump(2) << '\n';
  if (!f) throw CliError("io", "failed writing " + path.string(), 3);
}

void write_manifest(const Context& ctx, const std::string& command, double wall, json extra) {
  json m = {{"command", command},
            {"config_hash", config_hash(ctx.cfg.raw)},
            {"config", ctx.cfg.raw},
            {"seed", ctx.seed},
            {"workers", ctx.workers},
            {"wall_clock_seconds", wall},
            {"version", HZDRL_GIT_VERSION}};
  for (const auto& [k, v] : extra.items()) m[k] = v;
  write_json(ctx.out / "manifest.json", m);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const Common& c) {
  const auto t0 = std::chrono::steady_clock::now();
  Context ctx = make_context(c);
  ExperimentConfig& cfg = ctx.cfg;

  PolicyParams policy = cfg.make_policy_params();
  if (!cfg.policy.warm_start.empty()) {
    const ReferenceGait ref = load_reference_gait(cfg.policy.warm_start);
    warm_start(policy, ref.command, derive_seed(ctx.seed, 0, 7), cfg.policy.init_scale);
  } else {
    std::mt19937_64 rng(derive_seed(ctx.seed, 0, 7));
    policy.net.randomize(rng, cfg.policy.init_scale);
  }

  auto progress = [](const TraceRow& r) {
    std::fprintf(stderr, "iteration %d mean %.6g best %.6g\n", r.iteration, r.mean_return, r.best_return);
  };
  TrainResult res;
  std::string trainer;
  if (cfg.trainer == Trainer::kEs) {
    trainer = "es";
    EsConfig es = cfg.es;
    es.seed = ctx.seed;
    es.workers = ctx.workers;
    if (c.budget_seconds) es.budget_seconds = *c.budget_seconds;
    res = es_train(policy, es, cfg.sim, cfg.episode, progress);
  } else {
    trainer = "ppo";
    PpoConfig ppo = cfg.ppo;
    ppo.seed = ctx.seed;
    ppo.workers = ctx.workers;
    if (c.budget_seconds) ppo.budget_seconds = *c.budget_seconds;
    res = ppo_train_walking(policy, ppo, cfg.sim, cfg.episode, progress);
  }

  write_json(ctx.out / "policy.json", policy_to_json(res.policy));
  write_trace_csv((ctx.out / "trace.csv").string(), res.trace);
  write_manifest(ctx, "train", seconds_since(t0),
                 {{"trainer", trainer},
                  {"iterations_completed", res.trace.size()},
                  {"stopped_by_budget", res.stopped_by_budget}});
  std::cout << json{{"ok", true}, {"checkpoint", (ctx.out / "policy.json").string()}}.dump() << std::endl;
  return 0;
}

// ---------------------------------------------------------------------------
// eval

using Source = std::function<StepCommand(const Observation&)>;

struct EvalOptions {
  std::string checkpoint;
  std::string gait;
  double duration = 0.0;  // seconds; 0 keeps the episode length
};

/// Command source plus the simulator settings it runs under.
struct Subject {
  Source source;
  SimConfig sim;
  std::string kind;
};

Subject load_subject(const Context& ctx, const EvalOptions& o, std::shared_ptr<PolicyParams>& keep) {
  if (o.checkpoint.empty() == o.gait.empty())
    throw CliError("usage", "exactly one of --checkpoint or --gait is required", 2);
  Subject s;
  if (!o.gait.empty()) {
    const ReferenceGait ref = load_reference_gait(o.gait);
    s.sim = ref.apply(ctx.cfg.sim);
    s.source = ConstantGaitSource{ref.command};
    s.kind = "reference-gait";
    return s;
  }
  std::ifstream f(o.checkpoint);
  if (!f) throw CliError("io", "cannot open checkpoint " + o.checkpoint, 3);
  keep = std::make_shared<PolicyParams>(policy_from_json(json::parse(f)));
  if (keep->n_out() != ctx.cfg.policy.n_out)
    throw CliError("variant_mismatch",
                   "checkpoint has n_out = " + std::to_string(keep->n_out()) + " but the config's policy.n_out = " +
                       std::to_string(ctx.cfg.policy.n_out),
                   2, {{"key", "policy.n_out"}});
  s.sim = ctx.cfg.sim;
  s.source = MlpGaitSource{keep.get(), s.sim.bounds};
  s.kind = "policy";
  return s;
}

EpisodeConfig eval_episode(const Context& ctx, const Subject& s, double duration) {
  EpisodeConfig ep = ctx.cfg.episode;
  if (duration > 0.0) ep.max_sim_steps = static_cast<int>(std::lround(duration / s.sim.integrator.dt));
  return ep;
}

void add_eval_options(CLI::App* app, EvalOptions& o) {
  app->add_option("--checkpoint", o.checkpoint, "policy checkpoint JSON");
  app->add_option("--gait", o.gait, "reference gait JSON (evaluated as a constant policy)");
  app->add_option("--duration", o.duration, "episode length in seconds")->check(CLI::NonNegativeNumber);
}

std::vector<std::pair<double, double>> load_profile(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw CliError("io", "cannot open speed profile " + path, 3);
  const json j = json::parse(f);
  std::vector<std::pair<double, double>> out;
  try {
    for (const auto& e : j) out.emplace_back(e.at(0).get<double>(), e.at(1).get<double>());
  } catch (const std::exception& e) {
    throw CliError("profile", "speed profile must be a list of [t, v_d] pairs: " + std::string(e.what()), 2);
  }
  if (out.empty()) throw CliError("profile", "speed profile is empty", 2);
  return out;
}

int cmd_eval_speed(const Common& c, const EvalOptions& o, const std::string& profile_path, double transient) {
  const auto t0 = std::chrono::steady_clock::now();
  Context ctx = make_context(c);
  std::shared_ptr<PolicyParams> keep;
  const Subject s = load_subject(ctx, o, keep);
  const auto profile = profile_path.empty() ? std::vector<std::pair<double, double>>{{0.0, 0.8}, {4.0, 1.2}}
                                            : load_profile(profile_path);
  double duration = o.duration;
  if (duration <= 0.0) duration = std::max(profile.back().first + 4.0, ctx.cfg.episode.max_sim_steps * s.sim.integrator.dt);
  RolloutLog log;
  const TrackingReport rep = run_tracking_eval(s.source, s.sim, eval_episode(ctx, s, duration), profile, ctx.seed,
                                               transient, &log);
  json j = to_json_report(rep);
  j["subject"] = s.kind;
  j["max_abs_error"] = rep.max_abs_error();
  write_json(ctx.out / "tracking.json", j);
  export_log(log, s.sim.robot, ctx.out);
  write_manifest(ctx, "eval speed", seconds_since(t0), {{"subject", s.kind}});
  std::cout << json{{"ok", true}, {"max_abs_error", rep.max_abs_error()}}.dump() << std::endl;
  return 0;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw CliError("usage", "bad number in list: \"" + item + "\"", 2);
    }
  }
  return out;
}

struct PushOptions {
  double magnitude = 40.0;
  std::string direction = "backward";
  bool sweep = false;
  std::string magnitudes = "0,20,40,60,80,100,120,140,160,180,200";
  double push_duration = 0.1;
  double v_d = 1.0;
  int frame_every = 0;
};

int cmd_eval_push(const Common& c, const EvalOptions& o, const PushOptions& p) {
  const auto t0 = std::chrono::steady_clock::now();
  Context ctx = make_context(c);
  std::shared_ptr<PolicyParams> keep;
  const Subject s = load_subject(ctx, o, keep);
  const PushDirection dir = p.direction == "forward" ? PushDirection::kForward : PushDirection::kBackward;
  const EpisodeConfig ep = eval_episode(ctx, s, o.duration > 0.0 ? o.duration : 8.0);
  if (p.sweep) {
    const PushSweep sw = push_sweep(s.source, s.sim, ep, parse_list(p.magnitudes), dir, p.v_d, ctx.seed,
                                    p.push_duration);
    std::ofstream f(ctx.out / "sweep.csv");
    if (!f) throw CliError("io", "cannot write sweep.csv", 3);
    f << "magnitude,survived,fall_time,reason\n";
    json rows = json::array();
    for (const auto& r : sw.rows) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "%.17g,%d,%.17g,%s\n", r.magnitude, r.survived ? 1 : 0, r.fall_time,
                    r.reason.c_str());
      f << buf;
      rows.push_back({{"magnitude", r.magnitude},
                      {"survived", r.survived},
                      {"fall_time", std::isfinite(r.fall_time) ? json(r.fall_time) : json(nullptr)},
                      {"reason", r.reason}});
    }
    write_json(ctx.out / "sweep.json", {{"subject", s.kind},
                                        {"direction", p.direction},
                                        {"push_times", {2.0, 4.0, 6.0}},
                                        {"push_duration", p.push_duration},
                                        {"v_d", p.v_d},
                                        {"monotone", sw.monotone()},
                                        {"tolerated", sw.tolerated()},
                                        {"rows", rows}});
    write_manifest(ctx, "eval push --sweep", seconds_since(t0), {{"subject", s.kind}});
    std::cout << json{{"ok", true}, {"monotone", sw.monotone()}, {"tolerated", sw.tolerated()}}.dump() << std::endl;
    return 0;
  }
  const PushTrialResult r =
      run_push_trial(s.source, s.sim, ep, make_push_schedule(p.magnitude, dir, p.push_duration), p.v_d, ctx.seed);
  json j = {{"subject", s.kind},
            {"magnitude", p.magnitude},
            {"direction", p.direction},
            {"survived", r.survived},
            {"fall_time", std::isfinite(r.fall_time) ? json(r.fall_time) : json(nullptr)},
            {"reason", to_string(r.reason)},
            {"tracking", to_json_report(r.report)}};
  write_json(ctx.out / "push.json", j);
  ExportOptions ex;
  ex.frame_every = p.frame_every;
  export_log(r.log, s.sim.robot, ctx.out, ex);
  write_manifest(ctx, "eval push", seconds_since(t0), {{"subject", s.kind}});
  std::cout << json{{"ok", true}, {"survived", r.survived}}.dump() << std::endl;
  return 0;
}

int cmd_eval_poincare(const Common& c, const EvalOptions& o, int steps, double v_d, double delta) {
  const auto t0 = std::chrono::steady_clock::now();
  Context ctx = make_context(c);
  std::shared_ptr<PolicyParams> keep;
  const Subject s = load_subject(ctx, o, keep);
  EpisodeConfig ep = eval_episode(ctx, s, o.duration > 0.0 ? o.duration : 0.5 * steps + 2.0);
  RolloutOptions opts;
  opts.speed_profile = {{0.0, v_d}};
  opts.log = true;
  const RolloutResult r = rollout(s.source, s.sim, ep, ctx.seed, opts);
  auto samples = poincare_samples(r.log);
  if (samples.size() > static_cast<std::size_t>(steps) + 1) samples.resize(static_cast<std::size_t>(steps) + 1);
  if (samples.size() < 2)
    throw CliError("poincare", "fewer than two post-impact samples (" + to_string(r.reason) + ")", 3,
                   {{"walking_steps", r.walking_steps}});
  const auto res = poincare_residuals(samples);
  std::ofstream f(ctx.out / "residuals.csv");
  if (!f) throw CliError("io", "cannot write residuals.csv", 3);
  f << "step,residual\n";
  for (std::size_t k = 0; k < res.size(); ++k) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", k, res[k]);
    f << buf;
  }
  json j = {{"subject", s.kind}, {"walking_steps", r.walking_steps}, {"termination", to_string(r.reason)},
            {"samples", samples.size()}};
  // Stride map of the command issued at the last sample; exact for constant gaits.
  HybridState nominal;
  nominal.unpack(samples.back().x);
  Observation obs;
  obs.v_d = v_d;
  obs.v_bar = v_d;
  const StepCommand cmd = s.source(obs);
  const ContractionEstimate est =
      return_map_contraction(gait_return_map(cmd, s.sim), Eigen::VectorXd(nominal.packed()), delta);
  j["spectral_radius"] = std::isfinite(est.spectral_radius) ? json(est.spectral_radius) : json(nullptr);
  j["invalid_columns"] = est.invalid_columns;
  write_json(ctx.out / "poincare.json", j);
  export_log(r.log, s.sim.robot, ctx.out);
  write_manifest(ctx, "eval poincare", seconds_since(t0), {{"subject", s.kind}});
  std::cout << json{{"ok", true}, {"samples", samples.size()}}.dump() << std::endl;
  return 0;
}

// ---------------------------------------------------------------------------
// reference-gait

int cmd_reference_gait(const Common& c) {
  const auto t0 = std::chrono::steady_clock::now();
  Context ctx = make_context(c);
  GaitSearchConfig g = ctx.cfg.reference_gait;
  g.seed = ctx.seed;
  g.workers = ctx.workers;
  if (c.budget_seconds && *c.budget_seconds > 0) g.budget_seconds = *c.budget_seconds;
  const GaitSearchResult res = search_reference_gait(ctx.cfg.sim, g);

  ReferenceGait out;
  out.command = res.best.command(ctx.cfg.sim.bounds);
  out.phase = ctx.cfg.sim.phase;
  out.kp = ctx.cfg.sim.gains.kp;
  out.torque_limit = ctx.cfg.sim.gains.torque_limit;
  out.nominal_speed = g.nominal_speed;
  out.seed = ctx.seed;
  out.diagnostics = to_json_diagnostics(res.verification);
  out.diagnostics["evaluations"] = res.evaluations;
  out.diagnostics["passes"] = res.success;

  const fs::path path = ctx.out / (res.success ? "reference_gait.json" : "reference_gait.best.json");
  write_json(path, out);
  write_manifest(ctx, "reference-gait", seconds_since(t0),
                 {{"evaluations", res.evaluations}, {"success", res.success}});
  if (!res.success)
    throw CliError("search_failed", "no candidate passed verification; best-found gait written to " + path.string(),
                   4, {{"diagnostics", out.diagnostics}});
  std::cout << json{{"ok", true}, {"gait", path.string()}}.dump() << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HZD-RL five-link biped: training, evaluation and reference gaits"};
  app.set_version_flag("--version", std::string(HZDRL_GIT_VERSION));
  app.require_subcommand(1);

  Common train_c, speed_c, push_c, poin_c, ref_c;
  EvalOptions speed_o, push_o, poin_o;
  PushOptions push_p;
  std::string profile;
  double transient = 1.0;
  int poincare_steps = 30;
  double poincare_vd = 0.8, poincare_delta = 1e-5;

  auto* train = app.add_subcommand("train", "train a policy (ES or PPO per the config)");
  add_common(train, train_c);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or reference gait");
  eval->require_subcommand(1);
  auto* speed = eval->add_subcommand("speed", "speed-tracking report");
  add_common(speed, speed_c);
  add_eval_options(speed, speed_o);
  speed->add_option("--profile", profile, "JSON list of [t, v_d] pairs");
  speed->add_option("--transient", transient, "seconds excluded after each command change");

  auto* push = eval->add_subcommand("push", "torso pushes at t = 2, 4, 6 s");
  add_common(push, push_c);
  add_eval_options(push, push_o);
  push->add_option("--magnitude", push_p.magnitude, "push force, N");
  push->add_option("--direction", push_p.direction, "backward or forward")
      ->check(CLI::IsMember({"backward", "forward"}));
  push->add_flag("--sweep", push_p.sweep, "sweep over --magnitudes instead of a single trial");
  push->add_option("--magnitudes", push_p.magnitudes, "comma-separated sweep magnitudes, N");
  push->add_option("--push-duration", push_p.push_duration, "seconds per push");
  push->add_option("--v-d", push_p.v_d, "commanded speed, m/s");
  push->add_option("--frame-every", push_p.frame_every, "rows between SVG frames (0 = none)");

  auto* poin = eval->add_subcommand("poincare", "post-impact residuals and stride-map contraction");
  add_common(poin, poin_c);
  add_eval_options(poin, poin_o);
  poin->add_option("--steps", poincare_steps, "walking steps to record")->check(CLI::PositiveNumber);
  poin->add_option("--v-d", poincare_vd, "commanded speed, m/s");
  poin->add_option("--delta", poincare_delta, "finite-difference perturbation");

  auto* ref = app.add_subcommand("reference-gait", "search for a fixed walking gait");
  add_common(ref, ref_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return emit_error("usage", e.what(), 2);
  }

  try {
    if (train->parsed()) return cmd_train(train_c);
    if (speed->parsed()) return cmd_eval_speed(speed_c, speed_o, profile, transient);
    if (push->parsed()) return cmd_eval_push(push_c, push_o, push_p);
    if (poin->parsed()) return cmd_eval_poincare(poin_c, poin_o, poincare_steps, poincare_vd, poincare_delta);
    if (ref->parsed()) return cmd_reference_gait(ref_c);
  } catch (const CliError& e) {
    return emit_error(e.type, e.what(), e.code, e.extra);
  } catch (const ConfigError& e) {
    return emit_error("config", e.what(), 2, {{"key", e.key()}});
  } catch (const std::exception& e) {
    return emit_error("runtime", e.what(), 3);
  }
  return emit_error("usage", "no command given", 2);
}
