// Acceptance runner: one pass/fail line per criterion at the stated
// tolerances. Exit status is nonzero if any criterion fails.
//
//   acceptance [--workdir DIR] [--only N[,N...]]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "hzdrl/analysis.hpp"
#include "hzdrl/config.hpp"
#include "oracles.hpp"

using namespace hzdrl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kSource(HZDRL_SOURCE_DIR);
fs::path g_work;

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Collects failed checks with a short reason each.
struct Checker {
  std::vector<std::string> failures;
  std::ostringstream notes;

  void check(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  template <typename T>
  void note(const std::string& key, const T& v) {
    notes << (notes.tellp() > 0 ? ", " : "") << key << " " << v;
  }
  Outcome done() const {
    Outcome o;
    o.pass = failures.empty();
    o.detail = notes.str();
    for (const auto& f : failures) o.detail += (o.detail.empty() ? "" : "; ") + std::string("failed: ") + f;
    return o;
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Runs the CLI, stdout and stderr captured under the work directory.
int cli(const std::string& args, const std::string& tag) {
  const auto log = g_work / ("cli_" + tag + ".log");
  const std::string cmd = std::string(HZDRL_CLI) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome model_fidelity() {
  Checker c;
  const RobotParams p;
  c.check(p.torso.length == 0.63 && p.femur.length == 0.4 && p.tibia.length == 0.4, "link lengths");
  c.check(p.torso.mass == 12.0 && p.femur.mass == 6.8 && p.tibia.mass == 3.2, "link masses");
  c.check(p.torso.inertia_com == 1.33 && p.femur.inertia_com == 0.47 && p.tibia.inertia_com == 0.2, "inertias");
  const auto k = forward_kinematics(upright_pose(), p);
  c.check(std::abs(p.total_mass() - 32.0) <= 1e-12, "total mass");
  c.check(std::abs(k.hip.y() - 0.80) <= 1e-12 && std::abs(k.hip.x()) <= 1e-12, "hip height");
  c.check(std::abs(k.torso_tip.y() - 1.43) <= 1e-12, "torso tip");
  c.note("mass", p.total_mass());
  c.note("hip", k.hip.y());
  c.note("tip", k.torso_tip.y());
  return c.done();
}

Vec10 passive_rollout(Vec10 x, double horizon, double dt, const RobotParams& p) {
  auto f = [&](double, const Vec10& s) {
    Vec10 dx;
    dx.head<5>() = s.tail<5>();
    dx.tail<5>() = forward_dynamics(s.head<5>(), s.tail<5>(), Vec4::Zero(), p);
    return dx;
  };
  const int n = static_cast<int>(std::lround(horizon / dt));
  for (int k = 0; k < n; ++k) x = rk4_step(f, k * dt, x, dt);
  return x;
}

Outcome dynamics_suite() {
  Checker c;
  const RobotParams p;
  std::mt19937_64 rng(101);
  double asym = 0.0, min_eig = 1e300;
  for (int n = 0; n < 1000; ++n) {
    const JointConfig q = oracle::random_config(rng, 3.0);
    const Mat5 d = mass_matrix(q, p);
    asym = std::max(asym, (d - d.transpose()).cwiseAbs().maxCoeff());
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Mat5>(d).eigenvalues().minCoeff());
  }
  c.check(asym <= 1e-12, "mass matrix symmetry");
  c.check(min_eig > 0.0, "mass matrix positive definite");

  double drift = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    Vec10 x;
    x.head<5>() = oracle::random_config(rng, 0.2);
    x[kTorso] += M_PI;
    x.tail<5>() = oracle::random_config(rng, 0.3);
    const double e0 = total_energy(x.head<5>(), x.tail<5>(), p);
    const Vec10 x1 = passive_rollout(x, 1.0, 0.002, p);
    drift = std::max(drift, std::abs(total_energy(x1.head<5>(), x1.tail<5>(), p) - e0) / std::abs(e0));
  }
  c.check(drift < 1e-6, "energy drift");

  Vec10 x;
  x << 0.1, 0.2, 0.3, -0.2, 0.4, 0.3, -0.2, 0.5, 0.1, -0.4;
  const Vec10 a = passive_rollout(x, 0.4, 0.008, p), b = passive_rollout(x, 0.4, 0.004, p),
              d = passive_rollout(x, 0.4, 0.002, p);
  const double order = std::log2((a - b).norm() / (b - d).norm());
  c.check(order >= 3.7, "integrator order");

  double grav = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const JointConfig q = oracle::random_config(rng, 1.5);
    const Vec5 g = gravity_vector(q, p);
    Vec5 fd;
    for (int i = 0; i < 5; ++i) {
      JointConfig qp = q, qm = q;
      qp[i] += 1e-6;
      qm[i] -= 1e-6;
      fd[i] = (potential_energy(qp, p) - potential_energy(qm, p)) / 2e-6;
    }
    grav = std::max(grav, (g - fd).norm() / std::max(1.0, g.norm()));
  }
  c.check(grav <= 1e-6, "gravity vs potential");
  c.note("asym", fmt(asym));
  c.note("drift", fmt(drift));
  c.note("order", fmt(order));
  c.note("gravity err", fmt(grav));
  return c.done();
}

Outcome impact_suite() {
  Checker c;
  const RobotParams p;
  std::mt19937_64 rng(102);
  std::normal_distribution<double> nd(0.0, 1.5);
  double speed = 0.0, balance = 0.0;
  bool energy_ok = true;
  for (int n = 0; n < 1000; ++n) {
    const JointConfig q = oracle::random_config(rng, 1.0);
    Vec5 dq;
    for (int i = 0; i < 5; ++i) dq[i] = nd(rng);
    const ImpactSolution imp = solve_impact(q, dq, p);
    speed = std::max(speed, imp.contact_speed);
    balance = std::max(balance, imp.balance_residual);
    energy_ok = energy_ok && imp.energy_after <= imp.energy_before * (1 + 1e-12) + 1e-12;
  }
  bool involution = true;
  for (int n = 0; n < 1000; ++n) {
    const Vec5 x = oracle::random_config(rng);
    involution = involution && swap_legs(swap_legs(x)) == x;
  }
  c.check(speed < 1e-10, "new stance foot speed");
  c.check(energy_ok, "kinetic energy increase");
  c.check(balance < 1e-8, "impulse balance");
  c.check(involution, "relabeling involution");
  c.note("foot speed", fmt(speed));
  c.note("balance", fmt(balance));
  return c.done();
}

Outcome gait_suite() {
  Checker c;
  std::mt19937_64 rng(103);
  std::uniform_real_distribution<double> u(-2.0, 2.0), ut(0.0, 1.0);
  bool endpoints = true;
  double casteljau = 0.0, unity = 0.0;
  for (int n = 0; n < 10000; ++n) {
    Vec6 a;
    for (int k = 0; k < 6; ++k) a[k] = u(rng);
    const double tau = ut(rng);
    endpoints = endpoints && bezier_eval(a, 0.0) == a[0] && bezier_eval(a, 1.0) == a[5];
    casteljau = std::max(casteljau, std::abs(bezier_eval(a, tau) - oracle::de_casteljau({a.data(), a.data() + 6}, tau)));
    unity = std::max(unity, std::abs(bezier_eval(Vec6::Ones(), tau) - 1.0));
  }
  const GaitBounds b;
  bool equalities = true;
  for (int n = 0; n < 10000; ++n) {
    FreeCoeffs f;
    for (int i = 0; i < kNumFreeCoeffs; ++i) {
      const Interval& iv = b.free_entry(i);
      f[i] = std::uniform_real_distribution<double>(iv.lo, iv.hi)(rng);
    }
    const BezierCoeffs cf = expand_free_params(f, b);
    equalities = equalities && cf.flat(1) == cf.flat(23) && cf.flat(2) == cf.flat(24) && cf.flat(3) == cf.flat(21) &&
                 cf.flat(4) == cf.flat(22) && cf.impact_invariant();
  }
  c.check(endpoints, "endpoint identities");
  c.check(casteljau <= 1e-12, "de Casteljau agreement");
  c.check(unity <= 1e-12, "partition of unity");
  c.check(equalities, "impact equality constraints");
  c.note("casteljau", fmt(casteljau));
  c.note("unity", fmt(unity));
  return c.done();
}

Outcome policy_counts() {
  Checker c;
  const PolicyParams p20 = make_policy(20, GaitBounds{}, Interval{10.0, 60.0}, 50.0);
  PolicyParams p21 = make_policy(21, GaitBounds{}, Interval{10.0, 60.0}, 50.0);
  c.check(p20.param_count() == 620, "620 parameters");
  c.check(p21.param_count() == 633, "633 parameters");
  std::mt19937_64 rng(104);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> speed(0.0, 2.0);
  double oracle_err = 0.0;
  bool inside = true;
  for (int trial = 0; trial < 10000; ++trial) {
    Eigen::VectorXd v(p21.param_count());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = (trial % 2 ? 0.5 : 3.0) * n(rng);
    p21.unflatten(v);
    const double vd = speed(rng), vb = speed(rng);
    const Observation obs{vd, vb, vd - vb};
    const PolicyOutput o = forward(p21, obs);
    for (int i = 0; i < kNumFreeCoeffs; ++i)
      inside = inside && o.free[i] >= p21.output_bounds[i].lo && o.free[i] <= p21.output_bounds[i].hi;
    inside = inside && o.kd >= 10.0 && o.kd <= 60.0;
    if (trial < 200) {
      const auto z = oracle::mlp_forward(p21.net.sizes(), {v.data(), v.data() + v.size()}, {vd, vb, vd - vb});
      for (int i = 0; i < kNumFreeCoeffs; ++i) {
        const Interval& bi = p21.output_bounds[i];
        oracle_err = std::max(oracle_err, std::abs(o.free[i] - (bi.lo + bi.width() / (1.0 + std::exp(-z[i])))));
      }
      oracle_err = std::max(oracle_err, std::abs(o.kd - (10.0 + 50.0 / (1.0 + std::exp(-z[20])))));
    }
  }
  c.check(oracle_err <= 1e-12, "forward pass vs oracle");
  c.check(inside, "outputs within bounds");
  c.note("counts", std::to_string(p20.param_count()) + "/" + std::to_string(p21.param_count()));
  c.note("oracle err", fmt(oracle_err));
  return c.done();
}

Outcome trainer_correctness() {
  Checker c;
  EsConfig es;
  es.iterations = 200;
  es.seed = 105;
  const Eigen::VectorXd t0 = Eigen::VectorXd::Constant(10, 1.0);
  const EsResult r = es_optimize(t0, es, [](const Eigen::VectorXd& th, std::uint64_t) { return -th.squaredNorm(); });
  const double shrink = 1.0 - r.theta.norm() / t0.norm();
  c.check(shrink >= 0.9, "ES quadratic");

  std::mt19937_64 rng(106);
  std::normal_distribution<double> nd;
  double gae_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int T = 1 + trial % 40;
    std::vector<double> rw(T), v(T + 1);
    for (double& x : rw) x = nd(rng);
    for (double& x : v) x = nd(rng);
    const auto got = gae_advantages(rw, v, 0.97, 0.9);
    const auto want = oracle::gae(rw, v, 0.97, 0.9);
    for (int t = 0; t < T; ++t) gae_err = std::max(gae_err, std::abs(got[t] - want[t]));
  }
  c.check(gae_err <= 1e-10, "GAE oracle");
  c.check(ppo_clip_loss(1.0, 1.0, 0.2) == 1.0 && ppo_clip_loss(2.0, 1.0, 0.2) == 1.2 &&
              ppo_clip_loss(0.5, -1.0, 0.2) == -0.8,
          "clip branch cases");

  // PPO surrogate gradient on a fixed tiny network
  PolicyParams pol = make_policy(20, GaitBounds{}, Interval{10.0, 60.0}, 30.0);
  pol.net = Mlp({3, 4, 20});
  std::mt19937_64 prng(107);
  pol.net.randomize(prng, 1.0);
  const Eigen::VectorXd log_std = Eigen::VectorXd::LinSpaced(20, -1.2, -0.6);
  std::vector<PpoSample> batch;
  for (int k = 0; k < 8; ++k) {
    PpoSample s;
    s.obs = Eigen::Vector3d(0.7 + 0.1 * k, 1.0 - 0.05 * k, 0.1 * nd(rng));
    const Eigen::VectorXd mu = pol.net.forward(s.obs);
    s.z = mu;
    for (Eigen::Index i = 0; i < s.z.size(); ++i) s.z[i] += std::exp(log_std[i]) * nd(rng);
    s.log_prob_old = gaussian_log_prob(s.z, mu, log_std) + 0.3 * nd(rng);
    s.advantage = nd(rng);
    batch.push_back(s);
  }
  Eigen::VectorXd g_net, g_std;
  ppo_surrogate(pol, log_std, batch, 0.2, &g_net, &g_std);
  const Eigen::VectorXd theta = pol.flatten();
  double grad_err = 0.0;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    PolicyParams a = pol, b = pol;
    Eigen::VectorXd tp = theta, tm = theta;
    tp[k] += 1e-6;
    tm[k] -= 1e-6;
    a.unflatten(tp);
    b.unflatten(tm);
    const double fd = (ppo_surrogate(a, log_std, batch, 0.2) - ppo_surrogate(b, log_std, batch, 0.2)) / 2e-6;
    grad_err = std::max(grad_err, std::abs(g_net[k] - fd) / std::max(1.0, std::abs(fd)));
  }
  c.check(grad_err <= 1e-4, "PPO gradient vs finite differences");
  c.note("ES shrink", fmt(shrink));
  c.note("GAE err", fmt(gae_err));
  c.note("grad err", fmt(grad_err));
  return c.done();
}

// ---------------------------------------------------------------------------

const fs::path kShippedGait = kSource / "data" / "reference_gait.json";
const fs::path kGaitConfig = kSource / "data" / "configs" / "reference_gait.json";
const fs::path kEsConfig = kSource / "data" / "configs" / "es.json";

Outcome reference_gait_walking() {
  Checker c;
  // the shipped file must be what the seeded search produces
  const auto t0 = std::chrono::steady_clock::now();
  const int code = cli("reference-gait --config " + kGaitConfig.string() + " --out " + (g_work / "gait_a").string(),
                       "gait_a");
  const double search_s = seconds_since(t0);
  c.check(code == 0, "search exit " + std::to_string(code));
  c.check(search_s <= 900.0, "search time");
  c.check(slurp(g_work / "gait_a" / "reference_gait.json") == slurp(kShippedGait), "shipped gait reproduced");

  const auto t1 = std::chrono::steady_clock::now();
  const ReferenceGait g = load_reference_gait(kShippedGait);
  const SimConfig sim = g.apply(SimConfig{});
  GaitSearchConfig cfg;
  cfg.nominal_speed = g.nominal_speed;
  const GaitVerification v = verify_gait(g.command, sim, cfg);
  const double verify_s = seconds_since(t1);
  c.check(v.walking_steps >= 20, "20 steps");
  c.check(v.survived_seconds >= 8.0, "8 s");
  c.check(v.reason == Termination::kTimeout, "no constraint violation");
  c.check(v.max_late_residual < 1e-2, "late residual");
  c.check(v.trending_down, "residual trend");
  c.check(v.contraction.valid() && v.contraction.spectral_radius < 1.0, "contraction");
  c.check(verify_s < 60.0, "verification time");
  c.note("steps", v.walking_steps);
  c.note("seconds", fmt(v.survived_seconds));
  c.note("late residual", fmt(v.max_late_residual));
  c.note("rho", fmt(v.contraction.spectral_radius));
  c.note("search s", fmt(search_s));
  return c.done();
}

struct TrainedPolicy {
  bool ok = false;
  fs::path dir;
  std::uint64_t seed = 0;
};
TrainedPolicy g_trained;

Outcome training_smoke() {
  Checker c;
  const ExperimentConfig cfg = load_experiment_config(kEsConfig);
  const std::uint64_t pinned = *cfg.seed;
  std::ostringstream tried;
  for (std::uint64_t seed : {pinned, pinned + 1, pinned + 2}) {
    const fs::path dir = g_work / ("train_seed" + std::to_string(seed));
    const auto t0 = std::chrono::steady_clock::now();
    const int code = cli("train --config " + kEsConfig.string() + " --seed " + std::to_string(seed) + " --out " +
                             dir.string() + " --budget-seconds 1800",
                         "train_" + std::to_string(seed));
    const double wall = seconds_since(t0);
    if (code != 0) {
      tried << " seed " << seed << ": exit " << code << ";";
      continue;
    }
    std::ifstream trace(dir / "trace.csv");
    std::string line;
    std::getline(trace, line);
    std::vector<double> means;
    while (std::getline(trace, line)) {
      std::stringstream ss(line);
      std::string cell;
      std::getline(ss, cell, ',');
      std::getline(ss, cell, ',');
      means.push_back(std::stod(cell));
    }
    // improvement of the last ten iterations' mean over iteration 0
    double tail = 0.0;
    const std::size_t n_tail = std::min<std::size_t>(10, means.size());
    for (std::size_t i = means.size() - n_tail; i < means.size(); ++i) tail += means[i] / n_tail;
    const double improvement = means.empty() ? 0.0 : (tail - means.front()) / std::abs(means.front());

    const fs::path eval = dir / "speed";
    std::ofstream(dir / "profile.json") << "[[0, 0.8], [5, 1.0], [10, 1.2], [15, 1.4]]";
    const int ecode = cli("eval speed --config " + kEsConfig.string() + " --seed " + std::to_string(seed) +
                              " --checkpoint " + (dir / "policy.json").string() + " --profile " +
                              (dir / "profile.json").string() + " --duration 20 --transient 2 --out " + eval.string(),
                          "speed_" + std::to_string(seed));
    double err = 1e300;
    if (ecode == 0) err = json::parse(slurp(eval / "tracking.json"))["max_abs_error"].get<double>();
    tried << " seed " << seed << ": improvement " << fmt(100 * improvement) << "%, max speed error " << fmt(err)
          << " m/s, " << fmt(wall) << " s;";
    const bool ok = improvement >= 0.5 && err < 0.2 && wall <= 1800.0;
    if (!g_trained.ok) g_trained = {ok, dir, seed};
    if (ok) {
      g_trained = {true, dir, seed};
      c.note("passing seed", seed);
      break;
    }
  }
  c.check(g_trained.ok, "no seed met both the return and tracking targets");
  std::string s = tried.str();
  if (!s.empty() && s.back() == ';') s.pop_back();
  c.note("runs", s);
  return c.done();
}

Outcome disturbance_protocol() {
  Checker c;
  const std::string common = " --config " + kEsConfig.string() + " --seed 1 --sweep --direction backward";
  const int rc = cli("eval push" + common + " --gait " + kShippedGait.string() + " --v-d 0.8 --out " +
                         (g_work / "push_gait").string(),
                     "push_gait");
  c.check(rc == 0, "reference sweep exit");
  json ref, pol;
  if (rc == 0) {
    ref = json::parse(slurp(g_work / "push_gait" / "sweep.json"));
    c.check(ref["monotone"].get<bool>(), "reference table monotone");
    c.note("reference tolerates", ref["tolerated"].get<double>());
  }
  if (g_trained.dir.empty()) {
    c.check(false, "no trained policy");
    return c.done();
  }
  const int pc = cli("eval push" + common + " --checkpoint " + (g_trained.dir / "policy.json").string() +
                         " --v-d 0.8 --out " + (g_work / "push_policy").string(),
                     "push_policy");
  c.check(pc == 0, "policy sweep exit");
  if (pc == 0) {
    pol = json::parse(slurp(g_work / "push_policy" / "sweep.json"));
    c.check(pol["monotone"].get<bool>(), "policy table monotone");
    c.note("policy tolerates", pol["tolerated"].get<double>());
  }
  if (rc == 0 && pc == 0) {
    // reported, not asserted
    const bool ordered = pol["tolerated"].get<double>() >= ref["tolerated"].get<double>();
    c.note("policy >= reference", ordered ? "yes" : "no");
  }
  return c.done();
}

/// Compares two output directories file by file; the manifest is compared
/// without its wall-clock field.
bool same_outputs(const fs::path& a, const fs::path& b, std::string* why) {
  std::set<std::string> names;
  for (const auto& d : {a, b})
    for (const auto& e : fs::recursive_directory_iterator(d))
      if (e.is_regular_file()) names.insert(fs::relative(e.path(), d).string());
  for (const auto& n : names) {
    if (!fs::exists(a / n) || !fs::exists(b / n)) {
      *why = n + " missing";
      return false;
    }
    std::string x = slurp(a / n), y = slurp(b / n);
    if (n == "manifest.json") {
      json jx = json::parse(x), jy = json::parse(y);
      jx.erase("wall_clock_seconds");
      jy.erase("wall_clock_seconds");
      x = jx.dump();
      y = jy.dump();
    }
    if (n == "trace.csv") {
      // last column is wall-clock seconds
      auto strip = [](const std::string& s) {
        std::stringstream in(s);
        std::string out, line;
        while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
        return out;
      };
      x = strip(x);
      y = strip(y);
    }
    if (x != y) {
      *why = n + " differs";
      return false;
    }
  }
  return true;
}

Outcome determinism() {
  Checker c;
  const fs::path smoke_cfg = g_work / "determinism.json";
  {
    json j = json::parse(slurp(kEsConfig));
    j["robot"] = (kSource / "data" / "rabbit.json").string();
    j["policy"]["warm_start"] = kShippedGait.string();
    j["es"]["iterations"] = 5;
    std::ofstream(smoke_cfg) << j.dump(2);
  }
  std::ofstream(g_work / "profile.json") << "[[0, 0.8], [3, 1.1]]";
  const std::string ckpt = (g_work / "det_train_a" / "policy.json").string();
  const std::vector<std::pair<std::string, std::string>> commands{
      {"det_train", "train --config " + smoke_cfg.string() + " --seed 3 --workers 2"},
      {"det_speed", "eval speed --config " + smoke_cfg.string() + " --seed 3 --checkpoint " + ckpt + " --profile " +
                        (g_work / "profile.json").string() + " --duration 6"},
      {"det_push", "eval push --config " + smoke_cfg.string() + " --seed 3 --gait " + kShippedGait.string() +
                       " --magnitude 40 --frame-every 250"},
      {"det_sweep", "eval push --config " + smoke_cfg.string() + " --seed 3 --checkpoint " + ckpt +
                        " --sweep --magnitudes 0,50,100,400"},
      {"det_poincare", "eval poincare --config " + smoke_cfg.string() + " --seed 3 --gait " + kShippedGait.string()},
  };
  for (const auto& [tag, args] : commands) {
    for (const char* run : {"_a", "_b"})
      c.check(cli(args + " --out " + (g_work / (tag + run)).string(), tag + run) == 0, tag + run + " exit");
    std::string why;
    c.check(same_outputs(g_work / (tag + "_a"), g_work / (tag + "_b"), &why), tag + ": " + why);
  }
  // the reference-gait search was already run once under criterion 7
  if (fs::exists(g_work / "gait_a")) {
    c.check(cli("reference-gait --config " + kGaitConfig.string() + " --out " + (g_work / "gait_b").string(),
                "gait_b") == 0,
            "gait rerun exit");
    std::string why;
    c.check(same_outputs(g_work / "gait_a", g_work / "gait_b", &why), "reference-gait: " + why);
  }
  c.note("commands compared", commands.size() + (fs::exists(g_work / "gait_a") ? 1 : 0));
  return c.done();
}

}  // namespace

int main(int argc, char** argv) {
  g_work = fs::temp_directory_path() / "hzdrl_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--workdir" && i + 1 < argc) {
      g_work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string n; std::getline(ss, n, ',');) only.insert(std::stoi(n));
    } else {
      std::cerr << "usage: acceptance [--workdir DIR] [--only N[,N...]]\n";
      return 2;
    }
  }
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"model fidelity", model_fidelity},
      {"dynamics property suite", dynamics_suite},
      {"impact suite", impact_suite},
      {"gait and Bezier suite", gait_suite},
      {"policy counts and bounds", policy_counts},
      {"trainer correctness", trainer_correctness},
      {"reference-gait walking", reference_gait_walking},
      {"ES training smoke", training_smoke},
      {"disturbance protocol", disturbance_protocol},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("criterion %2d %s  %s (%.1f s): %s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                seconds_since(t0), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
