#pragma once

// Reduced-observation policy: (v_d, v_bar, e_bar) -> 20 free Bezier
// coefficients (+ K_d), bounded by a logistic output layer.

#include <cmath>
#include <deque>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hzdrl/control.hpp"
#include "hzdrl/gait.hpp"

namespace hzdrl {

/// Rolling window of instantaneous hip forward velocities.
class ObsWindow {
 public:
  explicit ObsWindow(std::size_t capacity = 200) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("observation window capacity must be > 0");
  }

  void push(double v) {
    samples_.push_back(v);
    if (samples_.size() > capacity_) samples_.pop_front();
  }
  void reset() { samples_.clear(); }
  void set_desired(double v_d) { v_d_ = v_d; }

  double desired() const { return v_d_; }
  std::size_t size() const { return samples_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return samples_.empty(); }

  double mean() const {
    if (samples_.empty()) throw std::logic_error("observation window is empty");
    double s = 0.0;
    for (double v : samples_) s += v;
    return s / static_cast<double>(samples_.size());
  }

 private:
  std::size_t capacity_;
  std::deque<double> samples_;
  double v_d_ = 0.0;
};

struct Observation {
  double v_d = 0.0;
  double v_bar = 0.0;
  double e_bar = 0.0;

  Eigen::Vector3d vector() const { return {v_d, v_bar, e_bar}; }
};

inline Observation observe(const ObsWindow& w) {
  Observation o;
  o.v_d = w.desired();
  o.v_bar = w.mean();
  o.e_bar = o.v_d - o.v_bar;
  return o;
}

// ---------------------------------------------------------------------------
// Multilayer perceptron with tanh hidden units and a linear output layer.

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("MLP needs at least input and output layers");
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) throw std::invalid_argument("MLP layer sizes must be positive");
      weights_.push_back(Eigen::MatrixXd::Zero(sizes_[l + 1], sizes_[l]));
      biases_.push_back(Eigen::VectorXd::Zero(sizes_[l + 1]));
    }
  }

  const std::vector<int>& sizes() const { return sizes_; }
  int inputs() const { return sizes_.front(); }
  int outputs() const { return sizes_.back(); }
  std::size_t num_layers() const { return weights_.size(); }

  Eigen::MatrixXd& weight(std::size_t l) { return weights_[l]; }
  const Eigen::MatrixXd& weight(std::size_t l) const { return weights_[l]; }
  Eigen::VectorXd& bias(std::size_t l) { return biases_[l]; }
  const Eigen::VectorXd& bias(std::size_t l) const { return biases_[l]; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l)
      n += static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1] + sizes_[l + 1];
    return n;
  }

  /// Layer by layer: W (row-major) then b.
  Eigen::VectorXd flatten() const {
    Eigen::VectorXd out(param_count());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      for (Eigen::Index r = 0; r < weights_[l].rows(); ++r)
        for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) out[k++] = weights_[l](r, c);
      for (Eigen::Index r = 0; r < biases_[l].size(); ++r) out[k++] = biases_[l][r];
    }
    return out;
  }

  void unflatten(const Eigen::VectorXd& flat) {
    if (static_cast<std::size_t>(flat.size()) != param_count())
      throw std::invalid_argument("parameter vector has length " + std::to_string(flat.size()) + ", expected " +
                                  std::to_string(param_count()));
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      for (Eigen::Index r = 0; r < weights_[l].rows(); ++r)
        for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) weights_[l](r, c) = flat[k++];
      for (Eigen::Index r = 0; r < biases_[l].size(); ++r) biases_[l][r] = flat[k++];
    }
  }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const {
    check_input(x);
    Eigen::VectorXd a = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Eigen::VectorXd z = weights_[l] * a + biases_[l];
      a = (l + 1 < weights_.size()) ? Eigen::VectorXd(z.array().tanh()) : z;
    }
    return a;
  }

  /// Activations per layer (input first) for reverse-mode differentiation.
  struct Tape {
    std::vector<Eigen::VectorXd> activations;
  };

  Eigen::VectorXd forward(const Eigen::VectorXd& x, Tape& tape) const {
    check_input(x);
    tape.activations.assign(1, x);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Eigen::VectorXd z = weights_[l] * tape.activations.back() + biases_[l];
      tape.activations.push_back((l + 1 < weights_.size()) ? Eigen::VectorXd(z.array().tanh()) : z);
    }
    return tape.activations.back();
  }

  /// Accumulates d(loss)/d(params) into `grad` (flatten() layout) given
  /// d(loss)/d(output).
  void backward(const Tape& tape, const Eigen::VectorXd& d_out, Eigen::VectorXd& grad) const {
    if (static_cast<std::size_t>(grad.size()) != param_count()) grad = Eigen::VectorXd::Zero(param_count());
    std::vector<Eigen::Index> offset(weights_.size());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      offset[l] = k;
      k += weights_[l].size() + biases_[l].size();
    }
    Eigen::VectorXd delta = d_out;  // d loss / d z of the current layer
    for (std::size_t l = weights_.size(); l-- > 0;) {
      const Eigen::VectorXd& a_in = tape.activations[l];
      Eigen::Index o = offset[l];
      for (Eigen::Index r = 0; r < weights_[l].rows(); ++r)
        for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) grad[o++] += delta[r] * a_in[c];
      for (Eigen::Index r = 0; r < biases_[l].size(); ++r) grad[o++] += delta[r];
      if (l > 0) {
        const Eigen::VectorXd back = weights_[l].transpose() * delta;
        delta = back.array() * (1.0 - a_in.array().square());
      }
    }
  }

  template <typename Rng>
  void randomize(Rng& rng, double scale) {
    std::normal_distribution<double> n(0.0, 1.0);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const double s = scale / std::sqrt(static_cast<double>(weights_[l].cols()));
      for (Eigen::Index i = 0; i < weights_[l].size(); ++i) weights_[l].data()[i] = s * n(rng);
      biases_[l].setZero();
    }
  }

 private:
  void check_input(const Eigen::VectorXd& x) const {
    if (x.size() != inputs())
      throw std::invalid_argument("MLP input has size " + std::to_string(x.size()) + ", expected " +
                                  std::to_string(inputs()));
  }

  std::vector<int> sizes_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

// ---------------------------------------------------------------------------

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

struct PolicyParams {
  Mlp net;
  std::vector<Interval> output_bounds;  // one per network output
  double fixed_kd = 30.0;               // used when the network has 20 outputs

  int n_out() const { return net.outputs(); }
  bool outputs_kd() const { return n_out() == kNumFreeCoeffs + 1; }
  std::size_t param_count() const { return net.param_count(); }
  Eigen::VectorXd flatten() const { return net.flatten(); }
  void unflatten(const Eigen::VectorXd& v) { net.unflatten(v); }

  /// Pre-logistic outputs z -> bounded outputs.
  Eigen::VectorXd squash(const Eigen::VectorXd& z) const {
    Eigen::VectorXd y(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) y[i] = output_bounds[i].lo + output_bounds[i].width() * logistic(z[i]);
    return y;
  }
  /// Inverse of squash for values strictly inside the bounds.
  Eigen::VectorXd unsquash(const Eigen::VectorXd& y) const {
    Eigen::VectorXd z(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i)
      z[i] = logit((y[i] - output_bounds[i].lo) / output_bounds[i].width());
    return z;
  }
};

/// Hidden layers of 12 units; n_out is 20 (fixed K_d) or 21 (K_d learned).
inline PolicyParams make_policy(int n_out, const GaitBounds& bounds, Interval kd_range, double fixed_kd) {
  if (n_out != kNumFreeCoeffs && n_out != kNumFreeCoeffs + 1)
    throw std::invalid_argument("policy n_out must be 20 or 21");
  PolicyParams p;
  p.net = Mlp({3, 12, 12, 12, n_out});
  for (int i = 0; i < kNumFreeCoeffs; ++i) p.output_bounds.push_back(bounds.free_entry(i));
  if (n_out == kNumFreeCoeffs + 1) p.output_bounds.push_back(kd_range);
  p.fixed_kd = fixed_kd;
  return p;
}

/// What the walker needs for one step: trajectory coefficients and K_d.
struct StepCommand {
  BezierCoeffs coeffs;
  double kd = 0.0;
};

struct PolicyOutput {
  FreeCoeffs free;
  double kd = 0.0;
};

inline PolicyOutput decode_outputs(const PolicyParams& params, const Eigen::VectorXd& y) {
  PolicyOutput out;
  out.free = y.head<kNumFreeCoeffs>();
  out.kd = params.outputs_kd() ? y[kNumFreeCoeffs] : params.fixed_kd;
  return out;
}

inline PolicyOutput forward(const PolicyParams& params, const Observation& obs) {
  if (params.output_bounds.size() != static_cast<std::size_t>(params.n_out()))
    throw std::invalid_argument("policy output bounds do not match network outputs");
  return decode_outputs(params, params.squash(params.net.forward(obs.vector())));
}

/// Deterministic policy as a step-command source.
struct MlpGaitSource {
  const PolicyParams* params;
  GaitBounds bounds;

  StepCommand operator()(const Observation& obs) const {
    const PolicyOutput o = forward(*params, obs);
    return {expand_free_params(o.free, bounds), o.kd};
  }
};

/// Fixed coefficients regardless of observation (reference gait).
struct ConstantGaitSource {
  StepCommand command;
  StepCommand operator()(const Observation&) const { return command; }
};

// ---------------------------------------------------------------------------
// Checkpoint I/O

inline nlohmann::json policy_to_json(const PolicyParams& p) {
  nlohmann::json j;
  j["format"] = "hzdrl-policy";
  j["layer_sizes"] = p.net.sizes();
  j["n_out"] = p.n_out();
  j["fixed_kd"] = p.fixed_kd;
  j["output_bounds"] = p.output_bounds;
  const Eigen::VectorXd flat = p.flatten();
  j["params"] = std::vector<double>(flat.data(), flat.data() + flat.size());
  return j;
}

inline PolicyParams policy_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "hzdrl-policy") throw std::invalid_argument("not a policy checkpoint");
  PolicyParams p;
  p.net = Mlp(j.at("layer_sizes").get<std::vector<int>>());
  if (j.at("n_out").get<int>() != p.n_out()) throw std::invalid_argument("checkpoint n_out disagrees with layer_sizes");
  p.fixed_kd = j.at("fixed_kd").get<double>();
  p.output_bounds = j.at("output_bounds").get<std::vector<Interval>>();
  if (p.output_bounds.size() != static_cast<std::size_t>(p.n_out()))
    throw std::invalid_argument("checkpoint output_bounds size mismatch");
  const auto v = j.at("params").get<std::vector<double>>();
  p.unflatten(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  return p;
}

}  // namespace hzdrl
