#pragma once

#include "mct/common.hpp"
#include "mct/mlp.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace mct {

enum class OptAlgo { Sgd, Adam, AdamW };

inline std::string to_string(OptAlgo a) {
  switch (a) {
    case OptAlgo::Sgd: return "sgd";
    case OptAlgo::Adam: return "adam";
    case OptAlgo::AdamW: return "adamw";
  }
  return "?";
}

// Base rate plus optional step milestones (epoch -> new rate).
struct LrSchedule {
  double base = 1e-3;
  std::vector<std::pair<int, double>> milestones;

  double at(int epoch) const {
    double lr = base;
    for (const auto& [e, v] : milestones)
      if (epoch >= e) lr = v;
    return lr;
  }
};

struct OptimizerConfig {
  OptAlgo algo = OptAlgo::Adam;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (lr <= 0.0) throw StructuralError("optimizer: lr must be positive");
    if (weight_decay < 0.0) throw StructuralError("optimizer: weight decay must be nonnegative");
    if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
      throw StructuralError("optimizer: betas must lie in (0,1)");
    if (epsilon <= 0.0) throw StructuralError("optimizer: epsilon must be positive");
  }
};

// Moment buffers mirror the parameter shapes; step_count advances by exactly
// one per applied step. SGD couples weight decay into the gradient, AdamW
// decays decoupled, Adam applies bias correction.
struct OptimizerState {
  OptimizerConfig cfg;
  std::vector<MlpParams::Layer> m;
  std::vector<MlpParams::Layer> v;
  std::int64_t step_count = 0;

  static OptimizerState create(OptimizerConfig cfg, const MlpParams& params) {
    cfg.validate();
    OptimizerState st;
    st.cfg = cfg;
    if (cfg.algo != OptAlgo::Sgd) {
      st.m.reserve(params.layers.size());
      st.v.reserve(params.layers.size());
      for (const auto& l : params.layers) {
        st.m.push_back({Matrix::Zero(l.w.rows(), l.w.cols()), Vector::Zero(l.b.size())});
        st.v.push_back({Matrix::Zero(l.w.rows(), l.w.cols()), Vector::Zero(l.b.size())});
      }
    }
    return st;
  }
};

namespace detail {

template <typename Mat>
void adam_update(Mat& p, const Mat& g, Mat& m, Mat& v, const OptimizerConfig& c, double bc1,
                 double bc2, bool decoupled_decay) {
  m.array() = c.beta1 * m.array() + (1.0 - c.beta1) * g.array();
  v.array() = c.beta2 * v.array() + (1.0 - c.beta2) * g.array().square();
  if (decoupled_decay && c.weight_decay > 0.0) p.array() -= c.lr * c.weight_decay * p.array();
  p.array() -= c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.epsilon);
}

}  // namespace detail

inline void optimizer_step(OptimizerState& state, MlpParams& params, const MlpGrads& grads) {
  if (grads.layers.size() != params.layers.size())
    throw StructuralError("optimizer_step: gradient layer count mismatch");
  if (!grads.all_finite()) throw NumericError("optimizer_step: non-finite gradient");
  const OptimizerConfig& c = state.cfg;
  state.step_count += 1;
  if (c.algo == OptAlgo::Sgd) {
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
      auto& p = params.layers[k];
      const auto& g = grads.layers[k];
      if (c.weight_decay > 0.0) {
        p.w -= c.lr * (g.w + c.weight_decay * p.w);
        p.b -= c.lr * (g.b + c.weight_decay * p.b);
      } else {
        p.w -= c.lr * g.w;
        p.b -= c.lr * g.b;
      }
    }
    return;
  }
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step_count));
  const bool decoupled = c.algo == OptAlgo::AdamW;
  // classic Adam couples the decay into the gradient so the moments see it;
  // AdamW decays the parameters directly
  const bool coupled_decay = c.algo == OptAlgo::Adam && c.weight_decay > 0.0;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    auto& p = params.layers[k];
    const auto& g = grads.layers[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (coupled_decay) {
      const Matrix gw = g.w + c.weight_decay * p.w;
      const Vector gb = g.b + c.weight_decay * p.b;
      detail::adam_update(p.w, gw, m.w, v.w, c, bc1, bc2, false);
      detail::adam_update(p.b, gb, m.b, v.b, c, bc1, bc2, false);
    } else {
      detail::adam_update(p.w, g.w, m.w, v.w, c, bc1, bc2, decoupled);
      detail::adam_update(p.b, g.b, m.b, v.b, c, bc1, bc2, decoupled);
    }
  }
}

}  // namespace mct
