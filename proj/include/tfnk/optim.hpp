#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tfnk/graph.hpp"

namespace tfnk {

struct OptimConfig {
  double lr0 = 0.01;
  double lrf = 0.1;       // final lr = lr0 * lrf
  double momentum = 0.937;
  double weight_decay = 0.0005;
  double warmup_epochs = 3.0;
  double warmup_momentum = 0.8;
  double warmup_bias_lr = 0.1;
  int epochs = 300;
  int batch_size = 8;
  int patience = 30;
};

struct LrPoint {
  double lr_main = 0;  // conv weights and norm parameters
  double lr_bias = 0;
  double momentum = 0;
};

// t is the completed fraction of training in [0, 1]: linear warmup over the
// first warmup_epochs/epochs, then a cosine half-cycle from lr0 to lr0*lrf.
inline LrPoint lr_schedule(double t, const OptimConfig& cfg) {
  if (t < 0) t = 0;
  if (t > 1) t = 1;
  const double wf =
      cfg.epochs > 0 ? std::min(1.0, cfg.warmup_epochs / static_cast<double>(cfg.epochs)) : 0.0;
  LrPoint p;
  if (wf > 0 && t < wf) {
    const double u = t / wf;
    p.lr_main = u * cfg.lr0;
    p.lr_bias = cfg.warmup_bias_lr + u * (cfg.lr0 - cfg.warmup_bias_lr);
    p.momentum = cfg.warmup_momentum + u * (cfg.momentum - cfg.warmup_momentum);
  } else {
    const double tau = wf < 1.0 ? (t - wf) / (1.0 - wf) : 1.0;
    const double mult = cfg.lrf + (1.0 - cfg.lrf) * 0.5 * (1.0 + std::cos(M_PI * tau));
    p.lr_main = cfg.lr0 * mult;
    p.lr_bias = p.lr_main;
    p.momentum = cfg.momentum;
  }
  return p;
}

// Velocity update v = m*v + g + wd*w, then w -= lr*v.
template <typename S>
void sgd_step_one(std::vector<S>& value, const std::vector<S>& grad, std::vector<S>& velocity,
                  double lr, double momentum, double weight_decay) {
  for (size_t i = 0; i < value.size(); ++i) {
    const S g = (i < grad.size() ? grad[i] : S(0)) + static_cast<S>(weight_decay) * value[i];
    velocity[i] = static_cast<S>(momentum) * velocity[i] + g;
    value[i] -= static_cast<S>(lr) * velocity[i];
  }
}

// SGD with momentum and three parameter groups: convolution weights get
// weight decay, biases warm up from warmup_bias_lr, norm parameters get
// neither.
template <typename S>
class SgdOptimizer {
 public:
  explicit SgdOptimizer(OptimConfig cfg) : cfg_(cfg) {}

  const OptimConfig& cfg() const { return cfg_; }

  void step(std::vector<NamedTensor<S>>& params, double t) {
    if (velocity_.size() != params.size()) {
      velocity_.assign(params.size(), {});
      for (size_t i = 0; i < params.size(); ++i) {
        velocity_[i].assign(params[i].tensor.data().size(), S(0));
      }
    }
    const LrPoint p = lr_schedule(t, cfg_);
    // validate every gradient before touching any parameter so a divergence
    // abort leaves the model in its last finite state
    for (const auto& nt : params) {
      if (!nt.tensor.has_grad()) continue;
      for (const S g : nt.tensor.grad_ref()) {
        if (!std::isfinite(g)) {
          throw numeric_error("sgd: non-finite gradient in " + nt.name);
        }
      }
    }
    for (size_t i = 0; i < params.size(); ++i) {
      auto& nt = params[i];
      const double lr = nt.group == ParamGroup::Bias ? p.lr_bias : p.lr_main;
      const double wd = nt.group == ParamGroup::ConvWeight ? cfg_.weight_decay : 0.0;
      static const std::vector<S> kEmpty;
      sgd_step_one<S>(nt.tensor.data(), nt.tensor.has_grad() ? nt.tensor.grad_ref() : kEmpty,
                      velocity_[i], lr, p.momentum, wd);
    }
  }

 private:
  OptimConfig cfg_;
  std::vector<std::vector<S>> velocity_;
};

}  // namespace tfnk
