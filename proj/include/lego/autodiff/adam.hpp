#pragma once

#include <cstdint>
#include <vector>

#include "lego/autodiff/tensor.hpp"

namespace lego::ad {

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment buffers, one pair per parameter.
template <typename S>
struct AdamState {
  std::vector<std::vector<S>> m;
  std::vector<std::vector<S>> v;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update. Parameters without a gradient are
/// treated as having a zero gradient. Throws if `state` was built for
/// differently shaped parameters.
template <typename S>
void adam_step(std::vector<Tensor<S>>& params, AdamState<S>& state, const AdamConfig& config);

/// Convenience owner of a parameter list and its optimizer state.
template <typename S>
class Adam {
 public:
  Adam(std::vector<Tensor<S>> params, AdamConfig config);

  void step() { adam_step(params_, state_, config_); }
  void zero_grad();

  void set_lr(double lr) { config_.lr = lr; }
  const AdamConfig& config() const { return config_; }
  const AdamState<S>& state() const { return state_; }

 private:
  std::vector<Tensor<S>> params_;
  AdamConfig config_;
  AdamState<S> state_;
};

/// Cosine annealing from `base` to `floor` over `t_max` steps; clamps past
/// the horizon.
double cosine_lr(double base, std::int64_t t, std::int64_t t_max, double floor = 0.0);

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace lego::ad
