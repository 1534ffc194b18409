#include "lego/autodiff/adam.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lego::ad {

template <typename S>
void adam_step(std::vector<Tensor<S>>& params, AdamState<S>& state, const AdamConfig& config) {
  if (state.m.empty() && state.step == 0) {
    for (const auto& p : params) {
      state.m.emplace_back(static_cast<std::size_t>(p.numel()), S(0));
      state.v.emplace_back(static_cast<std::size_t>(p.numel()), S(0));
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw Error("adam_step: optimizer state has " + std::to_string(state.m.size()) +
                " slots for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (static_cast<std::int64_t>(state.m[i].size()) != params[i].numel() ||
        static_cast<std::int64_t>(state.v[i].size()) != params[i].numel()) {
      throw Error("adam_step: state shape mismatch for parameter " + std::to_string(i));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const S b1 = static_cast<S>(config.beta1);
  const S b2 = static_cast<S>(config.beta2);
  const S c1 = static_cast<S>(1.0 / (1.0 - std::pow(config.beta1, t)));
  const S c2 = static_cast<S>(1.0 / (1.0 - std::pow(config.beta2, t)));
  const S lr = static_cast<S>(config.lr);
  const S eps = static_cast<S>(config.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.has_grad()) {
      // Zero gradient: moments decay, and the update is a pure decay of m.
      auto& m = state.m[i];
      auto& v = state.v[i];
      auto w = p.data();
      for (std::size_t j = 0; j < m.size(); ++j) {
        m[j] *= b1;
        v[j] *= b2;
        w[j] -= lr * (m[j] * c1) / (std::sqrt(v[j] * c2) + eps);
      }
      continue;
    }
    const auto g = p.grad();
    auto w = p.data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < m.size(); ++j) {
      m[j] = b1 * m[j] + (S(1) - b1) * g[j];
      v[j] = b2 * v[j] + (S(1) - b2) * g[j] * g[j];
      w[j] -= lr * (m[j] * c1) / (std::sqrt(v[j] * c2) + eps);
    }
  }
}

template <typename S>
Adam<S>::Adam(std::vector<Tensor<S>> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {}

template <typename S>
void Adam<S>::zero_grad() {
  for (auto& p : params_) {
    p.zero_grad();
  }
}

double cosine_lr(double base, std::int64_t t, std::int64_t t_max, double floor) {
  if (t_max <= 0) {
    return base;
  }
  const double progress = std::clamp(static_cast<double>(t) / static_cast<double>(t_max), 0.0, 1.0);
  return floor + 0.5 * (base - floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

template void adam_step(std::vector<Tensor<float>>&, AdamState<float>&, const AdamConfig&);
template void adam_step(std::vector<Tensor<double>>&, AdamState<double>&, const AdamConfig&);
template class Adam<float>;
template class Adam<double>;

}  // namespace lego::ad
