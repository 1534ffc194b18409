#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lego/autodiff/ops.hpp"
#include "lego/autodiff/tensor.hpp"
#include "lego/core/random.hpp"

namespace lego::test {

using T64 = ad::Tensor<double>;
using LossFn = std::function<T64(ad::Tape<double>&)>;

struct GradReport {
  double max_rel = 0.0;
  std::string worst;
  std::size_t entries = 0;
};

/// Relative error |a - n| / max(|a|, |n|, floor).
inline double rel_error(double a, double n, double floor = 1e-6) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Compares tape gradients of `loss` against central differences for every
/// entry of every named input.
inline GradReport check_gradients(const std::vector<std::pair<std::string, T64>>& inputs,
                                  const LossFn& loss, double h = 1e-5, double floor = 1e-6) {
  for (auto [name, t] : inputs) t.zero_grad();
  {
    ad::Tape<double> tape;
    const auto l = loss(tape);
    tape.backward(l);
  }
  GradReport report;
  const auto eval = [&] {
    ad::Tape<double> tape(false);
    return loss(tape).item();
  };
  for (auto [name, t] : inputs) {
    const std::vector<double> analytic = t.has_grad()
                                             ? std::vector<double>(t.grad().begin(), t.grad().end())
                                             : std::vector<double>(static_cast<std::size_t>(t.numel()), 0.0);
    for (std::int64_t i = 0; i < t.numel(); ++i) {
      const double keep = t[i];
      t[i] = keep + h;
      const double up = eval();
      t[i] = keep - h;
      const double down = eval();
      t[i] = keep;
      const double numeric = (up - down) / (2 * h);
      const double e = rel_error(analytic[static_cast<std::size_t>(i)], numeric, floor);
      ++report.entries;
      if (e > report.max_rel) {
        report.max_rel = e;
        report.worst = name + "[" + std::to_string(i) + "] analytic=" +
                       std::to_string(analytic[static_cast<std::size_t>(i)]) +
                       " numeric=" + std::to_string(numeric);
      }
    }
  }
  return report;
}

/// Random projection weights so that a non-scalar output becomes a scalar
/// loss with generic gradients.
inline T64 projection_weights(std::int64_t n, Rng& rng) {
  return T64::randn({n, 1}, 1.0, rng);
}

/// sum_i y_i * w_i as a scalar on the tape.
inline T64 project(ad::Tape<double>& tape, const T64& y, const T64& w) {
  const auto flat = ad::reshape(tape, y, {1, y.numel()});
  return ad::sum(tape, ad::matmul(tape, flat, w));
}

inline T64 rand_tensor(ad::Shape shape, Rng& rng, double stddev = 1.0) {
  return T64::randn(std::move(shape), stddev, rng, true);
}

}  // namespace lego::test
