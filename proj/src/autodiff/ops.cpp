#include "lego/autodiff/ops.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/SpecialFunctions>
#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <numbers>

namespace lego::ad {

namespace {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
Eigen::Map<RowMat<S>> mat(std::span<S> s, std::int64_t rows, std::int64_t cols, std::int64_t offset = 0) {
  return Eigen::Map<RowMat<S>>(s.data() + offset, rows, cols);
}

template <typename S>
Eigen::Map<const RowMat<S>> cmat(std::span<const S> s, std::int64_t rows, std::int64_t cols,
                                 std::int64_t offset = 0) {
  return Eigen::Map<const RowMat<S>>(s.data() + offset, rows, cols);
}

template <typename S>
bool tracks(const Tape<S>& tape, std::initializer_list<const Tensor<S>*> inputs) {
  if (!tape.recording()) {
    return false;
  }
  for (const auto* t : inputs) {
    if (t->defined() && t->requires_grad()) {
      return true;
    }
  }
  return false;
}

template <typename S>
void check_finite(std::span<const S> values, const char* op) {
  if constexpr (kChecked<S>) {
    for (const S v : values) {
      if (!std::isfinite(v)) {
        throw NumericError(std::string("non-finite value produced by ") + op);
      }
    }
  }
}

template <typename S>
Tensor<S> finish(Tensor<S> out, const char* op) {
  check_finite<S>(out.data(), op);
  return out;
}

// Message is only built on failure.
#define LEGO_REQUIRE(cond, message) \
  do {                              \
    if (!(cond)) {                  \
      throw Error(message);         \
    }                               \
  } while (0)

// Rows of length `last` when a tensor is viewed as [numel/last, last].
template <typename S>
std::int64_t leading_rows(const Tensor<S>& x) {
  LEGO_REQUIRE(x.rank() >= 1, "expected a tensor of rank >= 1");
  const auto last = x.dim(-1);
  return last == 0 ? 0 : x.numel() / last;
}

Shape with_last(const Shape& shape, std::int64_t last) {
  Shape out = shape;
  out.back() = last;
  return out;
}

}  // namespace

template <typename S>
Tensor<S> matmul(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  LEGO_REQUIRE(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          "matmul: shape mismatch " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const auto m = a.dim(0);
  const auto k = a.dim(1);
  const auto p = b.dim(1);
  Tensor<S> out = Tensor<S>::empty({m, p});
  mat(out.data(), m, p).noalias() = cmat(a.data(), m, k) * cmat(b.data(), k, p);
  if (tracks(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape.record(out, [out, a, b, m, k, p]() mutable {
      const auto g = cmat(out.grad(), m, p);
      if (a.requires_grad()) {
        mat(a.grad_buffer(), m, k).noalias() += g * cmat(b.data(), k, p).transpose();
      }
      if (b.requires_grad()) {
        mat(b.grad_buffer(), k, p).noalias() += cmat(a.data(), m, k).transpose() * g;
      }
    });
  }
  return finish(out, "matmul");
}

template <typename S>
Tensor<S> linear(Tape<S>& tape, const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias) {
  LEGO_REQUIRE(w.rank() == 2 && x.rank() >= 1 && x.dim(-1) == w.dim(0),
          "linear: shape mismatch " + to_string(x.shape()) + " x " + to_string(w.shape()));
  const auto in = w.dim(0);
  const auto outd = w.dim(1);
  LEGO_REQUIRE(!bias.defined() || (bias.rank() == 1 && bias.dim(0) == outd), "linear: bias shape");
  const auto rows = leading_rows(x);
  Tensor<S> out = Tensor<S>::empty(with_last(x.shape(), outd));
  auto y = mat(out.data(), rows, outd);
  y.noalias() = cmat(x.data(), rows, in) * cmat(w.data(), in, outd);
  if (bias.defined()) {
    y.rowwise() += cmat(bias.data(), 1, outd).row(0);
  }
  if (tracks(tape, {&x, &w, &bias})) {
    out.set_requires_grad(true);
    tape.record(out, [out, x, w, bias, rows, in, outd]() mutable {
      const auto g = cmat(out.grad(), rows, outd);
      if (x.requires_grad()) {
        mat(x.grad_buffer(), rows, in).noalias() += g * cmat(w.data(), in, outd).transpose();
      }
      if (w.requires_grad()) {
        mat(w.grad_buffer(), in, outd).noalias() += cmat(x.data(), rows, in).transpose() * g;
      }
      if (bias.defined() && bias.requires_grad()) {
        mat(bias.grad_buffer(), 1, outd) += g.colwise().sum();
      }
    });
  }
  return finish(out, "linear");
}

template <typename S>
Tensor<S> bmm(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b, bool transpose_b) {
  LEGO_REQUIRE(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0),
          "bmm: expected [B,m,k] and [B,k,p] operands");
  const auto batch = a.dim(0);
  const auto m = a.dim(1);
  const auto k = a.dim(2);
  const auto p = transpose_b ? b.dim(1) : b.dim(2);
  LEGO_REQUIRE((transpose_b ? b.dim(2) : b.dim(1)) == k,
          "bmm: inner dimension mismatch " + to_string(a.shape()) + " x " + to_string(b.shape()));
  Tensor<S> out = Tensor<S>::empty({batch, m, p});
  for (std::int64_t i = 0; i < batch; ++i) {
    auto c = mat(out.data(), m, p, i * m * p);
    const auto ai = cmat(a.data(), m, k, i * m * k);
    if (transpose_b) {
      c.noalias() = ai * cmat(b.data(), p, k, i * p * k).transpose();
    } else {
      c.noalias() = ai * cmat(b.data(), k, p, i * k * p);
    }
  }
  if (tracks(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape.record(out, [out, a, b, batch, m, k, p, transpose_b]() mutable {
      for (std::int64_t i = 0; i < batch; ++i) {
        const auto g = cmat(out.grad(), m, p, i * m * p);
        const auto ai = cmat(a.data(), m, k, i * m * k);
        if (transpose_b) {
          const auto bi = cmat(b.data(), p, k, i * p * k);
          if (a.requires_grad()) {
            mat(a.grad_buffer(), m, k, i * m * k).noalias() += g * bi;
          }
          if (b.requires_grad()) {
            mat(b.grad_buffer(), p, k, i * p * k).noalias() += g.transpose() * ai;
          }
        } else {
          const auto bi = cmat(b.data(), k, p, i * k * p);
          if (a.requires_grad()) {
            mat(a.grad_buffer(), m, k, i * m * k).noalias() += g * bi.transpose();
          }
          if (b.requires_grad()) {
            mat(b.grad_buffer(), k, p, i * k * p).noalias() += ai.transpose() * g;
          }
        }
      }
    });
  }
  return finish(out, "bmm");
}

template <typename S>
Tensor<S> add(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  bool suffix = sb.size() <= sa.size();
  for (std::size_t i = 0; suffix && i < sb.size(); ++i) {
    suffix = sb[sb.size() - 1 - i] == sa[sa.size() - 1 - i];
  }
  LEGO_REQUIRE(suffix, "add: shape " + to_string(sb) + " does not broadcast onto " + to_string(sa));
  const auto inner = b.numel();
  const auto tiles = inner == 0 ? 0 : a.numel() / inner;
  Tensor<S> out = a.clone();
  auto y = out.data();
  const auto bv = b.data();
  for (std::int64_t t = 0; t < tiles; ++t) {
    for (std::int64_t i = 0; i < inner; ++i) {
      y[static_cast<std::size_t>(t * inner + i)] += bv[static_cast<std::size_t>(i)];
    }
  }
  if (tracks(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape.record(out, [out, a, b, tiles, inner]() mutable {
      const auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
        }
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::int64_t t = 0; t < tiles; ++t) {
          for (std::int64_t i = 0; i < inner; ++i) {
            gb[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(t * inner + i)];
          }
        }
      }
    });
  }
  return finish(out, "add");
}

template <typename S>
Tensor<S> scale(Tape<S>& tape, const Tensor<S>& x, double factor) {
  Tensor<S> out = x.clone();
  const S f = static_cast<S>(factor);
  for (auto& v : out.data()) {
    v *= f;
  }
  if (tracks(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record(out, [out, x, f]() mutable {
      const auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[i] += f * g[i];
      }
    });
  }
  return finish(out, "scale");
}

template <typename S>
Tensor<S> sum(Tape<S>& tape, const Tensor<S>& x) {
  S total = 0;
  for (const S v : x.data()) {
    total += v;
  }
  Tensor<S> out = Tensor<S>::scalar(total);
  if (tracks(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record(out, [out, x]() mutable {
      const S g = out.grad()[0];
      for (auto& v : x.grad_buffer()) {
        v += g;
      }
    });
  }
  return finish(out, "sum");
}

template <typename S>
Tensor<S> mean(Tape<S>& tape, const Tensor<S>& x) {
  LEGO_REQUIRE(x.numel() > 0, "mean of an empty tensor");
  return scale(tape, sum(tape, x), 1.0 / static_cast<double>(x.numel()));
}

template <typename S>
Tensor<S> softmax_rows(Tape<S>& tape, const Tensor<S>& x) {
  const auto cols = x.dim(-1);
  const auto rows = leading_rows(x);
  Tensor<S> out = Tensor<S>::empty(x.shape());
  const auto xv = x.data();
  auto yv = out.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const S* in = xv.data() + r * cols;
    S* y = yv.data() + r * cols;
    const S peak = *std::max_element(in, in + cols);
    S total = 0;
    for (std::int64_t c = 0; c < cols; ++c) {
      y[c] = std::exp(in[c] - peak);
      total += y[c];
    }
    const S inv = S(1) / total;
    for (std::int64_t c = 0; c < cols; ++c) {
      y[c] *= inv;
    }
  }
  if (tracks(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record(out, [out, x, rows, cols]() mutable {
      const auto g = out.grad();
      const auto y = out.data();
      auto gx = x.grad_buffer();
      for (std::int64_t r = 0; r < rows; ++r) {
        const auto off = static_cast<std::size_t>(r * cols);
        S dot = 0;
        for (std::int64_t c = 0; c < cols; ++c) {
          dot += g[off + c] * y[off + c];
        }
        for (std::int64_t c = 0; c < cols; ++c) {
          gx[off + c] += y[off + c] * (g[off + c] - dot);
        }
      }
    });
  }
  return finish(out, "softmax_rows");
}

template <typename S>
Tensor<S> layer_norm(Tape<S>& tape, const Tensor<S>& x, const Tensor<S>& gain,
                     const Tensor<S>& bias, double eps) {
  const auto cols = x.dim(-1);
  LEGO_REQUIRE(gain.numel() == cols && bias.numel() == cols,
          "layer_norm: gain/bias do not match the normalized dimension");
  const auto rows = leading_rows(x);
  Tensor<S> out = Tensor<S>::empty(x.shape());
  auto normalized = std::make_shared<std::vector<S>>(static_cast<std::size_t>(x.numel()));
  auto inv_std = std::make_shared<std::vector<S>>(static_cast<std::size_t>(rows));
  const auto xv = x.data();
  const auto gv = gain.data();
  const auto bv = bias.data();
  auto yv = out.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const S* in = xv.data() + r * cols;
    S mu = 0;
    for (std::int64_t c = 0; c < cols; ++c) {
      mu += in[c];
    }
    mu /= static_cast<S>(cols);
    S var = 0;
    for (std::int64_t c = 0; c < cols; ++c) {
      var += (in[c] - mu) * (in[c] - mu);
    }
    var /= static_cast<S>(cols);
    const S rstd = S(1) / std::sqrt(var + static_cast<S>(eps));
    (*inv_std)[static_cast<std::size_t>(r)] = rstd;
    for (std::int64_t c = 0; c < cols; ++c) {
      const auto i = static_cast<std::size_t>(r * cols + c);
      const S xh = (in[c] - mu) * rstd;
      (*normalized)[i] = xh;
      yv[i] = xh * gv[static_cast<std::size_t>(c)] + bv[static_cast<std::size_t>(c)];
    }
  }
  if (tracks(tape, {&x, &gain, &bias})) {
    out.set_requires_grad(true);
    tape.record(out, [out, x, gain, bias, normalized, inv_std, rows, cols]() mutable {
      const auto g = out.grad();
      const auto& xh = *normalized;
      const auto gv = gain.data();
      if (gain.requires_grad() || bias.requires_grad()) {
        auto gg = gain.requires_grad() ? gain.grad_buffer() : std::span<S>{};
        auto gb = bias.requires_grad() ? bias.grad_buffer() : std::span<S>{};
        for (std::int64_t r = 0; r < rows; ++r) {
          for (std::int64_t c = 0; c < cols; ++c) {
            const auto i = static_cast<std::size_t>(r * cols + c);
            if (!gg.empty()) gg[static_cast<std::size_t>(c)] += g[i] * xh[i];
            if (!gb.empty()) gb[static_cast<std::size_t>(c)] += g[i];
          }
        }
      }
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        const S inv_n = S(1) / static_cast<S>(cols);
        for (std::int64_t r = 0; r < rows; ++r) {
          S mean_d = 0;
          S mean_dx = 0;
          for (std::int64_t c = 0; c < cols; ++c) {
            const auto i = static_cast<std::size_t>(r * cols + c);
            const S d = g[i] * gv[static_cast<std::size_t>(c)];
            mean_d += d;
            mean_dx += d * xh[i];
          }
          mean_d *= inv_n;
          mean_dx *= inv_n;
          const S rstd = (*inv_std)[static_cast<std::size_t>(r)];
          for (std::int64_t c = 0; c < cols; ++c) {
            const auto i = static_cast<std::size_t>(r * cols + c);
            const S d = g[i] * gv[static_cast<std::size_t>(c)];
            gx[i] += rstd * (d - mean_d - xh[i] * mean_dx);
          }
        }
      }
    });
  }
  return finish(out, "layer_norm");
}

template <typename S>
Tensor<S> gelu(Tape<S>& tape, const Tensor<S>& x) {
  using Arr = Eigen::Array<S, Eigen::Dynamic, 1>;
  const auto n = x.numel();
  Tensor<S> out = Tensor<S>::empty(x.shape());
  const Eigen::Map<const Arr> xa(x.data().data(), n);
  // Phi(x), kept for the backward pass
  auto cdf = std::make_shared<Arr>((S(1) + (xa * static_cast<S>(1.0 / std::numbers::sqrt2)).erf()) * S(0.5));
  Eigen::Map<Arr>(out.data().data(), n) = xa * *cdf;
  if (tracks(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record(out, [out, x, cdf, n]() mutable {
      const S inv_sqrt_2pi = static_cast<S>(1.0 / std::sqrt(2.0 * std::numbers::pi));
      const Eigen::Map<const Arr> xa(x.data().data(), n);
      const Eigen::Map<const Arr> g(out.grad().data(), n);
      Eigen::Map<Arr> gx(x.grad_buffer().data(), n);
      gx += g * (*cdf + xa * (xa.square() * S(-0.5)).exp() * inv_sqrt_2pi);
    });
  }
  return finish(out, "gelu");
}

template <typename S>
Tensor<S> relu(Tape<S>& tape, const Tensor<S>& x) {
  Tensor<S> out = x.clone();
  for (auto& v : out.data()) {
    v = std::max(v, S(0));
  }
  if (tracks(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record(out, [out, x]() mutable {
      const auto g = out.grad();
      const auto xv = x.data();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[i] += xv[i] > S(0) ? g[i] : S(0);
      }
    });
  }
  return finish(out, "relu");
}

template <typename S>
Tensor<S> depthwise_conv1d(Tape<S>& tape, const Tensor<S>& x, const Tensor<S>& kernel) {
  LEGO_REQUIRE(x.rank() == 2 || x.rank() == 3, "depthwise_conv1d: expected x[T,c] or x[B,T,c]");
  LEGO_REQUIRE(kernel.rank() == 2, "depthwise_conv1d: expected kernel[k,c]");
  const auto k = kernel.dim(0);
  const auto c = kernel.dim(1);
  LEGO_REQUIRE(k % 2 == 1, "depthwise_conv1d: kernel size must be odd, got " + std::to_string(k));
  LEGO_REQUIRE(x.dim(-1) == c, "depthwise_conv1d: channel mismatch");
  const auto batch = x.rank() == 3 ? x.dim(0) : 1;
  const auto steps = x.dim(-2);
  const auto half = k / 2;
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  const auto xv = x.data();
  const auto kv = kernel.data();
  auto yv = out.data();
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t t = 0; t < steps; ++t) {
      S* y = yv.data() + (b * steps + t) * c;
      for (std::int64_t j = 0; j < k; ++j) {
        const auto src = t + j - half;
        if (src < 0 || src >= steps) {
          continue;
        }
        const S* in = xv.data() + (b * steps + src) * c;
        const S* w = kv.data() + j * c;
        for (std::int64_t ch = 0; ch < c; ++ch) {
          y[ch] += w[ch] * in[ch];
        }
      }
    }
  }
  if (tracks(tape, {&x, &kernel})) {
    out.set_requires_grad(true);
    tape.record(out, [out, x, kernel, batch, steps, k, c, half]() mutable {
      const auto g = out.grad();
      const auto xv = x.data();
      const auto kv = kernel.data();
      auto gx = x.requires_grad() ? x.grad_buffer() : std::span<S>{};
      auto gk = kernel.requires_grad() ? kernel.grad_buffer() : std::span<S>{};
      for (std::int64_t b = 0; b < batch; ++b) {
        for (std::int64_t t = 0; t < steps; ++t) {
          const S* gy = g.data() + (b * steps + t) * c;
          for (std::int64_t j = 0; j < k; ++j) {
            const auto src = t + j - half;
            if (src < 0 || src >= steps) {
              continue;
            }
            const auto base = (b * steps + src) * c;
            if (!gx.empty()) {
              S* dx = gx.data() + base;
              const S* w = kv.data() + j * c;
              for (std::int64_t ch = 0; ch < c; ++ch) {
                dx[ch] += w[ch] * gy[ch];
              }
            }
            if (!gk.empty()) {
              S* dk = gk.data() + j * c;
              const S* in = xv.data() + base;
              for (std::int64_t ch = 0; ch < c; ++ch) {
                dk[ch] += in[ch] * gy[ch];
              }
            }
          }
        }
      }
    });
  }
  return finish(out, "depthwise_conv1d");
}

template <typename S>
Tensor<S> index_select0(Tape<S>& tape, const Tensor<S>& x, std::span<const std::int64_t> index) {
  LEGO_REQUIRE(x.rank() >= 1, "index_select0: scalar input");
  const auto n = x.dim(0);
  const auto row = n == 0 ? 0 : x.numel() / n;
  Shape shape = x.shape();
  shape[0] = static_cast<std::int64_t>(index.size());
  Tensor<S> out = Tensor<S>::empty(shape);
  const auto xv = x.data();
  auto yv = out.data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    LEGO_REQUIRE(index[i] >= 0 && index[i] < n,
            "index_select0: index " + std::to_string(index[i]) + " out of range [0," +
                std::to_string(n) + ")");
    std::copy_n(xv.data() + index[i] * row, row, yv.data() + static_cast<std::int64_t>(i) * row);
  }
  if (tracks(tape, {&x})) {
    out.set_requires_grad(true);
    std::vector<std::int64_t> idx(index.begin(), index.end());
    tape.record(out, [out, x, idx = std::move(idx), row]() mutable {
      const auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        S* dst = gx.data() + idx[i] * row;
        const S* src = g.data() + static_cast<std::int64_t>(i) * row;
        for (std::int64_t j = 0; j < row; ++j) {
          dst[j] += src[j];
        }
      }
    });
  }
  return finish(out, "index_select0");
}

template <typename S>
Tensor<S> reshape(Tape<S>& tape, const Tensor<S>& x, Shape shape) {
  LEGO_REQUIRE(numel(shape) == x.numel(),
          "reshape: " + to_string(x.shape()) + " cannot become " + to_string(shape));
  Tensor<S> out(std::move(shape), std::vector<S>(x.data().begin(), x.data().end()));
  if (tracks(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record(out, [out, x]() mutable {
      const auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[i] += g[i];
      }
    });
  }
  return out;
}

namespace {

// Shared index arithmetic for split_heads / merge_heads: element e of head h
// at step t of batch entry b lives at merged[b,t,h*dh+e] and split[b*H+h,t,e].
template <typename S, typename Fn>
void for_each_head_element(std::int64_t batch, std::int64_t steps, int heads, std::int64_t dh, Fn&& fn) {
  const auto width = heads * dh;
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t t = 0; t < steps; ++t) {
      for (int h = 0; h < heads; ++h) {
        const auto merged = (b * steps + t) * width + h * dh;
        const auto split = ((b * heads + h) * steps + t) * dh;
        fn(merged, split, dh);
      }
    }
  }
}

}  // namespace

template <typename S>
Tensor<S> split_heads(Tape<S>& tape, const Tensor<S>& x, int heads) {
  LEGO_REQUIRE(x.rank() == 3 && heads > 0 && x.dim(2) % heads == 0,
          "split_heads: expected [B,T,H*dh] with width divisible by heads");
  const auto batch = x.dim(0);
  const auto steps = x.dim(1);
  const auto dh = x.dim(2) / heads;
  Tensor<S> out = Tensor<S>::empty({batch * heads, steps, dh});
  const auto xv = x.data();
  auto yv = out.data();
  for_each_head_element<S>(batch, steps, heads, dh, [&](auto merged, auto split, auto len) {
    std::copy_n(xv.data() + merged, len, yv.data() + split);
  });
  if (tracks(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record(out, [out, x, batch, steps, heads, dh]() mutable {
      const auto g = out.grad();
      auto gx = x.grad_buffer();
      for_each_head_element<S>(batch, steps, heads, dh, [&](auto merged, auto split, auto len) {
        for (std::int64_t e = 0; e < len; ++e) {
          gx[static_cast<std::size_t>(merged + e)] += g[static_cast<std::size_t>(split + e)];
        }
      });
    });
  }
  return out;
}

template <typename S>
Tensor<S> merge_heads(Tape<S>& tape, const Tensor<S>& x, int heads) {
  LEGO_REQUIRE(x.rank() == 3 && heads > 0 && x.dim(0) % heads == 0,
          "merge_heads: expected [B*H,T,dh]");
  const auto batch = x.dim(0) / heads;
  const auto steps = x.dim(1);
  const auto dh = x.dim(2);
  Tensor<S> out = Tensor<S>::empty({batch, steps, heads * dh});
  const auto xv = x.data();
  auto yv = out.data();
  for_each_head_element<S>(batch, steps, heads, dh, [&](auto merged, auto split, auto len) {
    std::copy_n(xv.data() + split, len, yv.data() + merged);
  });
  if (tracks(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record(out, [out, x, batch, steps, heads, dh]() mutable {
      const auto g = out.grad();
      auto gx = x.grad_buffer();
      for_each_head_element<S>(batch, steps, heads, dh, [&](auto merged, auto split, auto len) {
        for (std::int64_t e = 0; e < len; ++e) {
          gx[static_cast<std::size_t>(split + e)] += g[static_cast<std::size_t>(merged + e)];
        }
      });
    });
  }
  return out;
}

template <typename S>
Tensor<S> slice_last(Tape<S>& tape, const Tensor<S>& x, std::int64_t start, std::int64_t len) {
  const auto width = x.dim(-1);
  LEGO_REQUIRE(start >= 0 && len >= 0 && start + len <= width, "slice_last: range out of bounds");
  const auto rows = leading_rows(x);
  Tensor<S> out = Tensor<S>::empty(with_last(x.shape(), len));
  const auto xv = x.data();
  auto yv = out.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    std::copy_n(xv.data() + r * width + start, len, yv.data() + r * len);
  }
  if (tracks(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record(out, [out, x, rows, width, start, len]() mutable {
      const auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t e = 0; e < len; ++e) {
          gx[static_cast<std::size_t>(r * width + start + e)] += g[static_cast<std::size_t>(r * len + e)];
        }
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> concat_last(Tape<S>& tape, const std::vector<Tensor<S>>& parts) {
  LEGO_REQUIRE(!parts.empty(), "concat_last: no inputs");
  const auto rows = leading_rows(parts.front());
  std::int64_t width = 0;
  for (const auto& p : parts) {
    LEGO_REQUIRE(p.rank() == parts.front().rank() && leading_rows(p) == rows,
            "concat_last: leading shapes differ");
    width += p.dim(-1);
  }
  Tensor<S> out = Tensor<S>::empty(with_last(parts.front().shape(), width));
  auto yv = out.data();
  std::int64_t offset = 0;
  bool any = false;
  for (const auto& p : parts) {
    const auto w = p.dim(-1);
    const auto pv = p.data();
    for (std::int64_t r = 0; r < rows; ++r) {
      std::copy_n(pv.data() + r * w, w, yv.data() + r * width + offset);
    }
    offset += w;
    any = any || tracks(tape, {&p});
  }
  if (any) {
    out.set_requires_grad(true);
    tape.record(out, [out, parts, rows, width]() mutable {
      const auto g = out.grad();
      std::int64_t offset = 0;
      for (auto& p : parts) {
        const auto w = p.dim(-1);
        if (p.requires_grad()) {
          auto gp = p.grad_buffer();
          for (std::int64_t r = 0; r < rows; ++r) {
            for (std::int64_t e = 0; e < w; ++e) {
              gp[static_cast<std::size_t>(r * w + e)] += g[static_cast<std::size_t>(r * width + offset + e)];
            }
          }
        }
        offset += w;
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> cross_entropy(Tape<S>& tape, const Tensor<S>& logits, std::span<const int> labels,
                        std::span<const std::uint8_t> mask) {
  LEGO_REQUIRE(logits.rank() == 2, "cross_entropy: expected logits[N,C]");
  const auto rows = logits.dim(0);
  const auto classes = logits.dim(1);
  LEGO_REQUIRE(static_cast<std::int64_t>(labels.size()) == rows &&
              static_cast<std::int64_t>(mask.size()) == rows,
          "cross_entropy: labels/mask length differs from logits rows");
  std::int64_t count = 0;
  for (std::int64_t r = 0; r < rows; ++r) {
    if (mask[static_cast<std::size_t>(r)] != 0) {
      ++count;
      const int y = labels[static_cast<std::size_t>(r)];
      LEGO_REQUIRE(y >= 0 && y < classes, "cross_entropy: label out of range");
    }
  }
  LEGO_REQUIRE(count > 0, "cross_entropy: empty mask");
  auto probs = std::make_shared<std::vector<S>>(static_cast<std::size_t>(logits.numel()), S(0));
  const auto lv = logits.data();
  double total = 0.0;
  for (std::int64_t r = 0; r < rows; ++r) {
    if (mask[static_cast<std::size_t>(r)] == 0) {
      continue;
    }
    const S* z = lv.data() + r * classes;
    S* p = probs->data() + r * classes;
    const S peak = *std::max_element(z, z + classes);
    S norm = 0;
    for (std::int64_t c = 0; c < classes; ++c) {
      p[c] = std::exp(z[c] - peak);
      norm += p[c];
    }
    for (std::int64_t c = 0; c < classes; ++c) {
      p[c] /= norm;
    }
    const int y = labels[static_cast<std::size_t>(r)];
    total += static_cast<double>(std::log(norm) + peak - z[y]);
  }
  Tensor<S> out = Tensor<S>::scalar(static_cast<S>(total / static_cast<double>(count)));
  if (tracks(tape, {&logits})) {
    out.set_requires_grad(true);
    std::vector<int> y(labels.begin(), labels.end());
    std::vector<std::uint8_t> m(mask.begin(), mask.end());
    tape.record(out, [out, logits, probs, y = std::move(y), m = std::move(m), rows, classes,
                      count]() mutable {
      const S g = out.grad()[0] / static_cast<S>(count);
      auto gz = logits.grad_buffer();
      for (std::int64_t r = 0; r < rows; ++r) {
        if (m[static_cast<std::size_t>(r)] == 0) {
          continue;
        }
        for (std::int64_t c = 0; c < classes; ++c) {
          const auto i = static_cast<std::size_t>(r * classes + c);
          const S target = c == y[static_cast<std::size_t>(r)] ? S(1) : S(0);
          gz[i] += g * ((*probs)[i] - target);
        }
      }
    });
  }
  return finish(out, "cross_entropy");
}

template <typename S>
Tensor<S> kl_rows(Tape<S>& tape, const Tensor<S>& p, const Tensor<S>& q) {
  LEGO_REQUIRE(p.shape() == q.shape(), "kl_rows: p and q shapes differ");
  const auto pv = p.data();
  const auto qv = q.data();
  constexpr S tiny = std::numeric_limits<S>::min();
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    LEGO_REQUIRE(qv[i] > S(0), "kl_rows: target entries must be positive");
    if (pv[i] > S(0)) {
      total += static_cast<double>(pv[i]) *
               (std::log(static_cast<double>(pv[i])) - std::log(static_cast<double>(qv[i])));
    }
  }
  Tensor<S> out = Tensor<S>::scalar(static_cast<S>(total));
  if (tracks(tape, {&p})) {
    out.set_requires_grad(true);
    tape.record(out, [out, p, q, tiny]() mutable {
      const S g = out.grad()[0];
      const auto pv = p.data();
      const auto qv = q.data();
      auto gp = p.grad_buffer();
      for (std::size_t i = 0; i < pv.size(); ++i) {
        gp[i] += g * (std::log(std::max(pv[i], tiny)) - std::log(qv[i]) + S(1));
      }
    });
  }
  return finish(out, "kl_rows");
}

#define LEGO_INSTANTIATE_OPS(S)                                                                   \
  template Tensor<S> matmul(Tape<S>&, const Tensor<S>&, const Tensor<S>&);                        \
  template Tensor<S> linear(Tape<S>&, const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);      \
  template Tensor<S> bmm(Tape<S>&, const Tensor<S>&, const Tensor<S>&, bool);                     \
  template Tensor<S> add(Tape<S>&, const Tensor<S>&, const Tensor<S>&);                           \
  template Tensor<S> scale(Tape<S>&, const Tensor<S>&, double);                                   \
  template Tensor<S> sum(Tape<S>&, const Tensor<S>&);                                             \
  template Tensor<S> mean(Tape<S>&, const Tensor<S>&);                                            \
  template Tensor<S> softmax_rows(Tape<S>&, const Tensor<S>&);                                    \
  template Tensor<S> layer_norm(Tape<S>&, const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,   \
                                double);                                                          \
  template Tensor<S> gelu(Tape<S>&, const Tensor<S>&);                                            \
  template Tensor<S> relu(Tape<S>&, const Tensor<S>&);                                            \
  template Tensor<S> depthwise_conv1d(Tape<S>&, const Tensor<S>&, const Tensor<S>&);              \
  template Tensor<S> index_select0(Tape<S>&, const Tensor<S>&, std::span<const std::int64_t>);    \
  template Tensor<S> reshape(Tape<S>&, const Tensor<S>&, Shape);                                  \
  template Tensor<S> split_heads(Tape<S>&, const Tensor<S>&, int);                                \
  template Tensor<S> merge_heads(Tape<S>&, const Tensor<S>&, int);                                \
  template Tensor<S> slice_last(Tape<S>&, const Tensor<S>&, std::int64_t, std::int64_t);          \
  template Tensor<S> concat_last(Tape<S>&, const std::vector<Tensor<S>>&);                        \
  template Tensor<S> cross_entropy(Tape<S>&, const Tensor<S>&, std::span<const int>,              \
                                   std::span<const std::uint8_t>);                                \
  template Tensor<S> kl_rows(Tape<S>&, const Tensor<S>&, const Tensor<S>&);

LEGO_INSTANTIATE_OPS(float)
LEGO_INSTANTIATE_OPS(double)

#undef LEGO_INSTANTIATE_OPS

}  // namespace lego::ad
