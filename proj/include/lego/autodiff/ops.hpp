#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lego/autodiff/tensor.hpp"

// Differentiable primitives. Every op takes the tape it records on; when the
// tape is not recording, or no input requires grad, nothing is recorded.

namespace lego::ad {

/// a[m,k] · b[k,p].
template <typename S>
Tensor<S> matmul(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b);

/// x[..., in] · w[in, out] + bias[out]; bias may be undefined.
template <typename S>
Tensor<S> linear(Tape<S>& tape, const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias);

/// Batched product a[B,m,k] · b[B,k,p], or a · bᵀ with b[B,p,k] when
/// `transpose_b` is set.
template <typename S>
Tensor<S> bmm(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b, bool transpose_b = false);

/// a + b, where b's shape equals a trailing slice of a's shape (b is
/// broadcast over a's leading dimensions).
template <typename S>
Tensor<S> add(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b);

template <typename S>
Tensor<S> scale(Tape<S>& tape, const Tensor<S>& x, double factor);

template <typename S>
Tensor<S> sum(Tape<S>& tape, const Tensor<S>& x);

template <typename S>
Tensor<S> mean(Tape<S>& tape, const Tensor<S>& x);

/// Softmax over the last dimension, max-subtracted.
template <typename S>
Tensor<S> softmax_rows(Tape<S>& tape, const Tensor<S>& x);

inline constexpr double kLayerNormEps = 1e-12;

/// Per-row standardization over the last dimension followed by gain/bias.
template <typename S>
Tensor<S> layer_norm(Tape<S>& tape, const Tensor<S>& x, const Tensor<S>& gain,
                     const Tensor<S>& bias, double eps = kLayerNormEps);

/// Exact (erf) GELU.
template <typename S>
Tensor<S> gelu(Tape<S>& tape, const Tensor<S>& x);

template <typename S>
Tensor<S> relu(Tape<S>& tape, const Tensor<S>& x);

/// Per-channel temporal convolution of x[T,c] or x[B,T,c] with kernel[k,c]:
///   y[t,ch] = sum_j kernel[j,ch] · x[t + j - k/2, ch]
/// with zero padding, so the output keeps length T. k must be odd.
template <typename S>
Tensor<S> depthwise_conv1d(Tape<S>& tape, const Tensor<S>& x, const Tensor<S>& kernel);

/// Rows of x along axis 0: out[i, ...] = x[index[i], ...].
template <typename S>
Tensor<S> index_select0(Tape<S>& tape, const Tensor<S>& x, std::span<const std::int64_t> index);

template <typename S>
Tensor<S> reshape(Tape<S>& tape, const Tensor<S>& x, Shape shape);

/// [B, T, H·dh] -> [B·H, T, dh] (head-major within each batch entry).
template <typename S>
Tensor<S> split_heads(Tape<S>& tape, const Tensor<S>& x, int heads);

/// Inverse of split_heads.
template <typename S>
Tensor<S> merge_heads(Tape<S>& tape, const Tensor<S>& x, int heads);

/// x[..., start : start+len].
template <typename S>
Tensor<S> slice_last(Tape<S>& tape, const Tensor<S>& x, std::int64_t start, std::int64_t len);

/// Concatenation along the last dimension; leading shapes must agree.
template <typename S>
Tensor<S> concat_last(Tape<S>& tape, const std::vector<Tensor<S>>& parts);

/// Mean over selected rows of -log softmax(logits)[label]. logits[N,C];
/// mask[i] != 0 selects row i. Throws on an empty mask.
template <typename S>
Tensor<S> cross_entropy(Tape<S>& tape, const Tensor<S>& logits, std::span<const int> labels,
                        std::span<const std::uint8_t> mask);

/// Sum over rows of KL(p_row || q_row); q is a constant of p's shape whose
/// entries must be positive.
template <typename S>
Tensor<S> kl_rows(Tape<S>& tape, const Tensor<S>& p, const Tensor<S>& q);

}  // namespace lego::ad
