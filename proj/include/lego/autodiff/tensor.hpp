#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "lego/core/error.hpp"
#include "lego/core/random.hpp"

namespace lego::ad {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Raised when checked (64-bit) execution produces NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Double precision runs in checked mode: every op output is scanned for
/// non-finite values. Single precision is the fast training mode.
template <typename S>
inline constexpr bool kChecked = std::is_same_v<S, double>;

/// Allocator that leaves scalars uninitialized on resize, so op outputs that
/// are fully overwritten skip a zero-fill pass. Storage is 64-byte aligned so
/// that vectorized reductions sum in the same order for every allocation.
template <typename T>
struct DefaultInitAllocator : std::allocator<T> {
  static constexpr std::align_val_t kAlign{64};
  template <typename U>
  struct rebind {
    using other = DefaultInitAllocator<U>;
  };
  using std::allocator<T>::allocator;
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t n) noexcept { ::operator delete(p, n * sizeof(T), kAlign); }
  template <typename U>
  void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
    ::new (static_cast<void*>(p)) U;
  }
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

template <typename S>
using Buffer = std::vector<S, DefaultInitAllocator<S>>;

template <typename S>
struct TensorData {
  Shape shape;
  Buffer<S> value;
  Buffer<S> grad;  // empty until a gradient reaches this tensor
  bool requires_grad = false;

  std::span<S> grad_buffer() {
    if (grad.empty()) {
      grad.assign(value.size(), S(0));
    }
    return grad;
  }
};

/// Shared handle to a dense row-major array. Copies alias the same storage.
template <typename S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;
  Tensor(Shape shape, std::vector<S> values, bool requires_grad = false);

  /// Takes ownership of an existing buffer.
  static Tensor adopt(Shape shape, Buffer<S> values, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  /// Uninitialized contents; the caller must write every entry.
  static Tensor empty(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, S value, bool requires_grad = false);
  static Tensor scalar(S value, bool requires_grad = false);
  /// Normal(0, stddev) entries.
  static Tensor randn(Shape shape, double stddev, Rng& rng, bool requires_grad = false);

  bool defined() const { return data_ != nullptr; }
  explicit operator bool() const { return defined(); }

  const Shape& shape() const { return data_->shape; }
  int rank() const { return static_cast<int>(data_->shape.size()); }
  std::int64_t dim(int axis) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(data_->value.size()); }

  std::span<S> data() { return data_->value; }
  std::span<const S> data() const { return data_->value; }
  S& operator[](std::int64_t i) { return data_->value[static_cast<std::size_t>(i)]; }
  S operator[](std::int64_t i) const { return data_->value[static_cast<std::size_t>(i)]; }
  S item() const;

  bool has_grad() const { return !data_->grad.empty(); }
  std::span<const S> grad() const { return data_->grad; }
  std::span<S> grad_buffer() const { return data_->grad_buffer(); }
  void zero_grad() { data_->grad.clear(); }

  bool requires_grad() const { return data_->requires_grad; }
  void set_requires_grad(bool on) { data_->requires_grad = on; }

  /// Deep copy of the values, detached from any tape.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return data_ == other.data_; }
  TensorData<S>& impl() const { return *data_; }

 private:
  std::shared_ptr<TensorData<S>> data_;
};

/// Ordered record of primitive applications. Entries are appended as ops run,
/// which is a topological order; backward walks it in reverse.
template <typename S>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

  void record(Tensor<S> output, std::function<void()> backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every recorded input.
  void backward(const Tensor<S>& loss);

  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    Tensor<S> output;
    std::function<void()> backward;
  };
  std::vector<Entry> entries_;
  bool recording_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace lego::ad
