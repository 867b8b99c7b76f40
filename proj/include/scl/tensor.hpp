#pragma once

// Dense row-major tensors with a tape-based reverse-mode gradient.
//
// A Tensor is a shared handle: copies alias the same storage. Use clone() for
// an independent copy. Every differentiable op takes a Tape; when any input
// requires a gradient and the tape is recording, the op appends one entry
// holding its backward closure. backward() replays the entries in reverse.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "scl/errors.hpp"

namespace scl {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : impl_(std::make_shared<Impl>()) {
    impl_->data.assign(shape_numel(shape), T{0});
    impl_->shape = std::move(shape);
    set_requires_grad(requires_grad);
  }

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : impl_(std::make_shared<Impl>()) {
    if (shape_numel(shape) != values.size()) {
      throw DimensionError("tensor: shape " + shape_string(shape) + " does not match " +
                           std::to_string(values.size()) + " values");
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
    set_requires_grad(requires_grad);
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
  }

  bool defined() const noexcept { return static_cast<bool>(impl_); }
  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  std::span<T> grad() { return impl_->grad; }
  std::span<const T> grad() const { return impl_->grad; }

  bool requires_grad() const { return impl_->requires_grad; }

  void set_requires_grad(bool on) {
    impl_->requires_grad = on;
    if (on) {
      impl_->grad.assign(impl_->data.size(), T{0});
    } else {
      impl_->grad.clear();
      impl_->grad.shrink_to_fit();
    }
  }

  void zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), T{0}); }

  T item() const {
    if (numel() != 1) throw ContractError("item: tensor is not a scalar " + shape_string(shape()));
    return impl_->data[0];
  }

  T& operator[](std::size_t i) { return impl_->data[i]; }
  const T& operator[](std::size_t i) const { return impl_->data[i]; }

  // Rank-2 element access.
  T& at(std::size_t r, std::size_t c) { return impl_->data[r * impl_->shape[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const { return impl_->data[r * impl_->shape[1] + c]; }

  Tensor clone() const {
    Tensor out(impl_->shape, impl_->data, impl_->requires_grad);
    return out;
  }

  // Same values and shape in another precision; gradient participation is
  // carried over, gradient contents are not.
  template <class U>
  Tensor<U> cast() const {
    std::vector<U> values(impl_->data.begin(), impl_->data.end());
    return Tensor<U>(impl_->shape, std::move(values), impl_->requires_grad);
  }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// Ordered log of differentiable operations executed during a forward pass.
template <class T>
class Tape {
 public:
  enum class Mode { record, inference };

  struct Entry {
    std::string_view op;
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    std::function<void()> backward;
  };

  explicit Tape(Mode mode = Mode::record) : mode_(mode) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return mode_ == Mode::record; }

  // True when an op over `inputs` must produce a differentiable output.
  bool tracks(std::initializer_list<const Tensor<T>*> inputs) const {
    if (!recording()) return false;
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor<T>* t) { return t->requires_grad(); });
  }

  void record(std::string_view op, std::vector<Tensor<T>> inputs, Tensor<T> output,
              std::function<void()> backward) {
    entries_.push_back(Entry{op, std::move(inputs), std::move(output), std::move(backward)});
  }

  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  void clear() { entries_.clear(); }

 private:
  Mode mode_;
  std::vector<Entry> entries_;
};

namespace detail {

template <class T>
void require_finite(const Tensor<T>& t, std::string_view op) {
  for (T v : t.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": produced a non-finite value");
  }
}

template <class T>
void require_rank(const Tensor<T>& t, std::size_t rank, std::string_view op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
  }
}

// Finalizes an op: checks the output and, when tracked, marks it
// differentiable and records the backward closure.
template <class T, class Backward>
Tensor<T> finish(Tape<T>& tape, std::string_view op, std::vector<Tensor<T>> inputs,
                 Tensor<T> out, bool tracked, Backward&& backward) {
  require_finite(out, op);
  if (tracked) {
    out.set_requires_grad(true);
    tape.record(op, std::move(inputs), out, std::forward<Backward>(backward));
  }
  return out;
}

}  // namespace detail

// Sets ∂loss/∂x on every tensor reachable through `tape`. Gradient buffers of
// all tensors referenced by the tape are reset first, so repeated calls give
// the same result.
template <class T>
void backward(Tensor<T>& loss, Tape<T>& tape) {
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got " + shape_string(loss.shape()));
  }
  for (auto& entry : tape.entries()) {
    for (auto input : entry.inputs) {
      if (input.requires_grad()) input.zero_grad();
    }
    auto out = entry.output;
    out.zero_grad();
  }
  if (!loss.requires_grad()) return;
  loss.grad()[0] = T{1};
  const auto& entries = tape.entries();
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) it->backward();
}

// ---------------------------------------------------------------------------
// Operations

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, Tape<T>& tape) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor<T> out(Shape{m, n});
  {
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    T* pc = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
      T* crow = pc + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = pa[i * k + p];
        if (av == T{0}) continue;
        const T* brow = pb + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
  return detail::finish(tape, "matmul", {a, b}, out, tape.tracks({&a, &b}),
                        [a = a, b = b, out, m, k, n]() mutable {
                          const T* g = out.grad().data();
                          if (a.requires_grad()) {
                            // dA += G · Bᵀ
                            const T* pb = b.data().data();
                            T* ga = a.grad().data();
                            for (std::size_t i = 0; i < m; ++i) {
                              for (std::size_t p = 0; p < k; ++p) {
                                T acc{0};
                                for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * pb[p * n + j];
                                ga[i * k + p] += acc;
                              }
                            }
                          }
                          if (b.requires_grad()) {
                            // dB += Aᵀ · G
                            const T* pa = a.data().data();
                            T* gb = b.grad().data();
                            for (std::size_t i = 0; i < m; ++i) {
                              for (std::size_t p = 0; p < k; ++p) {
                                const T av = pa[i * k + p];
                                if (av == T{0}) continue;
                                T* grow = gb + p * n;
                                for (std::size_t j = 0; j < n; ++j) grow[j] += av * g[i * n + j];
                              }
                            }
                          }
                        });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& x, Tape<T>& tape) {
  detail::require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor<T> out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = x.at(i, j);
  return detail::finish(tape, "transpose", {x}, out, tape.tracks({&x}), [x = x, out, r, c]() mutable {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) x.grad()[i * c + j] += out.grad()[j * r + i];
  });
}

// Collapses every dimension after the first: [n, ...] -> [n, prod(...)].
template <class T>
Tensor<T> flatten_rows(const Tensor<T>& x, Tape<T>& tape) {
  if (x.rank() < 1) throw DimensionError("flatten_rows: rank-0 tensor");
  const std::size_t n = x.dim(0);
  const std::size_t cols = n == 0 ? 0 : x.numel() / n;
  Tensor<T> out(Shape{n, cols}, std::vector<T>(x.data().begin(), x.data().end()));
  return detail::finish(tape, "flatten_rows", {x}, out, tape.tracks({&x}), [x = x, out]() mutable {
    auto gx = x.grad();
    auto go = out.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
  });
}

template <class T>
Tensor<T> add_row_bias(const Tensor<T>& x, const Tensor<T>& bias, Tape<T>& tape) {
  detail::require_rank(x, 2, "add_row_bias");
  detail::require_rank(bias, 1, "add_row_bias");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.dim(0) != n) {
    throw DimensionError("add_row_bias: bias " + shape_string(bias.shape()) +
                         " does not match rows of " + shape_string(x.shape()));
  }
  Tensor<T> out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = x.at(i, j) + bias[j];
  return detail::finish(tape, "add_row_bias", {x, bias}, out, tape.tracks({&x, &bias}),
                        [x = x, bias = bias, out, m, n]() mutable {
                          auto g = out.grad();
                          if (x.requires_grad()) {
                            auto gx = x.grad();
                            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                          }
                          if (bias.requires_grad()) {
                            auto gb = bias.grad();
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                          }
                        });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x, Tape<T>& tape) {
  Tensor<T> out(x.shape());
  auto in = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > T{0} ? in[i] : T{0};
  return detail::finish(tape, "relu", {x}, out, tape.tracks({&x}), [x = x, out]() mutable {
    auto in = x.data();
    auto g = out.grad();
    auto gx = x.grad();
    for (std::size_t i = 0; i < in.size(); ++i)
      if (in[i] > T{0}) gx[i] += g[i];
  });
}

// Divides each row by sqrt(sum of squares + eps).
template <class T>
Tensor<T> l2_normalize_rows(const Tensor<T>& e, Tape<T>& tape, T eps = T(1e-12)) {
  detail::require_rank(e, 2, "l2_normalize_rows");
  if (!(eps > T{0})) throw ContractError("l2_normalize_rows: eps must be positive");
  const std::size_t n = e.dim(0), d = e.dim(1);
  Tensor<T> out(Shape{n, d});
  std::vector<T> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    T ss{0};
    for (std::size_t j = 0; j < d; ++j) ss += e.at(i, j) * e.at(i, j);
    norms[i] = std::sqrt(ss + eps);
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = e.at(i, j) / norms[i];
  }
  return detail::finish(tape, "l2_normalize_rows", {e}, out, tape.tracks({&e}),
                        [e = e, out, norms = std::move(norms), n, d]() mutable {
                          // dx = (g - y (g·y)) / norm
                          for (std::size_t i = 0; i < n; ++i) {
                            T gy{0};
                            for (std::size_t j = 0; j < d; ++j)
                              gy += out.grad()[i * d + j] * out.at(i, j);
                            for (std::size_t j = 0; j < d; ++j)
                              e.grad()[i * d + j] +=
                                  (out.grad()[i * d + j] - out.at(i, j) * gy) / norms[i];
                          }
                        });
}

// Row-wise softmax with the row maximum subtracted before exponentiation.
template <class T>
Tensor<T> softmax_rows(const Tensor<T>& z, Tape<T>& tape) {
  detail::require_rank(z, 2, "softmax_rows");
  const std::size_t n = z.dim(0), k = z.dim(1);
  Tensor<T> out(Shape{n, k});
  for (std::size_t i = 0; i < n; ++i) {
    T mx = z.at(i, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, z.at(i, j));
    T sum{0};
    for (std::size_t j = 0; j < k; ++j) {
      out.at(i, j) = std::exp(z.at(i, j) - mx);
      sum += out.at(i, j);
    }
    for (std::size_t j = 0; j < k; ++j) out.at(i, j) /= sum;
  }
  return detail::finish(tape, "softmax_rows", {z}, out, tape.tracks({&z}), [z = z, out, n, k]() mutable {
    for (std::size_t i = 0; i < n; ++i) {
      T gp{0};
      for (std::size_t j = 0; j < k; ++j) gp += out.grad()[i * k + j] * out.at(i, j);
      for (std::size_t j = 0; j < k; ++j)
        z.grad()[i * k + j] += out.at(i, j) * (out.grad()[i * k + j] - gp);
    }
  });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b, Tape<T>& tape) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i];
  return detail::finish(tape, "add", {a, b}, out, tape.tracks({&a, &b}), [a = a, b = b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad())
      for (std::size_t i = 0; i < g.size(); ++i) a.grad()[i] += g[i];
    if (b.requires_grad())
      for (std::size_t i = 0; i < g.size(); ++i) b.grad()[i] += g[i];
  });
}

// Elementwise product.
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b, Tape<T>& tape) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * b[i];
  return detail::finish(tape, "mul", {a, b}, out, tape.tracks({&a, &b}), [a = a, b = b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad())
      for (std::size_t i = 0; i < g.size(); ++i) a.grad()[i] += g[i] * b[i];
    if (b.requires_grad())
      for (std::size_t i = 0; i < g.size(); ++i) b.grad()[i] += g[i] * a[i];
  });
}

// Multiplies by a constant factor.
template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor, Tape<T>& tape) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[i] * factor;
  return detail::finish(tape, "scale", {x}, out, tape.tracks({&x}), [x = x, out, factor]() mutable {
    auto g = out.grad();
    for (std::size_t i = 0; i < g.size(); ++i) x.grad()[i] += g[i] * factor;
  });
}

// Multiplies every element of x by the scalar tensor s.
template <class T>
Tensor<T> scale_by(const Tensor<T>& x, const Tensor<T>& s, Tape<T>& tape) {
  if (s.numel() != 1) throw DimensionError("scale_by: factor must be a scalar tensor");
  const T f = s[0];
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[i] * f;
  return detail::finish(tape, "scale_by", {x, s}, out, tape.tracks({&x, &s}), [x = x, s = s, out]() mutable {
    auto g = out.grad();
    const T f = s[0];
    if (x.requires_grad())
      for (std::size_t i = 0; i < g.size(); ++i) x.grad()[i] += g[i] * f;
    if (s.requires_grad()) {
      T acc{0};
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x[i];
      s.grad()[0] += acc;
    }
  });
}

// min(exp(s), upper) for a scalar s. Zero gradient while clamped.
template <class T>
Tensor<T> exp_clamped(const Tensor<T>& s, T upper, Tape<T>& tape) {
  if (s.numel() != 1) throw DimensionError("exp_clamped: expects a scalar tensor");
  const T e = std::exp(s[0]);
  const bool clamped = !(e < upper);
  Tensor<T> out = Tensor<T>::scalar(clamped ? upper : e);
  return detail::finish(tape, "exp_clamped", {s}, out, tape.tracks({&s}), [s = s, out, clamped]() mutable {
    if (!clamped) s.grad()[0] += out.grad()[0] * out[0];
  });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x, Tape<T>& tape) {
  T acc{0};
  for (T v : x.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  return detail::finish(tape, "sum", {x}, out, tape.tracks({&x}), [x = x, out]() mutable {
    const T g = out.grad()[0];
    for (auto& gx : x.grad()) gx += g;
  });
}

}  // namespace scl
