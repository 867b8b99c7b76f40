#pragma once

// Dense encoder (flatten -> affine -> relu -> affine -> relu -> affine) that
// maps single-channel images to raw embeddings, plus a linear classification
// head and the learnable log-temperature.

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "scl/errors.hpp"
#include "scl/losses.hpp"
#include "scl/random.hpp"
#include "scl/tensor.hpp"

namespace scl {

struct ModelConfig {
  std::size_t input_height = 32;
  std::size_t input_width = 32;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 256;
  std::size_t n_classes = 8;

  void validate() const {
    if (input_height < 1 || input_width < 1) throw ValidationError("input size must be >= 1");
    if (embed_dim < 1) throw ValidationError("embed_dim must be >= 1");
    if (hidden_dim < 1) throw ValidationError("hidden_dim must be >= 1");
    if (n_classes < 2) throw ValidationError("n_classes must be >= 2");
  }

  std::size_t input_size() const { return input_height * input_width; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <class T>
struct ModelParams {
  ModelConfig config;
  Tensor<T> w1, b1;  // input -> hidden
  Tensor<T> w2, b2;  // hidden -> hidden
  Tensor<T> w3, b3;  // hidden -> embedding
  Tensor<T> head_w, head_b;  // embedding -> class logits
  Tensor<T> log_temp;  // scalar s, t = exp(s)

  // Fixed order shared by the optimizer and the checkpoint format.
  std::vector<std::pair<std::string_view, Tensor<T>>> named_tensors() const {
    return {{"encoder.w1", w1}, {"encoder.b1", b1},     {"encoder.w2", w2},
            {"encoder.b2", b2}, {"encoder.w3", w3},     {"encoder.b3", b3},
            {"head.w", head_w}, {"head.b", head_b},     {"log_temp", log_temp}};
  }

  std::vector<Tensor<T>> tensors() const {
    return {w1, b1, w2, b2, w3, b3, head_w, head_b, log_temp};
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors()) n += t.numel();
    return n;
  }

  ModelParams clone() const {
    ModelParams out;
    out.config = config;
    out.w1 = w1.clone();
    out.b1 = b1.clone();
    out.w2 = w2.clone();
    out.b2 = b2.clone();
    out.w3 = w3.clone();
    out.b3 = b3.clone();
    out.head_w = head_w.clone();
    out.head_b = head_b.clone();
    out.log_temp = log_temp.clone();
    return out;
  }

  template <class U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.config = config;
    out.w1 = w1.template cast<U>();
    out.b1 = b1.template cast<U>();
    out.w2 = w2.template cast<U>();
    out.b2 = b2.template cast<U>();
    out.w3 = w3.template cast<U>();
    out.b3 = b3.template cast<U>();
    out.head_w = head_w.template cast<U>();
    out.head_b = head_b.template cast<U>();
    out.log_temp = log_temp.template cast<U>();
    return out;
  }

  void zero_grad() {
    for (auto t : tensors()) t.zero_grad();
  }
};

// Shapes of every parameter tensor, in named_tensors() order.
inline std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& cfg) {
  const std::size_t in = cfg.input_size(), h = cfg.hidden_dim, d = cfg.embed_dim, k = cfg.n_classes;
  return {{"encoder.w1", {in, h}}, {"encoder.b1", {h}}, {"encoder.w2", {h, h}},
          {"encoder.b2", {h}},     {"encoder.w3", {h, d}}, {"encoder.b3", {d}},
          {"head.w", {d, k}},      {"head.b", {k}},     {"log_temp", {1}}};
}

// Weights ~ U(-a, a) with a = sqrt(6 / (fan_in + fan_out)); biases zero.
template <class T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed,
                           double log_temp_init = LossConfig{}.temp_init_log) {
  cfg.validate();
  Rng rng(seed);
  auto weight = [&rng](std::size_t fan_in, std::size_t fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor<T> w(Shape{fan_in, fan_out}, true);
    for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-a, a));
    return w;
  };
  auto bias = [](std::size_t n) { return Tensor<T>(Shape{n}, true); };

  ModelParams<T> p;
  p.config = cfg;
  p.w1 = weight(cfg.input_size(), cfg.hidden_dim);
  p.b1 = bias(cfg.hidden_dim);
  p.w2 = weight(cfg.hidden_dim, cfg.hidden_dim);
  p.b2 = bias(cfg.hidden_dim);
  p.w3 = weight(cfg.hidden_dim, cfg.embed_dim);
  p.b3 = bias(cfg.embed_dim);
  p.head_w = weight(cfg.embed_dim, cfg.n_classes);
  p.head_b = bias(cfg.n_classes);
  p.log_temp = Tensor<T>::scalar(static_cast<T>(log_temp_init), true);
  return p;
}

// Raw (unnormalized) embeddings for a batch of shape [K, 1, H, W].
template <class T>
Tensor<T> encode(const Tensor<T>& batch, const ModelParams<T>& params, Tape<T>& tape) {
  const ModelConfig& cfg = params.config;
  if (batch.rank() != 4 || batch.dim(1) != 1 || batch.dim(2) != cfg.input_height ||
      batch.dim(3) != cfg.input_width) {
    throw DimensionError("encode: expected [K,1," + std::to_string(cfg.input_height) + "," +
                         std::to_string(cfg.input_width) + "], got " + shape_string(batch.shape()));
  }
  Tensor<T> x = flatten_rows(batch, tape);
  x = relu(add_row_bias(matmul(x, params.w1, tape), params.b1, tape), tape);
  x = relu(add_row_bias(matmul(x, params.w2, tape), params.b2, tape), tape);
  return add_row_bias(matmul(x, params.w3, tape), params.b3, tape);
}

// Class logits from raw embeddings; softmax is left to the losses and metrics.
template <class T>
Tensor<T> classify(const Tensor<T>& embeddings, const ModelParams<T>& params, Tape<T>& tape) {
  if (embeddings.rank() != 2 || embeddings.dim(1) != params.config.embed_dim) {
    throw DimensionError("classify: expected [K," + std::to_string(params.config.embed_dim) +
                         "], got " + shape_string(embeddings.shape()));
  }
  return add_row_bias(matmul(embeddings, params.head_w, tape), params.head_b, tape);
}

}  // namespace scl
