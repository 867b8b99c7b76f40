#pragma once

// Focal loss, temperature-scaled similarity matrices, and the joint
// contrastive + classification objective.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "scl/errors.hpp"
#include "scl/tensor.hpp"

namespace scl {

using Label = std::uint32_t;

struct LossConfig {
  double focal_gamma = 2.0;
  double lambda1 = 1.0;  // contrastive weight
  double lambda2 = 1.0;  // classification weight
  double temp_init_log = 0.0;  // t starts at 1
  double temp_max = 100.0;

  void validate() const {
    if (!(focal_gamma >= 0.0) || !std::isfinite(focal_gamma))
      throw ValidationError("focal_gamma must be a finite value >= 0");
    if (!(lambda1 >= 0.0) || !std::isfinite(lambda1))
      throw ValidationError("lambda1 must be a finite value >= 0");
    if (!(lambda2 >= 0.0) || !std::isfinite(lambda2))
      throw ValidationError("lambda2 must be a finite value >= 0");
    if (!std::isfinite(temp_init_log)) throw ValidationError("temp_init_log must be finite");
    if (!(temp_max > 0.0) || !std::isfinite(temp_max))
      throw ValidationError("temp_max must be a finite value > 0");
  }
};

template <class T>
struct SimilarityTriple {
  Tensor<T> s11;
  Tensor<T> s12;
  Tensor<T> s22;
  Tensor<T> temperature;  // scalar t used to scale all three
};

inline std::vector<Label> identity_labels(std::size_t k) {
  std::vector<Label> y(k);
  for (std::size_t i = 0; i < k; ++i) y[i] = static_cast<Label>(i);
  return y;
}

// Mean over rows of -(1 - p_y)^gamma * log(p_y), p = softmax(row).
//
// Row statistics are accumulated in double regardless of T. 1 - p_y is taken
// as the sum of the non-target probabilities so it stays accurate when p_y is
// close to one.
template <class T>
Tensor<T> focal_loss_mean(const Tensor<T>& logits, std::span<const Label> labels, double gamma,
                          Tape<T>& tape) {
  detail::require_rank(logits, 2, "focal_loss_mean");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (n == 0) throw ContractError("focal_loss_mean: empty batch");
  if (labels.size() != n) {
    throw ContractError("focal_loss_mean: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(n) + " rows");
  }
  for (Label y : labels) {
    if (y >= k) {
      throw ContractError("focal_loss_mean: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(k) + ")");
    }
  }
  if (!(gamma >= 0.0)) throw ContractError("focal_loss_mean: gamma must be >= 0");

  // Per-row coefficient c with dL_row/dz_j = c * (delta_jy - p_j).
  std::vector<double> probs(n * k);
  std::vector<double> coeff(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits.at(i, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(logits.at(i, j)));
    double se = 0.0;
    for (std::size_t j = 0; j < k; ++j) se += std::exp(static_cast<double>(logits.at(i, j)) - mx);
    const double lse = mx + std::log(se);
    double q = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      probs[i * k + j] = std::exp(static_cast<double>(logits.at(i, j)) - lse);
      if (j != labels[i]) q += probs[i * k + j];
    }
    const double logp = static_cast<double>(logits.at(i, labels[i])) - lse;
    const double p = probs[i * k + labels[i]];
    const double mod = std::pow(q, gamma);
    total += -mod * logp;
    const double focus = (gamma == 0.0 || q == 0.0) ? 0.0 : gamma * std::pow(q, gamma - 1.0) * p * logp;
    coeff[i] = focus - mod;
  }

  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(n)));
  std::vector<Label> y(labels.begin(), labels.end());
  return detail::finish(tape, "focal_loss_mean", {logits}, out, tape.tracks({&logits}),
                        [logits = logits, out, y = std::move(y), probs = std::move(probs),
                         coeff = std::move(coeff), n, k]() mutable {
                          const double g = static_cast<double>(out.grad()[0]) / static_cast<double>(n);
                          auto gz = logits.grad();
                          for (std::size_t i = 0; i < n; ++i) {
                            for (std::size_t j = 0; j < k; ++j) {
                              const double delta = j == y[i] ? 1.0 : 0.0;
                              gz[i * k + j] += static_cast<T>(g * coeff[i] * (delta - probs[i * k + j]));
                            }
                          }
                        });
}

// Temperature-scaled cosine similarities between the rows of two embedding
// batches: S_ab = t * norm(E_a) * norm(E_b)^T with t = min(exp(log_temp), temp_max).
template <class T>
SimilarityTriple<T> similarity_triple(const Tensor<T>& e1, const Tensor<T>& e2,
                                      const Tensor<T>& log_temp, double temp_max, Tape<T>& tape) {
  detail::require_rank(e1, 2, "similarity_triple");
  detail::require_rank(e2, 2, "similarity_triple");
  if (e1.shape() != e2.shape()) {
    throw DimensionError("similarity_triple: " + shape_string(e1.shape()) + " vs " +
                         shape_string(e2.shape()));
  }
  if (e1.dim(0) < 2) throw DimensionError("similarity_triple: need at least two rows");

  const Tensor<T> n1 = l2_normalize_rows(e1, tape);
  const Tensor<T> n2 = l2_normalize_rows(e2, tape);
  const Tensor<T> n1t = transpose(n1, tape);
  const Tensor<T> n2t = transpose(n2, tape);
  SimilarityTriple<T> out;
  out.temperature = exp_clamped(log_temp, static_cast<T>(temp_max), tape);
  out.s11 = scale_by(matmul(n1, n1t, tape), out.temperature, tape);
  out.s12 = scale_by(matmul(n1, n2t, tape), out.temperature, tape);
  out.s22 = scale_by(matmul(n2, n2t, tape), out.temperature, tape);
  return out;
}

// Sum of row-wise and column-wise focal losses over S11, S12 and S22.
template <class T>
Tensor<T> contrastive_loss(const SimilarityTriple<T>& triple, std::span<const Label> y_gt,
                           double gamma, Tape<T>& tape) {
  const std::size_t k = triple.s12.dim(0);
  if (y_gt.size() != k) throw ContractError("contrastive_loss: y_gt length differs from batch size");
  for (std::size_t i = 0; i < k; ++i) {
    if (y_gt[i] != i) throw ContractError("contrastive_loss: y_gt must be the identity labeling");
  }
  Tensor<T> total;
  for (const Tensor<T>* s : {&triple.s11, &triple.s12, &triple.s22}) {
    Tensor<T> rows = focal_loss_mean(*s, y_gt, gamma, tape);
    Tensor<T> cols = focal_loss_mean(transpose(*s, tape), y_gt, gamma, tape);
    Tensor<T> both = add(rows, cols, tape);
    total = total.defined() ? add(total, both, tape) : both;
  }
  return total;
}

template <class T>
Tensor<T> classification_loss(const Tensor<T>& p1, const Tensor<T>& p2, std::span<const Label> y_gt,
                              double gamma, Tape<T>& tape) {
  if (p1.shape() != p2.shape()) {
    throw DimensionError("classification_loss: " + shape_string(p1.shape()) + " vs " +
                         shape_string(p2.shape()));
  }
  return add(focal_loss_mean(p1, y_gt, gamma, tape), focal_loss_mean(p2, y_gt, gamma, tape), tape);
}

template <class T>
Tensor<T> total_loss(const Tensor<T>& l_con, const Tensor<T>& l_cls, const LossConfig& cfg,
                     Tape<T>& tape) {
  return add(scale(l_con, static_cast<T>(cfg.lambda1), tape),
             scale(l_cls, static_cast<T>(cfg.lambda2), tape), tape);
}

}  // namespace scl
