#pragma once

// Classification metrics and embedding diagnostics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "scl/errors.hpp"
#include "scl/losses.hpp"
#include "scl/random.hpp"
#include "scl/tensor.hpp"

namespace scl {

struct SeparationStats {
  double mean_intra_cos = 0.0;
  double mean_inter_cos = 0.0;
  double separation_gap = 0.0;
  std::uint64_t intra_pairs = 0;
  std::uint64_t inter_pairs = 0;
};

struct MetricsReport {
  double accuracy = 0.0;
  double macro_recall = 0.0;
  std::optional<double> macro_ovr_auc;
  std::vector<std::vector<std::uint64_t>> confusion;  // rows = true, cols = predicted
  std::vector<std::optional<double>> per_class_recall;  // empty when a class has no samples
  std::size_t n_samples = 0;
  std::optional<SeparationStats> separation;
};

// Index of the row maximum; ties go to the lowest index.
template <class T>
std::size_t argmax_row(const Tensor<T>& x, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < x.dim(1); ++j)
    if (x.at(row, j) > x.at(row, best)) best = j;
  return best;
}

namespace detail {

template <class T>
void check_labels(const Tensor<T>& x, std::span<const Label> labels, std::size_t k, const char* op) {
  require_rank(x, 2, op);
  if (x.dim(0) != labels.size()) {
    throw ContractError(std::string(op) + ": " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(x.dim(0)) + " rows");
  }
  for (Label y : labels) {
    if (y >= k) throw ContractError(std::string(op) + ": label " + std::to_string(y) + " out of range");
  }
}

}  // namespace detail

template <class T>
MetricsReport confusion_and_accuracy(const Tensor<T>& logits, std::span<const Label> labels) {
  detail::require_rank(logits, 2, "confusion_and_accuracy");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (n == 0) throw ContractError("confusion_and_accuracy: no samples");
  detail::check_labels(logits, labels, k, "confusion_and_accuracy");

  MetricsReport r;
  r.n_samples = n;
  r.confusion.assign(k, std::vector<std::uint64_t>(k, 0));
  for (std::size_t i = 0; i < n; ++i) ++r.confusion[labels[i]][argmax_row(logits, i)];

  std::uint64_t correct = 0;
  double recall_sum = 0.0;
  std::size_t present = 0;
  r.per_class_recall.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    correct += r.confusion[c][c];
    const std::uint64_t total = std::accumulate(r.confusion[c].begin(), r.confusion[c].end(), std::uint64_t{0});
    if (total == 0) continue;
    const double rec = static_cast<double>(r.confusion[c][c]) / static_cast<double>(total);
    r.per_class_recall[c] = rec;
    recall_sum += rec;
    ++present;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  r.macro_recall = recall_sum / static_cast<double>(present);
  return r;
}

// One-vs-rest AUC per class as the Mann-Whitney statistic (ties count half),
// averaged over classes that have both positives and negatives.
template <class T>
double macro_ovr_auc(const Tensor<T>& scores, std::span<const Label> labels) {
  detail::require_rank(scores, 2, "macro_ovr_auc");
  const std::size_t n = scores.dim(0), k = scores.dim(1);
  if (n < 2) throw ContractError("macro_ovr_auc: need at least two samples");
  detail::check_labels(scores, labels, k, "macro_ovr_auc");

  std::vector<std::size_t> order(n);
  double auc_sum = 0.0;
  std::size_t evaluable = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t n_pos = 0;
    for (Label y : labels) n_pos += y == c;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) continue;

    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores.at(a, c) < scores.at(b, c); });
    // Sum of midranks (1-based) of the positives.
    double pos_rank_sum = 0.0;
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j < n && scores.at(order[j], c) == scores.at(order[i], c)) ++j;
      const double midrank = 0.5 * static_cast<double>(i + 1 + j);
      for (std::size_t t = i; t < j; ++t)
        if (labels[order[t]] == c) pos_rank_sum += midrank;
      i = j;
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    auc_sum += (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
    ++evaluable;
  }
  if (evaluable == 0) throw ContractError("macro_ovr_auc: no class has both positives and negatives");
  return auc_sum / static_cast<double>(evaluable);
}

// Mean cosine similarity over same-class and different-class pairs (no
// self-pairs). Exact enumeration up to 2000 rows; above that, 2e6 pairs are
// sampled uniformly with a fixed seed.
template <class T>
SeparationStats embedding_separation(const Tensor<T>& e, std::span<const Label> labels,
                                     std::uint64_t seed = 0) {
  detail::require_rank(e, 2, "embedding_separation");
  const std::size_t n = e.dim(0), d = e.dim(1);
  if (n < 2) throw ContractError("embedding_separation: need at least two rows");
  if (labels.size() != n) throw ContractError("embedding_separation: label count mismatch");

  std::vector<double> unit(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += static_cast<double>(e.at(i, j)) * e.at(i, j);
    const double norm = std::sqrt(ss + 1e-12);
    for (std::size_t j = 0; j < d; ++j) unit[i * d + j] = e.at(i, j) / norm;
  }
  auto cosine = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += unit[a * d + j] * unit[b * d + j];
    return s;
  };

  double intra = 0.0, inter = 0.0;
  std::uint64_t n_intra = 0, n_inter = 0;
  auto add_pair = [&](std::size_t a, std::size_t b) {
    const double c = cosine(a, b);
    if (labels[a] == labels[b]) {
      intra += c;
      ++n_intra;
    } else {
      inter += c;
      ++n_inter;
    }
  };
  constexpr std::size_t kExactLimit = 2000;
  constexpr std::uint64_t kSampledPairs = 2'000'000;
  if (n <= kExactLimit) {
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) add_pair(a, b);
  } else {
    Rng rng(derive_seed(seed, "separation"));
    for (std::uint64_t s = 0; s < kSampledPairs; ++s) {
      const std::size_t a = rng.index(n);
      std::size_t b = rng.index(n - 1);
      if (b >= a) ++b;
      add_pair(a, b);
    }
  }
  if (n_intra == 0 || n_inter == 0) {
    throw ContractError("embedding_separation: need both same-class and different-class pairs");
  }
  SeparationStats s;
  s.mean_intra_cos = intra / static_cast<double>(n_intra);
  s.mean_inter_cos = inter / static_cast<double>(n_inter);
  s.separation_gap = s.mean_intra_cos - s.mean_inter_cos;
  s.intra_pairs = n_intra;
  s.inter_pairs = n_inter;
  return s;
}

struct Projection2d {
  Tensor<double> points;  // [n, 2]
  double explained[2] = {0.0, 0.0};  // fraction of total variance per axis
};

// Projects mean-centered rows onto the top two covariance eigenvectors,
// found by power iteration with deflation from a fixed start vector. Each
// eigenvector is oriented so its first nonzero coordinate is positive.
template <class T>
Projection2d pca_project_2d(const Tensor<T>& e) {
  detail::require_rank(e, 2, "pca_project_2d");
  const std::size_t n = e.dim(0), d = e.dim(1);
  if (n < 3 || d < 2) throw ContractError("pca_project_2d: need n >= 3 and D >= 2");

  std::vector<double> centered(n * d);
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += e.at(i, j);
  for (auto& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) centered[i * d + j] = e.at(i, j) - mean[j];

  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a) {
      const double xa = centered[i * d + a];
      if (xa == 0.0) continue;
      for (std::size_t b = 0; b < d; ++b) cov[a * d + b] += xa * centered[i * d + b];
    }
  for (auto& v : cov) v /= static_cast<double>(n - 1);
  double trace = 0.0;
  for (std::size_t a = 0; a < d; ++a) trace += cov[a * d + a];

  constexpr double kTol = 1e-9;
  constexpr int kMaxIter = 10000;
  auto normalize = [](std::vector<double>& v) {
    double ss = 0.0;
    for (double x : v) ss += x * x;
    const double nrm = std::sqrt(ss);
    if (nrm > 0.0)
      for (double& x : v) x /= nrm;
    return nrm;
  };
  auto matvec = [&](const std::vector<double>& v) {
    std::vector<double> out(d, 0.0);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) out[a] += cov[a * d + b] * v[b];
    return out;
  };

  Projection2d result;
  result.points = Tensor<double>(Shape{n, 2});
  std::vector<std::vector<double>> vecs;
  for (int comp = 0; comp < 2; ++comp) {
    std::vector<double> v(d);
    for (std::size_t j = 0; j < d; ++j) v[j] = 1.0 + 0.1 * static_cast<double>(j % 7) + 0.01 * static_cast<double>(j);
    auto deflate = [&](std::vector<double>& x) {
      for (const auto& u : vecs) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += x[j] * u[j];
        for (std::size_t j = 0; j < d; ++j) x[j] -= dot * u[j];
      }
    };
    deflate(v);
    normalize(v);
    double lambda = 0.0;
    for (int it = 0; it < kMaxIter; ++it) {
      std::vector<double> w = matvec(v);
      deflate(w);
      lambda = normalize(w);
      if (lambda <= trace * 1e-12) {
        lambda = 0.0;
        break;
      }
      double diff = 0.0;
      for (std::size_t j = 0; j < d; ++j) diff = std::max(diff, std::abs(w[j] - v[j]));
      v = std::move(w);
      if (diff < kTol) break;
    }
    if (lambda == 0.0 || trace <= 0.0 || lambda / trace < 1e-12) {
      result.explained[comp] = 0.0;
      vecs.push_back(std::vector<double>(d, 0.0));
      continue;
    }
    for (double x : v) {
      if (x != 0.0) {
        if (x < 0.0)
          for (double& y : v) y = -y;
        break;
      }
    }
    // Rayleigh quotient for the eigenvalue.
    const auto cv = matvec(v);
    double rq = 0.0;
    for (std::size_t j = 0; j < d; ++j) rq += v[j] * cv[j];
    result.explained[comp] = rq / trace;
    vecs.push_back(v);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (int comp = 0; comp < 2; ++comp) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += centered[i * d + j] * vecs[comp][j];
      result.points.at(i, static_cast<std::size_t>(comp)) = s;
    }
  return result;
}

inline nlohmann::json metrics_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["accuracy"] = r.accuracy;
  j["macro_recall"] = r.macro_recall;
  j["macro_ovr_auc"] = r.macro_ovr_auc ? nlohmann::json(*r.macro_ovr_auc) : nlohmann::json();
  j["confusion"] = r.confusion;
  j["per_class_recall"] = nlohmann::json::array();
  for (const auto& v : r.per_class_recall)
    j["per_class_recall"].push_back(v ? nlohmann::json(*v) : nlohmann::json());
  j["n_samples"] = r.n_samples;
  if (r.separation) {
    j["separation"] = {{"mean_intra_cos", r.separation->mean_intra_cos},
                       {"mean_inter_cos", r.separation->mean_inter_cos},
                       {"separation_gap", r.separation->separation_gap}};
  }
  return j;
}

}  // namespace scl
