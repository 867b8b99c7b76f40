#pragma once

// Adam and the seeded training loop. One iteration: draw a class-complete
// batch pair, embed both batches, classify them, combine the classification
// focal loss with (optionally) the contrastive loss, backpropagate, and take
// one Adam step over encoder, head and log-temperature together.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scl/data.hpp"
#include "scl/errors.hpp"
#include "scl/eval.hpp"
#include "scl/losses.hpp"
#include "scl/model.hpp"
#include "scl/random.hpp"
#include "scl/tensor.hpp"

namespace scl {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;
};

// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps), with bias-corrected moments.
template <class T>
void adam_step(std::span<Tensor<T>> params, std::span<const std::span<const T>> grads,
               AdamState<T>& state, const AdamConfig& cfg) {
  if (grads.size() != params.size()) {
    throw ContractError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                        std::to_string(params.size()) + " parameters");
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), T{0});
      state.v.emplace_back(p.numel(), T{0});
    }
  }
  if (state.m.size() != params.size()) throw ContractError("adam_step: state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].numel() || state.m[i].size() != params[i].numel()) {
      throw ContractError("adam_step: gradient " + std::to_string(i) + " has " +
                          std::to_string(grads[i].size()) + " values, parameter has " +
                          std::to_string(params[i].numel()));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T c1 = static_cast<T>(1.0 - std::pow(cfg.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(cfg.beta2, t));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T lr = static_cast<T>(cfg.learning_rate), eps = static_cast<T>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto g = grads[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = b1 * m[j] + (T{1} - b1) * g[j];
      v[j] = b2 * v[j] + (T{1} - b2) * g[j] * g[j];
      const T m_hat = m[j] / c1;
      const T v_hat = v[j] / c2;
      theta[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

// Uses each parameter's own gradient buffer.
template <class T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state, const AdamConfig& cfg) {
  std::vector<std::span<const T>> grads;
  for (const auto& p : params) grads.push_back(p.grad());
  adam_step<T>(params, grads, state, cfg);
}

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t iterations = 2000;
  LossConfig loss;
  bool scl_enabled = true;
  std::uint64_t seed = 0;
  std::size_t log_every = 50;

  AdamConfig adam() const { return {learning_rate, beta1, beta2, adam_eps}; }

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw ValidationError("learning_rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ValidationError("beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("beta2 must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ValidationError("adam_eps must be > 0");
    if (iterations < 1) throw ValidationError("iterations must be >= 1");
    if (log_every < 1) throw ValidationError("log_every must be >= 1");
    loss.validate();
  }
};

struct TrainLogRow {
  std::size_t iter = 0;
  double l_total = 0.0;
  double l_con = 0.0;
  double l_cls = 0.0;
  double temperature = 0.0;
  double batch_acc = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
};

class TrainingAborted : public NumericError {
 public:
  TrainingAborted(std::size_t iteration, std::optional<TrainLogRow> last_finite, const std::string& cause)
      : NumericError("training aborted at iteration " + std::to_string(iteration) + ": " + cause),
        iteration_(iteration),
        last_finite_(last_finite) {}

  std::size_t iteration() const noexcept { return iteration_; }
  const std::optional<TrainLogRow>& last_finite() const noexcept { return last_finite_; }

 private:
  std::size_t iteration_;
  std::optional<TrainLogRow> last_finite_;
};

// Shortest decimal with 6 significant digits, '.' separator regardless of locale.
inline std::string format_g6(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 6);
  return std::string(buf, res.ptr);
}

inline std::string train_log_csv(const TrainLog& log) {
  std::string out = "iter,l_total,l_con,l_cls,temperature,batch_acc\n";
  for (const auto& r : log.rows) {
    out += std::to_string(r.iter) + "," + format_g6(r.l_total) + "," + format_g6(r.l_con) + "," +
           format_g6(r.l_cls) + "," + format_g6(r.temperature) + "," + format_g6(r.batch_acc) + "\n";
  }
  return out;
}

inline void write_train_log_csv(const TrainLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << train_log_csv(log);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// Forward losses for one batch pair. With scl off, l_con is the constant 0
// and lambda1 is treated as 0.
template <class T>
struct StepLosses {
  Tensor<T> total;
  Tensor<T> con;
  Tensor<T> cls;
  Tensor<T> p1;
  Tensor<T> p2;
  double temperature = 0.0;
};

template <class T>
StepLosses<T> forward_losses(const Tensor<T>& b1, const Tensor<T>& b2, std::span<const Label> y_gt,
                             const ModelParams<T>& params, const LossConfig& loss_cfg, bool scl_enabled,
                             Tape<T>& tape) {
  StepLosses<T> s;
  const Tensor<T> e1 = encode(b1, params, tape);
  const Tensor<T> e2 = encode(b2, params, tape);
  s.p1 = classify(e1, params, tape);
  s.p2 = classify(e2, params, tape);
  s.cls = classification_loss(s.p1, s.p2, y_gt, loss_cfg.focal_gamma, tape);
  LossConfig weights = loss_cfg;
  if (scl_enabled) {
    const SimilarityTriple<T> triple = similarity_triple(e1, e2, params.log_temp, loss_cfg.temp_max, tape);
    s.con = contrastive_loss(triple, y_gt, loss_cfg.focal_gamma, tape);
    s.temperature = static_cast<double>(triple.temperature[0]);
  } else {
    s.con = Tensor<T>::scalar(T{0});
    weights.lambda1 = 0.0;
    s.temperature = std::min(std::exp(static_cast<double>(params.log_temp[0])), loss_cfg.temp_max);
  }
  s.total = total_loss(s.con, s.cls, weights, tape);
  return s;
}

template <class T>
struct TrainResult {
  ModelParams<T> params;
  TrainLog log;
  std::optional<MetricsReport> validation;
};

template <class T>
struct EvalOutputs {
  Tensor<T> embeddings;  // [n, D]
  Tensor<T> logits;      // [n, K]
};

// Inference over a whole dataset in chunks of 256 images.
inline EvalOutputs<float> run_model(const ModelParams<float>& params, const DatasetContainer& ds) {
  const std::size_t n = ds.size(), h = ds.height(), w = ds.width();
  const std::size_t d = params.config.embed_dim, k = params.config.n_classes;
  EvalOutputs<float> out{Tensor<float>(Shape{n, d}), Tensor<float>(Shape{n, k})};
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t m = std::min(kChunk, n - start);
    auto px = ds.images.data().subspan(start * h * w, m * h * w);
    Tensor<float> batch(Shape{m, 1, h, w}, std::vector<float>(px.begin(), px.end()));
    Tape<float> tape(Tape<float>::Mode::inference);
    const auto e = encode(batch, params, tape);
    const auto p = classify(e, params, tape);
    std::copy(e.data().begin(), e.data().end(), out.embeddings.data().begin() + static_cast<std::ptrdiff_t>(start * d));
    std::copy(p.data().begin(), p.data().end(), out.logits.data().begin() + static_cast<std::ptrdiff_t>(start * k));
  }
  return out;
}

// Accuracy, recall, confusion, one-vs-rest AUC over softmax scores, and
// embedding separation for a labeled dataset.
inline MetricsReport evaluate_model(const ModelParams<float>& params, const DatasetContainer& ds) {
  if (ds.n_classes() != params.config.n_classes) {
    throw ContractError("evaluate_model: dataset has " + std::to_string(ds.n_classes()) +
                        " classes, model has " + std::to_string(params.config.n_classes));
  }
  const auto out = run_model(params, ds);
  MetricsReport r = confusion_and_accuracy(out.logits, ds.labels);
  Tape<float> tape(Tape<float>::Mode::inference);
  const auto scores = softmax_rows(out.logits, tape);
  r.macro_ovr_auc = macro_ovr_auc(scores, ds.labels);
  r.separation = embedding_separation(out.embeddings, ds.labels);
  return r;
}

template <class T>
double batch_accuracy(const Tensor<T>& p1, const Tensor<T>& p2, std::span<const Label> y) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    correct += argmax_row(p1, i) == y[i];
    correct += argmax_row(p2, i) == y[i];
  }
  return static_cast<double>(correct) / static_cast<double>(2 * y.size());
}

inline std::uint64_t init_seed(std::uint64_t seed) { return derive_seed(seed, "init"); }
inline std::uint64_t batch_seed(std::uint64_t seed) { return derive_seed(seed, "batches"); }

// Logged rows cover iteration 0, every log_every-th iteration, and the last
// one; each row holds the losses computed before that iteration's update.
inline TrainResult<float> train_loop(const DatasetContainer& train_ds, const DatasetContainer* val_ds,
                                     const ModelConfig& model_cfg, const TrainConfig& cfg) {
  model_cfg.validate();
  if (train_ds.n_classes() != model_cfg.n_classes || train_ds.height() != model_cfg.input_height ||
      train_ds.width() != model_cfg.input_width) {
    throw ContractError("train_loop: dataset does not match the model configuration");
  }
  TrainResult<float> result;
  result.params = init_params<float>(model_cfg, init_seed(cfg.seed), cfg.loss.temp_init_log);
  std::vector<Tensor<float>> params = result.params.tensors();
  AdamState<float> adam;
  const AdamConfig adam_cfg = cfg.adam();
  Rng rng(batch_seed(cfg.seed));
  std::optional<TrainLogRow> last_row;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const BatchPair bp = sample_pairwise_batches(train_ds, rng);
    Tape<float> tape;
    StepLosses<float> s;
    try {
      s = forward_losses(bp.b1, bp.b2, bp.y_gt, result.params, cfg.loss, cfg.scl_enabled, tape);
      backward(s.total, tape);
    } catch (const NumericError& e) {
      throw TrainingAborted(it, last_row, e.what());
    }
    TrainLogRow row{it, s.total[0], s.con[0], s.cls[0], s.temperature,
                    batch_accuracy(s.p1, s.p2, bp.y_gt)};
    adam_step<float>(params, adam, adam_cfg);
    for (const auto& p : params) {
      for (float v : p.data()) {
        if (!std::isfinite(v)) throw TrainingAborted(it, last_row, "non-finite parameter after update");
      }
    }
    last_row = row;
    if (it % cfg.log_every == 0 || it + 1 == cfg.iterations) result.log.rows.push_back(row);
  }
  if (val_ds) result.validation = evaluate_model(result.params, *val_ds);
  return result;
}

}  // namespace scl
