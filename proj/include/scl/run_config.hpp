#pragma once

// Flat JSON run configuration. Keys mirror the ModelConfig, TrainConfig,
// LossConfig and GeneratorSpec field names; "n_classes" and "seed" feed both
// the model/training side and the generator. Unknown keys are rejected.

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "json.hpp"
#include "scl/data.hpp"
#include "scl/errors.hpp"
#include "scl/model.hpp"
#include "scl/optim.hpp"

namespace scl {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  GeneratorSpec generator;
  std::size_t test_per_class = 100;  // held-out size when ablate regenerates it
  std::set<std::string> explicit_keys;  // keys present in the source document

  bool has(const std::string& key) const { return explicit_keys.count(key) != 0; }

  void validate() const {
    model.validate();
    train.validate();
    generator.validate();
    if (test_per_class < 1) throw ValidationError("test_per_class must be >= 1");
  }
};

namespace detail {

template <class V>
V config_value(const nlohmann::json& j, const std::string& key) {
  try {
    return j.get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("config key '" + key + "' has the wrong type");
  }
}

inline std::size_t config_count(const nlohmann::json& j, const std::string& key) {
  if (!j.is_number_integer() || (!j.is_number_unsigned() && j.get<long long>() < 0))
    throw ValidationError("config key '" + key + "' must be a non-negative integer");
  return j.get<std::size_t>();
}

inline double config_number(const nlohmann::json& j, const std::string& key) {
  if (!j.is_number()) throw ValidationError("config key '" + key + "' must be a number");
  return j.get<double>();
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("config must be a JSON object");
  RunConfig c;
  for (const auto& [key, v] : doc.items()) {
    using detail::config_count;
    using detail::config_number;
    c.explicit_keys.insert(key);
    if (key == "input_height") c.model.input_height = config_count(v, key);
    else if (key == "input_width") c.model.input_width = config_count(v, key);
    else if (key == "embed_dim") c.model.embed_dim = config_count(v, key);
    else if (key == "hidden_dim") c.model.hidden_dim = config_count(v, key);
    else if (key == "n_classes") c.model.n_classes = c.generator.n_classes = config_count(v, key);
    else if (key == "learning_rate") c.train.learning_rate = config_number(v, key);
    else if (key == "beta1") c.train.beta1 = config_number(v, key);
    else if (key == "beta2") c.train.beta2 = config_number(v, key);
    else if (key == "adam_eps") c.train.adam_eps = config_number(v, key);
    else if (key == "iterations") c.train.iterations = config_count(v, key);
    else if (key == "scl_enabled") {
      if (!v.is_boolean()) throw ValidationError("config key 'scl_enabled' must be a boolean");
      c.train.scl_enabled = v.get<bool>();
    } else if (key == "seed") c.train.seed = c.generator.seed = config_count(v, key);
    else if (key == "log_every") c.train.log_every = config_count(v, key);
    else if (key == "focal_gamma") c.train.loss.focal_gamma = config_number(v, key);
    else if (key == "lambda1") c.train.loss.lambda1 = config_number(v, key);
    else if (key == "lambda2") c.train.loss.lambda2 = config_number(v, key);
    else if (key == "temp_init_log") c.train.loss.temp_init_log = config_number(v, key);
    else if (key == "temp_max") c.train.loss.temp_max = config_number(v, key);
    else if (key == "images_per_class") c.generator.images_per_class = config_count(v, key);
    else if (key == "height") c.generator.height = config_count(v, key);
    else if (key == "width") c.generator.width = config_count(v, key);
    else if (key == "n_bands") c.generator.n_bands = config_count(v, key);
    else if (key == "band_levels") c.generator.band_levels = detail::config_value<std::vector<double>>(v, key);
    else if (key == "confusable_pairs") c.generator.confusable_pairs = config_count(v, key);
    else if (key == "noise_sigma") c.generator.noise_sigma = config_number(v, key);
    else if (key == "bend_amplitude_max") c.generator.bend_amplitude_max = config_number(v, key);
    else if (key == "length_jitter") c.generator.length_jitter = config_number(v, key);
    else if (key == "test_per_class") c.test_per_class = config_count(v, key);
    else throw ValidationError("unknown config key '" + key + "'");
  }
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(doc);
}

// Model shape follows the dataset; explicit config values must agree with it.
inline ModelConfig model_config_for(const RunConfig& rc, const DatasetContainer& ds) {
  ModelConfig m = rc.model;
  auto adopt = [&](const char* key, std::size_t& field, std::size_t actual) {
    if (rc.has(key) && field != actual) {
      throw ValidationError(std::string("config ") + key + "=" + std::to_string(field) +
                            " does not match the dataset (" + std::to_string(actual) + ")");
    }
    field = actual;
  };
  adopt("input_height", m.input_height, ds.height());
  adopt("input_width", m.input_width, ds.width());
  adopt("n_classes", m.n_classes, ds.n_classes());
  m.validate();
  return m;
}

}  // namespace scl
