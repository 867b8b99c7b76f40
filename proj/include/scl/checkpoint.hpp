#pragma once

// Checkpoint file:
//   "SCLCKPT1" | u32 LE header length | JSON header | f32 LE tensor data
// The header carries the model config and an ordered [{name, shape}] list;
// tensor payloads follow in the same order.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "scl/binary_io.hpp"
#include "scl/model.hpp"

namespace scl {

inline constexpr std::string_view kCheckpointMagic = "SCLCKPT1";

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  return {{"input_height", cfg.input_height},
          {"input_width", cfg.input_width},
          {"embed_dim", cfg.embed_dim},
          {"hidden_dim", cfg.hidden_dim},
          {"n_classes", cfg.n_classes}};
}

inline std::vector<unsigned char> encode_checkpoint(const ModelParams<float>& params) {
  nlohmann::json header;
  header["config"] = model_config_to_json(params.config);
  header["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : params.named_tensors()) {
    header["tensors"].push_back({{"name", name}, {"shape", t.shape()}});
  }
  auto buf = io::begin_container(kCheckpointMagic, header);
  for (const auto& [name, t] : params.named_tensors()) {
    for (float v : t.data()) io::put_f32(buf, v);
  }
  return buf;
}

inline void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path) {
  io::write_file(path, encode_checkpoint(params));
}

inline ModelParams<float> decode_checkpoint(std::span<const unsigned char> bytes) {
  const io::Container c = io::open_container(bytes, kCheckpointMagic);
  const std::size_t header_at = kCheckpointMagic.size() + 4;

  ModelConfig cfg;
  try {
    const auto& j = c.header.at("config");
    cfg.input_height = j.at("input_height").get<std::size_t>();
    cfg.input_width = j.at("input_width").get<std::size_t>();
    cfg.embed_dim = j.at("embed_dim").get<std::size_t>();
    cfg.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    cfg.n_classes = j.at("n_classes").get<std::size_t>();
    cfg.validate();
  } catch (const std::exception& e) {
    throw FormatError(std::string("bad checkpoint config: ") + e.what(), header_at);
  }

  const auto layout = parameter_layout(cfg);
  const auto& listed = c.header.contains("tensors") ? c.header["tensors"] : nlohmann::json();
  if (!listed.is_array() || listed.size() != layout.size()) {
    throw FormatError("checkpoint tensor list does not match the model layout", header_at);
  }
  std::size_t expected_floats = 0;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    Shape shape;
    std::string name;
    try {
      name = listed[i].at("name").get<std::string>();
      shape = listed[i].at("shape").get<Shape>();
    } catch (const std::exception& e) {
      throw FormatError(std::string("bad tensor entry: ") + e.what(), header_at);
    }
    if (name != layout[i].first || shape != layout[i].second) {
      throw FormatError("tensor " + std::to_string(i) + " is " + name + shape_string(shape) +
                            ", config implies " + layout[i].first + shape_string(layout[i].second),
                        header_at);
    }
    expected_floats += shape_numel(shape);
  }

  const std::size_t expected = expected_floats * 4;
  const std::size_t actual = bytes.size() - c.payload_offset;
  if (actual != expected) {
    throw FormatError("checkpoint payload is " + std::to_string(actual) + " bytes, header implies " +
                          std::to_string(expected),
                      c.payload_offset + std::min(actual, expected));
  }

  ModelParams<float> p;
  p.config = cfg;
  Tensor<float>* slots[] = {&p.w1, &p.b1, &p.w2, &p.b2, &p.w3, &p.b3, &p.head_w, &p.head_b, &p.log_temp};
  std::size_t at = c.payload_offset;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    std::vector<float> values(shape_numel(layout[i].second));
    for (auto& v : values) {
      v = io::get_f32(bytes.data() + at);
      at += 4;
    }
    *slots[i] = Tensor<float>(layout[i].second, std::move(values), true);
  }
  return p;
}

inline ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace scl
