#pragma once

// Dataset file:
//   "SCLDATA1" | u32 LE header length | JSON header
//   | n x u32 LE labels | n*H*W x f32 LE pixels (image-major, row-major)

#include <filesystem>
#include <string>

#include "json.hpp"
#include "scl/binary_io.hpp"
#include "scl/data.hpp"

namespace scl {

inline constexpr std::string_view kDatasetMagic = "SCLDATA1";

inline nlohmann::json generator_spec_to_json(const GeneratorSpec& s) {
  return {{"n_classes", s.n_classes},
          {"images_per_class", s.images_per_class},
          {"height", s.height},
          {"width", s.width},
          {"n_bands", s.n_bands},
          {"band_levels", s.band_levels},
          {"confusable_pairs", s.confusable_pairs},
          {"noise_sigma", s.noise_sigma},
          {"bend_amplitude_max", s.bend_amplitude_max},
          {"length_jitter", s.length_jitter},
          {"seed", s.seed},
          {"split", s.split}};
}

inline GeneratorSpec generator_spec_from_json(const nlohmann::json& j) {
  GeneratorSpec s;
  s.n_classes = j.at("n_classes").get<std::size_t>();
  s.images_per_class = j.at("images_per_class").get<std::size_t>();
  s.height = j.at("height").get<std::size_t>();
  s.width = j.at("width").get<std::size_t>();
  s.n_bands = j.at("n_bands").get<std::size_t>();
  s.band_levels = j.at("band_levels").get<std::vector<double>>();
  s.confusable_pairs = j.at("confusable_pairs").get<std::size_t>();
  s.noise_sigma = j.at("noise_sigma").get<double>();
  s.bend_amplitude_max = j.at("bend_amplitude_max").get<double>();
  s.length_jitter = j.at("length_jitter").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.split = j.at("split").get<std::string>();
  return s;
}

inline std::vector<unsigned char> encode_dataset(const DatasetContainer& ds) {
  nlohmann::json header;
  header["n"] = ds.size();
  header["height"] = ds.height();
  header["width"] = ds.width();
  header["n_classes"] = ds.n_classes();
  header["class_names"] = ds.class_names;
  header["generator"] = generator_spec_to_json(ds.spec);
  header["generator"]["class_codes"] = ds.class_codes;
  auto buf = io::begin_container(kDatasetMagic, header);
  buf.reserve(buf.size() + 4 * (ds.labels.size() + ds.images.numel()));
  for (Label y : ds.labels) io::put_u32(buf, y);
  for (float v : ds.images.data()) io::put_f32(buf, v);
  return buf;
}

inline void write_dataset(const DatasetContainer& ds, const std::filesystem::path& path) {
  io::write_file(path, encode_dataset(ds));
}

inline DatasetContainer decode_dataset(std::span<const unsigned char> bytes) {
  const io::Container c = io::open_container(bytes, kDatasetMagic);
  const std::size_t header_at = kDatasetMagic.size() + 4;
  DatasetContainer ds;
  std::size_t n = 0, h = 0, w = 0, k = 0;
  try {
    n = c.header.at("n").get<std::size_t>();
    h = c.header.at("height").get<std::size_t>();
    w = c.header.at("width").get<std::size_t>();
    k = c.header.at("n_classes").get<std::size_t>();
    ds.class_names = c.header.at("class_names").get<std::vector<std::string>>();
    const auto& gen = c.header.at("generator");
    ds.spec = generator_spec_from_json(gen);
    ds.class_codes = gen.at("class_codes").get<std::vector<ClassCode>>();
  } catch (const std::exception& e) {
    throw FormatError(std::string("bad dataset header: ") + e.what(), header_at);
  }
  if (ds.class_names.size() != k) {
    throw FormatError("header lists " + std::to_string(ds.class_names.size()) + " class names for " +
                          std::to_string(k) + " classes",
                      header_at);
  }

  const std::size_t expected = 4 * n + 4 * n * h * w;
  const std::size_t actual = bytes.size() - c.payload_offset;
  if (actual != expected) {
    throw FormatError("dataset payload: expected " + std::to_string(expected) + " bytes, got " +
                          std::to_string(actual),
                      c.payload_offset + std::min(actual, expected));
  }
  std::size_t at = c.payload_offset;
  ds.labels.resize(n);
  for (auto& y : ds.labels) {
    y = io::get_u32(bytes.data() + at);
    if (y >= k) throw FormatError("label " + std::to_string(y) + " out of range", at);
    at += 4;
  }
  ds.images = Tensor<float>(Shape{n, 1, h, w});
  for (auto& v : ds.images.data()) {
    v = io::get_f32(bytes.data() + at);
    at += 4;
  }
  try {
    ds.validate();
  } catch (const ContractError& e) {
    throw FormatError(std::string("invalid dataset contents: ") + e.what(), c.payload_offset);
  }
  return ds;
}

inline DatasetContainer read_dataset(const std::filesystem::path& path) {
  return decode_dataset(io::read_file(path));
}

}  // namespace scl
