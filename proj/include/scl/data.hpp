#pragma once

// Synthetic banded-rod images, label-preserving augmentation, and the
// class-complete pairwise batch sampler.
//
// Each class owns a band code: one intensity level per band. An image is a
// vertical rod of stacked horizontal bands with random length, a sinusoidal
// sideways bend, per-band intensity jitter and additive Gaussian noise.
// Confusable class pairs share all bands but one.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <string>
#include <vector>

#include "scl/errors.hpp"
#include "scl/losses.hpp"
#include "scl/random.hpp"
#include "scl/tensor.hpp"

namespace scl {

struct GeneratorSpec {
  std::size_t n_classes = 8;
  std::size_t images_per_class = 200;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t n_bands = 8;
  std::vector<double> band_levels{0.25, 0.55, 0.85};
  std::size_t confusable_pairs = 2;
  double noise_sigma = 0.03;
  double bend_amplitude_max = 0.15;  // fraction of width
  double length_jitter = 0.2;        // +/- fraction of nominal rod length
  std::uint64_t seed = 0;
  // Image streams are seeded from (seed, split); class codes only from seed,
  // so train/val/test containers of one seed share their classes.
  std::string split = "train";

  void validate() const {
    if (n_classes < 2) throw ValidationError("n_classes must be >= 2");
    if (images_per_class < 2) throw ValidationError("images_per_class must be >= 2");
    if (height < 4 || width < 4) throw ValidationError("height and width must be >= 4");
    if (n_bands < 1) throw ValidationError("n_bands must be >= 1");
    if (band_levels.empty()) throw ValidationError("band_levels must not be empty");
    for (std::size_t i = 0; i < band_levels.size(); ++i) {
      if (!(band_levels[i] >= 0.0 && band_levels[i] <= 1.0))
        throw ValidationError("band_levels must lie in [0, 1]");
      if (i > 0 && !(band_levels[i] > band_levels[i - 1]))
        throw ValidationError("band_levels must be strictly increasing");
    }
    if (2 * confusable_pairs > n_classes)
      throw ValidationError("confusable_pairs needs 2 classes per pair");
    if (confusable_pairs > 0 && band_levels.size() < 2)
      throw ValidationError("confusable pairs need at least two band levels");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
      throw ValidationError("noise_sigma must be >= 0");
    if (!(bend_amplitude_max >= 0.0 && bend_amplitude_max < 0.5))
      throw ValidationError("bend_amplitude_max must lie in [0, 0.5)");
    if (!(length_jitter >= 0.0 && length_jitter < 1.0))
      throw ValidationError("length_jitter must lie in [0, 1)");
    if (split != "train" && split != "val" && split != "test")
      throw ValidationError("split must be one of train, val, test");
  }

  friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

// Level index per band, one code per class.
using ClassCode = std::vector<std::uint32_t>;

struct DatasetContainer {
  Tensor<float> images;  // [n, 1, H, W], pixels in [0, 1]
  std::vector<Label> labels;
  std::vector<std::string> class_names;
  GeneratorSpec spec;
  std::vector<ClassCode> class_codes;

  std::size_t size() const { return labels.size(); }
  std::size_t height() const { return images.dim(2); }
  std::size_t width() const { return images.dim(3); }
  std::size_t n_classes() const { return class_names.size(); }

  std::span<const float> pixels(std::size_t i) const {
    const std::size_t stride = height() * width();
    return images.data().subspan(i * stride, stride);
  }

  void validate() const {
    if (images.rank() != 4 || images.dim(1) != 1)
      throw ContractError("dataset images must have shape [n,1,H,W]");
    if (images.dim(0) != labels.size()) throw ContractError("dataset image/label count mismatch");
    if (class_names.size() < 2) throw ContractError("dataset needs at least two classes");
    std::vector<std::size_t> counts(class_names.size(), 0);
    for (Label y : labels) {
      if (y >= class_names.size()) throw ContractError("dataset label out of range");
      ++counts[y];
    }
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (counts[k] == 0) throw ContractError("class " + std::to_string(k) + " has no images");
    }
    for (float v : images.data()) {
      if (!(v >= 0.0f && v <= 1.0f)) throw ContractError("dataset pixel outside [0, 1]");
    }
  }

  friend bool operator==(const DatasetContainer& a, const DatasetContainer& b) {
    if (a.images.shape() != b.images.shape()) return false;
    const auto da = a.images.data(), db = b.images.data();
    return std::memcmp(da.data(), db.data(), da.size_bytes()) == 0 && a.labels == b.labels &&
           a.class_names == b.class_names && a.spec == b.spec && a.class_codes == b.class_codes;
  }
};

struct BatchPair {
  Tensor<float> b1;  // [K, 1, H, W]; row k is an image of class k
  Tensor<float> b2;
  std::vector<Label> y_gt;  // always 0..K-1
  std::vector<std::size_t> source1;  // dataset index behind each row
  std::vector<std::size_t> source2;
};

namespace detail {

inline std::size_t hamming(const ClassCode& a, const ClassCode& b) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

inline ClassCode reversed(ClassCode c) {
  std::reverse(c.begin(), c.end());
  return c;
}

}  // namespace detail

// Draws class codes such that confusable partners (classes 2i, 2i+1 for
// i < confusable_pairs) differ in exactly one band by one level step, and
// every other pair differs in at least two bands. Both conditions also hold
// against the band-reversed code, since a vertical flip reverses band order.
inline std::vector<ClassCode> generate_class_codes(const GeneratorSpec& spec) {
  spec.validate();
  const std::size_t levels = spec.band_levels.size();
  const double capacity = std::pow(static_cast<double>(levels), static_cast<double>(spec.n_bands));
  if (capacity < static_cast<double>(spec.n_classes)) {
    throw CapacityError(std::to_string(spec.n_bands) + " bands with " + std::to_string(levels) +
                        " levels cannot give " + std::to_string(spec.n_classes) + " distinct codes");
  }
  constexpr int kAttempts = 20000;
  Rng rng(derive_seed(spec.seed, "class-codes"));
  std::vector<ClassCode> codes;
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    const bool second_of_pair = c % 2 == 1 && c / 2 < spec.confusable_pairs;
    bool placed = false;
    ClassCode code(spec.n_bands);
    for (int attempt = 0; attempt < kAttempts && !placed; ++attempt) {
      if (second_of_pair) {
        code = codes[c - 1];
        const std::size_t band = rng.index(spec.n_bands);
        const std::uint32_t lv = code[band];
        if (lv == 0) {
          code[band] = 1;
        } else if (lv + 1 == levels) {
          code[band] = lv - 1;
        } else {
          code[band] = rng.bernoulli(0.5) ? lv + 1 : lv - 1;
        }
      } else {
        for (auto& lv : code) lv = static_cast<std::uint32_t>(rng.index(levels));
      }
      placed = true;
      for (std::size_t j = 0; j < codes.size() && placed; ++j) {
        const bool partner = second_of_pair && j == c - 1;
        const std::size_t direct = detail::hamming(code, codes[j]);
        const std::size_t flipped = detail::hamming(code, detail::reversed(codes[j]));
        placed = (partner ? direct == 1 : direct >= 2) && flipped >= 2;
      }
    }
    if (!placed) {
      throw CapacityError("could not place a code for class " + std::to_string(c) + " after " +
                          std::to_string(kAttempts) + " attempts");
    }
    codes.push_back(std::move(code));
  }
  return codes;
}

// Per-image rod geometry, in pixel units.
struct RodGeometry {
  double top = 0.0;
  double length = 0.0;
  double center_x = 0.0;
  double half_width = 0.0;
  double bend_amplitude = 0.0;
  double bend_phase = 0.0;
};

// Renders one clean rod (no noise) with 4x4 supersampling per pixel.
inline std::vector<float> render_rod(std::size_t height, std::size_t width,
                                     std::span<const double> band_intensity, const RodGeometry& g) {
  constexpr int kSub = 4;
  const std::size_t n_bands = band_intensity.size();
  std::vector<float> img(height * width, 0.0f);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      double acc = 0.0;
      for (int sy = 0; sy < kSub; ++sy) {
        const double y = static_cast<double>(r) + (sy + 0.5) / kSub;
        const double v = (y - g.top) / g.length;
        if (v < 0.0 || v >= 1.0) continue;
        const double cx = g.center_x + g.bend_amplitude * std::sin(std::numbers::pi * v + g.bend_phase);
        const auto band = std::min(n_bands - 1, static_cast<std::size_t>(v * static_cast<double>(n_bands)));
        for (int sx = 0; sx < kSub; ++sx) {
          const double x = static_cast<double>(c) + (sx + 0.5) / kSub;
          if (std::abs(x - cx) <= g.half_width) acc += band_intensity[band];
        }
      }
      img[r * width + c] = static_cast<float>(acc / (kSub * kSub));
    }
  }
  return img;
}

inline std::vector<std::string> default_class_names(std::size_t k) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < k; ++i) names.push_back("type_" + std::to_string(i + 1));
  return names;
}

inline DatasetContainer generate_synthetic_dataset(const GeneratorSpec& spec) {
  spec.validate();
  DatasetContainer ds;
  ds.spec = spec;
  ds.class_codes = generate_class_codes(spec);
  ds.class_names = default_class_names(spec.n_classes);

  const std::size_t h = spec.height, w = spec.width, n = spec.n_classes * spec.images_per_class;
  ds.images = Tensor<float>(Shape{n, 1, h, w});
  ds.labels.reserve(n);
  const std::uint64_t image_seed = derive_seed(spec.seed, "images:" + spec.split);
  const double nominal_length = 0.8 * static_cast<double>(h);

  std::vector<double> intensity(spec.n_bands);
  for (std::size_t k = 0; k < spec.n_classes; ++k) {
    for (std::size_t i = 0; i < spec.images_per_class; ++i) {
      Rng rng(derive_seed(image_seed, (static_cast<std::uint64_t>(k) << 32) | i));
      RodGeometry g;
      g.length = nominal_length * (1.0 + rng.uniform(-spec.length_jitter, spec.length_jitter));
      g.length = std::min(g.length, 0.95 * static_cast<double>(h));
      g.top = 0.5 * (static_cast<double>(h) - g.length);
      g.center_x = 0.5 * static_cast<double>(w);
      g.half_width = 0.15 * static_cast<double>(w);
      g.bend_amplitude = rng.uniform(0.0, spec.bend_amplitude_max) * static_cast<double>(w);
      g.bend_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t b = 0; b < spec.n_bands; ++b) {
        intensity[b] = spec.band_levels[ds.class_codes[k][b]] + rng.uniform(-0.05, 0.05);
      }
      std::vector<float> img = render_rod(h, w, intensity, g);
      const std::size_t idx = ds.labels.size();
      auto dst = ds.images.data().subspan(idx * h * w, h * w);
      for (std::size_t p = 0; p < img.size(); ++p) {
        const double noisy = static_cast<double>(img[p]) + spec.noise_sigma * rng.normal();
        dst[p] = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
      }
      ds.labels.push_back(static_cast<Label>(k));
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentParams {
  double angle_deg = 0.0;
  bool hflip = false;
  bool vflip = false;
  double contrast = 1.0;
};

inline AugmentParams draw_augment_params(Rng& rng) {
  AugmentParams p;
  p.angle_deg = rng.uniform(-30.0, 30.0);
  p.hflip = rng.bernoulli(0.5);
  p.vflip = rng.bernoulli(0.5);
  p.contrast = rng.uniform(0.7, 1.3);
  return p;
}

// Rotates about the image center (bilinear, zero fill), then flips, then
// applies x' = clamp((x - 0.5) * c + 0.5, 0, 1).
inline std::vector<float> apply_augmentation(std::span<const float> src, std::size_t h, std::size_t w,
                                             const AugmentParams& p) {
  std::vector<float> rotated(src.begin(), src.end());
  if (p.angle_deg != 0.0) {
    const double th = p.angle_deg * std::numbers::pi / 180.0;
    const double cs = std::cos(th), sn = std::sin(th);
    const double cy = 0.5 * static_cast<double>(h), cx = 0.5 * static_cast<double>(w);
    auto at = [&](long r, long c) -> double {
      if (r < 0 || c < 0 || r >= static_cast<long>(h) || c >= static_cast<long>(w)) return 0.0;
      return src[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)];
    };
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        // Inverse map of the destination pixel center into the source.
        const double dx = static_cast<double>(c) + 0.5 - cx;
        const double dy = static_cast<double>(r) + 0.5 - cy;
        const double sx = cs * dx + sn * dy + cx - 0.5;
        const double sy = -sn * dx + cs * dy + cy - 0.5;
        const double fx = std::floor(sx), fy = std::floor(sy);
        const double ax = sx - fx, ay = sy - fy;
        const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
        const double v = (1 - ay) * ((1 - ax) * at(y0, x0) + ax * at(y0, x0 + 1)) +
                         ay * ((1 - ax) * at(y0 + 1, x0) + ax * at(y0 + 1, x0 + 1));
        rotated[r * w + c] = static_cast<float>(v);
      }
    }
  }
  std::vector<float> out(h * w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t sr = p.vflip ? h - 1 - r : r;
      const std::size_t sc = p.hflip ? w - 1 - c : c;
      const double x = rotated[sr * w + sc];
      out[r * w + c] = static_cast<float>(std::clamp((x - 0.5) * p.contrast + 0.5, 0.0, 1.0));
    }
  }
  return out;
}

// img has shape [1, H, W].
inline Tensor<float> augment_image(const Tensor<float>& img, Rng& rng) {
  if (img.rank() != 3 || img.dim(0) != 1) {
    throw DimensionError("augment_image: expected [1,H,W], got " + shape_string(img.shape()));
  }
  const AugmentParams p = draw_augment_params(rng);
  return Tensor<float>(img.shape(), apply_augmentation(img.data(), img.dim(1), img.dim(2), p));
}

// One augmented image per class in each batch, row k holding class k. The
// two rows of a class come from different source images whenever the class
// has at least two.
inline BatchPair sample_pairwise_batches(const DatasetContainer& ds, Rng& rng) {
  const std::size_t k_classes = ds.n_classes(), h = ds.height(), w = ds.width();
  std::vector<std::vector<std::size_t>> by_class(k_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] >= k_classes) throw ContractError("sample_pairwise_batches: label out of range");
    by_class[ds.labels[i]].push_back(i);
  }
  BatchPair bp;
  bp.b1 = Tensor<float>(Shape{k_classes, 1, h, w});
  bp.b2 = Tensor<float>(Shape{k_classes, 1, h, w});
  bp.y_gt = identity_labels(k_classes);
  for (std::size_t k = 0; k < k_classes; ++k) {
    const auto& pool = by_class[k];
    if (pool.empty()) {
      throw ContractError("sample_pairwise_batches: class " + std::to_string(k) + " has no images");
    }
    const std::size_t a = rng.index(pool.size());
    std::size_t b = a;
    if (pool.size() > 1) {
      b = rng.index(pool.size() - 1);
      if (b >= a) ++b;
    }
    bp.source1.push_back(pool[a]);
    bp.source2.push_back(pool[b]);
    const auto img1 = apply_augmentation(ds.pixels(pool[a]), h, w, draw_augment_params(rng));
    const auto img2 = apply_augmentation(ds.pixels(pool[b]), h, w, draw_augment_params(rng));
    std::copy(img1.begin(), img1.end(), bp.b1.data().begin() + static_cast<std::ptrdiff_t>(k * h * w));
    std::copy(img2.begin(), img2.end(), bp.b2.data().begin() + static_cast<std::ptrdiff_t>(k * h * w));
  }
  return bp;
}

}  // namespace scl
