#pragma once
// transforms.hpp - the finite bank of explicit image-level transformation
// strategies: 12 photometric + 4 geometric, with per-dataset safe subsets
// and per-strategy magnitude ranges.
//
// Contract for every strategy: input untouched, output freshly allocated,
// values clipped to [0,1], canvas size preserved (geometric strategies
// zero-fill exposed pixels). NoiseSalt and NoiseGaussian are the only
// stochastic strategies and must be fed an explicit seeded source.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clfa/common.hpp"
#include "clfa/image.hpp"
#include "clfa/rng.hpp"

namespace clfa {

enum class Strategy : int {
  Brightness = 0,
  Contrast,
  Color,
  Sharpness,
  AutoContrast,
  Invert,
  Equalize,
  Solarize,
  SolarizeAdd,
  Posterize,
  NoiseSalt,
  NoiseGaussian,
  ShearX,
  ShearY,
  Rotate,
  Flip,
};

constexpr int kStrategyCount = 16;

enum class TransformKind { Photometric, Geometric };

enum class DatasetTag { Digits, Pacs, Cifar10, OfficeHome, DomainNet, Synthetic };

inline const char* strategy_name(Strategy s) {
  static const char* names[kStrategyCount] = {
      "Brightness", "Contrast",    "Color",    "Sharpness", "AutoContrast", "Invert",
      "Equalize",   "Solarize",    "SolarizeAdd", "Posterize", "NoiseSalt", "NoiseGaussian",
      "ShearX",     "ShearY",      "Rotate",   "Flip"};
  return names[static_cast<int>(s)];
}

inline Strategy strategy_from_name(const std::string& name) {
  for (int i = 0; i < kStrategyCount; ++i)
    if (name == strategy_name(static_cast<Strategy>(i))) return static_cast<Strategy>(i);
  throw ConfigError("unknown transform strategy '" + name + "'");
}

inline const char* dataset_tag_name(DatasetTag t) {
  switch (t) {
    case DatasetTag::Digits: return "digits";
    case DatasetTag::Pacs: return "pacs";
    case DatasetTag::Cifar10: return "cifar10";
    case DatasetTag::OfficeHome: return "office_home";
    case DatasetTag::DomainNet: return "domainnet";
    case DatasetTag::Synthetic: return "synthetic";
  }
  return "?";
}

inline DatasetTag dataset_tag_from_name(const std::string& name) {
  for (DatasetTag t : {DatasetTag::Digits, DatasetTag::Pacs, DatasetTag::Cifar10,
                       DatasetTag::OfficeHome, DatasetTag::DomainNet, DatasetTag::Synthetic})
    if (name == dataset_tag_name(t)) return t;
  throw ConfigError("unknown dataset tag '" + name + "'");
}

struct TransformSpec {
  Strategy name = Strategy::Brightness;
  TransformKind kind = TransformKind::Photometric;
  double magnitude_lo = 0.0;
  double magnitude_hi = 1.0;
  std::uint32_t safe_tags = 0;  // bitmask over DatasetTag

  bool safe_for(DatasetTag t) const { return (safe_tags >> static_cast<int>(t)) & 1u; }
  bool magnitude_ok(double m) const { return m >= magnitude_lo && m <= magnitude_hi; }
};

namespace detail {

constexpr std::uint32_t kAllTags = 0x3f;
constexpr std::uint32_t kNonDigitTags = kAllTags & ~(1u << static_cast<int>(DatasetTag::Digits));

// The single magnitude table. Ranges follow the usual AutoAugment-style
// parameterization; the four enhancement factors vary around the identity
// value 1.0 but stay inside [0.4, 1.6] so the subject survives the edit.
// Factors near zero turn every image into its global mean, which teaches
// exactly the shortcut features augmentation is meant to fight. Strategies
// without a free parameter carry [0,1] and ignore the sampled magnitude.
inline std::array<TransformSpec, kStrategyCount> default_table() {
  using K = TransformKind;
  auto spec = [](Strategy s, K k, double lo, double hi, std::uint32_t tags) {
    return TransformSpec{s, k, lo, hi, tags};
  };
  return {
      spec(Strategy::Brightness, K::Photometric, 0.4, 1.6, kAllTags),
      spec(Strategy::Contrast, K::Photometric, 0.4, 1.6, kAllTags),
      spec(Strategy::Color, K::Photometric, 0.4, 1.6, kAllTags),
      spec(Strategy::Sharpness, K::Photometric, 0.4, 1.6, kAllTags),
      spec(Strategy::AutoContrast, K::Photometric, 0.0, 1.0, kAllTags),
      spec(Strategy::Invert, K::Photometric, 0.0, 1.0, kAllTags),
      spec(Strategy::Equalize, K::Photometric, 0.0, 1.0, kAllTags),
      spec(Strategy::Solarize, K::Photometric, 0.0, 1.0, kAllTags),
      spec(Strategy::SolarizeAdd, K::Photometric, 0.0, 110.0 / 255.0, kAllTags),
      spec(Strategy::Posterize, K::Photometric, 4.0, 8.0, kAllTags),
      spec(Strategy::NoiseSalt, K::Photometric, 0.0, 0.05, kAllTags),
      spec(Strategy::NoiseGaussian, K::Photometric, 0.0, 0.06, kAllTags),
      spec(Strategy::ShearX, K::Geometric, -0.3, 0.3, kAllTags),
      spec(Strategy::ShearY, K::Geometric, -0.3, 0.3, kAllTags),
      // Rotate and Flip can change what a digit means, so they are not
      // offered to digit datasets.
      spec(Strategy::Rotate, K::Geometric, -30.0, 30.0, kNonDigitTags),
      spec(Strategy::Flip, K::Geometric, 0.0, 1.0, kNonDigitTags),
  };
}

inline ImageTensor enhance_blend(const ImageTensor& img, const ImageTensor& base, double factor) {
  ImageTensor out(img.height, img.width, img.channels);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    out.data[i] = clamp01(base.data[i] + factor * (img.data[i] - base.data[i]));
  return out;
}

inline ImageTensor smooth3x3(const ImageTensor& img) {
  // PIL's SMOOTH kernel; border pixels keep their original value
  static const double k[9] = {1, 1, 1, 1, 5, 1, 1, 1, 1};
  ImageTensor out = img;
  for (int y = 1; y + 1 < img.height; ++y) {
    for (int x = 1; x + 1 < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        int ki = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) acc += k[ki++] * img.at(y + dy, x + dx, c);
        out.at(y, x, c) = acc / 13.0;
      }
    }
  }
  return out;
}

// inverse-mapped affine warp about the image center, zero fill outside
inline ImageTensor affine_warp(const ImageTensor& img, double a, double b, double c, double d) {
  // dest (x,y) pulls from src = M * (dest - center) + center, M = [a b; c d]
  ImageTensor out(img.height, img.width, img.channels);
  const double cy = (img.height - 1) * 0.5;
  const double cx = (img.width - 1) * 0.5;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double rx = x - cx, ry = y - cy;
      const double sx = a * rx + b * ry + cx;
      const double sy = c * rx + d * ry + cy;
      for (int ch = 0; ch < img.channels; ++ch)
        out.at(y, x, ch) = clamp01(img.sample_bilinear(sy, sx, ch));
    }
  }
  return out;
}

inline ImageTensor equalize_channels(const ImageTensor& img) {
  ImageTensor out = img;
  const int npix = img.height * img.width;
  for (int c = 0; c < img.channels; ++c) {
    std::array<int, 256> histo{};
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        int v = static_cast<int>(std::lround(clamp01(img.at(y, x, c)) * 255.0));
        histo[std::min(v, 255)]++;
      }
    // PIL ImageOps.equalize lut construction
    int last_nonzero = 0;
    int total = 0;
    for (int v = 0; v < 256; ++v) {
      if (histo[v]) last_nonzero = histo[v];
      total += histo[v];
    }
    const int step = (total - last_nonzero) / 255;
    if (step == 0) continue;  // flat histogram, leave the channel alone
    std::array<int, 256> lut{};
    int n = step / 2;
    for (int v = 0; v < 256; ++v) {
      lut[v] = std::min(255, n / step);
      n += histo[v];
    }
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        int v = static_cast<int>(std::lround(clamp01(img.at(y, x, c)) * 255.0));
        out.at(y, x, c) = lut[std::min(v, 255)] / 255.0;
      }
    (void)npix;
  }
  return out;
}

}  // namespace detail

// Applies one strategy at the given magnitude. `noise_rng` is consumed only
// by NoiseSalt / NoiseGaussian; passing the same state reproduces the output.
inline ImageTensor apply_transform(const ImageTensor& img, const TransformSpec& spec,
                                   double magnitude, Rng* noise_rng = nullptr) {
  require_arg(img.size() > 0, "apply_transform: empty image");
  if (!spec.magnitude_ok(magnitude))
    throw ArgumentError(std::string("magnitude ") + std::to_string(magnitude) +
                        " outside range of " + strategy_name(spec.name));

  switch (spec.name) {
    case Strategy::Brightness: {
      ImageTensor out(img.height, img.width, img.channels);
      for (std::size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = clamp01(img.data[i] * magnitude);
      return out;
    }
    case Strategy::Contrast: {
      double mean = 0.0;
      for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) mean += luminance(img, y, x);
      mean /= img.height * img.width;
      ImageTensor base(img.height, img.width, img.channels, mean);
      return detail::enhance_blend(img, base, magnitude);
    }
    case Strategy::Color: {
      ImageTensor base(img.height, img.width, img.channels);
      for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
          const double l = luminance(img, y, x);
          for (int c = 0; c < img.channels; ++c) base.at(y, x, c) = l;
        }
      return detail::enhance_blend(img, base, magnitude);
    }
    case Strategy::Sharpness:
      return detail::enhance_blend(img, detail::smooth3x3(img), magnitude);
    case Strategy::AutoContrast: {
      ImageTensor out = img;
      for (int c = 0; c < img.channels; ++c) {
        double lo = 1.0, hi = 0.0;
        for (int y = 0; y < img.height; ++y)
          for (int x = 0; x < img.width; ++x) {
            lo = std::min(lo, img.at(y, x, c));
            hi = std::max(hi, img.at(y, x, c));
          }
        if (hi <= lo) continue;
        const double scale = 1.0 / (hi - lo);
        for (int y = 0; y < img.height; ++y)
          for (int x = 0; x < img.width; ++x)
            out.at(y, x, c) = clamp01((img.at(y, x, c) - lo) * scale);
      }
      return out;
    }
    case Strategy::Invert: {
      ImageTensor out(img.height, img.width, img.channels);
      for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = 1.0 - img.data[i];
      return out;
    }
    case Strategy::Equalize:
      return detail::equalize_channels(img);
    case Strategy::Solarize: {
      // values strictly above the threshold are inverted; a threshold at the
      // top of the range is therefore the identity
      ImageTensor out(img.height, img.width, img.channels);
      for (std::size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = img.data[i] > magnitude ? 1.0 - img.data[i] : img.data[i];
      return out;
    }
    case Strategy::SolarizeAdd: {
      // add-then-solarize with the conventional 128/255 threshold
      const double th = 128.0 / 255.0;
      ImageTensor out(img.height, img.width, img.channels);
      for (std::size_t i = 0; i < img.data.size(); ++i) {
        const double v = clamp01(img.data[i] + magnitude);
        out.data[i] = v > th ? 1.0 - v : v;
      }
      return out;
    }
    case Strategy::Posterize: {
      const int bits = std::clamp(static_cast<int>(std::lround(magnitude)), 1, 8);
      const int mask = 0xff & ~((1 << (8 - bits)) - 1);
      ImageTensor out(img.height, img.width, img.channels);
      for (std::size_t i = 0; i < img.data.size(); ++i) {
        int v = static_cast<int>(std::lround(clamp01(img.data[i]) * 255.0));
        out.data[i] = (std::min(v, 255) & mask) / 255.0;
      }
      return out;
    }
    case Strategy::NoiseSalt: {
      require_arg(noise_rng != nullptr, "NoiseSalt needs a seeded random source");
      ImageTensor out = img;
      for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
          if (noise_rng->uniform() < magnitude) {
            const double v = noise_rng->uniform() < 0.5 ? 0.0 : 1.0;
            for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = v;
          }
      return out;
    }
    case Strategy::NoiseGaussian: {
      require_arg(noise_rng != nullptr, "NoiseGaussian needs a seeded random source");
      ImageTensor out(img.height, img.width, img.channels);
      for (std::size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = clamp01(img.data[i] + magnitude * noise_rng->normal());
      return out;
    }
    case Strategy::ShearX:
      return detail::affine_warp(img, 1.0, -magnitude, 0.0, 1.0);
    case Strategy::ShearY:
      return detail::affine_warp(img, 1.0, 0.0, -magnitude, 1.0);
    case Strategy::Rotate: {
      const double th = magnitude * M_PI / 180.0;
      // inverse rotation pulls sources; exact identity at 0 degrees
      return detail::affine_warp(img, std::cos(th), std::sin(th), -std::sin(th), std::cos(th));
    }
    case Strategy::Flip: {
      ImageTensor out(img.height, img.width, img.channels);
      for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
          for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
      return out;
    }
  }
  throw ConfigError("unknown transform strategy id");
}

struct SampledTransform {
  TransformSpec spec;
  double magnitude = 0.0;
};

// The bank: the active strategy table with enable/range overrides.
class TransformBank {
 public:
  TransformBank() {
    const auto table = detail::default_table();
    specs_.assign(table.begin(), table.end());
  }

  static TransformBank with_enabled(const std::vector<std::string>& names) {
    TransformBank tb;
    tb.restrict_to(names);
    return tb;
  }

  // keep only the named strategies (the transform-count reduction studies)
  void restrict_to(const std::vector<std::string>& names) {
    require_cfg(!names.empty(), "transforms.enabled must not be empty");
    std::vector<TransformSpec> keep;
    for (const auto& n : names) {
      const Strategy s = strategy_from_name(n);
      for (const auto& spec : specs_)
        if (spec.name == s) keep.push_back(spec);
    }
    specs_ = std::move(keep);
  }

  void set_range(const std::string& name, double lo, double hi) {
    require_cfg(lo <= hi, "transforms." + name + ".range is empty");
    const Strategy s = strategy_from_name(name);
    for (auto& spec : specs_)
      if (spec.name == s) {
        spec.magnitude_lo = lo;
        spec.magnitude_hi = hi;
      }
  }

  const std::vector<TransformSpec>& specs() const { return specs_; }

  std::vector<TransformSpec> safe_subset(DatasetTag tag) const {
    std::vector<TransformSpec> out;
    for (const auto& s : specs_)
      if (s.safe_for(tag)) out.push_back(s);
    return out;
  }

  const TransformSpec& spec_of(Strategy s) const {
    for (const auto& sp : specs_)
      if (sp.name == s) return sp;
    throw ConfigError(std::string("strategy ") + strategy_name(s) + " is not enabled");
  }

  // Algorithm step: draw a strategy uniformly from the dataset's safe subset,
  // then a magnitude uniformly from its range.
  SampledTransform sample_strategy(Rng& rng, DatasetTag tag) const {
    const auto safe = safe_subset(tag);
    if (safe.empty())
      throw ConfigError(std::string("no transform strategies are safe for dataset tag '") +
                        dataset_tag_name(tag) + "'");
    const TransformSpec& spec = safe[rng.index(safe.size())];
    const double mag = rng.uniform(spec.magnitude_lo, spec.magnitude_hi);
    return {spec, mag};
  }

 private:
  std::vector<TransformSpec> specs_;
};

// left-to-right application; the empty list is the identity
inline ImageTensor compose(const ImageTensor& img,
                           const std::vector<std::pair<TransformSpec, double>>& steps,
                           Rng* noise_rng = nullptr) {
  ImageTensor cur = img;
  for (const auto& [spec, mag] : steps) cur = apply_transform(cur, spec, mag, noise_rng);
  return cur;
}

}  // namespace clfa
