#pragma once
// synthetic.hpp - renders the controllable-factor dataset: the label is the
// drawn shape, while a global luminance band (the "color" factor) is a
// nuisance whose link to the label is set by a correlation knob. At
// correlation 1/num_colors the color carries zero information about the
// label.
//
// The band is deliberately the easy cue (mean intensity separates it
// linearly) while the shape is a low-contrast fill with equalized area
// across classes, so nothing about the label survives global pooling. A
// classifier trained at high correlation tends to latch onto the band and
// pays for it once the correlation is dropped on the test split. Crucially
// the band is also the axis that photometric transforms move: Brightness,
// Contrast, AutoContrast, Equalize, Invert and Solarize all remap global
// intensity, so a transformed view breaks the shortcut while geometric ops
// leave it alone.
//
// Factor assignments are encoded in each sample_id ("..._s<shape>_c<color>")
// so audits can recover them after a folder round trip.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include "clfa/dataset.hpp"

namespace clfa {

struct SyntheticFactorSpec {
  int num_classes = 4;  // shapes: square, circle, triangle, cross
  int num_colors = 4;
  double train_correlation = 0.95;
  double test_correlation = 0.25;
  int image_size = 32;
  double bg_base = 0.40;       // background gray level
  double bg_jitter = 0.05;     // per-image background level jitter
  double color_amp = 0.55;     // luminance swing of the nuisance bands
  double shape_contrast = 0.20;  // shape fill level above the background
  double stripe_amp = 0.04;    // background texture contrast
  double pixel_noise = 0.04;   // additive gaussian noise sigma

  void validate() const {
    require_cfg(num_classes >= 2 && num_classes <= 4, "synthetic num_classes must be in [2,4]");
    require_cfg(num_colors >= 2 && num_colors <= 6, "synthetic num_colors must be in [2,6]");
    require_cfg(train_correlation >= 0 && train_correlation <= 1, "train_correlation not in [0,1]");
    require_cfg(test_correlation >= 0 && test_correlation <= 1, "test_correlation not in [0,1]");
    require_cfg(image_size >= 8, "synthetic image_size must be >= 8");
  }
};

namespace detail {

inline const char* kShapeNames[4] = {"square", "circle", "triangle", "cross"};

// The palette is a ladder of gray levels, evenly spaced and symmetric about
// mid-gray. Symmetry means photometric inversion permutes the bands instead
// of leaving the set, and even spacing keeps every band equally far from its
// neighbours, so no single band is intrinsically easier to recognize.
inline void shape_color(int idx, double& r, double& g, double& b) {
  static const double levels[6] = {0.05, 0.95, 0.35, 0.65, 0.20, 0.80};
  r = g = b = levels[idx];
}

// Membership test with per-shape size factors chosen so every shape covers
// the same area (pi * r^2) for a given nominal radius. Equal coverage keeps
// the mean image intensity label-free; only the outline geometry differs.
inline bool inside_shape(int shape, double dx, double dy, double r) {
  switch (shape) {
    case 0: {  // square, half side 0.8862r -> area (2*0.8862r)^2 = pi r^2
      const double h = r * 0.8862;
      return std::abs(dx) <= h && std::abs(dy) <= h;
    }
    case 1: return dx * dx + dy * dy <= r * r;
    case 2: {  // apex-up triangle, native area 2t^2 -> t = r*sqrt(pi/2)
      const double t = r * 1.2533;
      if (dy < -t || dy > t) return false;
      const double half = (dy + t) / 2.0;
      return std::abs(dx) <= half;
    }
    case 3: {  // plus sign, native area 2.3616t^2 -> t = r*sqrt(pi/2.3616)
      const double t = r * 1.1533;
      const double arm = t * 0.36;
      return (std::abs(dx) <= arm && std::abs(dy) <= t) ||
             (std::abs(dy) <= arm && std::abs(dx) <= t);
    }
  }
  return false;
}

}  // namespace detail

// recovers (shape, color) from the id suffix "_s<k>_c<j>"; returns nothing
// for ids that were not produced by this generator
inline std::optional<std::pair<int, int>> parse_factor_id(const std::string& sample_id) {
  const std::size_t slash = sample_id.find_last_of('/');
  const std::string base = slash == std::string::npos ? sample_id : sample_id.substr(slash + 1);
  const std::size_t sp = base.rfind("_s");
  const std::size_t cp = base.rfind("_c");
  if (sp == std::string::npos || cp == std::string::npos || cp <= sp) return std::nullopt;
  try {
    const int shape = std::stoi(base.substr(sp + 2, cp - sp - 2));
    const int color = std::stoi(base.substr(cp + 2));
    return std::make_pair(shape, color);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline ImageTensor render_synthetic_image(const SyntheticFactorSpec& spec, int shape, int color,
                                          Rng& rng) {
  const int n = spec.image_size;
  ImageTensor img(n, n, 3);
  const double cx = n * rng.uniform(0.38, 0.62);
  const double cy = n * rng.uniform(0.38, 0.62);
  const double rad = n * rng.uniform(0.20, 0.30);
  const double bg = spec.bg_base + rng.uniform(-spec.bg_jitter, spec.bg_jitter);
  const double phase = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  const double period = rng.uniform(4.0, 9.0);
  double cr, cg, cb;
  detail::shape_color(color, cr, cg, cb);
  // the tint shifts the whole frame towards the band's level, so the mean
  // intensity reads the color factor directly
  const double tint[3] = {spec.color_amp * (cr - 0.5), spec.color_amp * (cg - 0.5),
                          spec.color_amp * (cb - 0.5)};

  for (int y = 0; y < n; ++y) {
    const double stripe = spec.stripe_amp * std::sin(2.0 * 3.14159265358979323846 * y / period + phase);
    for (int x = 0; x < n; ++x) {
      // 2x2 supersampling softens the edges a little
      double cover = 0.0;
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx)
          if (detail::inside_shape(shape, x + 0.25 + 0.5 * sx - cx, y + 0.25 + 0.5 * sy - cy, rad))
            cover += 0.25;
      const double lift = cover * spec.shape_contrast;
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = clamp01(bg + tint[c] + stripe + lift);
    }
  }
  if (spec.pixel_noise > 0) {
    for (double& v : img.data) v = clamp01(v + spec.pixel_noise * rng.normal());
  }
  return img;
}

// correlation semantics: color == shape's linked color with probability
// `correlation`, otherwise uniform over the remaining colors
inline int draw_color(const SyntheticFactorSpec& spec, int shape, double correlation, Rng& rng) {
  const int linked = shape % spec.num_colors;
  if (rng.uniform() < correlation) return linked;
  const int other = static_cast<int>(rng.index(static_cast<std::size_t>(spec.num_colors - 1)));
  return other >= linked ? other + 1 : other;
}

inline Dataset generate_synthetic(const SyntheticFactorSpec& spec, int n_per_class,
                                  Split split, Rng& rng) {
  spec.validate();
  require_arg(n_per_class >= 1, "n_per_class must be >= 1");
  require_arg(split != Split::All, "generate one split at a time");
  const double corr =
      split == Split::Train ? spec.train_correlation : spec.test_correlation;
  Dataset ds;
  for (int k = 0; k < spec.num_classes; ++k)
    ds.class_names.push_back("s" + std::to_string(k) + "_" + detail::kShapeNames[k]);
  int idx = 0;
  for (int k = 0; k < spec.num_classes; ++k) {
    for (int i = 0; i < n_per_class; ++i, ++idx) {
      const int color = draw_color(spec, k, corr, rng);
      LabeledSample s;
      s.label = k;
      char buf[64];
      std::snprintf(buf, sizeof(buf), "n%05d_s%d_c%d", idx, k, color);
      s.sample_id = ds.class_names[static_cast<std::size_t>(k)] + "/" + buf;
      s.image = render_synthetic_image(spec, k, color, rng);
      ds.samples.push_back(std::move(s));
    }
  }
  ds.rebuild_index();
  return ds;
}

// writes out_dir/{train,test}/<class>/<id>.ppm
inline void write_synthetic_folders(const SyntheticFactorSpec& spec, const std::string& out_dir,
                                    int train_per_class, int test_per_class, std::uint64_t seed) {
  namespace fs = std::filesystem;
  Rng rng(seed);
  for (Split split : {Split::Train, Split::Test}) {
    const int per = split == Split::Train ? train_per_class : test_per_class;
    Dataset ds = generate_synthetic(spec, per, split, rng);
    const fs::path base = fs::path(out_dir) / split_name(split);
    for (const auto& cname : ds.class_names) fs::create_directories(base / cname);
    for (const auto& s : ds.samples) {
      const fs::path p = fs::path(out_dir) / split_name(split) / (s.sample_id + ".ppm");
      write_ppm(p.string(), s.image);
    }
  }
}

}  // namespace clfa
