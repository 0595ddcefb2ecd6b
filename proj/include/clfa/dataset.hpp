#pragma once
// dataset.hpp - folder datasets and the triple mini-batch sampler.
//
// A Dataset is immutable after load. Class indices come from sorted class
// folder names so the mapping is stable across runs and machines.

#include <algorithm>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "clfa/image_io.hpp"
#include "clfa/rng.hpp"
#include "clfa/transforms.hpp"

namespace clfa {

struct LabeledSample {
  ImageTensor image;
  int label = 0;
  std::string sample_id;
};

struct Triple {
  LabeledSample anchor;
  LabeledSample positive;
  LabeledSample generated;
  int label = 0;
};

// how each generated image was produced; enough to replay it exactly
struct TripleProvenance {
  std::string strategy;        // "none" when input augmentation is disabled
  double magnitude = 0.0;
  std::uint64_t noise_seed = 0;
};

struct Dataset {
  std::vector<LabeledSample> samples;
  std::vector<std::string> class_names;
  std::vector<std::vector<std::size_t>> by_class;  // sample indices per label

  int num_classes() const { return static_cast<int>(class_names.size()); }
  std::size_t size() const { return samples.size(); }

  void rebuild_index() {
    by_class.assign(class_names.size(), {});
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const int y = samples[i].label;
      require_arg(y >= 0 && y < num_classes(), "sample label out of range");
      by_class[static_cast<std::size_t>(y)].push_back(i);
    }
  }
};

enum class Split { Train, Test, All };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::All: return "all";
  }
  return "all";
}

struct LoadOptions {
  int image_size = 0;  // 0 keeps native resolution, otherwise bilinear to NxN
  int force_channels = 0;  // 0 keeps decoded channels, 1 averages to gray, 3 replicates
};

namespace detail {

inline ImageTensor conform_channels(ImageTensor img, int want) {
  if (want == 0 || img.channels == want) return img;
  ImageTensor out(img.height, img.width, want);
  if (want == 1) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) out.at(y, x, 0) = luminance(img, y, x);
  } else if (want == 3 && img.channels == 1) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, 0);
  } else {
    throw ArgumentError("cannot conform " + std::to_string(img.channels) + " channels to " +
                        std::to_string(want));
  }
  return out;
}

}  // namespace detail

// Layout: root/<class_name>/<images>. If root has a subdirectory matching the
// requested split name, that subdirectory is treated as the root instead,
// so both "data/" and "data/{train,test}/" layouts work. Split::All on a
// split layout merges every split; sample ids then carry the split prefix
// so they stay unique across the merge.
inline Dataset load_folder_dataset(const std::string& root, Split split = Split::All,
                                   const LoadOptions& opt = {}) {
  namespace fs = std::filesystem;
  const fs::path base(root);
  if (!fs::is_directory(base)) throw IoError("dataset root does not exist: " + root);

  std::vector<fs::path> bases;
  if (split == Split::All) {
    for (Split s : {Split::Train, Split::Test})
      if (fs::is_directory(base / split_name(s))) bases.push_back(base / split_name(s));
    if (bases.empty()) bases.push_back(base);
  } else {
    const fs::path sub = base / split_name(split);
    bases.push_back(fs::is_directory(sub) ? sub : base);
  }

  std::set<std::string> name_set;
  for (const auto& b : bases)
    for (const auto& e : fs::directory_iterator(b))
      if (e.is_directory()) name_set.insert(e.path().filename().string());
  std::vector<std::string> class_names(name_set.begin(), name_set.end());
  if (class_names.empty()) throw IoError("no class folders under " + root);

  Dataset ds;
  ds.class_names = class_names;
  for (std::size_t ci = 0; ci < class_names.size(); ++ci) {
    std::size_t found = 0;
    for (const auto& b : bases) {
      const fs::path cdir = b / class_names[ci];
      if (!fs::is_directory(cdir)) continue;
      std::vector<std::string> files;
      for (const auto& e : fs::directory_iterator(cdir))
        if (e.is_regular_file() && is_image_file(e.path().filename().string()))
          files.push_back(e.path().filename().string());
      std::sort(files.begin(), files.end());
      const std::string id_prefix =
          bases.size() > 1 ? b.filename().string() + "/" + class_names[ci] + "/"
                           : class_names[ci] + "/";
      for (const auto& f : files) {
        LabeledSample s;
        s.label = static_cast<int>(ci);
        s.sample_id = id_prefix + f;
        s.image = read_image((cdir / f).string());
        if (opt.force_channels) s.image = detail::conform_channels(std::move(s.image), opt.force_channels);
        if (opt.image_size > 0) s.image = resize_bilinear(s.image, opt.image_size, opt.image_size);
        ds.samples.push_back(std::move(s));
      }
      found += files.size();
    }
    if (found == 0) throw IoError("class folder has no images: " + root + "/" + class_names[ci]);
  }
  ds.rebuild_index();
  return ds;
}

// Draws triples_per_class triples for every class: anchor and positive from
// the class pool (positive != anchor unless the class is a singleton), plus
// one freshly sampled strategy applied to the anchor. Passing bank == nullptr
// disables input augmentation and copies the anchor ("none" in provenance).
inline std::vector<Triple> sample_triple_batch(const Dataset& ds, int triples_per_class, Rng& rng,
                                               const TransformBank* bank, DatasetTag tag,
                                               std::vector<TripleProvenance>* provenance = nullptr) {
  require_arg(triples_per_class >= 1, "triples_per_class must be >= 1");
  require_arg(ds.num_classes() >= 1, "dataset has no classes");
  std::vector<Triple> out;
  out.reserve(static_cast<std::size_t>(triples_per_class) * ds.by_class.size());
  for (std::size_t ci = 0; ci < ds.by_class.size(); ++ci) {
    const auto& pool = ds.by_class[ci];
    if (pool.empty())
      throw DataError("class '" + ds.class_names[ci] + "' has no samples");
    for (int k = 0; k < triples_per_class; ++k) {
      const std::size_t ai = pool[rng.index(pool.size())];
      std::size_t pi = ai;
      if (pool.size() > 1) {
        do {
          pi = pool[rng.index(pool.size())];
        } while (pi == ai);
      }
      Triple t;
      t.label = static_cast<int>(ci);
      t.anchor = ds.samples[ai];
      t.positive = ds.samples[pi];
      TripleProvenance prov;
      if (bank != nullptr) {
        const SampledTransform st = bank->sample_strategy(rng, tag);
        const std::uint64_t noise_seed = rng.next_u64();
        Rng noise(noise_seed);
        t.generated.image = apply_transform(t.anchor.image, st.spec, st.magnitude, &noise);
        prov = {strategy_name(st.spec.name), st.magnitude, noise_seed};
      } else {
        t.generated.image = t.anchor.image;
        prov = {"none", 0.0, 0};
      }
      t.generated.label = t.label;
      t.generated.sample_id = t.anchor.sample_id + "#g";
      out.push_back(std::move(t));
      if (provenance) provenance->push_back(prov);
    }
  }
  return out;
}

}  // namespace clfa
