#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "clfa/checkpoint.hpp"
#include "clfa/model.hpp"
#include "clfa/rng.hpp"

using namespace clfa;
using nn::Param;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.backbone = "tiny_cnn";
  cfg.in_channels = 3;
  cfg.image_size = 8;
  cfg.feature_dim = 8;
  cfg.z_dim = 3;
  cfg.encoder_hidden = 6;
  cfg.augmentor_hidden = 10;
  cfg.num_classes = 4;
  cfg.tiny_channels = {4, 6, 8};
  return cfg;
}

std::vector<ImageTensor> random_images(int n, int size, int channels, Rng& rng) {
  std::vector<ImageTensor> out;
  for (int i = 0; i < n; ++i) {
    ImageTensor img(size, size, channels);
    for (double& v : img.data) v = rng.uniform();
    out.push_back(std::move(img));
  }
  return out;
}

Param* find_param(Model& m, const std::string& name) {
  for (Param* p : m.params())
    if (p->name == name) return p;
  return nullptr;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("clfa_model_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("model config validation rejects bad dimensions", "[model]") {
  ModelConfig cfg = small_config();
  cfg.feature_dim = 7;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.in_channels = 2;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.num_classes = 1;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  REQUIRE(cfg.half() == 4);
}

TEST_CASE("feature extraction yields two equal halves per image", "[model]") {
  Rng rng(11);
  Model m(small_config(), rng);
  auto imgs = random_images(5, 8, 3, rng);

  Tape t;
  auto [fc, fb] = m.extract(t, t.constant(images_to_tensor(imgs, 3)), false);
  REQUIRE(fc.val().rows() == 5);
  REQUIRE(fc.val().cols() == 4);
  REQUIRE(fb.val().rows() == 5);
  REQUIRE(fb.val().cols() == 4);

  // eval mode is deterministic: a second pass reproduces every value
  Tape t2;
  auto [fc2, fb2] = m.extract(t2, t2.constant(images_to_tensor(imgs, 3)), false);
  for (std::size_t i = 0; i < fc.val().numel(); ++i) REQUIRE(fc.val()[i] == fc2.val()[i]);
  for (std::size_t i = 0; i < fb.val().numel(); ++i) REQUIRE(fb.val()[i] == fb2.val()[i]);
}

TEST_CASE("extract pairs agrees with the graph path across chunk sizes", "[model]") {
  Rng rng(12);
  Model m(small_config(), rng);
  auto imgs = random_images(7, 8, 3, rng);

  Tape t;
  auto [fc, fb] = m.extract(t, t.constant(images_to_tensor(imgs, 3)), false);
  auto pairs = m.extract_pairs(imgs, 3);  // forces partial chunks
  REQUIRE(pairs.size() == 7);
  for (int i = 0; i < 7; ++i) {
    for (int j = 0; j < 4; ++j) {
      REQUIRE(std::abs(pairs[static_cast<std::size_t>(i)].f_c[static_cast<std::size_t>(j)] -
                       fc.val().mat()(i, j)) < 1e-12);
      REQUIRE(std::abs(pairs[static_cast<std::size_t>(i)].f_b[static_cast<std::size_t>(j)] -
                       fb.val().mat()(i, j)) < 1e-12);
    }
  }
}

TEST_CASE("meta encoders start at a unit gaussian posterior", "[model]") {
  Rng rng(13);
  Model m(small_config(), rng);
  std::vector<double> fa{0.3, -0.2, 0.9, 0.1}, fo{-0.5, 0.4, 0.2, -0.8};
  MetaKnowledge mk = m.encode_meta_single(EncoderId::Ag, fa, fo);
  REQUIRE(mk.mu.size() == 3);
  REQUIRE(mk.log_var.size() == 3);
  for (double v : mk.mu) REQUIRE(v == 0.0);
  for (double v : mk.log_var) REQUIRE(v == 0.0);
  // both encoders share the zero-start property but are distinct modules
  MetaKnowledge mk2 = m.encode_meta_single(EncoderId::Ap, fa, fo);
  for (double v : mk2.mu) REQUIRE(v == 0.0);
}

TEST_CASE("reparameterization matches its closed form", "[model]") {
  Rng rng(14);
  Model m(small_config(), rng);
  MetaKnowledge mk;
  mk.mu = {0.5, -1.0, 2.0};
  mk.log_var = {0.0, 1.0, -2.0};
  std::vector<double> eps{1.0, -0.5, 2.0};
  auto z = m.reparameterize_single(mk, eps);
  REQUIRE(std::abs(z[0] - (0.5 + 1.0 * std::exp(0.0))) < 1e-12);
  REQUIRE(std::abs(z[1] - (-1.0 - 0.5 * std::exp(0.5))) < 1e-12);
  REQUIRE(std::abs(z[2] - (2.0 + 2.0 * std::exp(-1.0))) < 1e-12);

  // the graph op computes the same thing
  Tape t;
  Var zg = m.reparameterize(t, t.constant(Tensor::from({1, 3}, mk.mu)),
                            t.constant(Tensor::from({1, 3}, mk.log_var)),
                            t.constant(Tensor::from({1, 3}, eps)));
  for (int j = 0; j < 3; ++j)
    REQUIRE(std::abs(zg.val()[static_cast<std::size_t>(j)] - z[static_cast<std::size_t>(j)]) <
            1e-12);
}

TEST_CASE("one augmentor serves every branch and half", "[model]") {
  Rng rng(15);
  Model m(small_config(), rng);
  std::vector<double> f{0.1, 0.2, 0.3, 0.4};
  std::vector<double> z{0.5, -0.5, 0.25};
  auto out1 = m.augment_single(f, z);
  REQUIRE(out1.size() == 4);
  // same inputs give the same output no matter how often it is invoked,
  // because there is exactly one augmentor module
  auto out2 = m.augment_single(f, z);
  for (std::size_t i = 0; i < 4; ++i) REQUIRE(out1[i] == out2[i]);
  REQUIRE(m.calls("A") == 2);

  // wrong widths are rejected
  REQUIRE_THROWS_AS(m.augment_single({0.1, 0.2}, z), ArgumentError);
  REQUIRE_THROWS_AS(m.augment_single(f, {0.1}), ArgumentError);
}

TEST_CASE("prediction is the argmax of the head on the causal half", "[model]") {
  Rng rng(16);
  Model m(small_config(), rng);
  auto imgs = random_images(9, 8, 3, rng);

  auto preds = m.predict(imgs, 4);
  REQUIRE(preds.size() == 9);

  Param* hw = find_param(m, "H.w");
  Param* hb = find_param(m, "H.b");
  REQUIRE(hw != nullptr);
  REQUIRE(hb != nullptr);

  auto pairs = m.extract_pairs(imgs);
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    // manual logits: f_c row times H.w plus bias
    int best = 0;
    double best_v = -1e300;
    for (int k = 0; k < 4; ++k) {
      double v = hb->value[static_cast<std::size_t>(k)];
      for (int j = 0; j < 4; ++j)
        v += pairs[i].f_c[static_cast<std::size_t>(j)] * hw->value.mat()(j, k);
      if (v > best_v) {
        best_v = v;
        best = k;
      }
    }
    REQUIRE(preds[i] == best);
  }
}

TEST_CASE("prediction never touches encoders augmentor or reduction", "[model]") {
  Rng rng(17);
  Model m(small_config(), rng);
  auto imgs = random_images(6, 8, 3, rng);
  m.reset_call_trace();
  (void)m.predict(imgs);
  REQUIRE(m.calls("F") > 0);
  REQUIRE(m.calls("H") > 0);
  REQUIRE(m.calls("E_ag") == 0);
  REQUIRE(m.calls("E_ap") == 0);
  REQUIRE(m.calls("A") == 0);
  REQUIRE(m.calls("M") == 0);
}

TEST_CASE("interventional classifier returns a simplex from both halves", "[model]") {
  Rng rng(18);
  Model m(small_config(), rng);
  std::vector<double> fc{0.4, -0.3, 0.7, 0.2}, fb{-0.1, 0.6, -0.4, 0.3};
  auto p = m.intervene_classify(fc, fb);
  REQUIRE(p.size() == 4);
  double s = 0;
  for (double v : p) {
    REQUIRE(v >= 0.0);
    s += v;
  }
  REQUIRE(std::abs(s - 1.0) < 1e-9);
  REQUIRE(m.calls("M") == 1);

  // changing the non-causal half changes the distribution at init, because
  // the reduction layer has not yet been trained to ignore it
  auto p2 = m.intervene_classify(fc, {0.9, -0.9, 0.9, -0.9});
  double diff = 0;
  for (std::size_t k = 0; k < 4; ++k) diff += std::abs(p[k] - p2[k]);
  REQUIRE(diff > 1e-8);
}

TEST_CASE("parameter order is fixed and seed reproducible", "[model]") {
  Rng r1(19), r2(19), r3(20);
  Model a(small_config(), r1), b(small_config(), r2), c(small_config(), r3);

  auto pa = a.params(), pb = b.params(), pc = c.params();
  REQUIRE(pa.size() == pb.size());
  REQUIRE(pa.front()->name == "F.backbone.block0.conv.w");
  REQUIRE(pa.back()->name == "A.l2.b");

  bool any_diff_seed = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i]->name == pb[i]->name);
    for (std::size_t j = 0; j < pa[i]->numel(); ++j) {
      REQUIRE(pa[i]->value[j] == pb[i]->value[j]);
      if (pa[i]->value[j] != pc[i]->value[j]) any_diff_seed = true;
    }
  }
  REQUIRE(any_diff_seed);

  // buffers expose the batchnorm running statistics of the backbone
  auto bufs = a.buffers();
  REQUIRE(bufs.size() == 6);  // mean and var for each of three blocks
  REQUIRE(bufs.front().first.find("running") != std::string::npos);
}

TEST_CASE("checkpoint round trip preserves weights and metadata", "[model]") {
  TempDir tmp;
  Rng rng(21);
  Model m(small_config(), rng);
  nn::Adam opt(m.params());

  // take a step so optimizer moments are non-trivial
  for (Param* p : m.params())
    for (std::size_t i = 0; i < p->numel(); ++i) p->grad[i] = 0.01 * (static_cast<double>(i % 7) - 3);
  opt.step(1e-3);

  Rng train_rng(99);
  (void)train_rng.uniform();
  const std::string path = (tmp.path / "model.ckpt").string();
  save_checkpoint(path, m, 123, &opt, &train_rng);

  LoadedCheckpoint lc = load_checkpoint(path);
  REQUIRE(lc.iteration == 123);
  REQUIRE(lc.config.feature_dim == 8);
  REQUIRE(lc.config.tiny_channels == std::vector<int>{4, 6, 8});
  REQUIRE(lc.has_optimizer);
  REQUIRE(lc.optimizer_step == 1);
  REQUIRE(lc.has_rng);
  REQUIRE(lc.rng_state == train_rng.serialize());

  auto pa = m.params(), pl = lc.model->params();
  REQUIRE(pa.size() == pl.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t j = 0; j < pa[i]->numel(); ++j)
      REQUIRE(pa[i]->value[j] == pl[i]->value[j]);

  REQUIRE(lc.optim_m.size() == pa.size());
  REQUIRE(lc.optim_v.size() == pa.size());

  // restored model predicts identically
  Rng img_rng(22);
  auto imgs = random_images(5, 8, 3, img_rng);
  REQUIRE(m.predict(imgs) == lc.model->predict(imgs));
}

TEST_CASE("loading a non-checkpoint file fails cleanly", "[model]") {
  TempDir tmp;
  const std::string path = (tmp.path / "bogus.ckpt").string();
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    REQUIRE(f != nullptr);
    std::fputs("not a checkpoint at all", f);
    std::fclose(f);
  }
  REQUIRE_THROWS_AS(load_checkpoint(path), DataError);
  REQUIRE_THROWS_AS(load_checkpoint((tmp.path / "missing.ckpt").string()), IoError);
}

TEST_CASE("image batching rejects mismatched inputs", "[model]") {
  Rng rng(23);
  auto imgs = random_images(2, 8, 3, rng);
  REQUIRE_THROWS_AS(images_to_tensor(imgs, 1), ArgumentError);
  imgs.push_back(ImageTensor(4, 4, 3));
  REQUIRE_THROWS_AS(images_to_tensor(imgs, 3), ArgumentError);
  REQUIRE_THROWS_AS(images_to_tensor({}, 3), ArgumentError);
}

TEST_CASE("unknown backbone names are rejected", "[model]") {
  ModelConfig cfg = small_config();
  cfg.backbone = "resnet99";
  Rng rng(24);
  REQUIRE_THROWS_AS(Model(cfg, rng), ConfigError);
}
