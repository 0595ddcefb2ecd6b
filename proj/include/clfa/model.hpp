#pragma once
// model.hpp - the decoupled model: extractor F (backbone + projection) whose
// output splits into causal/non-causal halves, classifier H, reduction layer
// M, the two meta-knowledge encoders, and the augmentor shared by all four
// (branch, half) combinations.

#include <array>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "clfa/image.hpp"
#include "clfa/nn/layers.hpp"

namespace clfa {

using nn::BufferRefs;
using nn::Param;
using nn::ParamRefs;
using nn::Scalar;
using nn::Tape;
using nn::Tensor;
using nn::Var;

struct FeaturePair {
  std::vector<double> f_c;
  std::vector<double> f_b;
};

struct MetaKnowledge {
  std::vector<double> mu;
  std::vector<double> log_var;
};

struct ModelConfig {
  std::string backbone = "tiny_cnn";
  int in_channels = 3;
  int image_size = 32;
  int feature_dim = 128;  // d; the split halves are d/2 each
  int z_dim = 32;
  int encoder_hidden = 32;
  int augmentor_hidden = 64;
  int num_classes = 4;
  std::vector<int> tiny_channels = {16, 32, 64};

  int half() const { return feature_dim / 2; }

  void validate() const {
    require_cfg(feature_dim > 0 && feature_dim % 2 == 0, "feature_dim must be positive and even");
    require_cfg(z_dim > 0, "z_dim must be positive");
    require_cfg(encoder_hidden > 0, "encoder_hidden must be positive");
    require_cfg(augmentor_hidden > 0, "augmentor_hidden must be positive");
    require_cfg(num_classes >= 2, "num_classes must be >= 2");
    require_cfg(in_channels == 1 || in_channels == 3, "in_channels must be 1 or 3");
    require_cfg(image_size > 0, "image_size must be positive");
  }
};

enum class EncoderId { Ag, Ap };

// meta-knowledge encoder: hidden ReLU layer, then a zero-initialized output
// layer so (mu, log_var) start at zero, i.e. unit-Gaussian sampling at init
struct EncoderNet {
  nn::Linear l1, l2;

  EncoderNet(const std::string& name, int din, int hidden, int z_dim, Rng& rng)
      : l1(name + ".l1", din, hidden, rng), l2(name + ".l2", hidden, 2 * z_dim, rng) {
    l2.w.value.fill(0);
    l2.b.value.fill(0);
  }

  Var forward(Tape& t, Var x) { return l2.forward(t, t.relu(l1.forward(t, x))); }

  void collect(ParamRefs& out) {
    l1.collect(out);
    l2.collect(out);
  }
};

inline Tensor images_to_tensor(const std::vector<ImageTensor>& images, int want_channels) {
  require_arg(!images.empty(), "empty image batch");
  const int h = images[0].height, w = images[0].width, c = images[0].channels;
  require_arg(c == want_channels, "image channel count does not match the model");
  Tensor out({static_cast<int>(images.size()), h, w, c});
  Scalar* dst = out.data();
  for (const auto& img : images) {
    require_arg(img.height == h && img.width == w && img.channels == c,
                "image batch has mixed shapes");
    std::copy(img.data.begin(), img.data.end(), dst);
    dst += img.data.size();
  }
  return out;
}

class Model {
 public:
  Model(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    backbone_ = nn::make_backbone(cfg_.backbone, "F.backbone", cfg_.in_channels,
                                  cfg_.tiny_channels, rng);
    proj_ = std::make_unique<nn::Linear>("F.proj", backbone_->out_dim(), cfg_.feature_dim, rng);
    h_ = std::make_unique<nn::Linear>("H", cfg_.half(), cfg_.num_classes, rng);
    m_ = std::make_unique<nn::Linear>("M", cfg_.feature_dim, cfg_.half(), rng);
    e_ag_ = std::make_unique<EncoderNet>("E_ag", cfg_.feature_dim, cfg_.encoder_hidden,
                                         cfg_.z_dim, rng);
    e_ap_ = std::make_unique<EncoderNet>("E_ap", cfg_.feature_dim, cfg_.encoder_hidden,
                                         cfg_.z_dim, rng);
    a_ = std::make_unique<nn::Mlp2>("A", cfg_.half() + cfg_.z_dim, cfg_.augmentor_hidden,
                                    cfg_.half(), rng);
  }

  const ModelConfig& config() const { return cfg_; }

  // ---- graph ops ---------------------------------------------------------

  // images [N,H,W,C] -> (f_c [N,d/2], f_b [N,d/2]); the halves concatenated
  // in order reproduce the projected feature exactly
  std::pair<Var, Var> extract(Tape& t, Var images, bool train) {
    ++calls_["F"];
    Var feat = proj_->forward(t, backbone_->forward(t, images, train));
    Var fc = t.slice_cols(feat, 0, cfg_.half());
    Var fb = t.slice_cols(feat, cfg_.half(), cfg_.half());
    return {fc, fb};
  }

  // (f_t^a ⊕ f_t^v) -> (mu [N,z], log_var [N,z]); concat order is (anchor, other)
  std::pair<Var, Var> encode_meta(Tape& t, EncoderId which, Var f_a, Var f_other) {
    require_arg(f_a.val().cols() == cfg_.half() && f_other.val().cols() == cfg_.half(),
                "encoder inputs must be feature halves");
    ++calls_[which == EncoderId::Ag ? "E_ag" : "E_ap"];
    EncoderNet& enc = which == EncoderId::Ag ? *e_ag_ : *e_ap_;
    Var out = enc.forward(t, t.concat_cols(f_a, f_other));
    Var mu = t.slice_cols(out, 0, cfg_.z_dim);
    Var log_var = t.slice_cols(out, cfg_.z_dim, cfg_.z_dim);
    return {mu, log_var};
  }

  // z = mu + eps ⊙ exp(0.5·log_var)
  Var reparameterize(Tape& t, Var mu, Var log_var, Var eps) {
    return t.add(mu, t.mul(eps, t.exp_(t.scale(log_var, 0.5))));
  }

  Var augment(Tape& t, Var f_a_half, Var z) {
    require_arg(f_a_half.val().cols() == cfg_.half(), "augment wants a feature half");
    require_arg(z.val().cols() == cfg_.z_dim, "augment wants a z_dim sample");
    ++calls_["A"];
    return a_->forward(t, t.concat_cols(f_a_half, z));
  }

  Var head_logits(Tape& t, Var f_half) {
    require_arg(f_half.val().cols() == cfg_.half(), "H wants a feature half");
    ++calls_["H"];
    return h_->forward(t, f_half);
  }

  Var intervene_logits(Tape& t, Var fc, Var fb) {
    require_arg(fc.val().cols() == cfg_.half() && fb.val().cols() == cfg_.half(),
                "intervention wants two feature halves");
    ++calls_["M"];
    Var reduced = m_->forward(t, t.concat_cols(fc, fb));
    return head_logits(t, reduced);
  }

  // ---- eval-mode conveniences --------------------------------------------

  std::vector<FeaturePair> extract_pairs(const std::vector<ImageTensor>& images,
                                         int chunk = 64) {
    std::vector<FeaturePair> out;
    out.reserve(images.size());
    for (std::size_t at = 0; at < images.size(); at += static_cast<std::size_t>(chunk)) {
      const std::size_t n = std::min<std::size_t>(chunk, images.size() - at);
      std::vector<ImageTensor> part(images.begin() + static_cast<std::ptrdiff_t>(at),
                                    images.begin() + static_cast<std::ptrdiff_t>(at + n));
      Tape t;
      auto [fc, fb] = extract(t, t.constant(images_to_tensor(part, cfg_.in_channels)), false);
      const Tensor& cm = fc.val();
      const Tensor& bm = fb.val();
      for (std::size_t i = 0; i < n; ++i) {
        FeaturePair fp;
        fp.f_c.assign(cm.data() + i * static_cast<std::size_t>(cfg_.half()),
                      cm.data() + (i + 1) * static_cast<std::size_t>(cfg_.half()));
        fp.f_b.assign(bm.data() + i * static_cast<std::size_t>(cfg_.half()),
                      bm.data() + (i + 1) * static_cast<std::size_t>(cfg_.half()));
        out.push_back(std::move(fp));
      }
    }
    return out;
  }

  // inference path: argmax of H(f_c); never touches the encoders, A, or M
  std::vector<int> predict(const std::vector<ImageTensor>& images, int chunk = 64) {
    std::vector<int> out;
    out.reserve(images.size());
    for (std::size_t at = 0; at < images.size(); at += static_cast<std::size_t>(chunk)) {
      const std::size_t n = std::min<std::size_t>(chunk, images.size() - at);
      std::vector<ImageTensor> part(images.begin() + static_cast<std::ptrdiff_t>(at),
                                    images.begin() + static_cast<std::ptrdiff_t>(at + n));
      Tape t;
      auto [fc, fb] = extract(t, t.constant(images_to_tensor(part, cfg_.in_channels)), false);
      (void)fb;
      Var logits = head_logits(t, fc);
      const Tensor& lm = logits.val();
      for (int i = 0; i < static_cast<int>(n); ++i) {
        int best = 0;
        for (int k = 1; k < cfg_.num_classes; ++k)
          if (lm.mat()(i, k) > lm.mat()(i, best)) best = k;
        out.push_back(best);
      }
    }
    return out;
  }

  // ---- single-vector wrappers (contract-level API) -----------------------

  MetaKnowledge encode_meta_single(EncoderId which, const std::vector<double>& f_a,
                                   const std::vector<double>& f_other) {
    require_arg(static_cast<int>(f_a.size()) == cfg_.half() &&
                    static_cast<int>(f_other.size()) == cfg_.half(),
                "encoder inputs must have length d/2");
    Tape t;
    auto [mu, lv] = encode_meta(t, which, t.constant(Tensor::from({1, cfg_.half()}, f_a)),
                                t.constant(Tensor::from({1, cfg_.half()}, f_other)));
    MetaKnowledge mk;
    mk.mu.assign(mu.val().data(), mu.val().data() + cfg_.z_dim);
    mk.log_var.assign(lv.val().data(), lv.val().data() + cfg_.z_dim);
    return mk;
  }

  std::vector<double> reparameterize_single(const MetaKnowledge& mk,
                                            const std::vector<double>& eps) {
    require_arg(eps.size() == mk.mu.size(), "eps length must equal z_dim");
    std::vector<double> z(mk.mu.size());
    for (std::size_t i = 0; i < z.size(); ++i)
      z[i] = mk.mu[i] + eps[i] * std::exp(0.5 * mk.log_var[i]);
    return z;
  }

  std::vector<double> augment_single(const std::vector<double>& f, const std::vector<double>& z) {
    require_arg(static_cast<int>(f.size()) == cfg_.half(), "augment input must have length d/2");
    require_arg(static_cast<int>(z.size()) == cfg_.z_dim, "z must have length z_dim");
    Tape t;
    Var out = augment(t, t.constant(Tensor::from({1, cfg_.half()}, f)),
                      t.constant(Tensor::from({1, cfg_.z_dim}, z)));
    return {out.val().data(), out.val().data() + cfg_.half()};
  }

  // probability simplex over classes from the interventional classifier
  std::vector<double> intervene_classify(const std::vector<double>& fc,
                                         const std::vector<double>& fb) {
    require_arg(static_cast<int>(fc.size()) == cfg_.half() &&
                    static_cast<int>(fb.size()) == cfg_.half(),
                "intervention inputs must have length d/2");
    Tape t;
    Var logits = intervene_logits(t, t.constant(Tensor::from({1, cfg_.half()}, fc)),
                                  t.constant(Tensor::from({1, cfg_.half()}, fb)));
    Var lp = t.log_softmax(logits);
    std::vector<double> p(static_cast<std::size_t>(cfg_.num_classes));
    for (int k = 0; k < cfg_.num_classes; ++k)
      p[static_cast<std::size_t>(k)] = std::exp(lp.val()[static_cast<std::size_t>(k)]);
    return p;
  }

  // ---- parameter plumbing ------------------------------------------------

  // fixed order: F.backbone, F.proj, H, M, E_ag, E_ap, A
  ParamRefs params() {
    ParamRefs out;
    backbone_->collect(out);
    proj_->collect(out);
    h_->collect(out);
    m_->collect(out);
    e_ag_->collect(out);
    e_ap_->collect(out);
    a_->collect(out);
    return out;
  }

  BufferRefs buffers() {
    BufferRefs out;
    backbone_->collect_buffers(out);
    return out;
  }

  long calls(const std::string& component) const {
    auto it = calls_.find(component);
    return it == calls_.end() ? 0 : it->second;
  }
  void reset_call_trace() { calls_.clear(); }

 private:
  ModelConfig cfg_;
  std::unique_ptr<nn::Backbone> backbone_;
  std::unique_ptr<nn::Linear> proj_;
  std::unique_ptr<nn::Linear> h_;
  std::unique_ptr<nn::Linear> m_;
  std::unique_ptr<EncoderNet> e_ag_;
  std::unique_ptr<EncoderNet> e_ap_;
  std::unique_ptr<nn::Mlp2> a_;
  std::map<std::string, long> calls_;
};

}  // namespace clfa
