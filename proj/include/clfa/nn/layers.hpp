#pragma once
// layers.hpp - parameterized building blocks and the backbone zoo.
//
// Layers own their Params (and BatchNorm its running stats) and know how to
// stamp themselves onto a Tape. Construction order is fixed so a seeded Rng
// reproduces the exact same initial weights.

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "clfa/nn/tape.hpp"
#include "clfa/rng.hpp"

namespace clfa::nn {

using ParamRefs = std::vector<Param*>;
using BufferRefs = std::vector<std::pair<std::string, Tensor*>>;

inline Tensor he_normal(std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor t(shape);
  const Scalar s = std::sqrt(Scalar(2) / static_cast<Scalar>(fan_in));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = s * rng.normal();
  return t;
}

struct Linear {
  Param w, b;

  Linear(const std::string& name, int din, int dout, Rng& rng)
      : w(name + ".w", he_normal({din, dout}, din, rng)),
        b(name + ".b", Tensor::zeros({dout})) {}

  Var forward(Tape& t, Var x) { return t.linear(x, t.param(w), t.param(b)); }

  void collect(ParamRefs& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

struct Conv2d {
  int kh, kw, stride, pad;
  Param w, b;  // w is [cout, kh*kw*cin]

  Conv2d(const std::string& name, int cin, int cout, int k, int stride_, int pad_, Rng& rng)
      : kh(k),
        kw(k),
        stride(stride_),
        pad(pad_),
        w(name + ".w", he_normal({cout, k * k * cin}, k * k * cin, rng)),
        b(name + ".b", Tensor::zeros({cout})) {}

  Var forward(Tape& t, Var x) {
    return t.conv2d(x, t.param(w), t.param(b), kh, kw, stride, pad);
  }

  void collect(ParamRefs& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

struct BatchNorm {
  std::string name;
  Param gamma, beta;
  Tensor running_mean, running_var;
  Scalar momentum = 0.1;

  BatchNorm(const std::string& name_, int c)
      : name(name_),
        gamma(name_ + ".gamma", Tensor::full({c}, 1.0)),
        beta(name_ + ".beta", Tensor::zeros({c})),
        running_mean(Tensor::zeros({c})),
        running_var(Tensor::full({c}, 1.0)) {}

  Var forward(Tape& t, Var x, bool train) {
    Tensor bm, bv;
    Var y = t.batchnorm(x, t.param(gamma), t.param(beta), train, running_mean, running_var,
                        &bm, &bv);
    if (train) {
      running_mean.vec() = (1 - momentum) * running_mean.vec() + momentum * bm.vec();
      running_var.vec() = (1 - momentum) * running_var.vec() + momentum * bv.vec();
    }
    return y;
  }

  void collect(ParamRefs& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }

  void collect_buffers(BufferRefs& out) {
    out.emplace_back(name + ".running_mean", &running_mean);
    out.emplace_back(name + ".running_var", &running_var);
  }
};

// two-layer perceptron used by the meta-knowledge encoders and the augmentor
struct Mlp2 {
  Linear l1, l2;

  Mlp2(const std::string& name, int din, int hidden, int dout, Rng& rng)
      : l1(name + ".l1", din, hidden, rng), l2(name + ".l2", hidden, dout, rng) {}

  Var forward(Tape& t, Var x) { return l2.forward(t, t.relu(l1.forward(t, x))); }

  void collect(ParamRefs& out) {
    l1.collect(out);
    l2.collect(out);
  }
};

// ---- backbones -----------------------------------------------------------

struct Backbone {
  virtual ~Backbone() = default;
  virtual Var forward(Tape& t, Var x, bool train) = 0;
  virtual int out_dim() const = 0;
  virtual void collect(ParamRefs& out) = 0;
  virtual void collect_buffers(BufferRefs& out) = 0;
};

// three conv blocks with a global average pool; this is the cheap backbone
// for the controllable-factor experiments, so keep its cost proportional to
// the channel widths in the config
class TinyCnn final : public Backbone {
 public:
  TinyCnn(const std::string& name, int cin, const std::vector<int>& ch, Rng& rng) {
    require_arg(ch.size() == 3, "tiny_cnn wants exactly 3 channel widths");
    int c = cin;
    for (int i = 0; i < 3; ++i) {
      const std::string blk = name + ".block" + std::to_string(i);
      convs_.emplace_back(blk + ".conv", c, ch[static_cast<std::size_t>(i)], 3, 1, 1, rng);
      bns_.emplace_back(blk + ".bn", ch[static_cast<std::size_t>(i)]);
      c = ch[static_cast<std::size_t>(i)];
    }
    out_dim_ = c;
  }

  Var forward(Tape& t, Var x, bool train) override {
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      x = t.relu(bns_[i].forward(t, convs_[i].forward(t, x), train));
      if (i + 1 < convs_.size()) x = t.maxpool2d(x, 2, 2);
    }
    return t.global_avgpool(x);
  }

  int out_dim() const override { return out_dim_; }

  void collect(ParamRefs& out) override {
    for (auto& c : convs_) c.collect(out);
    for (auto& b : bns_) b.collect(out);
  }
  void collect_buffers(BufferRefs& out) override {
    for (auto& b : bns_) b.collect_buffers(out);
  }

 private:
  std::vector<Conv2d> convs_;
  std::vector<BatchNorm> bns_;
  int out_dim_ = 0;
};

// the usual digits stack: 5x5 convs with pooling, widths 64-64-128
class ConvNet final : public Backbone {
 public:
  ConvNet(const std::string& name, int cin, Rng& rng) {
    const int widths[3] = {64, 64, 128};
    int c = cin;
    for (int i = 0; i < 3; ++i) {
      const std::string blk = name + ".block" + std::to_string(i);
      convs_.emplace_back(blk + ".conv", c, widths[i], 5, 1, 2, rng);
      bns_.emplace_back(blk + ".bn", widths[i]);
      c = widths[i];
    }
    out_dim_ = c;
  }

  Var forward(Tape& t, Var x, bool train) override {
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      x = t.relu(bns_[i].forward(t, convs_[i].forward(t, x), train));
      if (i + 1 < convs_.size()) x = t.maxpool2d(x, 2, 2);
    }
    return t.global_avgpool(x);
  }

  int out_dim() const override { return out_dim_; }

  void collect(ParamRefs& out) override {
    for (auto& c : convs_) c.collect(out);
    for (auto& b : bns_) b.collect(out);
  }
  void collect_buffers(BufferRefs& out) override {
    for (auto& b : bns_) b.collect_buffers(out);
  }

 private:
  std::vector<Conv2d> convs_;
  std::vector<BatchNorm> bns_;
  int out_dim_ = 0;
};

// post-activation residual block shared by the two resnet-style backbones
struct BasicBlock {
  Conv2d conv1, conv2;
  BatchNorm bn1, bn2;
  std::unique_ptr<Conv2d> down_conv;
  std::unique_ptr<BatchNorm> down_bn;

  BasicBlock(const std::string& name, int cin, int cout, int stride, Rng& rng)
      : conv1(name + ".conv1", cin, cout, 3, stride, 1, rng),
        conv2(name + ".conv2", cout, cout, 3, 1, 1, rng),
        bn1(name + ".bn1", cout),
        bn2(name + ".bn2", cout) {
    if (stride != 1 || cin != cout) {
      down_conv = std::make_unique<Conv2d>(name + ".down.conv", cin, cout, 1, stride, 0, rng);
      down_bn = std::make_unique<BatchNorm>(name + ".down.bn", cout);
    }
  }

  Var forward(Tape& t, Var x, bool train) {
    Var y = t.relu(bn1.forward(t, conv1.forward(t, x), train));
    y = bn2.forward(t, conv2.forward(t, y), train);
    Var skip = down_conv ? down_bn->forward(t, down_conv->forward(t, x), train) : x;
    return t.relu(t.add(y, skip));
  }

  void collect(ParamRefs& out) {
    conv1.collect(out);
    conv2.collect(out);
    bn1.collect(out);
    bn2.collect(out);
    if (down_conv) {
      down_conv->collect(out);
      down_bn->collect(out);
    }
  }
  void collect_buffers(BufferRefs& out) {
    bn1.collect_buffers(out);
    bn2.collect_buffers(out);
    if (down_bn) down_bn->collect_buffers(out);
  }
};

// wide resnet, depth 16 widen 4: three groups of two blocks at widths 64/128/256
class Wrn16x4 final : public Backbone {
 public:
  Wrn16x4(const std::string& name, int cin, Rng& rng)
      : stem_(name + ".stem.conv", cin, 16, 3, 1, 1, rng), stem_bn_(name + ".stem.bn", 16) {
    const int widths[3] = {64, 128, 256};
    int c = 16;
    for (int g = 0; g < 3; ++g) {
      const int stride = g == 0 ? 1 : 2;
      const std::string gn = name + ".group" + std::to_string(g);
      blocks_.emplace_back(gn + ".b0", c, widths[g], stride, rng);
      blocks_.emplace_back(gn + ".b1", widths[g], widths[g], 1, rng);
      c = widths[g];
    }
    out_dim_ = c;
  }

  Var forward(Tape& t, Var x, bool train) override {
    x = t.relu(stem_bn_.forward(t, stem_.forward(t, x), train));
    for (auto& b : blocks_) x = b.forward(t, x, train);
    return t.global_avgpool(x);
  }

  int out_dim() const override { return out_dim_; }

  void collect(ParamRefs& out) override {
    stem_.collect(out);
    stem_bn_.collect(out);
    for (auto& b : blocks_) b.collect(out);
  }
  void collect_buffers(BufferRefs& out) override {
    stem_bn_.collect_buffers(out);
    for (auto& b : blocks_) b.collect_buffers(out);
  }

 private:
  Conv2d stem_;
  BatchNorm stem_bn_;
  std::vector<BasicBlock> blocks_;
  int out_dim_ = 0;
};

class ResNet18 final : public Backbone {
 public:
  ResNet18(const std::string& name, int cin, Rng& rng)
      : stem_(name + ".stem.conv", cin, 64, 7, 2, 3, rng), stem_bn_(name + ".stem.bn", 64) {
    const int widths[4] = {64, 128, 256, 512};
    int c = 64;
    for (int g = 0; g < 4; ++g) {
      const int stride = g == 0 ? 1 : 2;
      const std::string gn = name + ".layer" + std::to_string(g + 1);
      blocks_.emplace_back(gn + ".b0", c, widths[g], stride, rng);
      blocks_.emplace_back(gn + ".b1", widths[g], widths[g], 1, rng);
      c = widths[g];
    }
    out_dim_ = c;
  }

  Var forward(Tape& t, Var x, bool train) override {
    x = t.relu(stem_bn_.forward(t, stem_.forward(t, x), train));
    x = t.maxpool2d(x, 3, 2, 1);
    for (auto& b : blocks_) x = b.forward(t, x, train);
    return t.global_avgpool(x);
  }

  int out_dim() const override { return out_dim_; }

  void collect(ParamRefs& out) override {
    stem_.collect(out);
    stem_bn_.collect(out);
    for (auto& b : blocks_) b.collect(out);
  }
  void collect_buffers(BufferRefs& out) override {
    stem_bn_.collect_buffers(out);
    for (auto& b : blocks_) b.collect_buffers(out);
  }

 private:
  Conv2d stem_;
  BatchNorm stem_bn_;
  std::vector<BasicBlock> blocks_;
  int out_dim_ = 0;
};

inline std::unique_ptr<Backbone> make_backbone(const std::string& kind, const std::string& name,
                                               int cin, const std::vector<int>& tiny_channels,
                                               Rng& rng) {
  if (kind == "tiny_cnn") return std::make_unique<TinyCnn>(name, cin, tiny_channels, rng);
  if (kind == "convnet") return std::make_unique<ConvNet>(name, cin, rng);
  if (kind == "wrn_16_4") return std::make_unique<Wrn16x4>(name, cin, rng);
  if (kind == "resnet18") return std::make_unique<ResNet18>(name, cin, rng);
  throw ConfigError("unknown backbone '" + kind + "'");
}

}  // namespace clfa::nn
