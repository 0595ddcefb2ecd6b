#pragma once
// tape.hpp - define-by-run reverse-mode autodiff over Tensor.
//
// A Tape owns the nodes of one forward graph. Ops append nodes; backward()
// walks the tape in reverse creation order and accumulates gradients into
// the leaves. Parameters are memoized per tape, so pushing the same Param
// from two places yields one node and summed gradients (this is what makes
// weight sharing an identity rather than a convention).

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <memory>
#include <unordered_map>
#include <vector>

#include "clfa/nn/tensor.hpp"

namespace clfa::nn {

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& val() const;
};

class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor grad;             // allocated lazily on first accumulation
    bool requires_grad = false;
    bool grad_live = false;
    std::function<void(Tape&)> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return nodes_.size(); }

  const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Tensor& val(Var v) const { return val(v.id); }
  bool rg(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  Tensor& grad_buf(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.grad_live) {
      n.grad = Tensor::zeros(n.value.shape());
      n.grad_live = true;
    }
    return n.grad;
  }

  bool has_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad_live; }
  const Tensor& grad(Var v) const {
    require_arg(has_grad(v.id), "no gradient accumulated at this node");
    return nodes_[static_cast<std::size_t>(v.id)].grad;
  }

  // ---- leaves ------------------------------------------------------------

  Var constant(Tensor v) { return push(std::move(v), false, nullptr); }

  Var leaf(Tensor v) { return push(std::move(v), true, nullptr); }

  Var param(Param& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return {this, it->second};
    Var v = push(p.value, true, nullptr);
    param_nodes_.emplace(&p, v.id);
    return v;
  }

  // ---- elementwise -------------------------------------------------------

  Var add(Var a, Var b) {
    check_same(a, b, "add");
    Tensor out = val(a);
    out.vec() += val(b).vec();
    return binary_ew(std::move(out), a, b, [](Tape& t, int a_, int b_, const Tensor& g) {
      if (t.rg(a_)) t.grad_buf(a_).vec() += g.vec();
      if (t.rg(b_)) t.grad_buf(b_).vec() += g.vec();
    });
  }

  Var sub(Var a, Var b) {
    check_same(a, b, "sub");
    Tensor out = val(a);
    out.vec() -= val(b).vec();
    return binary_ew(std::move(out), a, b, [](Tape& t, int a_, int b_, const Tensor& g) {
      if (t.rg(a_)) t.grad_buf(a_).vec() += g.vec();
      if (t.rg(b_)) t.grad_buf(b_).vec() -= g.vec();
    });
  }

  Var mul(Var a, Var b) {
    check_same(a, b, "mul");
    Tensor out = val(a);
    out.vec().array() *= val(b).vec().array();
    return binary_ew(std::move(out), a, b, [](Tape& t, int a_, int b_, const Tensor& g) {
      if (t.rg(a_)) t.grad_buf(a_).vec().array() += g.vec().array() * t.val(b_).vec().array();
      if (t.rg(b_)) t.grad_buf(b_).vec().array() += g.vec().array() * t.val(a_).vec().array();
    });
  }

  Var div(Var a, Var b) {
    check_same(a, b, "div");
    Tensor out = val(a);
    out.vec().array() /= val(b).vec().array();
    return binary_ew(std::move(out), a, b, [](Tape& t, int a_, int b_, const Tensor& g) {
      if (t.rg(a_)) t.grad_buf(a_).vec().array() += g.vec().array() / t.val(b_).vec().array();
      if (t.rg(b_))
        t.grad_buf(b_).vec().array() -= g.vec().array() * t.val(a_).vec().array() /
                                        t.val(b_).vec().array().square();
    });
  }

  Var scale(Var a, Scalar c) {
    Tensor out = val(a);
    out.vec() *= c;
    return unary(std::move(out), a, [c](Tape& t, int a_, const Tensor& g) {
      if (t.rg(a_)) t.grad_buf(a_).vec() += c * g.vec();
    });
  }

  Var add_scalar(Var a, Scalar c) {
    Tensor out = val(a);
    out.vec().array() += c;
    return unary(std::move(out), a, [](Tape& t, int a_, const Tensor& g) {
      if (t.rg(a_)) t.grad_buf(a_).vec() += g.vec();
    });
  }

  Var relu(Var a) {
    Tensor out = val(a);
    out.vec() = out.vec().cwiseMax(Scalar(0));
    return unary(std::move(out), a, [](Tape& t, int a_, const Tensor& g) {
      if (!t.rg(a_)) return;
      t.grad_buf(a_).vec().array() +=
          g.vec().array() * (t.val(a_).vec().array() > Scalar(0)).cast<Scalar>();
    });
  }

  Var exp_(Var a) {
    Tensor out = val(a);
    out.vec() = out.vec().array().exp();
    return unary(std::move(out), a, [id = next_id()](Tape& t, int a_, const Tensor& g) {
      if (t.rg(a_)) t.grad_buf(a_).vec().array() += g.vec().array() * t.val(id).vec().array();
    });
  }

  Var log_(Var a) {
    Tensor out = val(a);
    out.vec() = out.vec().array().log();
    return unary(std::move(out), a, [](Tape& t, int a_, const Tensor& g) {
      if (t.rg(a_)) t.grad_buf(a_).vec().array() += g.vec().array() / t.val(a_).vec().array();
    });
  }

  Var sqrt_(Var a) {
    Tensor out = val(a);
    out.vec() = out.vec().array().sqrt();
    return unary(std::move(out), a, [id = next_id()](Tape& t, int a_, const Tensor& g) {
      if (!t.rg(a_)) return;
      const Tensor& y = t.val(id);
      Tensor& ga = t.grad_buf(a_);
      for (std::size_t i = 0; i < y.numel(); ++i)
        if (y[i] > Scalar(0)) ga[i] += g[i] * Scalar(0.5) / y[i];
    });
  }

  Var clamp_min(Var a, Scalar floor) {
    Tensor out = val(a);
    out.vec() = out.vec().cwiseMax(floor);
    return unary(std::move(out), a, [floor](Tape& t, int a_, const Tensor& g) {
      if (!t.rg(a_)) return;
      t.grad_buf(a_).vec().array() +=
          g.vec().array() * (t.val(a_).vec().array() > floor).cast<Scalar>();
    });
  }

  // ---- shape -------------------------------------------------------------

  Var reshape(Var a, std::vector<int> shape) {
    Tensor out = val(a);
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    require_arg(n == out.numel(), "reshape: element count mismatch");
    out = Tensor::from(std::move(shape),
                       std::vector<Scalar>(out.data(), out.data() + out.numel()));
    return unary(std::move(out), a, [](Tape& t, int a_, const Tensor& g) {
      if (t.rg(a_)) t.grad_buf(a_).vec() += g.vec();
    });
  }

  Var concat_cols(Var a, Var b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    require_arg(av.rows() == bv.rows(), "concat_cols: row mismatch");
    const int n = av.rows(), ca = av.cols(), cb = bv.cols();
    Tensor out({n, ca + cb});
    out.mat().leftCols(ca) = av.mat_as(n, ca);
    out.mat().rightCols(cb) = bv.mat_as(n, cb);
    return binary_ew(std::move(out), a, b,
                     [n, ca, cb](Tape& t, int a_, int b_, const Tensor& g) {
                       auto gm = g.mat_as(n, ca + cb);
                       if (t.rg(a_)) t.grad_buf(a_).mat_as(n, ca) += gm.leftCols(ca);
                       if (t.rg(b_)) t.grad_buf(b_).mat_as(n, cb) += gm.rightCols(cb);
                     });
  }

  Var slice_rows(Var a, int start, int len) {
    const Tensor& av = val(a);
    const int n = av.rows(), c = av.cols();
    require_arg(start >= 0 && len > 0 && start + len <= n, "slice_rows out of range");
    Tensor out({len, c});
    out.mat() = av.mat_as(n, c).middleRows(start, len);
    return unary(std::move(out), a, [n, c, start, len](Tape& t, int a_, const Tensor& g) {
      if (t.rg(a_)) t.grad_buf(a_).mat_as(n, c).middleRows(start, len) += g.mat_as(len, c);
    });
  }

  Var slice_cols(Var a, int start, int len) {
    const Tensor& av = val(a);
    const int n = av.rows(), c = av.cols();
    require_arg(start >= 0 && len > 0 && start + len <= c, "slice_cols out of range");
    Tensor out({n, len});
    out.mat() = av.mat_as(n, c).middleCols(start, len);
    return unary(std::move(out), a, [n, c, start, len](Tape& t, int a_, const Tensor& g) {
      if (t.rg(a_)) t.grad_buf(a_).mat_as(n, c).middleCols(start, len) += g.mat_as(n, len);
    });
  }

  // out.row(i) = sources[pick[i]].row(i); the row-wise mixer behind the
  // shuffled confounder pairing
  Var select_rows(const std::vector<Var>& sources, std::vector<int> pick) {
    require_arg(!sources.empty(), "select_rows: no sources");
    const int n = val(sources[0]).rows(), c = val(sources[0]).cols();
    require_arg(static_cast<int>(pick.size()) == n, "select_rows: pick size mismatch");
    bool rg_any = false;
    std::vector<int> ids;
    ids.reserve(sources.size());
    for (Var s : sources) {
      require_arg(val(s).rows() == n && val(s).cols() == c, "select_rows: shape mismatch");
      rg_any = rg_any || rg(s.id);
      ids.push_back(s.id);
    }
    Tensor out({n, c});
    for (int i = 0; i < n; ++i) {
      require_arg(pick[static_cast<std::size_t>(i)] >= 0 &&
                      pick[static_cast<std::size_t>(i)] < static_cast<int>(sources.size()),
                  "select_rows: pick out of range");
      out.mat().row(i) = val(sources[static_cast<std::size_t>(pick[static_cast<std::size_t>(i)])])
                             .mat_as(n, c)
                             .row(i);
    }
    const int out_id = next_id();
    return push(std::move(out), rg_any,
                [ids = std::move(ids), pick = std::move(pick), n, c, out_id](Tape& t) {
                  const Tensor& g = t.nodes_[static_cast<std::size_t>(out_id)].grad;
                  for (int i = 0; i < n; ++i) {
                    const int src = ids[static_cast<std::size_t>(pick[static_cast<std::size_t>(i)])];
                    if (t.rg(src)) t.grad_buf(src).mat_as(n, c).row(i) += g.mat_as(n, c).row(i);
                  }
                });
  }

  // ---- linear algebra ----------------------------------------------------

  Var matmul(Var a, Var b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    require_arg(av.cols() == bv.rows(), "matmul: inner dim mismatch");
    const int m = av.rows(), k = av.cols(), n = bv.cols();
    Tensor out({m, n});
    out.mat().noalias() = av.mat_as(m, k) * bv.mat_as(k, n);
    return binary_ew(std::move(out), a, b, [m, k, n](Tape& t, int a_, int b_, const Tensor& g) {
      auto gm = g.mat_as(m, n);
      if (t.rg(a_)) t.grad_buf(a_).mat_as(m, k).noalias() += gm * t.val(b_).mat_as(k, n).transpose();
      if (t.rg(b_)) t.grad_buf(b_).mat_as(k, n).noalias() += t.val(a_).mat_as(m, k).transpose() * gm;
    });
  }

  // y = x W + b with W stored [Din, Dout]
  Var linear(Var x, Var w, Var b) {
    const Tensor& xv = val(x);
    const Tensor& wv = val(w);
    const Tensor& bv = val(b);
    const int n = xv.rows(), din = xv.cols(), dout = wv.cols();
    require_arg(wv.rows() == din, "linear: weight shape mismatch");
    require_arg(static_cast<int>(bv.numel()) == dout, "linear: bias shape mismatch");
    Tensor out({n, dout});
    out.mat().noalias() = xv.mat_as(n, din) * wv.mat_as(din, dout);
    out.mat().rowwise() += bv.mat_as(1, dout).row(0);
    const int out_id = next_id();
    const int xi = x.id, wi = w.id, bi = b.id;
    return push(std::move(out), rg(xi) || rg(wi) || rg(bi),
                [xi, wi, bi, n, din, dout, out_id](Tape& t) {
                  const Tensor& g = t.nodes_[static_cast<std::size_t>(out_id)].grad;
                  auto gm = g.mat_as(n, dout);
                  if (t.rg(xi))
                    t.grad_buf(xi).mat_as(n, din).noalias() +=
                        gm * t.val(wi).mat_as(din, dout).transpose();
                  if (t.rg(wi))
                    t.grad_buf(wi).mat_as(din, dout).noalias() +=
                        t.val(xi).mat_as(n, din).transpose() * gm;
                  if (t.rg(bi)) t.grad_buf(bi).mat_as(1, dout) += gm.colwise().sum();
                });
  }

  // ---- reductions --------------------------------------------------------

  Var sum_all(Var a) {
    Tensor out = Tensor::scalar(val(a).vec().sum());
    return unary(std::move(out), a, [](Tape& t, int a_, const Tensor& g) {
      if (t.rg(a_)) t.grad_buf(a_).vec().array() += g[0];
    });
  }

  Var mean_all(Var a) {
    const Scalar inv = Scalar(1) / static_cast<Scalar>(val(a).numel());
    Tensor out = Tensor::scalar(val(a).vec().sum() * inv);
    return unary(std::move(out), a, [inv](Tape& t, int a_, const Tensor& g) {
      if (t.rg(a_)) t.grad_buf(a_).vec().array() += g[0] * inv;
    });
  }

  Var row_dot(Var a, Var b) {
    check_same(a, b, "row_dot");
    const int n = val(a).rows(), c = val(a).cols();
    Tensor out({n});
    for (int i = 0; i < n; ++i)
      out[static_cast<std::size_t>(i)] = val(a).mat_as(n, c).row(i).dot(val(b).mat_as(n, c).row(i));
    return binary_ew(std::move(out), a, b, [n, c](Tape& t, int a_, int b_, const Tensor& g) {
      for (int i = 0; i < n; ++i) {
        const Scalar gi = g[static_cast<std::size_t>(i)];
        if (gi == Scalar(0)) continue;
        if (t.rg(a_)) t.grad_buf(a_).mat_as(n, c).row(i) += gi * t.val(b_).mat_as(n, c).row(i);
        if (t.rg(b_)) t.grad_buf(b_).mat_as(n, c).row(i) += gi * t.val(a_).mat_as(n, c).row(i);
      }
    });
  }

  // per-row cosine similarity with the zero-norm guard: rows where either
  // half has zero norm produce exactly 0 and propagate no gradient. The
  // caller can inspect zero_norm_rows() for the logged warning.
  Var cosine_rows(Var a, Var b) {
    check_same(a, b, "cosine_rows");
    const int n = val(a).rows(), c = val(a).cols();
    Tensor out({n});
    auto na = std::make_shared<std::vector<Scalar>>(static_cast<std::size_t>(n));
    auto nb = std::make_shared<std::vector<Scalar>>(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const auto ra = val(a).mat_as(n, c).row(i);
      const auto rb = val(b).mat_as(n, c).row(i);
      const Scalar la = ra.norm(), lb = rb.norm();
      (*na)[static_cast<std::size_t>(i)] = la;
      (*nb)[static_cast<std::size_t>(i)] = lb;
      if (la == Scalar(0) || lb == Scalar(0)) {
        out[static_cast<std::size_t>(i)] = 0;
        ++zero_norm_rows_;
      } else {
        out[static_cast<std::size_t>(i)] = ra.dot(rb) / (la * lb);
      }
    }
    const int out_id = next_id();
    const int ai = a.id, bi = b.id;
    return push(std::move(out), rg(ai) || rg(bi), [ai, bi, n, c, na, nb, out_id](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(out_id)].grad;
      const Tensor& cv = t.nodes_[static_cast<std::size_t>(out_id)].value;
      for (int i = 0; i < n; ++i) {
        const Scalar la = (*na)[static_cast<std::size_t>(i)];
        const Scalar lb = (*nb)[static_cast<std::size_t>(i)];
        const Scalar gi = g[static_cast<std::size_t>(i)];
        if (la == Scalar(0) || lb == Scalar(0) || gi == Scalar(0)) continue;
        const Scalar ci = cv[static_cast<std::size_t>(i)];
        const auto ra = t.val(ai).mat_as(n, c).row(i);
        const auto rb = t.val(bi).mat_as(n, c).row(i);
        if (t.rg(ai))
          t.grad_buf(ai).mat_as(n, c).row(i) += gi * (rb / (la * lb) - ci * ra / (la * la));
        if (t.rg(bi))
          t.grad_buf(bi).mat_as(n, c).row(i) += gi * (ra / (la * lb) - ci * rb / (lb * lb));
      }
    });
  }

  int zero_norm_rows() const { return zero_norm_rows_; }

  // ---- classification heads ----------------------------------------------

  Var log_softmax(Var x) {
    const int n = val(x).rows(), k = val(x).cols();
    Tensor out = val(x);
    auto m = out.mat_as(n, k);
    for (int i = 0; i < n; ++i) {
      const Scalar mx = m.row(i).maxCoeff();
      const Scalar lse = mx + std::log((m.row(i).array() - mx).exp().sum());
      m.row(i).array() -= lse;
    }
    return unary(std::move(out), x, [n, k, id = next_id()](Tape& t, int x_, const Tensor& g) {
      if (!t.rg(x_)) return;
      auto gm = g.mat_as(n, k);
      auto logp = t.val(id).mat_as(n, k);
      auto gx = t.grad_buf(x_).mat_as(n, k);
      for (int i = 0; i < n; ++i) {
        const Scalar gsum = gm.row(i).sum();
        gx.row(i).array() += gm.row(i).array() - logp.row(i).array().exp() * gsum;
      }
    });
  }

  // mean over the batch of -logp[i, label_i]
  Var nll_mean(Var logp, std::vector<int> labels) {
    const int n = val(logp).rows(), k = val(logp).cols();
    require_arg(static_cast<int>(labels.size()) == n, "nll_mean: label count mismatch");
    Scalar acc = 0;
    for (int i = 0; i < n; ++i) {
      const int y = labels[static_cast<std::size_t>(i)];
      require_arg(y >= 0 && y < k, "nll_mean: label out of range");
      acc -= val(logp).mat_as(n, k)(i, y);
    }
    Tensor out = Tensor::scalar(acc / n);
    return unary(std::move(out), logp,
                 [n, k, labels = std::move(labels)](Tape& t, int l_, const Tensor& g) {
                   if (!t.rg(l_)) return;
                   auto gl = t.grad_buf(l_).mat_as(n, k);
                   const Scalar s = g[0] / n;
                   for (int i = 0; i < n; ++i) gl(i, labels[static_cast<std::size_t>(i)]) -= s;
                 });
  }

  // ---- image ops (NHWC) --------------------------------------------------

  // w is [Cout, kh*kw*Cin]; bias [Cout]; zero padding
  Var conv2d(Var x, Var w, Var b, int kh, int kw, int stride, int pad) {
    const Tensor& xv = val(x);
    require_arg(xv.rank() == 4, "conv2d: input must be NHWC");
    const int n = xv.dim(0), h = xv.dim(1), ww = xv.dim(2), cin = xv.dim(3);
    const int cout = val(w).rows();
    const int kcols = kh * kw * cin;
    require_arg(val(w).cols() == kcols, "conv2d: weight shape mismatch");
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (ww + 2 * pad - kw) / stride + 1;
    require_arg(oh > 0 && ow > 0, "conv2d: output collapses to zero");

    const int rows = n * oh * ow;
    auto col = std::make_shared<Tensor>(Tensor({rows, kcols}));
    {
      Scalar* cd = col->data();
      const Scalar* xd = xv.data();
      for (int ni = 0; ni < n; ++ni) {
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            Scalar* crow = cd + (static_cast<std::size_t>(ni) * oh * ow + oy * ow + ox) *
                                    static_cast<std::size_t>(kcols);
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = oy * stride - pad + ky;
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = ox * stride - pad + kx;
                Scalar* dst = crow + (ky * kw + kx) * cin;
                if (iy >= 0 && iy < h && ix >= 0 && ix < ww) {
                  const Scalar* src =
                      xd + ((static_cast<std::size_t>(ni) * h + iy) * ww + ix) * cin;
                  std::memcpy(dst, src, sizeof(Scalar) * static_cast<std::size_t>(cin));
                }  // padding stays zero from construction
              }
            }
          }
        }
      }
    }

    Tensor out({n, oh, ow, cout});
    out.mat_as(rows, cout).noalias() = col->mat() * val(w).mat().transpose();
    out.mat_as(rows, cout).rowwise() += val(b).mat_as(1, cout).row(0);

    const int out_id = next_id();
    const int xi = x.id, wi = w.id, bi = b.id;
    return push(
        std::move(out), rg(xi) || rg(wi) || rg(bi),
        [xi, wi, bi, col, n, h, ww, cin, cout, kh, kw, stride, pad, oh, ow, rows, kcols,
         out_id](Tape& t) {
          const Tensor& g = t.nodes_[static_cast<std::size_t>(out_id)].grad;
          auto gm = g.mat_as(rows, cout);
          if (t.rg(bi)) t.grad_buf(bi).mat_as(1, cout) += gm.colwise().sum();
          if (t.rg(wi)) t.grad_buf(wi).mat().noalias() += gm.transpose() * col->mat();
          if (t.rg(xi)) {
            Tensor dcol({rows, kcols});
            dcol.mat().noalias() = gm * t.val(wi).mat();
            Tensor& gx = t.grad_buf(xi);
            Scalar* gxd = gx.data();
            const Scalar* dc = dcol.data();
            for (int ni = 0; ni < n; ++ni) {
              for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                  const Scalar* crow = dc + (static_cast<std::size_t>(ni) * oh * ow + oy * ow + ox) *
                                                static_cast<std::size_t>(kcols);
                  for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                      const int ix = ox * stride - pad + kx;
                      if (ix < 0 || ix >= ww) continue;
                      Scalar* dst = gxd + ((static_cast<std::size_t>(ni) * h + iy) * ww + ix) * cin;
                      const Scalar* src = crow + (ky * kw + kx) * cin;
                      for (int c = 0; c < cin; ++c) dst[c] += src[c];
                    }
                  }
                }
              }
            }
          }
        });
  }

  Var maxpool2d(Var x, int k, int stride, int pad = 0) {
    const Tensor& xv = val(x);
    require_arg(xv.rank() == 4, "maxpool2d: input must be NHWC");
    const int n = xv.dim(0), h = xv.dim(1), w = xv.dim(2), c = xv.dim(3);
    const int oh = (h + 2 * pad - k) / stride + 1;
    const int ow = (w + 2 * pad - k) / stride + 1;
    require_arg(oh > 0 && ow > 0, "maxpool2d: output collapses to zero");
    Tensor out({n, oh, ow, c});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(out.numel());
    const Scalar* xd = xv.data();
    Scalar* od = out.data();
    std::size_t oi = 0;
    for (int ni = 0; ni < n; ++ni)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
          for (int ci = 0; ci < c; ++ci, ++oi) {
            Scalar best = -std::numeric_limits<Scalar>::infinity();
            std::int64_t best_idx = -1;
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * stride - pad + kx;
                if (ix < 0 || ix >= w) continue;
                const std::int64_t idx =
                    ((static_cast<std::int64_t>(ni) * h + iy) * w + ix) * c + ci;
                if (xd[idx] > best) {
                  best = xd[idx];
                  best_idx = idx;
                }
              }
            }
            od[oi] = best_idx >= 0 ? best : Scalar(0);
            (*argmax)[oi] = best_idx;
          }
    const int out_id = next_id();
    return unary(std::move(out), x, [argmax, out_id](Tape& t, int x_, const Tensor& g) {
      if (!t.rg(x_)) return;
      Tensor& gx = t.grad_buf(x_);
      for (std::size_t i = 0; i < argmax->size(); ++i) {
        const std::int64_t idx = (*argmax)[i];
        if (idx >= 0) gx[static_cast<std::size_t>(idx)] += g[i];
      }
      (void)out_id;
    });
  }

  Var global_avgpool(Var x) {
    const Tensor& xv = val(x);
    require_arg(xv.rank() == 4, "global_avgpool: input must be NHWC");
    const int n = xv.dim(0), h = xv.dim(1), w = xv.dim(2), c = xv.dim(3);
    Tensor out({n, c});
    const Scalar inv = Scalar(1) / (h * w);
    for (int ni = 0; ni < n; ++ni)
      out.mat().row(ni) =
          xv.mat_as(n * h * w, c).middleRows(ni * h * w, h * w).colwise().sum() * inv;
    return unary(std::move(out), x, [n, h, w, c, inv](Tape& t, int x_, const Tensor& g) {
      if (!t.rg(x_)) return;
      auto gx = t.grad_buf(x_).mat_as(n * h * w, c);
      for (int ni = 0; ni < n; ++ni)
        gx.middleRows(ni * h * w, h * w).rowwise() += inv * g.mat_as(n, c).row(ni);
    });
  }

  // Normalization over all-but-last dim, per channel. In train mode the
  // batch statistics are part of the graph; in eval mode the provided
  // running statistics act as constants.
  Var batchnorm(Var x, Var gamma, Var beta, bool train, const Tensor& running_mean,
                const Tensor& running_var, Tensor* out_mean = nullptr,
                Tensor* out_var = nullptr, Scalar eps = 1e-5) {
    const Tensor& xv = val(x);
    const int c = xv.rank() >= 2 ? xv.dim(xv.rank() - 1) : xv.cols();
    const int rows = static_cast<int>(xv.numel()) / c;
    require_arg(static_cast<int>(val(gamma).numel()) == c && static_cast<int>(val(beta).numel()) == c,
                "batchnorm: gamma/beta size mismatch");

    auto invstd = std::make_shared<Tensor>(Tensor({c}));
    auto xhat = std::make_shared<Tensor>(Tensor({rows, c}));
    Tensor mean({c}), var({c});

    if (train) {
      mean.mat_as(1, c) = xv.mat_as(rows, c).colwise().mean();
      for (int j = 0; j < c; ++j) {
        const auto col = xv.mat_as(rows, c).col(j).array() - mean[static_cast<std::size_t>(j)];
        var[static_cast<std::size_t>(j)] = col.square().sum() / rows;
      }
    } else {
      mean = running_mean;
      var = running_var;
    }
    for (int j = 0; j < c; ++j)
      (*invstd)[static_cast<std::size_t>(j)] =
          Scalar(1) / std::sqrt(var[static_cast<std::size_t>(j)] + eps);

    Tensor out = xv;
    {
      auto om = out.mat_as(rows, c);
      for (int j = 0; j < c; ++j) {
        const std::size_t js = static_cast<std::size_t>(j);
        xhat->mat().col(j).array() =
            (xv.mat_as(rows, c).col(j).array() - mean[js]) * (*invstd)[js];
        om.col(j).array() = xhat->mat().col(j).array() * val(gamma)[js] + val(beta)[js];
      }
    }
    if (out_mean) *out_mean = mean;
    if (out_var) *out_var = var;

    const int out_id = next_id();
    const int xi = x.id, gi_ = gamma.id, bi = beta.id;
    return push(std::move(out), rg(xi) || rg(gi_) || rg(bi),
                [xi, gi_, bi, rows, c, train, invstd, xhat, out_id](Tape& t) {
                  const Tensor& g = t.nodes_[static_cast<std::size_t>(out_id)].grad;
                  auto gm = g.mat_as(rows, c);
                  if (t.rg(bi)) t.grad_buf(bi).mat_as(1, c) += gm.colwise().sum();
                  if (t.rg(gi_)) {
                    auto gg = t.grad_buf(gi_).mat_as(1, c);
                    for (int j = 0; j < c; ++j)
                      gg(0, j) += (gm.col(j).array() * xhat->mat().col(j).array()).sum();
                  }
                  if (t.rg(xi)) {
                    auto gx = t.grad_buf(xi).mat_as(rows, c);
                    for (int j = 0; j < c; ++j) {
                      const Scalar gj = t.val(gi_)[static_cast<std::size_t>(j)];
                      const Scalar is = (*invstd)[static_cast<std::size_t>(j)];
                      if (train) {
                        const Scalar sum_g = gm.col(j).sum();
                        const Scalar sum_gx =
                            (gm.col(j).array() * xhat->mat().col(j).array()).sum();
                        gx.col(j).array() += gj * is / rows *
                                             (rows * gm.col(j).array() - sum_g -
                                              xhat->mat().col(j).array() * sum_gx);
                      } else {
                        gx.col(j).array() += gj * is * gm.col(j).array();
                      }
                    }
                  }
                });
  }

  // ---- backward ----------------------------------------------------------

  void backward(Var loss) {
    require_arg(loss.tape == this, "backward: var from another tape");
    require_arg(val(loss).numel() == 1, "backward: loss must be scalar");
    grad_buf(loss.id)[0] = Scalar(1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.grad_live && n.backward) n.backward(*this);
    }
    for (auto& [p, id] : param_nodes_)
      if (nodes_[static_cast<std::size_t>(id)].grad_live)
        p->grad.add_(nodes_[static_cast<std::size_t>(id)].grad);
  }

 private:
  int next_id() const { return static_cast<int>(nodes_.size()); }

  Var push(Tensor value, bool needs_grad, std::function<void(Tape&)> bwd) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = needs_grad;
    n.backward = needs_grad ? std::move(bwd) : nullptr;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  template <typename F>
  Var unary(Tensor out, Var a, F&& f) {
    const int out_id = next_id();
    const int ai = a.id;
    return push(std::move(out), rg(ai), [ai, out_id, f = std::forward<F>(f)](Tape& t) {
      f(t, ai, t.nodes_[static_cast<std::size_t>(out_id)].grad);
    });
  }

  template <typename F>
  Var binary_ew(Tensor out, Var a, Var b, F&& f) {
    const int out_id = next_id();
    const int ai = a.id, bi = b.id;
    return push(std::move(out), rg(ai) || rg(bi),
                [ai, bi, out_id, f = std::forward<F>(f)](Tape& t) {
                  f(t, ai, bi, t.nodes_[static_cast<std::size_t>(out_id)].grad);
                });
  }

  void check_same(Var a, Var b, const char* op) {
    require_arg(a.tape == this && b.tape == this, std::string(op) + ": var from another tape");
    require_arg(val(a).numel() == val(b).numel(), std::string(op) + ": shape mismatch");
  }

  std::vector<Node> nodes_;
  std::unordered_map<Param*, int> param_nodes_;
  int zero_norm_rows_ = 0;
};

inline const Tensor& Var::val() const { return tape->val(*this); }

}  // namespace clfa::nn
