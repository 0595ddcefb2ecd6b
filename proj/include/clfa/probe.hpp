#pragma once
// probe.hpp - decoupling audits on a frozen model: linear probes over the
// causal half, the non-causal half, or the full feature, plus the raw
// embedding export behind them.
//
// The probe classifier is multinomial logistic regression solved to high
// tolerance (L-BFGS on the convex objective), so probe accuracy reflects
// the features, not the probe's own training noise.

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "clfa/dataset.hpp"
#include "clfa/model.hpp"

namespace clfa {

struct ProbeReport {
  std::string probe_target;  // fc | fb | full
  double train_acc = 0;
  double heldout_acc = 0;
  double chance = 0;
};

namespace detail {

// multinomial logistic regression: returns W [D+1, K] (bias row last),
// fitted by L-BFGS with Armijo backtracking; deterministic (W starts at 0)
inline nn::EMat fit_logistic(const nn::EMat& x, const std::vector<int>& y, int num_classes,
                             double reg = 1e-3, double tol = 1e-6, int max_iters = 500) {
  const Eigen::Index m = x.rows(), d1 = x.cols();
  const int k = num_classes;
  using Vec = Eigen::VectorXd;

  auto eval = [&](const Vec& wflat, Vec* grad) {
    Eigen::Map<const nn::EMat> w(wflat.data(), d1, k);
    nn::EMat logits = x * w;  // [m, k]
    double loss = 0;
    nn::EMat p = logits;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double mx = logits.row(i).maxCoeff();
      const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
      loss += lse - logits(i, y[static_cast<std::size_t>(i)]);
      p.row(i) = (logits.row(i).array() - lse).exp();
    }
    loss /= static_cast<double>(m);
    // L2 on the weights, not the bias row
    loss += 0.5 * reg * w.topRows(d1 - 1).squaredNorm();
    if (grad) {
      for (Eigen::Index i = 0; i < m; ++i) p(i, y[static_cast<std::size_t>(i)]) -= 1.0;
      nn::EMat g = x.transpose() * p / static_cast<double>(m);
      g.topRows(d1 - 1) += reg * w.topRows(d1 - 1);
      *grad = Eigen::Map<Vec>(g.data(), d1 * k);
    }
    return loss;
  };

  Vec w = Vec::Zero(d1 * k), g(d1 * k);
  double f = eval(w, &g);
  const int hist = 10;
  std::vector<Vec> s_hist, y_hist;
  std::vector<double> rho;

  for (int it = 0; it < max_iters && g.lpNorm<Eigen::Infinity>() > tol; ++it) {
    // two-loop recursion
    Vec q = g;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[static_cast<std::size_t>(i)] =
          rho[static_cast<std::size_t>(i)] * s_hist[static_cast<std::size_t>(i)].dot(q);
      q -= alpha[static_cast<std::size_t>(i)] * y_hist[static_cast<std::size_t>(i)];
    }
    if (!s_hist.empty()) {
      const Vec& sl = s_hist.back();
      const Vec& yl = y_hist.back();
      q *= sl.dot(yl) / yl.dot(yl);
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Vec p = -q;
    double gp = g.dot(p);
    if (gp > 0) {  // fall back to steepest descent if curvature went bad
      p = -g;
      gp = -g.squaredNorm();
    }
    double step = 1.0;
    Vec w_new;
    double f_new = f;
    bool ok = false;
    for (int bt = 0; bt < 40; ++bt) {
      w_new = w + step * p;
      f_new = eval(w_new, nullptr);
      if (f_new <= f + 1e-4 * step * gp) {
        ok = true;
        break;
      }
      step *= 0.5;
    }
    if (!ok) break;
    Vec g_new(d1 * k);
    eval(w_new, &g_new);
    Vec s = w_new - w, yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      rho.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > hist) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho.erase(rho.begin());
      }
    }
    if (std::abs(f - f_new) < 1e-14 * std::max(1.0, std::abs(f))) {
      w = w_new;
      break;
    }
    w = w_new;
    f = f_new;
    g = g_new;
  }
  return Eigen::Map<nn::EMat>(w.data(), d1, k);
}

inline double probe_accuracy(const nn::EMat& x, const std::vector<int>& y, const nn::EMat& w) {
  nn::EMat logits = x * w;
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best;
    logits.row(i).maxCoeff(&best);
    if (static_cast<int>(best) == y[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

}  // namespace detail

// builds the probe design matrix for the requested slice, bias column last
inline nn::EMat probe_features(Model& model, const Dataset& ds, const std::string& target) {
  require_arg(target == "fc" || target == "fb" || target == "full",
              "probe target must be fc, fb, or full");
  std::vector<ImageTensor> images;
  images.reserve(ds.size());
  for (const auto& s : ds.samples) images.push_back(s.image);
  const auto pairs = model.extract_pairs(images);
  const int half = model.config().half();
  const int d = target == "full" ? 2 * half : half;
  nn::EMat x(static_cast<Eigen::Index>(ds.size()), d + 1);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    int at = 0;
    if (target != "fb")
      for (int j = 0; j < half; ++j) x(static_cast<Eigen::Index>(i), at++) = pairs[i].f_c[static_cast<std::size_t>(j)];
    if (target != "fc")
      for (int j = 0; j < half; ++j) x(static_cast<Eigen::Index>(i), at++) = pairs[i].f_b[static_cast<std::size_t>(j)];
    x(static_cast<Eigen::Index>(i), d) = 1.0;
  }
  return x;
}

// fixed stratified 80/20 split: within each class (in dataset order), every
// fifth sample is held out
inline ProbeReport linear_probe(Model& model, const Dataset& ds, const std::string& target) {
  require_cfg(ds.num_classes() == model.config().num_classes,
              "dataset class count does not match the model");
  for (std::size_t ci = 0; ci < ds.by_class.size(); ++ci)
    if (ds.by_class[ci].size() < 10)
      throw DataError("class '" + ds.class_names[ci] + "' has fewer than 10 samples; too few for the 80/20 probe split");

  const nn::EMat all = probe_features(model, ds, target);
  std::vector<Eigen::Index> train_rows, held_rows;
  for (const auto& pool : ds.by_class)
    for (std::size_t pos = 0; pos < pool.size(); ++pos)
      (pos % 5 == 4 ? held_rows : train_rows).push_back(static_cast<Eigen::Index>(pool[pos]));

  auto gather = [&](const std::vector<Eigen::Index>& rows, nn::EMat& x, std::vector<int>& y) {
    x.resize(static_cast<Eigen::Index>(rows.size()), all.cols());
    y.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = all.row(rows[i]);
      y[i] = ds.samples[static_cast<std::size_t>(rows[i])].label;
    }
  };
  nn::EMat xt, xh;
  std::vector<int> yt, yh;
  gather(train_rows, xt, yt);
  gather(held_rows, xh, yh);

  const nn::EMat w = detail::fit_logistic(xt, yt, ds.num_classes());
  ProbeReport r;
  r.probe_target = target;
  r.train_acc = detail::probe_accuracy(xt, yt, w);
  r.heldout_acc = detail::probe_accuracy(xh, yh, w);
  r.chance = 1.0 / static_cast<double>(ds.num_classes());
  return r;
}

// CSV export: sample_id,label,domain_tag,fc_0..,fb_0..; %.17g keeps the
// round trip byte-exact for identical checkpoints
inline void export_embeddings(Model& model, const Dataset& ds, const std::string& out_path,
                              const std::string& domain_tag) {
  std::vector<ImageTensor> images;
  images.reserve(ds.size());
  for (const auto& s : ds.samples) images.push_back(s.image);
  const auto pairs = model.extract_pairs(images);
  const int half = model.config().half();

  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw IoError("cannot write embeddings to " + out_path);
  out << "sample_id,label,domain_tag";
  for (int j = 0; j < half; ++j) out << ",fc_" << j;
  for (int j = 0; j < half; ++j) out << ",fb_" << j;
  out << "\n";
  char buf[32];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.samples[i].sample_id << "," << ds.samples[i].label << "," << domain_tag;
    for (int j = 0; j < half; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", pairs[i].f_c[static_cast<std::size_t>(j)]);
      out << "," << buf;
    }
    for (int j = 0; j < half; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", pairs[i].f_b[static_cast<std::size_t>(j)]);
      out << "," << buf;
    }
    out << "\n";
  }
  if (!out) throw IoError("short write on embeddings file " + out_path);
}

}  // namespace clfa
