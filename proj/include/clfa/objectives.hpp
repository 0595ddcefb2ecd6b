#pragma once
// objectives.hpp - the four loss terms and their weighted total.
//
// Each term exists twice: a plain-double version over explicit feature
// vectors (the contract-level API, also handy as an independent oracle) and
// a tape-graph version used by the trainer. The unit tests pin the two
// against each other.
//
// Conventions shared by both versions:
//  - probabilities are clamped at 1e-8 before any log inside a KL term
//  - distances are squared Euclidean
//  - batch reduction is the arithmetic mean; member reduction for the
//    classification term is a sum

#include <cmath>
#include <functional>
#include <vector>

#include "clfa/model.hpp"
#include "clfa/rng.hpp"

namespace clfa {

constexpr double kProbFloor = 1e-8;

struct LossWeights {
  double alpha1 = 0.5;  // independence
  double alpha2 = 0.5;  // augmentation
  double alpha3 = 0.5;  // intervention
  double delta = 2.0;   // hinge margin
  int lambda_samples = 1;

  void validate() const {
    require_cfg(alpha1 >= 0 && alpha2 >= 0 && alpha3 >= 0, "loss weights must be >= 0");
    require_cfg(delta > 0, "margin delta must be > 0");
    require_cfg(lambda_samples >= 1, "lambda_samples must be >= 1");
  }
};

struct LossBundle {
  double cls = 0;
  double ind = 0;
  double aug = 0;
  double int_ = 0;
  double total = 0;

  bool finite() const {
    return std::isfinite(cls) && std::isfinite(ind) && std::isfinite(aug) &&
           std::isfinite(int_) && std::isfinite(total);
  }
};

inline LossBundle total_loss(double cls, double ind, double aug, double int_,
                             const LossWeights& w) {
  LossBundle b;
  b.cls = cls;
  b.ind = ind;
  b.aug = aug;
  b.int_ = int_;
  b.total = cls + w.alpha1 * ind + w.alpha2 * aug + w.alpha3 * int_;
  return b;
}

enum class PairingMode { FullProduct, ShuffledK };

inline PairingMode pairing_from_name(const std::string& s) {
  if (s == "full_product") return PairingMode::FullProduct;
  if (s == "shuffled_k") return PairingMode::ShuffledK;
  throw ConfigError("unknown pairing mode '" + s + "' (full_product|shuffled_k)");
}

// ---- scalar versions -----------------------------------------------------

// features -> logits; the caller decides whether this is H or H∘M
using HeadFn = std::function<std::vector<double>(const std::vector<double>&)>;

namespace detail {

inline std::vector<double> log_softmax_vec(const std::vector<double>& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double lse = 0;
  for (double v : logits) lse += std::exp(v - mx);
  lse = mx + std::log(lse);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

inline double clamped_log_prob(double logp) {
  return std::log(std::max(std::exp(logp), kProbFloor));
}

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  require_arg(a.size() == b.size(), "distance wants equal-length vectors");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b, bool* zero_norm) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) {
    if (zero_norm) *zero_norm = true;
    return 0.0;
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace detail

// sum over members of CE(H(f_c), y) + KL(uniform ‖ H(f_b)); each member is
// one (FeaturePair, label)
inline double loss_cls(const std::vector<std::pair<FeaturePair, int>>& features, const HeadFn& H) {
  require_arg(!features.empty(), "loss_cls wants at least one member");
  double total = 0;
  for (const auto& [fp, y] : features) {
    const auto lp_c = detail::log_softmax_vec(H(fp.f_c));
    require_arg(y >= 0 && y < static_cast<int>(lp_c.size()), "label out of range");
    total += -lp_c[static_cast<std::size_t>(y)];
    const auto lp_b = detail::log_softmax_vec(H(fp.f_b));
    const double k = static_cast<double>(lp_b.size());
    double mean_logp = 0;
    for (double lp : lp_b) mean_logp += detail::clamped_log_prob(lp);
    mean_logp /= k;
    total += -std::log(k) - mean_logp;  // KL(u‖p) = -ln K - (1/K) Σ ln p̃
  }
  return total;
}

// mean over pairs of ½·cos(f_c, f_b)²; zero-norm halves count as correlation 0
inline double loss_ind(const std::vector<FeaturePair>& pairs, int* zero_norm_count = nullptr) {
  require_arg(!pairs.empty(), "loss_ind wants at least one pair");
  double total = 0;
  for (const auto& fp : pairs) {
    bool zn = false;
    const double c = detail::cosine(fp.f_c, fp.f_b, &zn);
    if (zn && zero_norm_count) ++*zero_norm_count;
    total += 0.5 * c * c;
  }
  return total / static_cast<double>(pairs.size());
}

// Σ over branches of mean over the branch's λ samples of
// d(f_c^a, f̂_c) + max(d(f_c^a, f̂_c) − d(f_b^a, f̂_b) + δ, 0)
inline double loss_aug(const FeaturePair& anchor, const std::vector<FeaturePair>& g_branch,
                       const std::vector<FeaturePair>& p_branch, double delta) {
  require_arg(delta > 0, "delta must be > 0");
  require_arg(!g_branch.empty() && !p_branch.empty(), "loss_aug wants samples in both branches");
  double total = 0;
  for (const auto* branch : {&g_branch, &p_branch}) {
    double acc = 0;
    for (const auto& hat : *branch) {
      const double dc = detail::sq_dist(anchor.f_c, hat.f_c);
      const double db = detail::sq_dist(anchor.f_b, hat.f_b);
      acc += dc + std::max(dc - db + delta, 0.0);
    }
    total += acc / static_cast<double>(branch->size());
  }
  return total;
}

// mean over selected (f̃_c, f̃_b) pairs of CE(H(M(f̃_c⊕f̃_b)), y) +
// KL(H(f̃_c) ‖ H(M(f̃_c⊕f̃_b))). H maps a half, HM_concat maps the full
// concatenation. The pair label is the causal element's label.
inline double loss_int(const std::vector<std::vector<double>>& causal_set,
                       const std::vector<std::vector<double>>& noncausal_set,
                       const std::vector<int>& labels, const HeadFn& H, const HeadFn& HM_concat,
                       Rng* rng, PairingMode mode) {
  require_arg(!causal_set.empty() && !noncausal_set.empty(), "loss_int wants nonempty sets");
  require_arg(labels.size() == causal_set.size(), "loss_int labels must match the causal set");
  require_arg(mode == PairingMode::FullProduct || rng != nullptr,
              "shuffled pairing needs a random source");

  auto pair_loss = [&](std::size_t ci, std::size_t bi) {
    std::vector<double> cat = causal_set[ci];
    cat.insert(cat.end(), noncausal_set[bi].begin(), noncausal_set[bi].end());
    const auto lq = detail::log_softmax_vec(HM_concat(cat));
    const int y = labels[ci];
    require_arg(y >= 0 && y < static_cast<int>(lq.size()), "label out of range");
    double loss = -lq[static_cast<std::size_t>(y)];
    const auto lp = detail::log_softmax_vec(H(causal_set[ci]));
    for (std::size_t k = 0; k < lp.size(); ++k) {
      const double pk = std::exp(lp[k]);
      loss += pk * (detail::clamped_log_prob(lp[k]) - detail::clamped_log_prob(lq[k]));
    }
    return loss;
  };

  double total = 0;
  std::size_t count = 0;
  if (mode == PairingMode::FullProduct) {
    for (std::size_t ci = 0; ci < causal_set.size(); ++ci)
      for (std::size_t bi = 0; bi < noncausal_set.size(); ++bi) {
        total += pair_loss(ci, bi);
        ++count;
      }
  } else {
    for (std::size_t ci = 0; ci < causal_set.size(); ++ci) {
      total += pair_loss(ci, rng->index(noncausal_set.size()));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

// ---- graph versions ------------------------------------------------------

namespace graph {

using nn::Tape;
using nn::Var;

// logits builder on the tape ([N,half] -> [N,K])
using HeadGraphFn = std::function<Var(Tape&, Var)>;
// interventional logits builder ([N,half],[N,half] -> [N,K])
using InterveneGraphFn = std::function<Var(Tape&, Var, Var)>;

// batch-mean KL(uniform ‖ softmax(logits))
inline Var kl_uniform_graph(Tape& t, Var logits) {
  const int k = logits.val().cols();
  Var lp = t.log_softmax(logits);
  Var clamped = t.log_(t.clamp_min(t.exp_(lp), kProbFloor));
  return t.add_scalar(t.scale(t.mean_all(clamped), -1.0), -std::log(static_cast<double>(k)));
}

// batch-mean KL(P ‖ Q) from the two logit sets; P weights are the exact
// softmax, only the logs are clamped
inline Var kl_between_graph(Tape& t, Var logits_p, Var logits_q) {
  Var lp = t.log_softmax(logits_p);
  Var p = t.exp_(lp);
  Var lpc = t.log_(t.clamp_min(p, kProbFloor));
  Var lqc = t.log_(t.clamp_min(t.exp_(t.log_softmax(logits_q)), kProbFloor));
  return t.mean_all(t.row_dot(p, t.sub(lpc, lqc)));
}

struct ClsMember {
  Var fc, fb;
};

inline Var loss_cls_graph(Tape& t, const HeadGraphFn& H, const std::vector<ClsMember>& members,
                          const std::vector<int>& labels) {
  require_arg(!members.empty(), "loss_cls wants at least one member");
  Var total{};
  for (const auto& m : members) {
    Var ce = t.nll_mean(t.log_softmax(H(t, m.fc)), labels);
    Var kl = kl_uniform_graph(t, H(t, m.fb));
    Var member = t.add(ce, kl);
    total = total.valid() ? t.add(total, member) : member;
  }
  return total;
}

inline Var loss_ind_graph(Tape& t, const std::vector<ClsMember>& pairs) {
  require_arg(!pairs.empty(), "loss_ind wants at least one pair");
  Var total{};
  for (const auto& p : pairs) {
    Var c = t.cosine_rows(p.fc, p.fb);
    Var term = t.mean_all(t.scale(t.mul(c, c), 0.5));
    total = total.valid() ? t.add(total, term) : term;
  }
  return t.scale(total, 1.0 / static_cast<double>(pairs.size()));
}

// branches: the λ augmented pairs for v=g and v=p
inline Var loss_aug_graph(Tape& t, Var fc_a, Var fb_a,
                          const std::vector<ClsMember>& g_branch,
                          const std::vector<ClsMember>& p_branch, double delta) {
  require_arg(!g_branch.empty() && !p_branch.empty(), "loss_aug wants samples in both branches");
  Var total{};
  for (const auto* branch : {&g_branch, &p_branch}) {
    Var acc{};
    for (const auto& hat : *branch) {
      Var dc = t.row_dot(t.sub(fc_a, hat.fc), t.sub(fc_a, hat.fc));
      Var db = t.row_dot(t.sub(fb_a, hat.fb), t.sub(fb_a, hat.fb));
      Var term = t.add(dc, t.relu(t.add_scalar(t.sub(dc, db), delta)));
      acc = acc.valid() ? t.add(acc, term) : term;
    }
    Var branch_mean = t.scale(t.mean_all(acc), 1.0 / static_cast<double>(branch->size()));
    total = total.valid() ? t.add(total, branch_mean) : branch_mean;
  }
  return total;
}

// causal/noncausal: the accumulated sets, one [N,half] Var per element; all
// rows share the triple labels. shuffled_k draws one partner per row per
// causal element from rng; full_product enumerates everything.
inline Var loss_int_graph(Tape& t, const HeadGraphFn& H, const InterveneGraphFn& HM,
                          const std::vector<Var>& causal_set, const std::vector<Var>& noncausal_set,
                          const std::vector<int>& labels, Rng* rng, PairingMode mode) {
  require_arg(!causal_set.empty() && !noncausal_set.empty(), "loss_int wants nonempty sets");
  require_arg(mode == PairingMode::FullProduct || rng != nullptr,
              "shuffled pairing needs a random source");
  const int n = causal_set[0].val().rows();

  auto pair_term = [&](Var fc, Var fb) {
    Var q_logits = HM(t, fc, fb);
    Var ce = t.nll_mean(t.log_softmax(q_logits), labels);
    Var kl = kl_between_graph(t, H(t, fc), q_logits);
    return t.add(ce, kl);
  };

  Var total{};
  std::size_t count = 0;
  if (mode == PairingMode::FullProduct) {
    for (Var fc : causal_set)
      for (Var fb : noncausal_set) {
        Var term = pair_term(fc, fb);
        total = total.valid() ? t.add(total, term) : term;
        ++count;
      }
  } else {
    for (Var fc : causal_set) {
      std::vector<int> pick(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i)
        pick[static_cast<std::size_t>(i)] = static_cast<int>(rng->index(noncausal_set.size()));
      Var fb = t.select_rows(noncausal_set, std::move(pick));
      Var term = pair_term(fc, fb);
      total = total.valid() ? t.add(total, term) : term;
      ++count;
    }
  }
  return t.scale(total, 1.0 / static_cast<double>(count));
}

}  // namespace graph

}  // namespace clfa
