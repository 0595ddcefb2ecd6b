#pragma once
// trainer.hpp - the training loop: triple batches in, one optimizer step
// out. Each step extracts features for anchor/positive/generated in a single
// forward pass, encodes the two meta-knowledge distributions per feature
// half, runs the lambda-fold sampling loop to grow the causal/non-causal
// sets, assembles the weighted objective, and steps Adam.
//
// Determinism contract: one Rng drives weight init, batch sampling, the
// reparameterization draws, and the intervention pairing, in a fixed order.
// Checkpoints carry the Rng state so a resumed run continues the stream.

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "clfa/checkpoint.hpp"
#include "clfa/evaluate.hpp"
#include "clfa/objectives.hpp"

namespace clfa {

struct TrainConfig {
  long long max_iters = 40000;
  double base_lr = 1e-4;
  long long lr_halving_period = 10000;
  std::string optimizer = "adam";
  std::uint64_t seed = 0;
  LossWeights weights;
  int triples_per_class = 4;
  DatasetTag dataset_tag = DatasetTag::Synthetic;
  ModelConfig model;
  long long eval_every = 0;        // 0 disables periodic eval
  long long checkpoint_every = 0;  // 0 keeps only the final checkpoint
  long long log_every = 50;
  long long patience = 0;  // evals without val improvement before stopping; 0 disables
  bool augment_input = true;
  bool log_provenance = false;
  PairingMode pairing = PairingMode::ShuffledK;
  double clip_norm = 0;  // 0 disables gradient clipping
  TransformBank bank;

  void validate() const {
    require_cfg(max_iters > 0, "max_iters must be > 0");
    require_cfg(base_lr > 0, "base_lr must be > 0");
    require_cfg(lr_halving_period > 0, "lr_halving_period must be > 0");
    require_cfg(optimizer == "adam", "only the adam optimizer is supported");
    require_cfg(triples_per_class >= 1, "triples_per_class must be >= 1");
    require_cfg(log_every >= 0 && eval_every >= 0 && checkpoint_every >= 0 && patience >= 0,
                "schedule intervals must be >= 0");
    require_cfg(clip_norm >= 0, "clip_norm must be >= 0");
    weights.validate();
    model.validate();
  }
};

inline double lr_at(long long iteration, const TrainConfig& cfg) {
  require_arg(iteration >= 0, "iteration must be >= 0");
  const long long halvings = iteration / cfg.lr_halving_period;
  return cfg.base_lr * std::pow(0.5, static_cast<double>(halvings));
}

// per-step introspection for tests
struct StepTrace {
  int causal_set_size = 0;
  int noncausal_set_size = 0;
  long long int_pair_count = 0;
};

class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg)
      : cfg_(cfg), rng_(cfg.seed) {
    cfg_.validate();
    model_ = std::make_unique<Model>(cfg_.model, rng_);
    adam_ = std::make_unique<nn::Adam>(model_->params());
  }

  // resume: adopts the checkpoint's parameters, optimizer moments, rng
  Trainer(const TrainConfig& cfg, LoadedCheckpoint&& lc) : cfg_(cfg), rng_(0) {
    cfg_.validate();
    require_cfg(lc.config.feature_dim == cfg_.model.feature_dim &&
                    lc.config.num_classes == cfg_.model.num_classes &&
                    lc.config.backbone == cfg_.model.backbone,
                "checkpoint model does not match the training config");
    model_ = std::move(lc.model);
    adam_ = std::make_unique<nn::Adam>(model_->params());
    if (lc.has_optimizer) {
      adam_->set_step_count(lc.optimizer_step);
      adam_->moments_m() = std::move(lc.optim_m);
      adam_->moments_v() = std::move(lc.optim_v);
    }
    if (lc.has_rng) rng_ = Rng::deserialize(lc.rng_state);
    iteration_ = lc.iteration;
  }

  Model& model() { return *model_; }
  Rng& rng() { return rng_; }
  long long iteration() const { return iteration_; }
  const TrainConfig& config() const { return cfg_; }

  std::vector<Triple> next_batch(const Dataset& ds,
                                 std::vector<TripleProvenance>* provenance = nullptr) {
    return sample_triple_batch(ds, cfg_.triples_per_class, rng_,
                               cfg_.augment_input ? &cfg_.bank : nullptr, cfg_.dataset_tag,
                               provenance);
  }

  LossBundle train_step(const std::vector<Triple>& batch, StepTrace* trace = nullptr) {
    require_arg(!batch.empty(), "empty batch");
    const int n = static_cast<int>(batch.size());
    const LossWeights& w = cfg_.weights;
    const bool want_sets = w.alpha2 > 0 || w.alpha3 > 0;

    std::vector<int> labels;
    labels.reserve(batch.size());
    std::vector<ImageTensor> images;
    images.reserve(batch.size() * 3);
    for (const auto& t : batch) images.push_back(t.anchor.image);
    for (const auto& t : batch) images.push_back(t.positive.image);
    for (const auto& t : batch) images.push_back(t.generated.image);
    for (const auto& t : batch) labels.push_back(t.label);

    Tape t;
    auto [fc_all, fb_all] =
        model_->extract(t, t.constant(images_to_tensor(images, cfg_.model.in_channels)), true);
    Var fc_a = t.slice_rows(fc_all, 0, n), fb_a = t.slice_rows(fb_all, 0, n);
    Var fc_p = t.slice_rows(fc_all, n, n), fb_p = t.slice_rows(fb_all, n, n);
    Var fc_g = t.slice_rows(fc_all, 2 * n, n), fb_g = t.slice_rows(fb_all, 2 * n, n);

    graph::HeadGraphFn H = [this](Tape& tp, Var f) { return model_->head_logits(tp, f); };
    graph::InterveneGraphFn HM = [this](Tape& tp, Var fc, Var fb) {
      return model_->intervene_logits(tp, fc, fb);
    };

    // set order follows the per-anchor listing: anchor, then the sampled
    // augmentations, then generated and positive
    std::vector<Var> causal{fc_a}, noncausal{fb_a};
    std::vector<graph::ClsMember> g_branch, p_branch;
    if (want_sets) {
      auto [mu_ag_c, lv_ag_c] = model_->encode_meta(t, EncoderId::Ag, fc_a, fc_g);
      auto [mu_ag_b, lv_ag_b] = model_->encode_meta(t, EncoderId::Ag, fb_a, fb_g);
      auto [mu_ap_c, lv_ap_c] = model_->encode_meta(t, EncoderId::Ap, fc_a, fc_p);
      auto [mu_ap_b, lv_ap_b] = model_->encode_meta(t, EncoderId::Ap, fb_a, fb_p);
      for (int j = 0; j < w.lambda_samples; ++j) {
        // eps draw order per pass: (ag,c), (ag,b), (ap,c), (ap,b)
        Var hat_c_ag = model_->augment(
            t, fc_a, model_->reparameterize(t, mu_ag_c, lv_ag_c, draw_eps(t, n)));
        Var hat_b_ag = model_->augment(
            t, fb_a, model_->reparameterize(t, mu_ag_b, lv_ag_b, draw_eps(t, n)));
        Var hat_c_ap = model_->augment(
            t, fc_a, model_->reparameterize(t, mu_ap_c, lv_ap_c, draw_eps(t, n)));
        Var hat_b_ap = model_->augment(
            t, fb_a, model_->reparameterize(t, mu_ap_b, lv_ap_b, draw_eps(t, n)));
        causal.push_back(hat_c_ap);
        causal.push_back(hat_c_ag);
        noncausal.push_back(hat_b_ap);
        noncausal.push_back(hat_b_ag);
        g_branch.push_back({hat_c_ag, hat_b_ag});
        p_branch.push_back({hat_c_ap, hat_b_ap});
      }
    }
    causal.push_back(fc_g);
    causal.push_back(fc_p);
    noncausal.push_back(fb_g);
    noncausal.push_back(fb_p);

    // classification members: the three triple members plus every augmented pair
    std::vector<graph::ClsMember> cls_members{{fc_a, fb_a}, {fc_p, fb_p}, {fc_g, fb_g}};
    for (std::size_t j = 0; j < g_branch.size(); ++j) {
      cls_members.push_back(g_branch[j]);
      cls_members.push_back(p_branch[j]);
    }

    Var l_cls = graph::loss_cls_graph(t, H, cls_members, labels);

    // independence over initial pairs, plus the augmented pairs when present
    std::vector<graph::ClsMember> init_pairs{{fc_a, fb_a}, {fc_p, fb_p}, {fc_g, fb_g}};
    Var l_ind = graph::loss_ind_graph(t, init_pairs);
    if (!g_branch.empty()) {
      std::vector<graph::ClsMember> aug_pairs;
      for (std::size_t j = 0; j < g_branch.size(); ++j) {
        aug_pairs.push_back(g_branch[j]);
        aug_pairs.push_back(p_branch[j]);
      }
      l_ind = t.add(l_ind, graph::loss_ind_graph(t, aug_pairs));
    }

    Var l_aug{}, l_int{};
    if (w.alpha2 > 0)
      l_aug = graph::loss_aug_graph(t, fc_a, fb_a, g_branch, p_branch, w.delta);
    long long pair_count = 0;
    if (w.alpha3 > 0) {
      l_int = graph::loss_int_graph(t, H, HM, causal, noncausal, labels, &rng_, cfg_.pairing);
      pair_count = cfg_.pairing == PairingMode::FullProduct
                       ? static_cast<long long>(causal.size()) *
                             static_cast<long long>(noncausal.size())
                       : static_cast<long long>(causal.size());
    }

    Var total = l_cls;
    if (w.alpha1 > 0) total = t.add(total, t.scale(l_ind, w.alpha1));
    if (w.alpha2 > 0) total = t.add(total, t.scale(l_aug, w.alpha2));
    if (w.alpha3 > 0) total = t.add(total, t.scale(l_int, w.alpha3));

    LossBundle lb;
    lb.cls = l_cls.val()[0];
    lb.ind = l_ind.val()[0];
    lb.aug = l_aug.valid() ? l_aug.val()[0] : 0.0;
    lb.int_ = l_int.valid() ? l_int.val()[0] : 0.0;
    lb.total = total.val()[0];
    if (!lb.finite())
      throw Error("train", "non-finite loss at iteration " + std::to_string(iteration_ + 1) +
                               ": cls=" + std::to_string(lb.cls) + " ind=" + std::to_string(lb.ind) +
                               " aug=" + std::to_string(lb.aug) +
                               " int=" + std::to_string(lb.int_));

    adam_->zero_grads();
    t.backward(total);
    if (cfg_.clip_norm > 0) adam_->clip_grad_norm(cfg_.clip_norm);
    adam_->step(lr_at(iteration_, cfg_));
    ++iteration_;

    if (trace) {
      trace->causal_set_size = static_cast<int>(causal.size());
      trace->noncausal_set_size = static_cast<int>(noncausal.size());
      trace->int_pair_count = pair_count;
    }
    return lb;
  }

  // Full run to cfg.max_iters with logging, periodic eval/checkpoints, and a
  // final checkpoint. out_dir may be empty to keep everything in memory.
  MetricsRecord fit(const Dataset& train_ds, const Dataset* val_ds, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::ofstream metrics, evals, prov_log;
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      metrics.open(out_dir + "/metrics.jsonl", iteration_ > 0 ? std::ios::app : std::ios::trunc);
      if (!metrics) throw IoError("cannot write metrics under " + out_dir);
      if (val_ds) evals.open(out_dir + "/eval.jsonl",
                             iteration_ > 0 ? std::ios::app : std::ios::trunc);
      if (cfg_.log_provenance)
        prov_log.open(out_dir + "/provenance.jsonl",
                      iteration_ > 0 ? std::ios::app : std::ios::trunc);
    }

    MetricsRecord last_eval;
    double best_val = -1;
    long long evals_since_best = 0;
    std::vector<TripleProvenance> prov;

    while (iteration_ < cfg_.max_iters) {
      prov.clear();
      const auto batch = next_batch(train_ds, cfg_.log_provenance ? &prov : nullptr);
      const LossBundle lb = train_step(batch);

      if (prov_log.is_open()) {
        for (std::size_t i = 0; i < prov.size(); ++i)
          prov_log << nlohmann::json{{"iter", iteration_},
                                     {"triple", i},
                                     {"strategy", prov[i].strategy},
                                     {"magnitude", prov[i].magnitude},
                                     {"noise_seed", prov[i].noise_seed}}
                          .dump()
                   << "\n";
      }
      if (metrics.is_open() && cfg_.log_every > 0 &&
          (iteration_ % cfg_.log_every == 0 || iteration_ == cfg_.max_iters)) {
        metrics << nlohmann::json{{"iter", iteration_}, {"cls", lb.cls},   {"ind", lb.ind},
                                  {"aug", lb.aug},      {"int", lb.int_},  {"total", lb.total},
                                  {"lr", lr_at(iteration_ - 1, cfg_)}}
                       .dump()
                << "\n";
        metrics.flush();
      }
      if (cfg_.eval_every > 0 && val_ds && iteration_ % cfg_.eval_every == 0) {
        last_eval = evaluate(*model_, {{"val", val_ds}}, "single_dg");
        last_eval.seed = cfg_.seed;
        if (evals.is_open()) {
          nlohmann::json j = metrics_to_json(last_eval);
          j["iter"] = iteration_;
          evals << j.dump() << "\n";
          evals.flush();
        }
        if (cfg_.patience > 0) {
          if (last_eval.average > best_val) {
            best_val = last_eval.average;
            evals_since_best = 0;
          } else if (++evals_since_best >= cfg_.patience) {
            break;  // validation accuracy stalled
          }
        }
      }
      if (cfg_.checkpoint_every > 0 && !out_dir.empty() &&
          iteration_ % cfg_.checkpoint_every == 0)
        save(out_dir + "/ckpt_" + std::to_string(iteration_));
    }
    // closing eval so the caller always gets fresh numbers for this model
    if (val_ds) {
      last_eval = evaluate(*model_, {{"val", val_ds}}, "single_dg");
      last_eval.seed = cfg_.seed;
      if (evals.is_open()) {
        nlohmann::json j = metrics_to_json(last_eval);
        j["iter"] = iteration_;
        evals << j.dump() << "\n";
      }
    }
    if (!out_dir.empty()) save(out_dir + "/final.ckpt");
    return last_eval;
  }

  void save(const std::string& path) {
    save_checkpoint(path, *model_, iteration_, adam_.get(), &rng_);
  }

 private:
  Var draw_eps(Tape& t, int n) {
    Tensor eps({n, cfg_.model.z_dim});
    for (std::size_t i = 0; i < eps.numel(); ++i) eps[i] = rng_.normal();
    return t.constant(std::move(eps));
  }

  TrainConfig cfg_;
  Rng rng_;
  std::unique_ptr<Model> model_;
  std::unique_ptr<nn::Adam> adam_;
  long long iteration_ = 0;
};

}  // namespace clfa
