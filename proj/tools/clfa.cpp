// clfa.cpp - command line front end.
//
// Subcommands: train, eval, probe, export, synth, report. Each maps onto one
// library entry point; all argument plumbing and no logic lives here. Errors
// surface as a single "error[kind]: ..." line on stderr and a nonzero exit.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clfa/clfa.hpp"

namespace fs = std::filesystem;
using namespace clfa;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// accepts repeated flags and comma lists interchangeably
std::vector<std::string> flatten_csv(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (const auto& a : args)
    for (auto& p : split_csv(a)) out.push_back(p);
  return out;
}

LoadOptions load_options_for(const ModelConfig& m) {
  LoadOptions opt;
  opt.image_size = m.image_size;
  opt.force_channels = m.in_channels;
  return opt;
}

void check_classes(const ModelConfig& m, const Dataset& ds, const std::string& what) {
  require_cfg(static_cast<int>(ds.class_names.size()) == m.num_classes,
              what + " has " + std::to_string(ds.class_names.size()) +
                  " classes but the model expects " + std::to_string(m.num_classes));
}

std::string target_name(const std::string& dir) {
  fs::path p(dir);
  if (p.has_filename() && p.filename().string() != ".") return p.filename().string();
  return p.parent_path().filename().string();
}

struct TrainArgs {
  std::string config, data, out, val, resume, seeds_csv, transforms_csv;
  long long iters_override = 0;
  bool log_provenance = false;
};

int run_train(const TrainArgs& a) {
  TrainConfig cfg = load_train_config(a.config);
  if (!a.transforms_csv.empty()) cfg.bank.restrict_to(flatten_csv({a.transforms_csv}));
  if (a.log_provenance) cfg.log_provenance = true;
  if (a.iters_override > 0) cfg.max_iters = a.iters_override;

  std::vector<std::uint64_t> seeds;
  if (!a.seeds_csv.empty()) {
    for (const auto& s : split_csv(a.seeds_csv)) seeds.push_back(std::stoull(s));
  } else if (const char* env = std::getenv("CLFA_SEED")) {
    seeds.push_back(std::stoull(env));
  } else {
    seeds.push_back(cfg.seed);
  }
  require_arg(!seeds.empty(), "--seeds list is empty");
  require_arg(a.resume.empty() || seeds.size() == 1, "--resume only works with a single seed");

  const Dataset train_ds = load_folder_dataset(a.data, Split::Train, load_options_for(cfg.model));
  check_classes(cfg.model, train_ds, a.data);
  Dataset val_ds;
  const Dataset* val_ptr = nullptr;
  if (!a.val.empty()) {
    val_ds = load_folder_dataset(a.val, Split::Test, load_options_for(cfg.model));
    check_classes(cfg.model, val_ds, a.val);
    val_ptr = &val_ds;
  }

  for (std::uint64_t seed : seeds) {
    cfg.seed = seed;
    const std::string run_dir =
        seeds.size() == 1 ? a.out : a.out + "/seed_" + std::to_string(seed);
    fs::create_directories(run_dir);
    {
      std::ofstream snap(run_dir + "/config.json");
      if (!snap) throw IoError("cannot write " + run_dir + "/config.json");
      snap << train_config_to_json(cfg).dump(2) << "\n";
    }
    std::unique_ptr<Trainer> trainer;
    if (!a.resume.empty()) {
      trainer = std::make_unique<Trainer>(cfg, load_checkpoint(a.resume));
    } else {
      trainer = std::make_unique<Trainer>(cfg);
    }
    const MetricsRecord last = trainer->fit(train_ds, val_ptr, run_dir);
    nlohmann::json done{{"run_dir", run_dir},
                        {"seed", seed},
                        {"iterations", trainer->iteration()}};
    if (val_ptr) done["val_average"] = last.average;
    std::cout << done.dump() << "\n";
  }
  return 0;
}

int run_eval(const std::string& ckpt, const std::vector<std::string>& target_args,
             const std::string& protocol, const std::string& record_path) {
  LoadedCheckpoint lc = load_checkpoint(ckpt);
  const auto dirs = flatten_csv(target_args);
  require_arg(!dirs.empty(), "--targets wants at least one dataset directory");

  std::vector<Dataset> sets;
  sets.reserve(dirs.size());
  std::vector<std::pair<std::string, const Dataset*>> targets;
  for (const auto& d : dirs) {
    sets.push_back(load_folder_dataset(d, Split::Test, load_options_for(lc.config)));
    check_classes(lc.config, sets.back(), d);
  }
  for (std::size_t i = 0; i < dirs.size(); ++i)
    targets.emplace_back(target_name(dirs[i]), &sets[i]);

  MetricsRecord r = evaluate(*lc.model, targets, protocol);
  r.checkpoint_ref = ckpt;
  const nlohmann::json j = metrics_to_json(r);
  if (!record_path.empty()) {
    std::ofstream out(record_path);
    if (!out) throw IoError("cannot write " + record_path);
    out << j.dump(2) << "\n";
  }
  std::cout << j.dump() << "\n";
  return 0;
}

int run_probe(const std::string& ckpt, const std::string& data, const std::string& target) {
  LoadedCheckpoint lc = load_checkpoint(ckpt);
  const Dataset ds = load_folder_dataset(data, Split::Train, load_options_for(lc.config));
  check_classes(lc.config, ds, data);
  const ProbeReport r = linear_probe(*lc.model, ds, target);
  std::cout << nlohmann::json{{"probe_target", r.probe_target},
                              {"train_acc", r.train_acc},
                              {"heldout_acc", r.heldout_acc},
                              {"chance", r.chance}}
                   .dump()
            << "\n";
  return 0;
}

int run_export(const std::string& ckpt, const std::string& data, const std::string& out) {
  LoadedCheckpoint lc = load_checkpoint(ckpt);
  const Dataset ds = load_folder_dataset(data, Split::All, load_options_for(lc.config));
  check_classes(lc.config, ds, data);
  export_embeddings(*lc.model, ds, out, target_name(data));
  std::cout << nlohmann::json{{"csv", out}, {"rows", ds.samples.size()}}.dump() << "\n";
  return 0;
}

int run_synth(const std::string& spec_path, const std::string& out) {
  const SynthJob job = load_synth_job(spec_path);
  write_synthetic_folders(job.spec, out, job.train_per_class, job.test_per_class, job.seed);
  std::cout << nlohmann::json{{"out", out},
                              {"train_per_class", job.train_per_class},
                              {"test_per_class", job.test_per_class}}
                   .dump()
            << "\n";
  return 0;
}

int run_report(const std::vector<std::string>& run_args, const std::string& out) {
  const auto runs = flatten_csv(run_args);
  require_arg(!runs.empty(), "--runs wants at least one run directory");
  write_report(runs, out);
  std::cout << nlohmann::json{{"report", out + "/report.md"}}.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent feature augmentation harness for single-domain generalization"};
  app.require_subcommand(1);
  int rc = 0;

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", ta.config, "TOML config file")->required();
  train->add_option("--data", ta.data, "source dataset root")->required();
  train->add_option("--out", ta.out, "run directory")->required();
  train->add_option("--val", ta.val, "held-out dataset evaluated every eval_every iters");
  train->add_option("--seeds", ta.seeds_csv, "comma list of seeds, one run each");
  train->add_option("--resume", ta.resume, "checkpoint to continue from");
  train->add_option("--iters", ta.iters_override, "override train.max_iters");
  train->add_option("--transforms", ta.transforms_csv, "restrict the strategy set");
  train->add_flag("--log-provenance", ta.log_provenance, "log per-triple strategy and magnitude");
  train->callback([&] { rc = run_train(ta); });

  std::string ev_ckpt, ev_protocol = "single_dg", ev_record;
  std::vector<std::string> ev_targets;
  auto* ev = app.add_subcommand("eval", "accuracy on one or more target datasets");
  ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
  ev->add_option("--targets", ev_targets, "target dataset dirs (comma list ok)")->required();
  ev->add_option("--protocol", ev_protocol, "label stored with the record");
  ev->add_option("--record", ev_record, "also write the record as JSON here");
  ev->callback([&] { rc = run_eval(ev_ckpt, ev_targets, ev_protocol, ev_record); });

  std::string pr_ckpt, pr_data, pr_target = "fc";
  auto* pr = app.add_subcommand("probe", "linear probe on frozen features");
  pr->add_option("--checkpoint", pr_ckpt, "model checkpoint")->required();
  pr->add_option("--data", pr_data, "dataset to probe on")->required();
  pr->add_option("--target", pr_target, "fc | fb | full")
      ->check(CLI::IsMember({"fc", "fb", "full"}));
  pr->callback([&] { rc = run_probe(pr_ckpt, pr_data, pr_target); });

  std::string ex_ckpt, ex_data, ex_out;
  auto* ex = app.add_subcommand("export", "dump per-sample embeddings to CSV");
  ex->add_option("--checkpoint", ex_ckpt, "model checkpoint")->required();
  ex->add_option("--data", ex_data, "dataset to embed")->required();
  ex->add_option("--out", ex_out, "output CSV path")->required();
  ex->callback([&] { rc = run_export(ex_ckpt, ex_data, ex_out); });

  std::string sy_spec, sy_out;
  auto* sy = app.add_subcommand("synth", "write a controllable-factor dataset");
  sy->add_option("--spec", sy_spec, "TOML spec file")->required();
  sy->add_option("--out", sy_out, "output dataset root")->required();
  sy->callback([&] { rc = run_synth(sy_spec, sy_out); });

  std::string rp_out;
  std::vector<std::string> rp_runs;
  auto* rp = app.add_subcommand("report", "aggregate run records into tables");
  rp->add_option("--runs", rp_runs, "run directories (comma list ok)")->required();
  rp->add_option("--out", rp_out, "report directory")->required();
  rp->callback([&] { rc = run_report(rp_runs, rp_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "error[argument]: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
