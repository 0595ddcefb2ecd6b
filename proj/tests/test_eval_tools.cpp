#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <json.hpp>

#include "clfa/evaluate.hpp"
#include "clfa/probe.hpp"
#include "clfa/report.hpp"
#include "clfa/synthetic.hpp"

using namespace clfa;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("clfa_eval_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.backbone = "tiny_cnn";
  cfg.in_channels = 3;
  cfg.image_size = 12;
  cfg.feature_dim = 8;
  cfg.z_dim = 3;
  cfg.encoder_hidden = 6;
  cfg.augmentor_hidden = 10;
  cfg.num_classes = 3;
  cfg.tiny_channels = {4, 6, 8};
  return cfg;
}

Dataset small_dataset(int per_class, std::uint64_t seed) {
  SyntheticFactorSpec spec;
  spec.num_classes = 3;
  spec.num_colors = 3;
  spec.image_size = 12;
  Rng rng(seed);
  return generate_synthetic(spec, per_class, Split::Test, rng);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

void write_eval_record(const std::filesystem::path& dir, double average,
                       const std::vector<std::pair<std::string, double>>& targets) {
  std::filesystem::create_directories(dir);
  MetricsRecord r;
  r.average = average;
  r.per_target = targets;
  std::ofstream out(dir / "eval.jsonl", std::ios::app);
  out << metrics_to_json(r).dump() << "\n";
}

}  // namespace

TEST_CASE("evaluation averages the per-target accuracies", "[eval]") {
  Rng rng(41);
  Model m(small_config(), rng);
  const Dataset d1 = small_dataset(4, 1), d2 = small_dataset(5, 2);

  // oracle accuracies computed through the public prediction path
  auto acc_of = [&](const Dataset& ds) {
    std::vector<ImageTensor> images;
    for (const auto& s : ds.samples) images.push_back(s.image);
    const auto pred = m.predict(images);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (pred[i] == ds.samples[i].label) ++hits;
    return static_cast<double>(hits) / static_cast<double>(ds.size());
  };

  const MetricsRecord r = evaluate(m, {{"a", &d1}, {"b", &d2}}, "single_dg");
  REQUIRE(r.per_target.size() == 2);
  REQUIRE(r.per_target[0].first == "a");
  REQUIRE(std::abs(r.per_target[0].second - acc_of(d1)) < 1e-12);
  REQUIRE(std::abs(r.per_target[1].second - acc_of(d2)) < 1e-12);
  REQUIRE(std::abs(r.average - 0.5 * (acc_of(d1) + acc_of(d2))) < 1e-9);
  REQUIRE(r.protocol == "single_dg");
}

TEST_CASE("evaluation rejects unusable inputs", "[eval]") {
  Rng rng(42);
  Model m(small_config(), rng);
  const Dataset empty;
  REQUIRE_THROWS_AS(dataset_accuracy(m, empty), ArgumentError);

  SyntheticFactorSpec spec;
  spec.num_classes = 4;  // model expects 3
  spec.num_colors = 4;
  spec.image_size = 12;
  Rng dr(3);
  const Dataset wrong = generate_synthetic(spec, 2, Split::Test, dr);
  REQUIRE_THROWS_AS(dataset_accuracy(m, wrong), ConfigError);
  REQUIRE_THROWS_AS(evaluate(m, {}), ArgumentError);
}

TEST_CASE("metrics records survive a json round trip", "[eval]") {
  MetricsRecord r;
  r.protocol = "synthetic_shift";
  r.per_target = {{"test", 0.8125}, {"shifted", 0.4375}};
  r.average = 0.625;
  r.seed = 77;
  r.checkpoint_ref = "runs/final.ckpt";
  const MetricsRecord back = metrics_from_json(metrics_to_json(r));
  REQUIRE(back.protocol == r.protocol);
  REQUIRE(back.average == r.average);
  REQUIRE(back.seed == 77);
  REQUIRE(back.checkpoint_ref == r.checkpoint_ref);
  REQUIRE(back.per_target.size() == 2);
}

TEST_CASE("logistic probe solver separates separable data", "[eval]") {
  // two well-separated clusters in 2-d plus a bias column
  Rng rng(43);
  const int n = 60;
  nn::EMat x(n, 3);
  std::vector<int> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    x(i, 0) = (label == 0 ? -2.0 : 2.0) + 0.3 * rng.normal();
    x(i, 1) = (label == 0 ? 1.0 : -1.0) + 0.3 * rng.normal();
    x(i, 2) = 1.0;
    y[static_cast<std::size_t>(i)] = label;
  }
  const nn::EMat w = detail::fit_logistic(x, y, 2);
  REQUIRE(detail::probe_accuracy(x, y, w) == 1.0);

  // the solver starts from zero and is deterministic
  const nn::EMat w2 = detail::fit_logistic(x, y, 2);
  REQUIRE((w - w2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("logistic probe solver is near chance on label-free data", "[eval]") {
  Rng rng(44);
  const int n = 400;
  nn::EMat x(n, 3);
  std::vector<int> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    x(i, 2) = 1.0;
    y[static_cast<std::size_t>(i)] = i % 4;
  }
  const nn::EMat w = detail::fit_logistic(x, y, 4);
  REQUIRE(detail::probe_accuracy(x, y, w) < 0.40);  // chance is 0.25
}

TEST_CASE("linear probe reports all three targets with proper chance", "[eval]") {
  Rng rng(45);
  Model m(small_config(), rng);
  const Dataset ds = small_dataset(10, 6);

  for (const std::string target : {"fc", "fb", "full"}) {
    const ProbeReport r = linear_probe(m, ds, target);
    REQUIRE(r.probe_target == target);
    REQUIRE(std::abs(r.chance - 1.0 / 3.0) < 1e-12);
    REQUIRE(r.train_acc >= 0.0);
    REQUIRE(r.train_acc <= 1.0);
    REQUIRE(r.heldout_acc >= 0.0);
    REQUIRE(r.heldout_acc <= 1.0);
  }
  REQUIRE_THROWS_AS(linear_probe(m, ds, "halves"), ArgumentError);
}

TEST_CASE("linear probe refuses classes that are too small to split", "[eval]") {
  Rng rng(46);
  Model m(small_config(), rng);
  const Dataset ds = small_dataset(9, 7);
  REQUIRE_THROWS_AS(linear_probe(m, ds, "fc"), DataError);
}

TEST_CASE("probe features lay out the requested slice plus bias", "[eval]") {
  Rng rng(47);
  Model m(small_config(), rng);
  const Dataset ds = small_dataset(4, 8);
  std::vector<ImageTensor> images;
  for (const auto& s : ds.samples) images.push_back(s.image);
  const auto pairs = m.extract_pairs(images);

  const nn::EMat xc = probe_features(m, ds, "fc");
  const nn::EMat xb = probe_features(m, ds, "fb");
  const nn::EMat xf = probe_features(m, ds, "full");
  REQUIRE(xc.cols() == 5);
  REQUIRE(xb.cols() == 5);
  REQUIRE(xf.cols() == 9);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Eigen::Index r = static_cast<Eigen::Index>(i);
    REQUIRE(xc(r, 4) == 1.0);
    REQUIRE(xf(r, 8) == 1.0);
    for (int j = 0; j < 4; ++j) {
      REQUIRE(xc(r, j) == pairs[i].f_c[static_cast<std::size_t>(j)]);
      REQUIRE(xb(r, j) == pairs[i].f_b[static_cast<std::size_t>(j)]);
      REQUIRE(xf(r, j) == pairs[i].f_c[static_cast<std::size_t>(j)]);
      REQUIRE(xf(r, 4 + j) == pairs[i].f_b[static_cast<std::size_t>(j)]);
    }
  }
}

TEST_CASE("embedding export round trips through csv", "[eval]") {
  TempDir tmp;
  Rng rng(48);
  Model m(small_config(), rng);
  const Dataset ds = small_dataset(3, 9);
  const std::string path = (tmp.path / "emb.csv").string();
  export_embeddings(m, ds, path, "synthetic/test");

  std::vector<ImageTensor> images;
  for (const auto& s : ds.samples) images.push_back(s.image);
  const auto pairs = m.extract_pairs(images);

  std::ifstream in(path);
  std::string line;
  REQUIRE(std::getline(in, line));
  const auto header = split_csv_line(line);
  REQUIRE(header.size() == 3 + 8);
  REQUIRE(header[0] == "sample_id");
  REQUIRE(header[3] == "fc_0");
  REQUIRE(header[7] == "fb_0");

  std::size_t row = 0;
  while (std::getline(in, line)) {
    const auto cells = split_csv_line(line);
    REQUIRE(cells.size() == 11);
    REQUIRE(cells[0] == ds.samples[row].sample_id);
    REQUIRE(std::stoi(cells[1]) == ds.samples[row].label);
    REQUIRE(cells[2] == "synthetic/test");
    for (int j = 0; j < 4; ++j) {
      // %.17g makes the decimal round trip exact for doubles
      REQUIRE(std::stod(cells[static_cast<std::size_t>(3 + j)]) ==
              pairs[row].f_c[static_cast<std::size_t>(j)]);
      REQUIRE(std::stod(cells[static_cast<std::size_t>(7 + j)]) ==
              pairs[row].f_b[static_cast<std::size_t>(j)]);
    }
    ++row;
  }
  REQUIRE(row == ds.size());
}

TEST_CASE("report aggregates run records with sample statistics", "[eval]") {
  TempDir tmp;
  const auto run1 = tmp.path / "run1";
  const auto run2 = tmp.path / "run2";
  write_eval_record(run1, 0.5, {{"art", 0.4}, {"photo", 0.6}});
  write_eval_record(run2, 0.7, {{"art", 0.6}, {"photo", 0.8}});

  const auto out = tmp.path / "summary";
  write_report({run1.string(), run2.string()}, out.string());

  std::ifstream csv(out / "report.csv");
  REQUIRE(csv.good());
  std::string line;
  REQUIRE(std::getline(csv, line));
  REQUIRE(line == "protocol,target,mean,std,n_runs");
  bool saw_average = false, saw_art = false;
  while (std::getline(csv, line)) {
    const auto cells = split_csv_line(line);
    REQUIRE(cells.size() == 5);
    if (cells[1] == "average") {
      saw_average = true;
      REQUIRE(std::abs(std::stod(cells[2]) - 0.6) < 1e-5);
      // sample std of {0.5, 0.7} is sqrt(0.02); the csv keeps six digits
      REQUIRE(std::abs(std::stod(cells[3]) - std::sqrt(0.02)) < 1e-5);
      REQUIRE(cells[4] == "2");
    }
    if (cells[1] == "art") {
      saw_art = true;
      REQUIRE(std::abs(std::stod(cells[2]) - 0.5) < 1e-5);
    }
  }
  REQUIRE(saw_average);
  REQUIRE(saw_art);
  REQUIRE(std::filesystem::is_regular_file(out / "report.md"));
}

TEST_CASE("report leaves the std cell empty for a single run", "[eval]") {
  TempDir tmp;
  const auto run1 = tmp.path / "solo";
  write_eval_record(run1, 0.5, {{"t", 0.5}});
  const auto out = tmp.path / "summary";
  write_report({run1.string()}, out.string());

  std::ifstream csv(out / "report.csv");
  std::string line;
  std::getline(csv, line);  // header
  bool checked = false;
  while (std::getline(csv, line)) {
    const auto cells = split_csv_line(line);
    if (cells.size() >= 4 && cells[1] == "average") {
      REQUIRE(cells[3].empty());
      checked = true;
    }
  }
  REQUIRE(checked);
}

TEST_CASE("report fails loudly on runs without records", "[eval]") {
  TempDir tmp;
  const auto hollow = tmp.path / "hollow";
  std::filesystem::create_directories(hollow);
  REQUIRE_THROWS_AS(write_report({hollow.string()}, (tmp.path / "out").string()), DataError);
  REQUIRE_THROWS_AS(write_report({(tmp.path / "missing").string()}, (tmp.path / "out").string()),
                    DataError);
  REQUIRE_THROWS_AS(write_report({}, (tmp.path / "out").string()), ArgumentError);
}

TEST_CASE("report renders a loss curve when metrics exist", "[eval]") {
  TempDir tmp;
  const auto run = tmp.path / "run_with_metrics";
  write_eval_record(run, 0.5, {{"t", 0.5}});
  {
    std::ofstream metrics(run / "metrics.jsonl");
    for (int i = 1; i <= 5; ++i)
      metrics << nlohmann::json{{"iter", i * 10}, {"total", 2.0 / i}}.dump() << "\n";
  }
  const auto out = tmp.path / "summary";
  write_report({run.string()}, out.string());
  REQUIRE(std::filesystem::is_regular_file(out / "loss_run_with_metrics.svg"));
}
