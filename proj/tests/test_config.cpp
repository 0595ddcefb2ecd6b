#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "clfa/config.hpp"

using namespace clfa;

#ifndef CLFA_REPO_DIR
#define CLFA_REPO_DIR ".."
#endif

namespace {

std::string repo_path(const std::string& rel) {
  return std::string(CLFA_REPO_DIR) + "/" + rel;
}

bool message_contains(const std::exception& e, const std::string& needle) {
  return std::string(e.what()).find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("toml parsing handles the supported grammar", "[config]") {
  const TomlDoc doc = TomlDoc::parse_string(R"(
top = 1
# a comment line
[alpha]
name = "hello \"quoted\" world"   # trailing comment
flag = true
count = 42
ratio = 2.5
negative = -3
sci = 1e-4
words = ["a", "b,c", "d"]
numbers = [1, 2.5, 3]

[alpha.nested]
deep = "yes"
)");
  REQUIRE(doc.get_int("top", 0) == 1);
  REQUIRE(doc.get_str("alpha.name", "") == "hello \"quoted\" world");
  REQUIRE(doc.get_bool("alpha.flag", false));
  REQUIRE(doc.get_int("alpha.count", 0) == 42);
  REQUIRE(doc.get_double("alpha.ratio", 0) == 2.5);
  REQUIRE(doc.get_int("alpha.negative", 0) == -3);
  REQUIRE(doc.get_double("alpha.sci", 0) == 1e-4);
  REQUIRE(doc.get_str_array("alpha.words") == std::vector<std::string>{"a", "b,c", "d"});
  REQUIRE(doc.get_double_array("alpha.numbers") == std::vector<double>{1, 2.5, 3});
  REQUIRE(doc.get_str("alpha.nested.deep", "") == "yes");
  REQUIRE(doc.get_str("missing", "fallback") == "fallback");
  REQUIRE(doc.has("alpha.flag"));
  REQUIRE_FALSE(doc.has("alpha.absent"));
}

TEST_CASE("toml errors carry the offending line number", "[config]") {
  auto expect_line = [](const std::string& text, const std::string& line_tag,
                        const std::string& fragment) {
    try {
      (void)TomlDoc::parse_string(text, "test.toml");
      FAIL("expected a parse failure");
    } catch (const ConfigError& e) {
      INFO(e.what());
      REQUIRE(message_contains(e, "test.toml:" + line_tag));
      REQUIRE(message_contains(e, fragment));
    }
  };

  expect_line("a = 1\n[broken\n", "2", "section");
  expect_line("\n\njust words\n", "3", "key = value");
  expect_line("a = 1\na = 2\n", "2", "duplicate");
  expect_line("s = \"unclosed\n", "1", "unterminated");
  expect_line("n = 12abc\n", "1", "trailing junk");
  expect_line("arr = [1,\n2]\n", "1", "single-line");
  expect_line("e = @wat\n", "1", "unrecognized");
  expect_line("x =\n", "1", "empty");
}

TEST_CASE("integer getters refuse fractional and scientific forms", "[config]") {
  const TomlDoc doc = TomlDoc::parse_string("a = 2.5\nb = 1e3\nc = 7\ns = \"x\"\n", "t.toml");
  REQUIRE_THROWS_AS(doc.get_int("a", 0), ConfigError);
  REQUIRE_THROWS_AS(doc.get_int("b", 0), ConfigError);
  REQUIRE(doc.get_int("c", 0) == 7);
  REQUIRE_THROWS_AS(doc.get_int("s", 0), ConfigError);
  REQUIRE_THROWS_AS(doc.get_bool("c", false), ConfigError);
  REQUIRE_THROWS_AS(doc.get_str_array("c"), ConfigError);
}

TEST_CASE("unknown keys fail loudly when a loader finishes", "[config]") {
  const std::string text = R"(
[train]
max_iters = 10
[loss]
lambdas = 5
)";
  try {
    (void)train_config_from_toml(TomlDoc::parse_string(text, "typo.toml"));
    FAIL("expected rejection");
  } catch (const ConfigError& e) {
    REQUIRE(message_contains(e, "unknown config keys"));
    REQUIRE(message_contains(e, "loss.lambdas"));
  }
}

TEST_CASE("training profiles resolve every documented field", "[config]") {
  const std::string text = R"(
[train]
max_iters = 120
base_lr = 5e-4
lr_halving_period = 40
optimizer = "adam"
seed = 3
triples_per_class = 2
dataset = "synthetic"
eval_every = 10
checkpoint_every = 60
log_every = 5
patience = 4
clip_norm = 5.0
pairing = "full_product"
log_provenance = true

[loss]
alpha1 = 0.1
alpha2 = 0.2
alpha3 = 0.3
delta = 1.5
lambda = 2

[model]
backbone = "tiny_cnn"
in_channels = 3
image_size = 16
feature_dim = 32
z_dim = 8
encoder_hidden = 16
augmentor_hidden = 24
num_classes = 4
tiny_channels = [4, 8, 16]

[transforms]
use = true
)";
  const TrainConfig cfg = train_config_from_toml(TomlDoc::parse_string(text, "full.toml"));
  REQUIRE(cfg.max_iters == 120);
  REQUIRE(cfg.base_lr == 5e-4);
  REQUIRE(cfg.lr_halving_period == 40);
  REQUIRE(cfg.seed == 3);
  REQUIRE(cfg.triples_per_class == 2);
  REQUIRE(cfg.dataset_tag == DatasetTag::Synthetic);
  REQUIRE(cfg.eval_every == 10);
  REQUIRE(cfg.checkpoint_every == 60);
  REQUIRE(cfg.log_every == 5);
  REQUIRE(cfg.patience == 4);
  REQUIRE(cfg.clip_norm == 5.0);
  REQUIRE(cfg.pairing == PairingMode::FullProduct);
  REQUIRE(cfg.log_provenance);
  REQUIRE(cfg.weights.alpha1 == 0.1);
  REQUIRE(cfg.weights.alpha2 == 0.2);
  REQUIRE(cfg.weights.alpha3 == 0.3);
  REQUIRE(cfg.weights.delta == 1.5);
  REQUIRE(cfg.weights.lambda_samples == 2);
  REQUIRE(cfg.model.backbone == "tiny_cnn");
  REQUIRE(cfg.model.feature_dim == 32);
  REQUIRE(cfg.model.tiny_channels == std::vector<int>{4, 8, 16});
  REQUIRE(cfg.augment_input);

  // resolved snapshot reflects the same values
  const nlohmann::json j = train_config_to_json(cfg);
  REQUIRE(j["train"]["max_iters"] == 120);
  REQUIRE(j["loss"]["lambda"] == 2);
  REQUIRE(j["model"]["feature_dim"] == 32);
  REQUIRE(j["transforms"]["use"] == true);
  REQUIRE(j["transforms"]["enabled"].size() == 16);
}

TEST_CASE("transform lists and ranges feed the bank", "[config]") {
  const std::string text = R"(
[train]
dataset = "synthetic"
[transforms]
use = true
enabled = ["Brightness", "Rotate"]
Brightness.range = [0.8, 1.2]
)";
  const TrainConfig cfg = train_config_from_toml(TomlDoc::parse_string(text, "bank.toml"));
  REQUIRE(cfg.bank.specs().size() == 2);
  bool saw_brightness = false;
  for (const auto& sp : cfg.bank.specs()) {
    if (sp.name == Strategy::Brightness) {
      saw_brightness = true;
      REQUIRE(sp.magnitude_lo == 0.8);
      REQUIRE(sp.magnitude_hi == 1.2);
    }
  }
  REQUIRE(saw_brightness);

  // a range key for a name outside the strategy table is never consumed
  const std::string bad = R"(
[transforms]
Translate.range = [0, 1]
)";
  try {
    (void)train_config_from_toml(TomlDoc::parse_string(bad, "bad.toml"));
    FAIL("expected rejection");
  } catch (const ConfigError& e) {
    REQUIRE(message_contains(e, "transforms.Translate.range"));
  }

  // inverted bounds are caught before they reach the bank
  const std::string inverted = R"(
[transforms]
Brightness.range = [1.2, 0.8]
)";
  REQUIRE_THROWS_AS(train_config_from_toml(TomlDoc::parse_string(inverted, "inv.toml")),
                    ConfigError);

  // a typo inside the enabled list names the bad strategy
  const std::string typo = R"(
[transforms]
enabled = ["Sparkle"]
)";
  try {
    (void)train_config_from_toml(TomlDoc::parse_string(typo, "typo.toml"));
    FAIL("expected rejection");
  } catch (const ConfigError& e) {
    REQUIRE(message_contains(e, "Sparkle"));
  }
}

TEST_CASE("synthetic generator jobs resolve and validate", "[config]") {
  const std::string text = R"(
[synthetic]
num_classes = 3
num_colors = 4
train_correlation = 0.9
test_correlation = 0.25
image_size = 16
train_per_class = 20
test_per_class = 10
seed = 5
color_amp = 0.5
shape_contrast = 0.3
)";
  const SynthJob job = synth_job_from_toml(TomlDoc::parse_string(text, "synth.toml"));
  REQUIRE(job.spec.num_classes == 3);
  REQUIRE(job.spec.num_colors == 4);
  REQUIRE(job.spec.train_correlation == 0.9);
  REQUIRE(job.spec.color_amp == 0.5);
  REQUIRE(job.spec.shape_contrast == 0.3);
  REQUIRE(job.train_per_class == 20);
  REQUIRE(job.test_per_class == 10);
  REQUIRE(job.seed == 5);

  REQUIRE_THROWS_AS(
      synth_job_from_toml(TomlDoc::parse_string("[synthetic]\nnum_classes = 9\n", "bad.toml")),
      ConfigError);
  REQUIRE_THROWS_AS(
      synth_job_from_toml(TomlDoc::parse_string("[synthetic]\nshapes = 2\n", "bad.toml")),
      ConfigError);
}

TEST_CASE("shipped profiles encode the published schedule", "[config]") {
  const TrainConfig pacs = load_train_config(repo_path("configs/pacs.toml"));
  REQUIRE(pacs.max_iters == 40000);
  REQUIRE(pacs.base_lr == 1e-4);
  REQUIRE(pacs.lr_halving_period == 10000);
  REQUIRE(pacs.triples_per_class == 4);
  REQUIRE(pacs.weights.delta == 2.0);
  REQUIRE(pacs.weights.lambda_samples == 15);
  REQUIRE(pacs.dataset_tag == DatasetTag::Pacs);
  REQUIRE(pacs.model.backbone == "resnet18");
  REQUIRE(pacs.model.num_classes == 7);
  REQUIRE(lr_at(9999, pacs) == 1e-4);
  REQUIRE(lr_at(10000, pacs) == 5e-5);

  const TrainConfig digits = load_train_config(repo_path("configs/digits.toml"));
  REQUIRE(digits.max_iters == 40000);
  REQUIRE(digits.triples_per_class == 8);
  REQUIRE(digits.weights.delta == 2.0);
  REQUIRE(digits.weights.lambda_samples == 25);
  REQUIRE(digits.dataset_tag == DatasetTag::Digits);
  REQUIRE(digits.model.in_channels == 1);
  REQUIRE(digits.model.num_classes == 10);

  const TrainConfig cifar = load_train_config(repo_path("configs/cifar10.toml"));
  REQUIRE(cifar.max_iters == 40000);
  REQUIRE(cifar.triples_per_class == 8);
  REQUIRE(cifar.weights.delta == 2.0);
  REQUIRE(cifar.weights.lambda_samples == 25);
  REQUIRE(cifar.dataset_tag == DatasetTag::Cifar10);
  REQUIRE(cifar.model.backbone == "wrn_16_4");
}

TEST_CASE("local profiles parse cleanly", "[config]") {
  const TrainConfig smoke = load_train_config(repo_path("configs/smoke.toml"));
  REQUIRE(smoke.max_iters == 20);
  REQUIRE(smoke.model.backbone == "tiny_cnn");

  const TrainConfig synth = load_train_config(repo_path("configs/synthetic.toml"));
  REQUIRE(synth.dataset_tag == DatasetTag::Synthetic);
  REQUIRE(synth.model.num_classes == 4);

  const SynthJob job = load_synth_job(repo_path("configs/synthetic_data.toml"));
  REQUIRE(job.spec.num_classes == 4);
  REQUIRE(job.spec.num_colors == 4);
  REQUIRE(job.spec.train_correlation == 0.95);
  REQUIRE(job.spec.test_correlation == 0.25);
}

TEST_CASE("missing config files surface as io errors", "[config]") {
  REQUIRE_THROWS_AS(load_train_config(repo_path("configs/absent.toml")), IoError);
}
