#pragma once
// config.hpp - flat TOML-subset parsing and the typed config loaders.
//
// Supported grammar: [section] headers (dotted allowed), key = value lines,
// '#' comments, quoted strings with \" \\ \n \t escapes, booleans, numbers,
// and single-line arrays of strings or numbers. That covers every shipped
// profile; anything fancier is rejected with the offending line number.
// Unrecognized keys are an error so typos fail loudly.

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "clfa/synthetic.hpp"
#include "clfa/trainer.hpp"

namespace clfa {

struct TomlValue {
  enum class Kind { Str, Num, Bool, Arr };
  Kind kind = Kind::Str;
  std::string str;
  double num = 0;
  bool is_int = false;
  bool boolean = false;
  std::vector<TomlValue> arr;
  int line = 0;
};

class TomlDoc {
 public:
  static TomlDoc parse_string(const std::string& text, const std::string& origin = "<string>") {
    TomlDoc doc;
    doc.origin_ = origin;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string s = strip(strip_comment(line));
      if (s.empty()) continue;
      if (s.front() == '[') {
        if (s.back() != ']' || s.size() < 3)
          throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
        section = strip(s.substr(1, s.size() - 2));
        continue;
      }
      const std::size_t eq = find_eq(s);
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      const std::string key = strip(s.substr(0, eq));
      const std::string val = strip(s.substr(eq + 1));
      if (key.empty() || val.empty())
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key or value");
      const std::string full = section.empty() ? key : section + "." + key;
      if (doc.values_.count(full))
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + full + "'");
      doc.values_[full] = parse_value(val, origin, lineno);
    }
    return doc;
  }

  static TomlDoc parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_str(const std::string& key, const std::string& dflt) const {
    auto* v = find(key);
    if (!v) return dflt;
    require_kind(*v, TomlValue::Kind::Str, key, "a string");
    return v->str;
  }

  double get_double(const std::string& key, double dflt) const {
    auto* v = find(key);
    if (!v) return dflt;
    require_kind(*v, TomlValue::Kind::Num, key, "a number");
    return v->num;
  }

  long long get_int(const std::string& key, long long dflt) const {
    auto* v = find(key);
    if (!v) return dflt;
    require_kind(*v, TomlValue::Kind::Num, key, "a number");
    if (!v->is_int)
      throw ConfigError(where(*v) + ": key '" + key + "' expects an integer");
    return static_cast<long long>(v->num);
  }

  bool get_bool(const std::string& key, bool dflt) const {
    auto* v = find(key);
    if (!v) return dflt;
    require_kind(*v, TomlValue::Kind::Bool, key, "a boolean");
    return v->boolean;
  }

  std::vector<std::string> get_str_array(const std::string& key) const {
    auto* v = find(key);
    if (!v) return {};
    require_kind(*v, TomlValue::Kind::Arr, key, "an array");
    std::vector<std::string> out;
    for (const auto& e : v->arr) {
      require_kind(e, TomlValue::Kind::Str, key, "an array of strings");
      out.push_back(e.str);
    }
    return out;
  }

  std::vector<double> get_double_array(const std::string& key) const {
    auto* v = find(key);
    if (!v) return {};
    require_kind(*v, TomlValue::Kind::Arr, key, "an array");
    std::vector<double> out;
    for (const auto& e : v->arr) {
      require_kind(e, TomlValue::Kind::Num, key, "an array of numbers");
      out.push_back(e.num);
    }
    return out;
  }

  std::vector<int> get_int_array(const std::string& key) const {
    std::vector<int> out;
    for (double d : get_double_array(key)) out.push_back(static_cast<int>(d));
    return out;
  }

  // loaders call this after reading everything they understand
  void reject_unknown() const {
    std::string unknown;
    for (const auto& [k, v] : values_)
      if (!consumed_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
    if (!unknown.empty())
      throw ConfigError(origin_ + ": unknown config keys: " + unknown);
  }

  std::vector<std::string> keys_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (k.rfind(prefix, 0) == 0) out.push_back(k);
    return out;
  }

 private:
  const TomlValue* find(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    consumed_.insert(key);
    return &it->second;
  }

  std::string where(const TomlValue& v) const { return origin_ + ":" + std::to_string(v.line); }

  void require_kind(const TomlValue& v, TomlValue::Kind k, const std::string& key,
                    const char* what) const {
    if (v.kind != k)
      throw ConfigError(where(v) + ": key '" + key + "' expects " + what);
  }

  static std::string strip(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  static std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) quoted = !quoted;
      if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
  }

  static std::size_t find_eq(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') quoted = !quoted;
      if (s[i] == '=' && !quoted) return i;
    }
    return std::string::npos;
  }

  static TomlValue parse_value(const std::string& raw, const std::string& origin, int lineno) {
    TomlValue v;
    v.line = lineno;
    auto fail = [&](const char* why) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + why + ": " + raw);
    };
    if (raw.front() == '"') {
      if (raw.size() < 2 || raw.back() != '"') fail("unterminated string");
      v.kind = TomlValue::Kind::Str;
      for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
        char c = raw[i];
        if (c == '\\') {
          if (i + 2 >= raw.size()) fail("dangling escape");
          const char e = raw[++i];
          c = e == 'n' ? '\n' : e == 't' ? '\t' : e == '"' ? '"' : e == '\\' ? '\\' : '\0';
          if (c == '\0') fail("unsupported escape");
        }
        v.str.push_back(c);
      }
      return v;
    }
    if (raw == "true" || raw == "false") {
      v.kind = TomlValue::Kind::Bool;
      v.boolean = raw == "true";
      return v;
    }
    if (raw.front() == '[') {
      if (raw.back() != ']') fail("arrays must be single-line");
      v.kind = TomlValue::Kind::Arr;
      std::string body = raw.substr(1, raw.size() - 2);
      std::vector<std::string> parts;
      std::string cur;
      bool quoted = false;
      for (char c : body) {
        if (c == '"') quoted = !quoted;
        if (c == ',' && !quoted) {
          parts.push_back(cur);
          cur.clear();
        } else {
          cur.push_back(c);
        }
      }
      parts.push_back(cur);
      for (auto& p : parts) {
        const std::string e = strip(p);
        if (e.empty()) continue;  // tolerates a trailing comma
        v.arr.push_back(parse_value(e, origin, lineno));
      }
      return v;
    }
    // number
    v.kind = TomlValue::Kind::Num;
    std::size_t used = 0;
    try {
      v.num = std::stod(raw, &used);
    } catch (const std::exception&) {
      fail("unrecognized value");
    }
    if (used != raw.size()) fail("trailing junk after number");
    v.is_int = raw.find_first_of(".eE") == std::string::npos;
    return v;
  }

  std::map<std::string, TomlValue> values_;
  mutable std::set<std::string> consumed_;
  std::string origin_;
};

// ---- typed loaders -------------------------------------------------------

inline TrainConfig train_config_from_toml(const TomlDoc& doc) {
  TrainConfig cfg;
  cfg.max_iters = doc.get_int("train.max_iters", cfg.max_iters);
  cfg.base_lr = doc.get_double("train.base_lr", cfg.base_lr);
  cfg.lr_halving_period = doc.get_int("train.lr_halving_period", cfg.lr_halving_period);
  cfg.optimizer = doc.get_str("train.optimizer", cfg.optimizer);
  cfg.seed = static_cast<std::uint64_t>(doc.get_int("train.seed", 0));
  cfg.triples_per_class = static_cast<int>(doc.get_int("train.triples_per_class", cfg.triples_per_class));
  cfg.dataset_tag = dataset_tag_from_name(
      doc.get_str("train.dataset", dataset_tag_name(cfg.dataset_tag)));
  cfg.eval_every = doc.get_int("train.eval_every", cfg.eval_every);
  cfg.checkpoint_every = doc.get_int("train.checkpoint_every", cfg.checkpoint_every);
  cfg.log_every = doc.get_int("train.log_every", cfg.log_every);
  cfg.patience = doc.get_int("train.patience", cfg.patience);
  cfg.clip_norm = doc.get_double("train.clip_norm", cfg.clip_norm);
  cfg.pairing = pairing_from_name(doc.get_str("train.pairing", "shuffled_k"));
  cfg.log_provenance = doc.get_bool("train.log_provenance", cfg.log_provenance);

  cfg.weights.alpha1 = doc.get_double("loss.alpha1", cfg.weights.alpha1);
  cfg.weights.alpha2 = doc.get_double("loss.alpha2", cfg.weights.alpha2);
  cfg.weights.alpha3 = doc.get_double("loss.alpha3", cfg.weights.alpha3);
  cfg.weights.delta = doc.get_double("loss.delta", cfg.weights.delta);
  cfg.weights.lambda_samples =
      static_cast<int>(doc.get_int("loss.lambda", cfg.weights.lambda_samples));

  ModelConfig& m = cfg.model;
  m.backbone = doc.get_str("model.backbone", m.backbone);
  m.in_channels = static_cast<int>(doc.get_int("model.in_channels", m.in_channels));
  m.image_size = static_cast<int>(doc.get_int("model.image_size", m.image_size));
  m.feature_dim = static_cast<int>(doc.get_int("model.feature_dim", m.feature_dim));
  m.z_dim = static_cast<int>(doc.get_int("model.z_dim", m.z_dim));
  m.encoder_hidden = static_cast<int>(doc.get_int("model.encoder_hidden", m.encoder_hidden));
  m.augmentor_hidden = static_cast<int>(doc.get_int("model.augmentor_hidden", m.augmentor_hidden));
  m.num_classes = static_cast<int>(doc.get_int("model.num_classes", m.num_classes));
  if (doc.has("model.tiny_channels")) m.tiny_channels = doc.get_int_array("model.tiny_channels");

  cfg.augment_input = doc.get_bool("transforms.use", cfg.augment_input);
  const auto enabled = doc.get_str_array("transforms.enabled");
  if (!enabled.empty()) cfg.bank.restrict_to(enabled);
  for (int i = 0; i < kStrategyCount; ++i) {
    const std::string key =
        std::string("transforms.") + strategy_name(static_cast<Strategy>(i)) + ".range";
    if (doc.has(key)) {
      const auto r = doc.get_double_array(key);
      require_cfg(r.size() == 2, "key '" + key + "' expects [lo, hi]");
      cfg.bank.set_range(strategy_name(static_cast<Strategy>(i)), r[0], r[1]);
    }
  }

  doc.reject_unknown();
  cfg.validate();
  return cfg;
}

inline TrainConfig load_train_config(const std::string& path) {
  return train_config_from_toml(TomlDoc::parse_file(path));
}

struct SynthJob {
  SyntheticFactorSpec spec;
  int train_per_class = 500;
  int test_per_class = 200;
  std::uint64_t seed = 0;
};

inline SynthJob synth_job_from_toml(const TomlDoc& doc) {
  SynthJob job;
  SyntheticFactorSpec& s = job.spec;
  s.num_classes = static_cast<int>(doc.get_int("synthetic.num_classes", s.num_classes));
  s.num_colors = static_cast<int>(doc.get_int("synthetic.num_colors", s.num_colors));
  s.train_correlation = doc.get_double("synthetic.train_correlation", s.train_correlation);
  s.test_correlation = doc.get_double("synthetic.test_correlation", s.test_correlation);
  s.image_size = static_cast<int>(doc.get_int("synthetic.image_size", s.image_size));
  s.bg_base = doc.get_double("synthetic.bg_base", s.bg_base);
  s.bg_jitter = doc.get_double("synthetic.bg_jitter", s.bg_jitter);
  s.color_amp = doc.get_double("synthetic.color_amp", s.color_amp);
  s.shape_contrast = doc.get_double("synthetic.shape_contrast", s.shape_contrast);
  s.stripe_amp = doc.get_double("synthetic.stripe_amp", s.stripe_amp);
  s.pixel_noise = doc.get_double("synthetic.pixel_noise", s.pixel_noise);
  job.train_per_class = static_cast<int>(doc.get_int("synthetic.train_per_class", job.train_per_class));
  job.test_per_class = static_cast<int>(doc.get_int("synthetic.test_per_class", job.test_per_class));
  job.seed = static_cast<std::uint64_t>(doc.get_int("synthetic.seed", 0));
  doc.reject_unknown();
  s.validate();
  require_cfg(job.train_per_class >= 1 && job.test_per_class >= 1,
              "per-class sample counts must be >= 1");
  return job;
}

inline SynthJob load_synth_job(const std::string& path) {
  return synth_job_from_toml(TomlDoc::parse_file(path));
}

// resolved-config snapshot written into each run directory
inline nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["train"] = {{"max_iters", cfg.max_iters},
                {"base_lr", cfg.base_lr},
                {"lr_halving_period", cfg.lr_halving_period},
                {"optimizer", cfg.optimizer},
                {"seed", cfg.seed},
                {"triples_per_class", cfg.triples_per_class},
                {"dataset", dataset_tag_name(cfg.dataset_tag)},
                {"eval_every", cfg.eval_every},
                {"checkpoint_every", cfg.checkpoint_every},
                {"log_every", cfg.log_every},
                {"patience", cfg.patience},
                {"clip_norm", cfg.clip_norm},
                {"pairing", cfg.pairing == PairingMode::FullProduct ? "full_product" : "shuffled_k"},
                {"log_provenance", cfg.log_provenance}};
  j["loss"] = {{"alpha1", cfg.weights.alpha1},
               {"alpha2", cfg.weights.alpha2},
               {"alpha3", cfg.weights.alpha3},
               {"delta", cfg.weights.delta},
               {"lambda", cfg.weights.lambda_samples}};
  j["model"] = model_config_to_json(cfg.model);
  j["transforms"] = {{"use", cfg.augment_input}};
  nlohmann::json names = nlohmann::json::array();
  for (const auto& sp : cfg.bank.specs()) names.push_back(strategy_name(sp.name));
  j["transforms"]["enabled"] = names;
  return j;
}

}  // namespace clfa
