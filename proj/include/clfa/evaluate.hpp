#pragma once
// evaluate.hpp - accuracy protocols over one or more target datasets.

#include <string>
#include <vector>

#include <json.hpp>

#include "clfa/dataset.hpp"
#include "clfa/model.hpp"

namespace clfa {

struct MetricsRecord {
  std::string protocol = "single_dg";  // single_dg | severity_sweep | leave_one_out | synthetic_shift
  std::vector<std::pair<std::string, double>> per_target;
  double average = 0;
  std::uint64_t seed = 0;
  std::string checkpoint_ref;
};

inline nlohmann::json metrics_to_json(const MetricsRecord& r) {
  nlohmann::json targets = nlohmann::json::object();
  for (const auto& [name, acc] : r.per_target) targets[name] = acc;
  return nlohmann::json{{"protocol", r.protocol},
                        {"per_target", targets},
                        {"average", r.average},
                        {"seed", r.seed},
                        {"checkpoint", r.checkpoint_ref}};
}

inline MetricsRecord metrics_from_json(const nlohmann::json& j) {
  MetricsRecord r;
  r.protocol = j.at("protocol").get<std::string>();
  for (const auto& [k, v] : j.at("per_target").items())
    r.per_target.emplace_back(k, v.get<double>());
  r.average = j.at("average").get<double>();
  if (j.contains("seed")) r.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("checkpoint")) r.checkpoint_ref = j["checkpoint"].get<std::string>();
  return r;
}

inline double dataset_accuracy(Model& model, const Dataset& ds) {
  require_arg(ds.size() > 0, "cannot evaluate an empty dataset");
  require_cfg(ds.num_classes() == model.config().num_classes,
              "dataset class count does not match the model");
  std::vector<ImageTensor> images;
  images.reserve(ds.size());
  for (const auto& s : ds.samples) images.push_back(s.image);
  const std::vector<int> pred = model.predict(images);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (pred[i] == ds.samples[i].label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

inline MetricsRecord evaluate(Model& model,
                              const std::vector<std::pair<std::string, const Dataset*>>& targets,
                              const std::string& protocol = "single_dg") {
  require_arg(!targets.empty(), "evaluate wants at least one target");
  MetricsRecord r;
  r.protocol = protocol;
  double sum = 0;
  for (const auto& [name, ds] : targets) {
    const double acc = dataset_accuracy(model, *ds);
    r.per_target.emplace_back(name, acc);
    sum += acc;
  }
  r.average = sum / static_cast<double>(targets.size());
  return r;
}

}  // namespace clfa
