#pragma once
// checkpoint.hpp - one-file model archives.
//
// Layout: 8-byte magic, u64 little-endian header length, JSON header, then
// a flat little-endian float64 payload. The header indexes every tensor by
// key (parameters, batchnorm buffers, optimizer moments) with its offset
// into the payload. Writes go to "<path>.tmp" and are renamed into place.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "clfa/model.hpp"
#include "clfa/nn/adam.hpp"

namespace clfa {

namespace detail {
constexpr char kCkptMagic[8] = {'C', 'L', 'F', 'A', 'C', 'K', 'P', 'T'};
}

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"backbone", c.backbone},
                        {"in_channels", c.in_channels},
                        {"image_size", c.image_size},
                        {"feature_dim", c.feature_dim},
                        {"z_dim", c.z_dim},
                        {"encoder_hidden", c.encoder_hidden},
                        {"augmentor_hidden", c.augmentor_hidden},
                        {"num_classes", c.num_classes},
                        {"tiny_channels", c.tiny_channels}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.backbone = j.at("backbone").get<std::string>();
  c.in_channels = j.at("in_channels").get<int>();
  c.image_size = j.at("image_size").get<int>();
  c.feature_dim = j.at("feature_dim").get<int>();
  c.z_dim = j.at("z_dim").get<int>();
  c.encoder_hidden = j.at("encoder_hidden").get<int>();
  c.augmentor_hidden = j.at("augmentor_hidden").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.tiny_channels = j.at("tiny_channels").get<std::vector<int>>();
  return c;
}

inline void save_checkpoint(const std::string& path, Model& model, long long iteration,
                            nn::Adam* optimizer = nullptr, const Rng* rng = nullptr) {
  namespace fs = std::filesystem;
  nlohmann::json header;
  header["version"] = 1;
  header["iteration"] = iteration;
  header["model"] = model_config_to_json(model.config());

  std::vector<const Tensor*> payload;
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  auto add = [&](const std::string& key, const Tensor& t) {
    tensors.push_back({{"key", key}, {"shape", t.shape()}, {"offset", offset}});
    payload.push_back(&t);
    offset += t.numel();
  };

  for (Param* p : model.params()) add(p->name, p->value);
  for (auto& [key, buf] : model.buffers()) add(key, *buf);
  if (optimizer) {
    header["optimizer"] = {{"step_count", optimizer->step_count()}};
    const auto& ps = optimizer->params();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      add("optim.m." + ps[i]->name, optimizer->moments_m()[i]);
      add("optim.v." + ps[i]->name, optimizer->moments_v()[i]);
    }
  }
  if (rng) header["rng"] = rng->serialize();
  header["tensors"] = std::move(tensors);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + tmp);
    const std::string hs = header.dump();
    const std::uint64_t hlen = hs.size();
    out.write(detail::kCkptMagic, 8);
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const Tensor* t : payload)
      out.write(reinterpret_cast<const char*>(t->data()),
                static_cast<std::streamsize>(t->numel() * sizeof(double)));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("short write on checkpoint: " + tmp);
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move checkpoint into place: " + path);
  }
}

struct LoadedCheckpoint {
  ModelConfig config;
  std::unique_ptr<Model> model;
  long long iteration = 0;
  bool has_optimizer = false;
  long long optimizer_step = 0;
  std::vector<Tensor> optim_m, optim_v;  // in model.params() order
  bool has_rng = false;
  std::string rng_state;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kCkptMagic, 8) != 0)
    throw DataError("not a checkpoint file: " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  if (!in || hlen == 0 || hlen > (1u << 26)) throw DataError("corrupt checkpoint header: " + path);
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw DataError("truncated checkpoint header: " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("unparsable checkpoint header in " + path + ": " + e.what());
  }

  LoadedCheckpoint lc;
  lc.config = model_config_from_json(header.at("model"));
  lc.iteration = header.at("iteration").get<long long>();
  Rng scratch(0);  // weights are overwritten below
  lc.model = std::make_unique<Model>(lc.config, scratch);

  // index header tensors, then read the payload sequentially (offsets are
  // monotone by construction)
  struct Entry {
    std::vector<int> shape;
    std::uint64_t offset;
  };
  std::map<std::string, Entry> index;
  for (const auto& te : header.at("tensors"))
    index[te.at("key").get<std::string>()] = {te.at("shape").get<std::vector<int>>(),
                                              te.at("offset").get<std::uint64_t>()};
  std::uint64_t total = 0;
  for (const auto& [k, e] : index) {
    std::uint64_t n = 1;
    for (int d : e.shape) n *= static_cast<std::uint64_t>(d);
    total = std::max(total, e.offset + n);
  }
  std::vector<double> blob(total);
  in.read(reinterpret_cast<char*>(blob.data()),
          static_cast<std::streamsize>(total * sizeof(double)));
  if (static_cast<std::uint64_t>(in.gcount()) != total * sizeof(double))
    throw DataError("truncated checkpoint payload: " + path);

  auto fetch = [&](const std::string& key, Tensor& dst) {
    auto it = index.find(key);
    if (it == index.end()) throw DataError("checkpoint missing tensor '" + key + "': " + path);
    if (it->second.shape != dst.shape())
      throw DataError("checkpoint tensor '" + key + "' has mismatched shape: " + path);
    std::copy(blob.begin() + static_cast<std::ptrdiff_t>(it->second.offset),
              blob.begin() + static_cast<std::ptrdiff_t>(it->second.offset + dst.numel()),
              dst.data());
  };

  for (Param* p : lc.model->params()) fetch(p->name, p->value);
  for (auto& [key, buf] : lc.model->buffers()) fetch(key, *buf);

  if (header.contains("optimizer")) {
    lc.has_optimizer = true;
    lc.optimizer_step = header["optimizer"].at("step_count").get<long long>();
    for (Param* p : lc.model->params()) {
      Tensor m = Tensor::zeros(p->value.shape());
      Tensor v = Tensor::zeros(p->value.shape());
      fetch("optim.m." + p->name, m);
      fetch("optim.v." + p->name, v);
      lc.optim_m.push_back(std::move(m));
      lc.optim_v.push_back(std::move(v));
    }
  }
  if (header.contains("rng")) {
    lc.has_rng = true;
    lc.rng_state = header["rng"].get<std::string>();
  }
  return lc;
}

}  // namespace clfa
