// Copyright 2026 The tcvae Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Model checkpoint directory:
//   spec.json    ModelSpec
//   params.json  manifest: [{name, shape, offset}] with offsets in doubles
//   params.bin   all parameter blocks, little-endian f64, manifest order
//   rng.json     {"state": generator state, "step": optimizer steps taken}

#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "tcvae/core/error.hpp"
#include "tcvae/data/checkpoint.hpp"
#include "tcvae/model/vae.hpp"

namespace tcvae {

struct RngCheckpoint {
  std::string state;
  std::uint64_t step = 0;
};

inline void save_model(const std::filesystem::path& dir, const Vae& model,
                       const RngCheckpoint& rng = {}) {
  std::filesystem::create_directories(dir);
  write_json(dir / "spec.json", to_json(model.spec()));
  nlohmann::json manifest = nlohmann::json::array();
  std::vector<double> blob;
  for (const auto& [name, t] : model.params().entries()) {
    const auto dims = t.shape().dims();
    manifest.push_back({{"name", name},
                        {"shape", std::vector<std::size_t>(dims.begin(), dims.end())},
                        {"offset", blob.size()}});
    blob.insert(blob.end(), t.data().begin(), t.data().end());
  }
  write_json(dir / "params.json", {{"parameters", manifest}, {"total", blob.size()}});
  std::ofstream out(dir / "params.bin", std::ios::binary);
  if (!out) throw DataError("cannot write '" + (dir / "params.bin").string() + "'");
  out.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size() * sizeof(double)));
  write_json(dir / "rng.json", {{"state", rng.state}, {"step", rng.step}});
}

// Rebuilds the model from spec.json and overwrites every parameter with the
// stored values.
inline std::unique_ptr<Vae> load_model(const std::filesystem::path& dir,
                                       RngCheckpoint* rng = nullptr) {
  const ModelSpec spec = model_spec_from_json(read_json(dir / "spec.json"));
  auto model = std::make_unique<Vae>(spec, 0);
  const nlohmann::json manifest = read_json(dir / "params.json");
  const std::string bin = read_file((dir / "params.bin").string());
  const std::size_t total = manifest.at("total").get<std::size_t>();
  if (bin.size() != total * sizeof(double)) throw DataError("params.bin has the wrong size");
  const auto& entries = manifest.at("parameters");
  if (entries.size() != model->params().size()) {
    throw DataError("checkpoint parameter list does not match the model");
  }
  for (const auto& e : entries) {
    const auto name = e.at("name").get<std::string>();
    if (!model->params().contains(name)) throw DataError("unknown parameter '" + name + "'");
    Tensor t = model->params().at(name);
    const auto dims = t.shape().dims();
    if (e.at("shape").get<std::vector<std::size_t>>() !=
        std::vector<std::size_t>(dims.begin(), dims.end())) {
      throw DataError("parameter '" + name + "' has the wrong shape");
    }
    const std::size_t offset = e.at("offset").get<std::size_t>();
    if (offset + t.numel() > total) throw DataError("parameter '" + name + "' out of range");
    std::memcpy(t.mutable_data().data(), bin.data() + offset * sizeof(double),
                t.numel() * sizeof(double));
  }
  if (rng != nullptr) {
    const nlohmann::json r = read_json(dir / "rng.json");
    rng->state = r.at("state").get<std::string>();
    rng->step = r.at("step").get<std::uint64_t>();
  }
  return model;
}

}  // namespace tcvae
