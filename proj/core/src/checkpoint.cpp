// Copyright 2026 The polypseg Authors.
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

#include "polypseg/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include <json.hpp>

#include "json_io.hpp"
#include "polypseg/error.hpp"
#include "polypseg/hash.hpp"

namespace polypseg::train {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'P', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void append_pod(std::string& out, const T& value) {
  out.append(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(const std::string& in, std::size_t offset) {
  T value;
  std::memcpy(&value, in.data() + offset, sizeof(T));
  return value;
}

[[noreturn]] void fail_corrupt(const std::filesystem::path& path, const std::string& why) {
  fail(ErrorKind::kIntegrity, "corrupt checkpoint " + path.string() + ": " + why);
}

struct TensorRecord {
  std::string name;
  const Tensor<float>* tensor;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const model::UNet<float>& model, const TrainingState& state) {
  const auto& params = model.parameters();
  std::vector<TensorRecord> records;
  for (const auto& p : params) records.push_back({"param/" + p.name, &p.value});
  if (!state.adam_m.empty()) {
    if (state.adam_m.size() != params.size() || state.adam_v.size() != params.size()) {
      fail(ErrorKind::kValidation, "optimizer moments do not match the parameter list");
    }
    for (std::size_t i = 0; i < params.size(); ++i) records.push_back({"adam_m/" + params[i].name, &state.adam_m[i]});
    for (std::size_t i = 0; i < params.size(); ++i) records.push_back({"adam_v/" + params[i].name, &state.adam_v[i]});
  }

  nlohmann::ordered_json header;
  header["format"] = "polypseg-checkpoint";
  header["model"] = detail::to_json(model.config());
  nlohmann::ordered_json st;
  st["epoch"] = state.epoch;
  st["best_metric"] = std::isfinite(state.best_metric) ? nlohmann::ordered_json(state.best_metric) : nullptr;
  st["best_epoch"] = state.best_epoch;
  st["epochs_since_improvement"] = state.epochs_since_improvement;
  st["optimizer_step"] = state.optimizer_step;
  header["state"] = st;
  std::uint64_t offset = 0;
  auto& index = header["tensors"] = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    const auto& s = r.tensor->shape();
    index.push_back({{"name", r.name}, {"shape", {s[0], s[1], s[2], s[3]}}, {"offset", offset}, {"count", r.tensor->size()}});
    offset += r.tensor->size();
  }
  const std::string header_text = header.dump();

  std::string blob;
  blob.append(kMagic, sizeof(kMagic));
  append_pod(blob, kVersion);
  append_pod(blob, static_cast<std::uint64_t>(header_text.size()));
  blob += header_text;
  for (const auto& r : records) {
    blob.append(reinterpret_cast<const char*>(r.tensor->data()), r.tensor->size() * sizeof(float));
  }
  const Sha256Digest digest = sha256(blob);
  blob.append(reinterpret_cast<const char*>(digest.data()), digest.size());

  // Write to a sibling temp file, then rename, so readers never see a torn file.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::kIo, "cannot write checkpoint: " + path.string());
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) fail(ErrorKind::kIo, "cannot write checkpoint: " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::kIo, "cannot write checkpoint: " + path.string() + ": " + ec.message());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open checkpoint: " + path.string());
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto corrupt = [&path](const std::string& why) { fail_corrupt(path, why); };

  constexpr std::size_t kFixed = sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (blob.size() < kFixed + 32) corrupt("file too short");
  if (std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0) corrupt("bad magic");
  const std::size_t body = blob.size() - 32;
  const Sha256Digest digest = sha256(std::string_view(blob.data(), body));
  if (std::memcmp(digest.data(), blob.data() + body, 32) != 0) corrupt("checksum mismatch (truncated or modified)");
  if (read_pod<std::uint32_t>(blob, sizeof(kMagic)) != kVersion) corrupt("unsupported version");
  const auto header_size = read_pod<std::uint64_t>(blob, sizeof(kMagic) + sizeof(std::uint32_t));
  if (header_size > body - kFixed) corrupt("header overruns file");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.begin() + kFixed, blob.begin() + kFixed + static_cast<std::ptrdiff_t>(header_size));
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("header: ") + e.what());
  }
  const std::size_t payload = kFixed + header_size;
  const std::size_t payload_floats = (body - payload) / sizeof(float);

  try {
    model::UNet<float> model(detail::unet_config_from_json(header.at("model")));
    TrainingState state;
    const auto& st = header.at("state");
    state.epoch = st.at("epoch").get<int>();
    state.best_metric = st.at("best_metric").is_null() ? std::nan("") : st.at("best_metric").get<double>();
    state.best_epoch = st.at("best_epoch").get<int>();
    state.epochs_since_improvement = st.at("epochs_since_improvement").get<int>();
    state.optimizer_step = st.at("optimizer_step").get<std::uint64_t>();

    std::map<std::string, Tensor<float>> tensors;
    for (const auto& item : header.at("tensors")) {
      const auto shape = item.at("shape").get<std::array<int, 4>>();
      const auto offset = item.at("offset").get<std::uint64_t>();
      const auto count = item.at("count").get<std::uint64_t>();
      Tensor<float> t(shape[0], shape[1], shape[2], shape[3]);
      if (t.size() != count || offset + count > payload_floats) corrupt("tensor index out of range");
      std::memcpy(t.data(), blob.data() + payload + offset * sizeof(float), count * sizeof(float));
      tensors.emplace(item.at("name").get<std::string>(), std::move(t));
    }

    auto take = [&](const std::string& key, const Tensor<float>& like) -> Tensor<float> {
      auto it = tensors.find(key);
      if (it == tensors.end()) fail_corrupt(path, "missing tensor " + key);
      if (!it->second.same_shape(like)) fail_corrupt(path, "shape mismatch for " + key);
      return std::move(it->second);
    };
    for (auto& p : model.parameters()) p.value = take("param/" + p.name, p.value);
    if (tensors.contains("adam_m/" + model.parameters().front().name)) {
      for (const auto& p : model.parameters()) state.adam_m.push_back(take("adam_m/" + p.name, p.value));
      for (const auto& p : model.parameters()) state.adam_v.push_back(take("adam_v/" + p.name, p.value));
    }
    return {std::move(model), std::move(state)};
  } catch (const nlohmann::json::exception& e) {
    fail_corrupt(path, std::string("header: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kConfig) fail_corrupt(path, e.what());
    throw;
  }
}

}  // namespace polypseg::train
