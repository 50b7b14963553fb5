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

#include "polypseg/sample_store.hpp"

#include "polypseg/error.hpp"

namespace polypseg {

SampleStore::SampleStore(data::DatasetManifest manifest, int side) : manifest_(std::move(manifest)), side_(side) {}

SampleStore::SampleStore(std::vector<data::RawSample> samples, int side) : side_(side), in_memory_(true) {
  for (auto& s : samples) {
    std::string id = s.id;
    cache_.insert_or_assign(id, preprocess::resize_pair(s, side));
  }
}

bool SampleStore::contains(const std::string& id) const {
  if (in_memory_) return cache_.contains(id);
  try {
    manifest_.find(id);
    return true;
  } catch (const Error&) {
    return false;
  }
}

std::vector<std::string> SampleStore::ids() const {
  if (!in_memory_) return manifest_.ids();
  std::vector<std::string> out;
  for (const auto& [id, sample] : cache_) out.push_back(id);
  return out;
}

const data::RawSample& SampleStore::raw(const std::string& id) {
  if (auto it = cache_.find(id); it != cache_.end()) return it->second;
  if (in_memory_) fail(ErrorKind::kLookup, "unknown sample id: " + id);
  const data::ManifestEntry& entry = manifest_.find(id);
  auto [it, inserted] = cache_.emplace(id, preprocess::resize_pair(data::load_sample(entry), side_));
  return it->second;
}

preprocess::ProcessedSample SampleStore::get(const std::string& id) {
  const data::RawSample& sample = raw(id);
  preprocess::ProcessedSample out;
  out.id = sample.id;
  out.image = preprocess::normalize(sample.image);
  out.mask = sample.mask;
  out.onehot = preprocess::one_hot(sample.mask);
  return out;
}

}  // namespace polypseg
