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

#pragma once

#include <map>
#include <string>
#include <vector>

#include "polypseg/dataset.hpp"
#include "polypseg/preprocess.hpp"

namespace polypseg {

/// Lazily loads samples by id and keeps the resized 8-bit pair in memory;
/// normalization and one-hot expansion happen on every get().
class SampleStore {
 public:
  SampleStore(data::DatasetManifest manifest, int side);
  /// In-memory samples (resized on insertion).
  SampleStore(std::vector<data::RawSample> samples, int side);

  int side() const { return side_; }
  /// Throws Error{kLookup} for ids not in the manifest, and kIo when the
  /// files for that id cannot be read.
  preprocess::ProcessedSample get(const std::string& id);
  const data::RawSample& raw(const std::string& id);
  bool contains(const std::string& id) const;
  std::vector<std::string> ids() const;

 private:
  data::DatasetManifest manifest_;
  int side_;
  std::map<std::string, data::RawSample> cache_;
  bool in_memory_ = false;
};

}  // namespace polypseg
