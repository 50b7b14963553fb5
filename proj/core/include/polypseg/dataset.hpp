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

// Kvasir-SEG style dataset discovery, splitting, loading, and a synthetic
// generator that writes the same on-disk layout:
//
//   <root>/images/<id>.{jpg,png}
//   <root>/masks/<id>.{jpg,png}

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "polypseg/image.hpp"

namespace polypseg::data {

struct ManifestEntry {
  std::string id;
  std::filesystem::path image_path;
  std::filesystem::path mask_path;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;  // sorted by id
  std::string checksum;                // SHA-256 hex of the sorted id list

  std::size_t size() const { return entries.size(); }
  const ManifestEntry& find(const std::string& id) const;
  std::vector<std::string> ids() const;
};

struct SplitTriple {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
  std::string manifest_checksum;
  std::vector<std::string> warnings;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

struct RawSample {
  std::string id;
  ImageU8 image;  // H x W x 3, RGB
  Mask mask;      // H x W, {0, 1}
};

/// Checksum used to pin a manifest: SHA-256 over the ids joined by '\n'.
std::string ids_checksum(const std::vector<std::string>& sorted_ids);

/// Builds a manifest from `<root>/images` and `<root>/masks`.
/// Throws kStructural when either directory is missing and kValidation when
/// the directory is empty or stems do not pair up (all offenders listed).
DatasetManifest scan_dataset(const std::filesystem::path& root);

/// Floor rule: test = floor(0.12 N), val = floor(0.10 (N - test)), rest train.
SplitSizes split_sizes(std::size_t n);

/// Seeded shuffle of the lexicographically ordered ids, then cut by
/// split_sizes(). Throws kPrecondition when the manifest has fewer than
/// three entries; empty splits produce a warning in SplitTriple::warnings.
SplitTriple split_manifest(const DatasetManifest& manifest, std::uint64_t seed);

/// Split file: header comments with seed and checksum, then [train], [val]
/// and [test] sections with one id per line.
std::string format_split(const SplitTriple& split);
SplitTriple parse_split(const std::string& text);
void write_split_file(const std::filesystem::path& path, const SplitTriple& split);
SplitTriple read_split_file(const std::filesystem::path& path);

/// Mask values above this become foreground.
inline constexpr std::uint8_t kMaskThreshold = 127;

/// Maps 8-bit gray values to {0,1} with `value > 127`. An image whose values
/// are all in {0,1} is treated as already binarized and returned as is, which
/// makes the operation idempotent.
Mask binarize_mask(const ImageU8& gray);

/// Decodes image (RGB) and mask (grayscale, binarized). kIo on decode
/// failure, kValidation when the two extents differ.
RawSample load_sample(const ManifestEntry& entry);

struct SyntheticOptions {
  std::size_t count = 16;
  int size = 128;
  std::uint64_t seed = 0;
  double min_foreground = 0.03;
  double max_foreground = 0.45;
};

/// Renders a textured background with one to three elliptical lesions and
/// writes PNG image/mask pairs named `synth_%05d`. Output is a pure function
/// of the options. Throws kPrecondition for count == 0 or size < 32 and kIo
/// when the output directory cannot be written.
DatasetManifest generate_synthetic(const SyntheticOptions& options, const std::filesystem::path& out);

/// In-memory variant used by tests and the generator itself.
RawSample render_synthetic(int size, std::uint64_t seed, std::size_t index,
                           double min_foreground = 0.03, double max_foreground = 0.45);

}  // namespace polypseg::data
