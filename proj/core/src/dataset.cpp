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

#include "polypseg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "polypseg/error.hpp"
#include "polypseg/hash.hpp"
#include "polypseg/rng.hpp"

namespace polypseg::data {
namespace fs = std::filesystem;

namespace {

bool is_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

// stem -> path for every image file directly under `dir`.
std::map<std::string, fs::path> list_stems(const fs::path& dir, std::vector<std::string>& duplicates) {
  std::map<std::string, fs::path> stems;
  for (const auto& item : fs::directory_iterator(dir)) {
    if (!item.is_regular_file() || !is_image_extension(item.path())) continue;
    const std::string stem = item.path().stem().string();
    if (!stems.emplace(stem, item.path()).second) duplicates.push_back(stem);
  }
  return stems;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += ", ";
    out += s;
  }
  return out;
}

}  // namespace

const ManifestEntry& DatasetManifest::find(const std::string& id) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), id,
                             [](const ManifestEntry& e, const std::string& key) { return e.id < key; });
  if (it == entries.end() || it->id != id) fail(ErrorKind::kLookup, "id not in manifest: " + id);
  return *it;
}

std::vector<std::string> DatasetManifest::ids() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.id);
  return out;
}

std::string ids_checksum(const std::vector<std::string>& sorted_ids) {
  std::string joined;
  for (const auto& id : sorted_ids) {
    joined += id;
    joined += '\n';
  }
  return sha256_hex(joined);
}

DatasetManifest scan_dataset(const fs::path& root) {
  const fs::path image_dir = root / "images";
  const fs::path mask_dir = root / "masks";
  for (const auto& dir : {image_dir, mask_dir}) {
    if (!fs::is_directory(dir)) fail(ErrorKind::kStructural, "missing dataset directory: " + dir.string());
  }

  std::vector<std::string> duplicates;
  const auto images = list_stems(image_dir, duplicates);
  const auto masks = list_stems(mask_dir, duplicates);
  if (!duplicates.empty()) {
    fail(ErrorKind::kValidation, "ambiguous stems with several extensions: " + join(duplicates));
  }
  if (images.empty()) fail(ErrorKind::kValidation, "no images found under " + image_dir.string());

  std::vector<std::string> unmatched_images, unmatched_masks;
  for (const auto& [stem, path] : images) {
    if (!masks.contains(stem)) unmatched_images.push_back(stem);
  }
  for (const auto& [stem, path] : masks) {
    if (!images.contains(stem)) unmatched_masks.push_back(stem);
  }
  if (!unmatched_images.empty() || !unmatched_masks.empty()) {
    std::string msg = "unpaired dataset files;";
    if (!unmatched_images.empty()) msg += " images without mask: [" + join(unmatched_images) + "]";
    if (!unmatched_masks.empty()) msg += " masks without image: [" + join(unmatched_masks) + "]";
    fail(ErrorKind::kValidation, msg);
  }

  DatasetManifest manifest;
  manifest.root = root;
  for (const auto& [stem, path] : images) manifest.entries.push_back({stem, path, masks.at(stem)});
  // std::map iteration is already lexicographic by stem.
  manifest.checksum = ids_checksum(manifest.ids());
  return manifest;
}

SplitSizes split_sizes(std::size_t n) {
  SplitSizes s;
  s.test = (n * 12) / 100;
  const std::size_t pool = n - s.test;
  s.val = (pool * 10) / 100;
  s.train = pool - s.val;
  return s;
}

SplitTriple split_manifest(const DatasetManifest& manifest, std::uint64_t seed) {
  const std::size_t n = manifest.size();
  if (n < 3) fail(ErrorKind::kPrecondition, "split needs at least 3 entries, got " + std::to_string(n));

  std::vector<std::string> ids = manifest.ids();
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  rng.shuffle(std::span<std::string>(ids));

  const SplitSizes sizes = split_sizes(n);
  SplitTriple split;
  split.seed = seed;
  split.manifest_checksum = manifest.checksum;
  auto it = ids.begin();
  split.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes.train));
  it += static_cast<std::ptrdiff_t>(sizes.train);
  split.val.assign(it, it + static_cast<std::ptrdiff_t>(sizes.val));
  it += static_cast<std::ptrdiff_t>(sizes.val);
  split.test.assign(it, ids.end());

  if (split.train.empty()) split.warnings.push_back("train split is empty");
  if (split.val.empty()) split.warnings.push_back("val split is empty");
  if (split.test.empty()) split.warnings.push_back("test split is empty");
  return split;
}

std::string format_split(const SplitTriple& split) {
  std::ostringstream out;
  out << "# polypseg split\n";
  out << "# seed: " << split.seed << "\n";
  out << "# manifest_checksum: " << split.manifest_checksum << "\n";
  const auto section = [&out](const char* name, const std::vector<std::string>& ids) {
    out << "[" << name << "]\n";
    for (const auto& id : ids) out << id << "\n";
  };
  section("train", split.train);
  section("val", split.val);
  section("test", split.test);
  return out.str();
}

SplitTriple parse_split(const std::string& text) {
  SplitTriple split;
  std::istringstream in(text);
  std::string line;
  std::vector<std::string>* current = nullptr;
  std::set<std::string> seen_sections;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      std::string key = line.substr(1, colon - 1);
      std::string value = line.substr(colon + 1);
      key.erase(0, key.find_first_not_of(' '));
      value.erase(0, value.find_first_not_of(' '));
      if (key == "seed") split.seed = std::stoull(value);
      if (key == "manifest_checksum") split.manifest_checksum = value;
      continue;
    }
    if (line == "[train]") {
      current = &split.train;
    } else if (line == "[val]") {
      current = &split.val;
    } else if (line == "[test]") {
      current = &split.test;
    } else if (line.front() == '[') {
      fail(ErrorKind::kValidation, "unknown split section on line " + std::to_string(line_no) + ": " + line);
    } else {
      if (current == nullptr) fail(ErrorKind::kValidation, "id outside of a section on line " + std::to_string(line_no));
      current->push_back(line);
      continue;
    }
    if (!seen_sections.insert(line).second) fail(ErrorKind::kValidation, "duplicate split section " + line);
  }
  if (seen_sections.size() != 3) fail(ErrorKind::kValidation, "split file must contain [train], [val] and [test]");
  return split;
}

void write_split_file(const fs::path& path, const SplitTriple& split) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write split file: " + path.string());
  out << format_split(split);
  if (!out) fail(ErrorKind::kIo, "cannot write split file: " + path.string());
}

SplitTriple read_split_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot read split file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_split(buffer.str());
}

Mask binarize_mask(const ImageU8& gray) {
  if (gray.channels != 1) fail(ErrorKind::kValidation, "mask must be single-channel");
  // A mask already coded as {0,1} passes through unchanged.
  if (is_binary(gray)) return gray;
  Mask out(gray.height, gray.width, 1);
  std::transform(gray.data.begin(), gray.data.end(), out.data.begin(),
                 [](std::uint8_t v) { return static_cast<std::uint8_t>(v > kMaskThreshold ? 1 : 0); });
  return out;
}

RawSample load_sample(const ManifestEntry& entry) {
  RawSample sample;
  sample.id = entry.id;
  sample.image = read_image(entry.image_path, 3);
  sample.mask = binarize_mask(read_image(entry.mask_path, 1));
  if (!sample.mask.same_extent(sample.image.height, sample.image.width)) {
    fail(ErrorKind::kValidation, "image/mask size mismatch for " + entry.id + ": " +
                                     std::to_string(sample.image.height) + "x" + std::to_string(sample.image.width) +
                                     " vs " + std::to_string(sample.mask.height) + "x" +
                                     std::to_string(sample.mask.width));
  }
  return sample;
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

struct Ellipse {
  double cx, cy, a, b, angle;

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (c * dx + s * dy) / a;
    const double v = (-s * dx + c * dy) / b;
    return u * u + v * v <= 1.0;
  }
};

std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

RawSample render_synthetic(int size, std::uint64_t seed, std::size_t index, double min_foreground,
                           double max_foreground) {
  if (size < 32) fail(ErrorKind::kPrecondition, "synthetic image size must be >= 32");
  Rng rng(derive_seed(seed, index));
  const double s = size;

  // Lesion layout: redraw until the foreground fraction is in range.
  std::vector<Ellipse> blobs;
  Mask mask = make_mask(size, size);
  for (int attempt = 0;; ++attempt) {
    if (attempt > 1000) fail(ErrorKind::kValidation, "could not place lesions within the foreground bounds");
    blobs.clear();
    const int count = 1 + static_cast<int>(rng.below(3));
    for (int k = 0; k < count; ++k) {
      Ellipse e;
      e.a = rng.uniform(0.07, 0.26) * s;
      e.b = e.a * rng.uniform(0.6, 1.0);
      e.cx = rng.uniform(0.2, 0.8) * s;
      e.cy = rng.uniform(0.2, 0.8) * s;
      e.angle = rng.uniform(0.0, 3.141592653589793);
      blobs.push_back(e);
    }
    std::size_t fg = 0;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        bool inside = false;
        for (const auto& e : blobs) inside = inside || e.contains(x + 0.5, y + 0.5);
        mask.at(y, x) = inside ? 1 : 0;
        fg += inside;
      }
    }
    const double fraction = static_cast<double>(fg) / mask.pixels();
    if (fraction >= min_foreground && fraction <= max_foreground) break;
  }

  // Mucosa-like background: warm base colour, slow illumination gradient,
  // a couple of darker folds, and fine noise.
  const double base_r = rng.uniform(190, 230), base_g = rng.uniform(110, 150), base_b = rng.uniform(90, 120);
  const double light_fx = rng.uniform(0.5, 2.0), light_fy = rng.uniform(0.5, 2.0), light_phase = rng.uniform(0, 6.28);
  const double fold_freq = rng.uniform(3.0, 6.0), fold_phase = rng.uniform(0, 6.28), fold_tilt = rng.uniform(-1, 1);
  // Lesion: darker red with a mottled high-frequency texture.
  const double les_r = rng.uniform(140, 175), les_g = rng.uniform(45, 75), les_b = rng.uniform(55, 85);
  const double tex_f = rng.uniform(0.35, 0.6), tex_phase = rng.uniform(0, 6.28);

  data::RawSample sample;
  sample.image = ImageU8(size, size, 3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double u = x / s, v = y / s;
      const double light = 0.85 + 0.15 * std::sin(6.28 * (light_fx * u + light_fy * v) + light_phase);
      const double fold = std::sin(6.28 * fold_freq * (v + fold_tilt * u) + fold_phase);
      const double fold_dark = fold > 0.92 ? 0.75 : 1.0;
      double r, g, b;
      if (mask.at(y, x)) {
        const double tex = 0.5 + 0.5 * std::sin(tex_f * x + tex_phase) * std::cos(tex_f * y - tex_phase);
        const double m = 0.8 + 0.3 * tex;
        r = les_r * m;
        g = les_g * m;
        b = les_b * m;
      } else {
        r = base_r * fold_dark;
        g = base_g * fold_dark;
        b = base_b * fold_dark;
      }
      const double noise = 6.0 * rng.normal();
      sample.image.at(y, x, 0) = clamp_u8(r * light + noise);
      sample.image.at(y, x, 1) = clamp_u8(g * light + noise);
      sample.image.at(y, x, 2) = clamp_u8(b * light + noise);
    }
  }
  char name[32];
  std::snprintf(name, sizeof(name), "synth_%05zu", index);
  sample.id = name;
  sample.mask = std::move(mask);
  return sample;
}

DatasetManifest generate_synthetic(const SyntheticOptions& options, const fs::path& out) {
  if (options.count == 0) fail(ErrorKind::kPrecondition, "synthetic dataset needs n >= 1");
  if (options.size < 32) fail(ErrorKind::kPrecondition, "synthetic image size must be >= 32");
  if (!(options.min_foreground >= 0 && options.min_foreground < options.max_foreground &&
        options.max_foreground <= 1)) {
    fail(ErrorKind::kPrecondition, "invalid foreground bounds");
  }
  std::error_code ec;
  fs::create_directories(out / "images", ec);
  if (!ec) fs::create_directories(out / "masks", ec);
  if (ec) fail(ErrorKind::kIo, "cannot create synthetic dataset under " + out.string() + ": " + ec.message());

  for (std::size_t i = 0; i < options.count; ++i) {
    const RawSample sample =
        render_synthetic(options.size, options.seed, i, options.min_foreground, options.max_foreground);
    write_image(out / "images" / (sample.id + ".png"), sample.image);
    write_image(out / "masks" / (sample.id + ".png"), mask_to_gray(sample.mask));
  }
  return scan_dataset(out);
}

}  // namespace polypseg::data
