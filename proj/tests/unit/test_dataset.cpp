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

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <set>

#include "polypseg/dataset.hpp"
#include "polypseg/error.hpp"
#include "test_util.hpp"

namespace polypseg {
namespace {

namespace fs = std::filesystem;

data::DatasetManifest manifest_of(std::size_t n) {
  data::DatasetManifest m;
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "img_%05zu", i);
    m.entries.push_back({id, {}, {}});
  }
  m.checksum = data::ids_checksum(m.ids());
  return m;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::kNumeric;
}

TEST(SplitSizes, KvasirSizes) {
  const auto s = data::split_sizes(1000);
  EXPECT_EQ(s.train, 792u);
  EXPECT_EQ(s.val, 88u);
  EXPECT_EQ(s.test, 120u);
}

TEST(SplitSizes, TenEntries) {
  const auto s = data::split_sizes(10);
  EXPECT_EQ(s.train, 9u);
  EXPECT_EQ(s.val, 0u);
  EXPECT_EQ(s.test, 1u);
  const auto split = data::split_manifest(manifest_of(10), 0);
  EXPECT_TRUE(std::find(split.warnings.begin(), split.warnings.end(), "val split is empty") != split.warnings.end());
}

TEST(Split, TooFewEntries) {
  EXPECT_EQ(kind_of([] { data::split_manifest(manifest_of(2), 0); }), ErrorKind::kPrecondition);
}

TEST(SplitProperty, PartitionAndDeterminism) {
  for (std::size_t n = 3; n <= 2000; n += (n < 100 ? 1 : 37)) {
    const auto m = manifest_of(n);
    const auto a = data::split_manifest(m, 17);
    const auto b = data::split_manifest(m, 17);
    ASSERT_EQ(a.train, b.train);
    ASSERT_EQ(a.val, b.val);
    ASSERT_EQ(a.test, b.test);
    const auto sizes = data::split_sizes(n);
    ASSERT_EQ(a.train.size(), sizes.train);
    ASSERT_EQ(a.val.size(), sizes.val);
    ASSERT_EQ(a.test.size(), sizes.test);
    std::set<std::string> all(a.train.begin(), a.train.end());
    all.insert(a.val.begin(), a.val.end());
    all.insert(a.test.begin(), a.test.end());
    ASSERT_EQ(all.size(), n) << "overlap or loss at n=" << n;
  }
}

TEST(Split, SeedChangesAssignment) {
  const auto m = manifest_of(200);
  EXPECT_NE(data::split_manifest(m, 1).test, data::split_manifest(m, 2).test);
}

TEST(Split, IndependentOfEntryOrder) {
  auto m = manifest_of(50);
  const auto a = data::split_manifest(m, 3);
  std::reverse(m.entries.begin(), m.entries.end());
  EXPECT_EQ(data::split_manifest(m, 3).test, a.test);
}

TEST(SplitFile, RoundTrip) {
  const auto split = data::split_manifest(manifest_of(40), 9);
  const auto parsed = data::parse_split(data::format_split(split));
  EXPECT_EQ(parsed.train, split.train);
  EXPECT_EQ(parsed.val, split.val);
  EXPECT_EQ(parsed.test, split.test);
  EXPECT_EQ(parsed.seed, split.seed);
  EXPECT_EQ(parsed.manifest_checksum, split.manifest_checksum);

  testing::TempDir dir("split");
  data::write_split_file(dir / "split.txt", split);
  EXPECT_EQ(data::read_split_file(dir / "split.txt").test, split.test);
}

TEST(SplitFile, RejectsUnknownSection) {
  EXPECT_EQ(kind_of([] { data::parse_split("[train]\na\n[bogus]\nb\n"); }), ErrorKind::kValidation);
}

TEST(Binarize, ThresholdAndIdempotence) {
  ImageU8 gray(1, 4, 1);
  gray.data = {0, 127, 128, 255};
  const Mask m = data::binarize_mask(gray);
  EXPECT_EQ(m.data, (std::vector<std::uint8_t>{0, 0, 1, 1}));
  EXPECT_EQ(data::binarize_mask(m), m);
}

TEST(BinarizeProperty, IdempotentOnRandomGray) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    ImageU8 gray(6, 6, 1);
    for (auto& v : gray.data) v = static_cast<std::uint8_t>(rng.below(256));
    const Mask once = data::binarize_mask(gray);
    ASSERT_TRUE(is_binary(once));
    ASSERT_EQ(data::binarize_mask(once), once);
  }
}

TEST(Scan, MissingDirectoryIsStructural) {
  testing::TempDir dir("scan_missing");
  fs::create_directories(dir / "images");
  EXPECT_EQ(kind_of([&] { data::scan_dataset(dir.path()); }), ErrorKind::kStructural);
}

TEST(Scan, EmptyDatasetIsValidation) {
  testing::TempDir dir("scan_empty");
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  EXPECT_EQ(kind_of([&] { data::scan_dataset(dir.path()); }), ErrorKind::kValidation);
}

TEST(Scan, UnpairedStemsListed) {
  testing::TempDir dir("scan_unpaired");
  data::SyntheticOptions opts;
  opts.count = 3;
  opts.size = 32;
  data::generate_synthetic(opts, dir.path());
  fs::remove(dir / "masks/synth_00001.png");
  try {
    data::scan_dataset(dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kValidation);
    EXPECT_NE(std::string(e.what()).find("synth_00001"), std::string::npos);
  }
}

TEST(Synthetic, WritesLoadableDataset) {
  testing::TempDir dir("synth");
  data::SyntheticOptions opts;
  opts.count = 5;
  opts.size = 48;
  opts.seed = 4;
  const auto manifest = data::generate_synthetic(opts, dir.path());
  ASSERT_EQ(manifest.size(), 5u);
  const auto scanned = data::scan_dataset(dir.path());
  EXPECT_EQ(scanned.checksum, manifest.checksum);
  const auto sample = data::load_sample(scanned.entries[2]);
  EXPECT_EQ(sample.image.height, 48);
  EXPECT_EQ(sample.image.channels, 3);
  EXPECT_TRUE(is_binary(sample.mask));
  // PNG is lossless, so the decoded pair equals the rendered one.
  const auto rendered = data::render_synthetic(48, 4, 2);
  EXPECT_EQ(sample.image, rendered.image);
  EXPECT_EQ(sample.mask, rendered.mask);
}

TEST(SyntheticProperty, ForegroundFractionBounds) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = data::render_synthetic(64, seed, 0);
    const double fg = static_cast<double>(std::count(s.mask.data.begin(), s.mask.data.end(), 1)) /
                      static_cast<double>(s.mask.pixels());
    ASSERT_GE(fg, 0.03) << "seed " << seed;
    ASSERT_LE(fg, 0.45) << "seed " << seed;
  }
}

TEST(Synthetic, Deterministic) {
  EXPECT_EQ(data::render_synthetic(64, 5, 3).image, data::render_synthetic(64, 5, 3).image);
  EXPECT_NE(data::render_synthetic(64, 5, 3).image, data::render_synthetic(64, 6, 3).image);
}

TEST(Synthetic, RejectsBadOptions) {
  testing::TempDir dir("synth_bad");
  data::SyntheticOptions opts;
  opts.count = 0;
  EXPECT_EQ(kind_of([&] { data::generate_synthetic(opts, dir.path()); }), ErrorKind::kPrecondition);
}

TEST(LoadSample, ExtentMismatchIsValidation) {
  testing::TempDir dir("mismatch");
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  write_image(dir / "images/a.png", ImageU8(8, 8, 3, 10));
  write_image(dir / "masks/a.png", ImageU8(8, 9, 1, 255));
  const auto manifest = data::scan_dataset(dir.path());
  EXPECT_EQ(kind_of([&] { data::load_sample(manifest.entries[0]); }), ErrorKind::kValidation);
}

TEST(LoadSample, JpegMaskIsBinarized) {
  testing::TempDir dir("jpeg");
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  ImageU8 mask(16, 16, 1, 0);
  for (int y = 4; y < 12; ++y) {
    for (int x = 4; x < 12; ++x) mask.at(y, x) = 255;
  }
  write_image(dir / "images/a.jpg", ImageU8(16, 16, 3, 90));
  write_image(dir / "masks/a.jpg", mask);
  const auto sample = data::load_sample(data::scan_dataset(dir.path()).entries[0]);
  EXPECT_TRUE(is_binary(sample.mask));
  EXPECT_EQ(sample.mask.at(8, 8), 1);
  EXPECT_EQ(sample.mask.at(0, 0), 0);
}

}  // namespace
}  // namespace polypseg
