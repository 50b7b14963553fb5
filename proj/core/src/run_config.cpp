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

#include "polypseg/run_config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "polypseg/error.hpp"
#include "polypseg/hash.hpp"

namespace polypseg {
namespace {

using json = nlohmann::ordered_json;

struct Field {
  std::string key;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename T>
T as(const json& value, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<std::int64_t>() >= 0)) {
        throw std::invalid_argument("expected a non-negative integer");
      }
    } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!value.is_number_integer()) throw std::invalid_argument("expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!value.is_number()) throw std::invalid_argument("expected a number");
    }
    return value.get<T>();
  } catch (const std::exception& e) {
    fail(ErrorKind::kConfig, "bad value for " + key + ": " + value.dump() + " (" + e.what() + ")");
  }
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    const auto add = [&f](std::string key, auto get, auto set) {
      f.push_back({std::move(key), std::move(get), std::move(set)});
    };
#define POLYPSEG_FIELD(KEY, TYPE, MEMBER)                                     \
  add(                                                                        \
      KEY, [](const RunConfig& c) { return json(c.MEMBER); },                 \
      [](RunConfig& c, const json& v) { c.MEMBER = as<TYPE>(v, KEY); })

    add(
        "dataset.root", [](const RunConfig& c) { return json(c.dataset_root.generic_string()); },
        [](RunConfig& c, const json& v) { c.dataset_root = as<std::string>(v, "dataset.root"); });
    POLYPSEG_FIELD("split.seed", std::uint64_t, split_seed);
    POLYPSEG_FIELD("preprocess.side", int, side);
    POLYPSEG_FIELD("augment.p_hflip", double, train.augment.p_hflip);
    POLYPSEG_FIELD("augment.p_vflip", double, train.augment.p_vflip);
    POLYPSEG_FIELD("augment.rot_degrees", double, train.augment.rot_degrees);
    POLYPSEG_FIELD("augment.scale_min", double, train.augment.scale_min);
    POLYPSEG_FIELD("augment.scale_max", double, train.augment.scale_max);
    POLYPSEG_FIELD("augment.seed", std::uint64_t, train.augment.seed);
    POLYPSEG_FIELD("model.in_channels", int, model.in_channels);
    POLYPSEG_FIELD("model.num_classes", int, model.num_classes);
    add(
        "model.encoder_widths", [](const RunConfig& c) { return json(c.model.encoder_widths); },
        [](RunConfig& c, const json& v) {
          if (!v.is_array()) fail(ErrorKind::kConfig, "model.encoder_widths must be an array of integers");
          std::vector<int> widths;
          for (const auto& w : v) widths.push_back(as<int>(w, "model.encoder_widths"));
          c.model.encoder_widths = std::move(widths);
        });
    POLYPSEG_FIELD("model.bottleneck_width", int, model.bottleneck_width);
    POLYPSEG_FIELD("model.conv_kernel", int, model.conv_kernel);
    POLYPSEG_FIELD("model.pool_factor", int, model.pool_factor);
    POLYPSEG_FIELD("model.seed", std::uint64_t, model.seed);
    POLYPSEG_FIELD("train.lr", double, train.lr);
    POLYPSEG_FIELD("train.max_epochs", int, train.max_epochs);
    POLYPSEG_FIELD("train.batch_size", int, train.batch_size);
    POLYPSEG_FIELD("train.early_stop_patience", int, train.early_stop_patience);
    add(
        "train.early_stop_metric", [](const RunConfig& c) { return json(train::to_string(c.train.early_stop_metric)); },
        [](RunConfig& c, const json& v) {
          c.train.early_stop_metric = train::parse_stop_metric(as<std::string>(v, "train.early_stop_metric"));
        });
    POLYPSEG_FIELD("train.seed", std::uint64_t, train.seed);
    POLYPSEG_FIELD("train.augmentation", bool, train.augmentation);
    POLYPSEG_FIELD("train.beta1", double, train.beta1);
    POLYPSEG_FIELD("train.beta2", double, train.beta2);
    POLYPSEG_FIELD("train.adam_eps", double, train.adam_eps);
    POLYPSEG_FIELD("train.dice_eps", double, train.dice_eps);
    add(
        "train.dice_mode",
        [](const RunConfig& c) {
          return json(c.train.dice_mode == metrics::DiceMode::kForeground ? "foreground" : "class_mean");
        },
        [](RunConfig& c, const json& v) {
          const auto mode = as<std::string>(v, "train.dice_mode");
          if (mode == "foreground") {
            c.train.dice_mode = metrics::DiceMode::kForeground;
          } else if (mode == "class_mean") {
            c.train.dice_mode = metrics::DiceMode::kClassMean;
          } else {
            fail(ErrorKind::kConfig, "train.dice_mode must be 'foreground' or 'class_mean'");
          }
        });
    add(
        "output.dir", [](const RunConfig& c) { return json(c.output_dir.generic_string()); },
        [](RunConfig& c, const json& v) { c.output_dir = as<std::string>(v, "output.dir"); });
#undef POLYPSEG_FIELD
    return f;
  }();
  return table;
}

const Field& field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  fail(ErrorKind::kConfig, "unknown config key: " + std::string(key));
}

void flatten(const nlohmann::json& node, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  if (node.is_object() && (prefix.empty() || !node.empty())) {
    for (auto it = node.begin(); it != node.end(); ++it) {
      flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    }
    return;
  }
  out.emplace_back(prefix, json(node));
}

void validate(const RunConfig& c) {
  if (c.side < 32) fail(ErrorKind::kConfig, "preprocess.side must be >= 32");
  c.model.validate();
  if (c.side % c.model.divisibility() != 0) {
    fail(ErrorKind::kConfig, "preprocess.side must be divisible by " + std::to_string(c.model.divisibility()));
  }
  c.train.validate();
}

}  // namespace

bool operator==(const RunConfig& a, const RunConfig& b) {
  return serialize_run_config(a) == serialize_run_config(b);
}

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

RunConfig parse_run_config(std::string_view json_text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(json_text.begin(), json_text.end(), nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kConfig, std::string("config parse error: ") + e.what());
  }
  if (!root.is_object()) fail(ErrorKind::kConfig, "config must be a JSON object");
  std::vector<std::pair<std::string, json>> items;
  flatten(root, "", items);

  RunConfig config;
  std::vector<std::string> seen;
  for (const auto& [key, value] : items) {
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) fail(ErrorKind::kConfig, "duplicate config key: " + key);
    seen.push_back(key);
    field(key).set(config, value);
  }
  validate(config);
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kConfig, "cannot read config file: " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

std::string serialize_run_config(const RunConfig& config) {
  json flat = json::object();
  for (const auto& f : fields()) flat[f.key] = f.get(config);
  return flat.dump(2) + "\n";
}

void apply_override(RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    fail(ErrorKind::kConfig, "override must look like key=value: " + std::string(assignment));
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  RunConfig updated = config;
  field(key).set(updated, value);
  validate(updated);
  config = std::move(updated);
}

std::string config_hash(const RunConfig& config) { return sha256_hex(serialize_run_config(config)); }

}  // namespace polypseg
