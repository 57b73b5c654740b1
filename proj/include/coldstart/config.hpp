#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "coldstart/bpmf.hpp"
#include "coldstart/bundle.hpp"

namespace coldstart {

struct ConfigKey {
  std::string name;
  nlohmann::json default_value;
  std::string description;
  bool affects_artifacts = true;  // part of the run-directory or model-directory hash
};

// Every recognised key, in help order.
const std::vector<ConfigKey>& config_keys();

// Flat key/value configuration. Files may nest objects ({"train": {"k": 4}})
// or use dotted keys ("train.k"); both resolve to the same key.
class Config {
 public:
  Config();

  // Throws ConfigError for unknown keys or values of the wrong type.
  void merge_file(const std::filesystem::path& path);
  void merge_json(const nlohmann::json& document);
  void set(const std::string& key, const nlohmann::json& value);
  // Parses `text` according to the key's type.
  void set_text(const std::string& key, const std::string& text);
  // "key=value" form used by --set.
  void set_assignment(const std::string& assignment);

  const nlohmann::json& get(const std::string& key) const;
  std::string get_string(const std::string& key) const { return get(key).get<std::string>(); }
  int get_int(const std::string& key) const { return get(key).get<int>(); }
  double get_double(const std::string& key) const { return get(key).get<double>(); }
  std::uint64_t seed() const { return get("seed").get<std::uint64_t>(); }

  TrainConfig train_config() const;
  BpmfConfig bpmf_config() const;

  // Short hex digests of the artifact-affecting keys: pipeline_hash covers
  // data, split and BPMF keys, training_hash the train.* keys and the seed.
  std::string pipeline_hash() const;
  std::string training_hash() const;
  nlohmann::json to_json() const;

 private:
  nlohmann::json values_;
};

// One line per key: name, default, description.
std::string config_help();

}  // namespace coldstart
