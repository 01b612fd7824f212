#pragma once

#include <map>
#include <string>
#include <vector>

#include "czproxy/model.hpp"
#include "czproxy/trainer.hpp"
#include "czproxy/world.hpp"

namespace czp {

// Flat key = value configuration. One namespace of keys shared by the config
// file, CLI flags (flag beats file beats default) and checkpoint echoes, so
// there is no hidden configuration anywhere.
struct KVConfig {
  std::map<std::string, std::string> entries;

  static KVConfig load_file(const std::string& path);

  bool has(const std::string& key) const { return entries.count(key) != 0; }
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Later entries win.
  void merge(const KVConfig& overrides);
  // Rejects keys outside the known set.
  void validate_keys() const;

  std::string to_string() const;
};

const std::vector<std::string>& known_config_keys();

ModelConfig model_config_from_kv(const KVConfig& kv);
TrainConfig train_config_from_kv(const KVConfig& kv);
SyntheticWorldConfig world_config_from_kv(const KVConfig& kv);
KVConfig kv_from_configs(const ModelConfig& mc, const TrainConfig& tc);

std::string format_double(double v);  // lossless round-trip text

}  // namespace czp
