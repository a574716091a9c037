#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lskd/dataset.hpp"
#include "lskd/training.hpp"

namespace lskd {

// Flat key=value configuration with a closed key set: unknown keys are
// rejected at parse time so typos fail loudly instead of silently using a
// default. '#' lines are comments; later set() calls overwrite.
class Config {
 public:
  Config() = default;

  void load_file(const std::string& path);
  void load_text(const std::string& text, const std::string& origin);

  // Single override, "key=value" form or split; rejects unknown keys.
  void set_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;
  std::vector<std::uint64_t> get_u64_list(const std::string& key,
                                          const std::vector<std::uint64_t>& fallback) const;
  std::vector<std::size_t> get_size_list(const std::string& key,
                                         const std::vector<std::size_t>& fallback) const;

  // Canonical "key=value\n" dump of the resolved entries, sorted by key.
  std::string canonical() const;
  std::uint64_t hash() const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

GenerationConfig generation_config_from(const Config& cfg);
TrainConfig train_config_from(const Config& cfg);

struct ModelSettings {
  std::size_t hidden_dim = 64;
  std::size_t repr_dim = 32;
  double init_scale = 1.0;
  std::string init_checkpoint;  // optional path; empty means fresh init
};

ModelSettings model_settings_from(const Config& cfg);

}  // namespace lskd
