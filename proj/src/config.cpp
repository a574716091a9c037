#include "lskd/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "lskd/util.hpp"

namespace lskd {
namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "gen.num_foreground",
      "gen.zipf_exponent",
      "gen.feature_dim",
      "gen.num_contexts",
      "gen.instances_min",
      "gen.instances_max",
      "gen.p_miss",
      "gen.noise_sigma",
      "gen.dirichlet_concentration",
      "gen.image_size",
      "gen.num_object_categories",
      "gen.train_fraction",
      "gen.val_fraction",
      "gen.test_fraction",
      "gen.seed",
      "dataset.path",
      "model.hidden_dim",
      "model.repr_dim",
      "model.init_scale",
      "model.init_checkpoint",
      "train.strategy",
      "train.alpha",
      "train.tau",
      "train.batch_size",
      "train.lr",
      "train.decay_factor",
      "train.max_decays",
      "train.plateau_patience",
      "train.interval_epochs",
      "train.max_epochs",
      "train.seed",
      "train.parallel",
      "train.syn_detach_teacher",
      "train.syn_teacher_weight",
      "train.syn_student_weight",
      "eval.ks",
      "sweep.alpha",
      "sweep.tau",
      "sweep.interval",
      "sweep.seeds",
      "report.eval",
      "report.baseline",
      "report.sweep_csv",
      "report.sweep_axis",
      "out",
  };
  return keys;
}

void require_known(const std::string& key, const std::string& where) {
  if (known_keys().count(key) == 0) {
    throw std::invalid_argument("config: unknown key '" + key + "'" + where);
  }
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double parsed = 0.0;
  try {
    parsed = std::stod(value, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + value + "'");
  }
  if (used != value.size() || !std::isfinite(parsed)) {
    throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + value + "'");
  }
  return parsed;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  if (value.empty() || value[0] == '-') {
    throw std::invalid_argument("config: key '" + key +
                                "' expects a non-negative integer, got '" + value + "'");
  }
  std::size_t used = 0;
  std::uint64_t parsed = 0;
  try {
    parsed = std::stoull(value, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key +
                                "' expects a non-negative integer, got '" + value + "'");
  }
  if (used != value.size()) {
    throw std::invalid_argument("config: key '" + key +
                                "' expects a non-negative integer, got '" + value + "'");
  }
  return parsed;
}

}  // namespace

void Config::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') {
      continue;
    }
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: " + origin + " line " + std::to_string(line_no) +
                                  ": expected key=value, got '" + stripped + "'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument("config: " + origin + " line " + std::to_string(line_no) +
                                  ": empty key");
    }
    require_known(key, " (" + origin + " line " + std::to_string(line_no) + ")");
    if (!seen.insert(key).second) {
      throw std::invalid_argument("config: " + origin + " line " + std::to_string(line_no) +
                                  ": duplicate key '" + key + "'");
    }
    entries_[key] = value;
  }
}

void Config::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("config: cannot open '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  load_text(buf.str(), path);
}

void Config::set_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw std::invalid_argument("config: override '" + assignment + "' is not key=value");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
  require_known(key, "");
  entries_[key] = value;
}

bool Config::has(const std::string& key) const { return entries_.count(key) != 0; }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  require_known(key, "");
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    require_known(key, "");
    return fallback;
  }
  return parse_double(key, it->second);
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    require_known(key, "");
    return fallback;
  }
  return static_cast<std::size_t>(parse_u64(key, it->second));
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    require_known(key, "");
    return fallback;
  }
  return parse_u64(key, it->second);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    require_known(key, "");
    return fallback;
  }
  const std::string& v = it->second;
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: key '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<double> Config::get_double_list(const std::string& key,
                                            const std::vector<double>& fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    require_known(key, "");
    return fallback;
  }
  std::vector<double> out;
  for (const std::string& part : split(it->second, ',')) {
    const std::string item = trim(part);
    if (item.empty()) {
      throw std::invalid_argument("config: key '" + key + "' has an empty list element");
    }
    out.push_back(parse_double(key, item));
  }
  if (out.empty()) {
    throw std::invalid_argument("config: key '" + key + "' expects a non-empty list");
  }
  return out;
}

std::vector<std::uint64_t> Config::get_u64_list(const std::string& key,
                                                const std::vector<std::uint64_t>& fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    require_known(key, "");
    return fallback;
  }
  std::vector<std::uint64_t> out;
  for (const std::string& part : split(it->second, ',')) {
    const std::string item = trim(part);
    if (item.empty()) {
      throw std::invalid_argument("config: key '" + key + "' has an empty list element");
    }
    out.push_back(parse_u64(key, item));
  }
  if (out.empty()) {
    throw std::invalid_argument("config: key '" + key + "' expects a non-empty list");
  }
  return out;
}

std::vector<std::size_t> Config::get_size_list(const std::string& key,
                                               const std::vector<std::size_t>& fallback) const {
  std::vector<std::uint64_t> wide_fallback(fallback.begin(), fallback.end());
  const std::vector<std::uint64_t> wide = get_u64_list(key, wide_fallback);
  return std::vector<std::size_t>(wide.begin(), wide.end());
}

std::string Config::canonical() const {
  std::ostringstream out;
  for (const auto& [key, value] : entries_) {
    out << key << '=' << value << '\n';
  }
  return out.str();
}

std::uint64_t Config::hash() const {
  const std::string dump = canonical();
  return fnv1a64(dump.data(), dump.size());
}

GenerationConfig generation_config_from(const Config& cfg) {
  GenerationConfig gen;
  gen.num_foreground = cfg.get_size("gen.num_foreground", gen.num_foreground);
  gen.zipf_exponent = cfg.get_double("gen.zipf_exponent", gen.zipf_exponent);
  gen.feature_dim = cfg.get_size("gen.feature_dim", gen.feature_dim);
  gen.num_contexts = cfg.get_size("gen.num_contexts", gen.num_contexts);
  gen.instances_min = cfg.get_size("gen.instances_min", gen.instances_min);
  gen.instances_max = cfg.get_size("gen.instances_max", gen.instances_max);
  gen.p_miss = cfg.get_double("gen.p_miss", gen.p_miss);
  gen.noise_sigma = cfg.get_double("gen.noise_sigma", gen.noise_sigma);
  gen.dirichlet_concentration =
      cfg.get_double("gen.dirichlet_concentration", gen.dirichlet_concentration);
  gen.image_size = cfg.get_size("gen.image_size", gen.image_size);
  gen.num_object_categories =
      cfg.get_size("gen.num_object_categories", gen.num_object_categories);
  gen.train_fraction = cfg.get_double("gen.train_fraction", gen.train_fraction);
  gen.val_fraction = cfg.get_double("gen.val_fraction", gen.val_fraction);
  gen.test_fraction = cfg.get_double("gen.test_fraction", gen.test_fraction);
  gen.seed = cfg.get_u64("gen.seed", gen.seed);
  return gen;
}

TrainConfig train_config_from(const Config& cfg) {
  TrainConfig train;
  train.strategy = parse_strategy(cfg.get_string("train.strategy", strategy_name(train.strategy)));
  train.alpha = cfg.get_double("train.alpha", train.alpha);
  train.tau = cfg.get_double("train.tau", train.tau);
  train.batch_size = cfg.get_size("train.batch_size", train.batch_size);
  train.lr = cfg.get_double("train.lr", train.lr);
  train.decay_factor = cfg.get_double("train.decay_factor", train.decay_factor);
  train.max_decays = cfg.get_size("train.max_decays", train.max_decays);
  train.plateau_patience = cfg.get_size("train.plateau_patience", train.plateau_patience);
  train.interval_epochs = cfg.get_double("train.interval_epochs", train.interval_epochs);
  train.max_epochs = cfg.get_size("train.max_epochs", train.max_epochs);
  train.seed = cfg.get_u64("train.seed", train.seed);
  train.parallel = cfg.get_bool("train.parallel", train.parallel);
  train.eval_ks = cfg.get_size_list("eval.ks", train.eval_ks);
  train.syn_detach_teacher = cfg.get_bool("train.syn_detach_teacher", train.syn_detach_teacher);
  train.syn_teacher_weight = cfg.get_double("train.syn_teacher_weight", train.syn_teacher_weight);
  train.syn_student_weight = cfg.get_double("train.syn_student_weight", train.syn_student_weight);
  return train;
}

ModelSettings model_settings_from(const Config& cfg) {
  ModelSettings settings;
  settings.hidden_dim = cfg.get_size("model.hidden_dim", settings.hidden_dim);
  settings.repr_dim = cfg.get_size("model.repr_dim", settings.repr_dim);
  settings.init_scale = cfg.get_double("model.init_scale", settings.init_scale);
  settings.init_checkpoint = cfg.get_string("model.init_checkpoint", settings.init_checkpoint);
  return settings;
}

}  // namespace lskd
