#include "lskd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "lskd/util.hpp"

namespace lskd {

using ordered_json = nlohmann::ordered_json;

std::string group_name(Group g) {
  switch (g) {
    case Group::head: return "head";
    case Group::body: return "body";
    case Group::tail: return "tail";
  }
  throw std::logic_error("group_name: bad enum value");
}

Group parse_group(const std::string& name) {
  if (name == "head") return Group::head;
  if (name == "body") return Group::body;
  if (name == "tail") return Group::tail;
  throw std::invalid_argument("parse_group: unknown group '" + name + "'");
}

ProbabilityVector SparseAffinity::dense(std::size_t num_foreground) const {
  Vec v(num_foreground, 0.0);
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] < 1 || ids[j] > num_foreground)
      throw std::invalid_argument("SparseAffinity: class id out of range");
    v[ids[j] - 1] = probs[j];
  }
  return ProbabilityVector::unchecked(std::move(v));
}

std::vector<double> make_zipf_weights(std::size_t num_foreground, double zipf_exponent) {
  std::vector<double> w(num_foreground);
  double sum = 0.0;
  for (std::size_t c = 0; c < num_foreground; ++c) {
    w[c] = std::pow(static_cast<double>(c + 1), -zipf_exponent);
    sum += w[c];
  }
  for (double& x : w) x /= sum;
  return w;
}

PredicateVocabulary build_vocabulary(std::size_t num_foreground, double zipf_exponent) {
  if (num_foreground < 3)
    throw std::invalid_argument("build_vocabulary: need at least 3 foreground predicates");
  if (!(zipf_exponent >= 0.0))
    throw std::invalid_argument("build_vocabulary: zipf_exponent must be nonnegative");

  PredicateVocabulary vocab;
  vocab.names.reserve(num_foreground + 1);
  vocab.names.push_back("bg");
  int width = 1;
  for (std::size_t v = num_foreground; v >= 10; v /= 10) ++width;
  for (std::size_t c = 1; c <= num_foreground; ++c) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "pred_%0*zu", width, c);
    vocab.names.emplace_back(buf);
  }
  vocab.frequencies.assign(num_foreground + 1, 0);
  vocab.zipf_weights = make_zipf_weights(num_foreground, zipf_exponent);

  // Before any data exists the frequency ranking is the target-weight
  // ranking, which is class-id order by construction.
  vocab.groups.resize(num_foreground);
  for (std::size_t rank = 0; rank < num_foreground; ++rank) {
    std::size_t tertile = rank * 3 / num_foreground;
    vocab.groups[rank] = tertile == 0 ? Group::head : tertile == 1 ? Group::body : Group::tail;
  }
  return vocab;
}

std::vector<Group> assign_groups(const std::vector<std::size_t>& counts) {
  if (counts.size() < 4) throw std::invalid_argument("assign_groups: need at least 3 classes");
  std::size_t num_foreground = counts.size() - 1;
  std::vector<std::size_t> order(num_foreground);
  std::iota(order.begin(), order.end(), std::size_t{1});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return counts[a] > counts[b];
  });
  std::vector<Group> groups(num_foreground);
  for (std::size_t rank = 0; rank < num_foreground; ++rank) {
    std::size_t tertile = rank * 3 / num_foreground;
    groups[order[rank] - 1] =
        tertile == 0 ? Group::head : tertile == 1 ? Group::body : Group::tail;
  }
  return groups;
}

PairContext sample_context(const PredicateVocabulary& vocab, Rng& rng,
                           std::size_t feature_dim, double dirichlet_concentration,
                           std::size_t num_object_categories) {
  if (feature_dim < 4) throw std::invalid_argument("sample_context: feature_dim must be >= 4");
  std::size_t num_foreground = vocab.num_foreground();

  PairContext ctx;
  ctx.subject_class = rng.uniform_int(num_object_categories);
  ctx.object_class = rng.uniform_int(num_object_categories);

  std::size_t max_support = std::min<std::size_t>(5, num_foreground);
  std::size_t k = 2 + rng.uniform_int(max_support - 1);  // uniform in [2, max_support]

  // Zipf-weighted draw without replacement, by rejection.
  ctx.support.reserve(k);
  while (ctx.support.size() < k) {
    std::size_t c = rng.discrete(vocab.zipf_weights) + 1;
    if (std::find(ctx.support.begin(), ctx.support.end(), c) == ctx.support.end())
      ctx.support.push_back(c);
  }
  ctx.affinity = rng.dirichlet(dirichlet_concentration, k);

  // Canonical order: ascending class id, affinity kept parallel.
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::sort(perm.begin(), perm.end(),
            [&](std::size_t a, std::size_t b) { return ctx.support[a] < ctx.support[b]; });
  std::vector<std::size_t> support(k);
  Vec affinity(k);
  for (std::size_t j = 0; j < k; ++j) {
    support[j] = ctx.support[perm[j]];
    affinity[j] = ctx.affinity[perm[j]];
  }
  ctx.support = std::move(support);
  ctx.affinity = std::move(affinity);

  ctx.prototype.resize(feature_dim);
  for (double& x : ctx.prototype) x = rng.normal();
  return ctx;
}

Annotation annotate(const PairContext& ctx, double p_miss, Rng& rng) {
  if (!(p_miss >= 0.0 && p_miss <= 1.0))
    throw std::invalid_argument("annotate: p_miss must be in [0,1]");
  if (rng.uniform() < p_miss) return {0, true};
  std::size_t j = rng.discrete(ctx.affinity);
  return {ctx.support[j], false};
}

Vec gen_features(const PairContext& ctx, const std::vector<Vec>& predicate_prototypes,
                 double noise_sigma, Rng& rng) {
  if (!(noise_sigma >= 0.0))
    throw std::invalid_argument("gen_features: noise_sigma must be nonnegative");
  std::size_t dim = ctx.prototype.size();
  Vec out = ctx.prototype;
  for (std::size_t j = 0; j < ctx.support.size(); ++j) {
    if (ctx.support[j] < 1 || ctx.support[j] > predicate_prototypes.size())
      throw std::invalid_argument("gen_features: support id outside prototype matrix");
    const Vec& proto = predicate_prototypes[ctx.support[j] - 1];
    if (proto.size() != dim)
      throw std::invalid_argument("gen_features: prototype dimension mismatch");
    for (std::size_t d = 0; d < dim; ++d) out[d] += ctx.affinity[j] * proto[d];
  }
  for (std::size_t d = 0; d < dim; ++d) out[d] += noise_sigma * rng.normal();
  return out;
}

namespace {

void validate_config(const GenerationConfig& cfg) {
  if (cfg.num_foreground < 3)
    throw std::invalid_argument("generation config: num_foreground must be >= 3");
  if (cfg.feature_dim < 4)
    throw std::invalid_argument("generation config: feature_dim must be >= 4");
  if (cfg.num_contexts == 0)
    throw std::invalid_argument("generation config: num_contexts must be positive");
  if (cfg.instances_min < 1 || cfg.instances_max < cfg.instances_min)
    throw std::invalid_argument("generation config: bad instances_min/instances_max range");
  if (!(cfg.p_miss >= 0.0 && cfg.p_miss <= 1.0))
    throw std::invalid_argument("generation config: p_miss must be in [0,1]");
  if (!(cfg.noise_sigma >= 0.0))
    throw std::invalid_argument("generation config: noise_sigma must be nonnegative");
  if (!(cfg.dirichlet_concentration > 0.0))
    throw std::invalid_argument("generation config: dirichlet_concentration must be positive");
  if (cfg.image_size == 0)
    throw std::invalid_argument("generation config: image_size must be positive");
  if (cfg.num_object_categories == 0)
    throw std::invalid_argument("generation config: num_object_categories must be positive");
  if (!(cfg.train_fraction >= 0.0) || !(cfg.val_fraction >= 0.0) ||
      !(cfg.test_fraction >= 0.0) ||
      std::abs(cfg.train_fraction + cfg.val_fraction + cfg.test_fraction - 1.0) > 1e-9)
    throw std::invalid_argument(
        "generation config: train_fraction/val_fraction/test_fraction must be nonnegative and "
        "sum to 1");
}

}  // namespace

GenerationResult generate_dataset(const GenerationConfig& cfg) {
  validate_config(cfg);
  Rng rng(cfg.seed);

  GenerationResult result;
  result.split.generation_config = cfg;
  result.split.vocabulary = build_vocabulary(cfg.num_foreground, cfg.zipf_exponent);
  PredicateVocabulary& vocab = result.split.vocabulary;

  std::vector<Vec> predicate_prototypes(cfg.num_foreground);
  for (Vec& proto : predicate_prototypes) {
    proto.resize(cfg.feature_dim);
    for (double& x : proto) x = rng.normal();
  }

  result.contexts.reserve(cfg.num_contexts);
  for (std::size_t i = 0; i < cfg.num_contexts; ++i) {
    PairContext ctx = sample_context(vocab, rng, cfg.feature_dim,
                                     cfg.dirichlet_concentration, cfg.num_object_categories);
    ctx.id = i;
    result.contexts.push_back(std::move(ctx));
  }

  std::vector<RelationInstance> all;
  std::vector<SparseAffinity> all_affinity;
  for (const PairContext& ctx : result.contexts) {
    std::size_t count = cfg.instances_min + rng.uniform_int(cfg.instances_max -
                                                            cfg.instances_min + 1);
    for (std::size_t i = 0; i < count; ++i) {
      Annotation ann = annotate(ctx, cfg.p_miss, rng);
      RelationInstance inst;
      inst.context_id = ctx.id;
      inst.feature = gen_features(ctx, predicate_prototypes, cfg.noise_sigma, rng);
      inst.label = ann.label;
      inst.missing_flag = ann.missing_flag;
      all.push_back(std::move(inst));
      all_affinity.push_back({ctx.support, ctx.affinity});
    }
  }

  std::size_t total = all.size();
  auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * total));
  auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * total));
  if (n_train + n_val > total)
    throw std::invalid_argument("generation config: split fractions overflow the dataset");

  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);

  std::size_t image_id = 0;
  auto take = [&](std::size_t begin, std::size_t end, std::vector<RelationInstance>& out,
                  std::vector<SparseAffinity>& out_affinity) {
    for (std::size_t i = begin; i < end; ++i) {
      RelationInstance inst = std::move(all[order[i]]);
      inst.image_id = image_id + (i - begin) / cfg.image_size;
      out.push_back(std::move(inst));
      out_affinity.push_back(std::move(all_affinity[order[i]]));
    }
    if (end > begin) image_id += (end - begin + cfg.image_size - 1) / cfg.image_size;
  };
  take(0, n_train, result.split.train, result.affinity.train);
  take(n_train, n_train + n_val, result.split.val, result.affinity.val);
  take(n_train + n_val, total, result.split.test, result.affinity.test);

  vocab.frequencies.assign(cfg.num_foreground + 1, 0);
  for (const RelationInstance& inst : result.split.train) ++vocab.frequencies[inst.label];
  vocab.groups = assign_groups(vocab.frequencies);

  return result;
}

namespace {

ordered_json config_to_json(const GenerationConfig& cfg) {
  ordered_json j;
  j["num_foreground"] = cfg.num_foreground;
  j["zipf_exponent"] = cfg.zipf_exponent;
  j["feature_dim"] = cfg.feature_dim;
  j["num_contexts"] = cfg.num_contexts;
  j["instances_min"] = cfg.instances_min;
  j["instances_max"] = cfg.instances_max;
  j["p_miss"] = cfg.p_miss;
  j["noise_sigma"] = cfg.noise_sigma;
  j["dirichlet_concentration"] = cfg.dirichlet_concentration;
  j["image_size"] = cfg.image_size;
  j["num_object_categories"] = cfg.num_object_categories;
  j["train_fraction"] = cfg.train_fraction;
  j["val_fraction"] = cfg.val_fraction;
  j["test_fraction"] = cfg.test_fraction;
  j["seed"] = cfg.seed;
  return j;
}

GenerationConfig config_from_json(const ordered_json& j) {
  GenerationConfig cfg;
  cfg.num_foreground = j.at("num_foreground").get<std::size_t>();
  cfg.zipf_exponent = j.at("zipf_exponent").get<double>();
  cfg.feature_dim = j.at("feature_dim").get<std::size_t>();
  cfg.num_contexts = j.at("num_contexts").get<std::size_t>();
  cfg.instances_min = j.at("instances_min").get<std::size_t>();
  cfg.instances_max = j.at("instances_max").get<std::size_t>();
  cfg.p_miss = j.at("p_miss").get<double>();
  cfg.noise_sigma = j.at("noise_sigma").get<double>();
  cfg.dirichlet_concentration = j.at("dirichlet_concentration").get<double>();
  cfg.image_size = j.at("image_size").get<std::size_t>();
  cfg.num_object_categories = j.at("num_object_categories").get<std::size_t>();
  cfg.train_fraction = j.at("train_fraction").get<double>();
  cfg.val_fraction = j.at("val_fraction").get<double>();
  cfg.test_fraction = j.at("test_fraction").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

constexpr int kDatasetSchemaVersion = 1;

void append_instances(std::string& out, const char* split_name,
                      const std::vector<RelationInstance>& instances,
                      const std::vector<SparseAffinity>& affinity) {
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const RelationInstance& inst = instances[i];
    ordered_json j;
    j["split"] = split_name;
    j["context_id"] = inst.context_id;
    j["image_id"] = inst.image_id;
    j["feature"] = inst.feature;
    j["label"] = inst.label;
    j["missing_flag"] = inst.missing_flag;
    ordered_json aff = ordered_json::object();
    const SparseAffinity& sa = affinity[i];
    for (std::size_t k = 0; k < sa.ids.size(); ++k)
      aff[std::to_string(sa.ids[k])] = sa.probs[k];
    j["truth_affinity"] = std::move(aff);
    out += j.dump();
    out += '\n';
  }
}

}  // namespace

std::string serialize_dataset(const DatasetSplit& split, const AffinityTable& affinity) {
  if (affinity.train.size() != split.train.size() || affinity.val.size() != split.val.size() ||
      affinity.test.size() != split.test.size())
    throw std::invalid_argument("serialize_dataset: affinity table does not match splits");

  ordered_json header;
  header["schema_version"] = kDatasetSchemaVersion;
  header["kind"] = "lskd.dataset";
  header["num_foreground"] = split.vocabulary.num_foreground();
  header["feature_dim"] = split.generation_config.feature_dim;
  ordered_json vocab;
  vocab["names"] = split.vocabulary.names;
  vocab["frequencies"] = split.vocabulary.frequencies;
  {
    std::vector<std::string> group_names;
    group_names.reserve(split.vocabulary.groups.size());
    for (Group g : split.vocabulary.groups) group_names.push_back(group_name(g));
    vocab["groups"] = group_names;
  }
  header["vocabulary"] = std::move(vocab);
  header["generation_config"] = config_to_json(split.generation_config);

  std::string out = header.dump();
  out += '\n';
  append_instances(out, "train", split.train, affinity.train);
  append_instances(out, "val", split.val, affinity.val);
  append_instances(out, "test", split.test, affinity.test);
  return out;
}

void save_dataset(const DatasetSplit& split, const AffinityTable& affinity,
                  const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_dataset: cannot open '" + path + "' for writing");
  out << serialize_dataset(split, affinity);
  if (!out) throw std::runtime_error("save_dataset: write to '" + path + "' failed");
}

LoadedDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset: cannot open '" + path + "'");

  LoadedDataset result;
  std::string line;
  std::size_t line_no = 0;

  auto parse_line = [&](const std::string& text) {
    try {
      return ordered_json::parse(text);
    } catch (const ordered_json::exception& e) {
      throw std::runtime_error("load_dataset: parse error at line " + std::to_string(line_no) +
                               ": " + e.what());
    }
  };

  if (!std::getline(in, line))
    throw std::runtime_error("load_dataset: empty file, missing header line");
  ++line_no;
  ordered_json header = parse_line(line);
  try {
    int version = header.at("schema_version").get<int>();
    if (version != kDatasetSchemaVersion)
      throw std::runtime_error("load_dataset: schema version mismatch, file has version " +
                               std::to_string(version) + ", reader expects " +
                               std::to_string(kDatasetSchemaVersion));
    result.split.generation_config = config_from_json(header.at("generation_config"));
    PredicateVocabulary& vocab = result.split.vocabulary;
    const ordered_json& jv = header.at("vocabulary");
    vocab.names = jv.at("names").get<std::vector<std::string>>();
    vocab.frequencies = jv.at("frequencies").get<std::vector<std::size_t>>();
    for (const std::string& name : jv.at("groups").get<std::vector<std::string>>())
      vocab.groups.push_back(parse_group(name));
    vocab.zipf_weights = make_zipf_weights(result.split.generation_config.num_foreground,
                                           result.split.generation_config.zipf_exponent);
    std::size_t num_foreground = header.at("num_foreground").get<std::size_t>();
    if (vocab.names.size() != num_foreground + 1 || vocab.groups.size() != num_foreground ||
        vocab.frequencies.size() != num_foreground + 1)
      throw std::runtime_error("load_dataset: vocabulary sizes do not match num_foreground");
  } catch (const std::exception& e) {
    std::string what = e.what();
    if (what.rfind("load_dataset:", 0) == 0) throw;
    throw std::runtime_error("load_dataset: parse error at line 1: " + what);
  }

  std::size_t feature_dim = result.split.generation_config.feature_dim;
  std::size_t num_classes = result.split.vocabulary.num_classes();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j = parse_line(line);
    try {
      RelationInstance inst;
      inst.context_id = j.at("context_id").get<std::size_t>();
      inst.image_id = j.at("image_id").get<std::size_t>();
      inst.feature = j.at("feature").get<Vec>();
      inst.label = j.at("label").get<std::size_t>();
      inst.missing_flag = j.at("missing_flag").get<bool>();
      if (inst.feature.size() != feature_dim)
        throw std::runtime_error("feature length " + std::to_string(inst.feature.size()) +
                                 " does not match feature_dim");
      if (inst.label >= num_classes) throw std::runtime_error("label out of range");
      if (inst.missing_flag && inst.label != 0)
        throw std::runtime_error("missing_flag set on a foreground label");

      SparseAffinity sa;
      for (const auto& [key, value] : j.at("truth_affinity").items()) {
        sa.ids.push_back(static_cast<std::size_t>(std::stoull(key)));
        sa.probs.push_back(value.get<double>());
      }

      const std::string split_name = j.at("split").get<std::string>();
      if (split_name == "train") {
        result.split.train.push_back(std::move(inst));
        result.affinity.train.push_back(std::move(sa));
      } else if (split_name == "val") {
        result.split.val.push_back(std::move(inst));
        result.affinity.val.push_back(std::move(sa));
      } else if (split_name == "test") {
        result.split.test.push_back(std::move(inst));
        result.affinity.test.push_back(std::move(sa));
      } else {
        throw std::runtime_error("unknown split '" + split_name + "'");
      }
    } catch (const std::exception& e) {
      std::string what = e.what();
      if (what.rfind("load_dataset:", 0) == 0) throw;
      throw std::runtime_error("load_dataset: parse error at line " + std::to_string(line_no) +
                               ": " + what);
    }
  }
  return result;
}

std::uint64_t dataset_fingerprint(const DatasetSplit& split, const AffinityTable& affinity) {
  return fnv1a64(serialize_dataset(split, affinity));
}

}  // namespace lskd
