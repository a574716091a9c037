#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lskd/prob.hpp"
#include "lskd/rng.hpp"

namespace lskd {

enum class Group { head, body, tail };

std::string group_name(Group g);
Group parse_group(const std::string& name);

struct GenerationConfig {
  std::size_t num_foreground = 50;
  double zipf_exponent = 1.0;
  std::size_t feature_dim = 64;
  // Mean 4 instances per context and a 0.7 train fraction put the default
  // train split right around 20k instances.
  std::size_t num_contexts = 7143;
  std::size_t instances_min = 2;
  std::size_t instances_max = 6;
  double p_miss = 0.3;
  double noise_sigma = 0.5;
  double dirichlet_concentration = 1.0;
  std::size_t image_size = 8;
  std::size_t num_object_categories = 150;
  double train_fraction = 0.7;
  double val_fraction = 0.1;
  double test_fraction = 0.2;
  std::uint64_t seed = 7;

  bool operator==(const GenerationConfig&) const = default;
};

struct PredicateVocabulary {
  std::vector<std::string> names;        // size C+1, names[0] = "bg"
  std::vector<std::size_t> frequencies;  // size C+1, train-split label counts
  std::vector<Group> groups;             // size C, groups[c-1] for class c
  std::vector<double> zipf_weights;      // size C, normalized target weights

  std::size_t num_foreground() const { return groups.size(); }
  std::size_t num_classes() const { return groups.size() + 1; }

  bool operator==(const PredicateVocabulary&) const = default;
};

struct PairContext {
  std::size_t id = 0;
  std::size_t subject_class = 0;
  std::size_t object_class = 0;
  std::vector<std::size_t> support;  // 2..5 distinct foreground class ids
  Vec affinity;                      // parallel to support, sums to 1
  Vec prototype;                     // length feature_dim

  bool operator==(const PairContext&) const = default;
};

// What the trainer sees. The generating affinity lives in a separate
// AffinityTable so no training code path can touch it.
struct RelationInstance {
  std::size_t context_id = 0;
  std::size_t image_id = 0;
  Vec feature;
  std::size_t label = 0;  // 0 = background
  bool missing_flag = false;

  bool operator==(const RelationInstance&) const = default;
};

struct SparseAffinity {
  std::vector<std::size_t> ids;  // ascending foreground class ids
  Vec probs;                     // parallel, sums to 1

  ProbabilityVector dense(std::size_t num_foreground) const;
  bool operator==(const SparseAffinity&) const = default;
};

// Hidden ground truth, parallel to the instance lists of a DatasetSplit.
// Only evaluation (calibration) consumes it.
struct AffinityTable {
  std::vector<SparseAffinity> train, val, test;
  bool operator==(const AffinityTable&) const = default;
};

struct DatasetSplit {
  PredicateVocabulary vocabulary;
  GenerationConfig generation_config;
  std::vector<RelationInstance> train, val, test;

  std::size_t num_classes() const { return vocabulary.num_classes(); }
  bool operator==(const DatasetSplit&) const = default;
};

struct GenerationResult {
  DatasetSplit split;
  AffinityTable affinity;
  std::vector<PairContext> contexts;  // generation intermediates, not serialized
};

struct LoadedDataset {
  DatasetSplit split;
  AffinityTable affinity;
};

// Normalized rank^(-zipf_exponent) weights; class c = rank c by construction.
std::vector<double> make_zipf_weights(std::size_t num_foreground, double zipf_exponent);

// Names + target weights + rank-tertile groups. Frequencies start at zero;
// generate_dataset replaces them with actual train counts.
PredicateVocabulary build_vocabulary(std::size_t num_foreground, double zipf_exponent);

// Tertiles over the frequency ranking (descending count, ties by class id).
// counts has size C+1 with background at 0.
std::vector<Group> assign_groups(const std::vector<std::size_t>& counts);

PairContext sample_context(const PredicateVocabulary& vocab, Rng& rng,
                           std::size_t feature_dim, double dirichlet_concentration,
                           std::size_t num_object_categories);

// Single-label annotation of a multi-affinity pair: misses with probability
// p_miss, otherwise samples one predicate from the affinity.
struct Annotation {
  std::size_t label;
  bool missing_flag;
};
Annotation annotate(const PairContext& ctx, double p_miss, Rng& rng);

// ctx.prototype + sum_c affinity_c * predicate_prototypes[c] + N(0, sigma^2).
// The feature encodes the full affinity, never the sampled label.
Vec gen_features(const PairContext& ctx, const std::vector<Vec>& predicate_prototypes,
                 double noise_sigma, Rng& rng);

GenerationResult generate_dataset(const GenerationConfig& cfg);

std::string serialize_dataset(const DatasetSplit& split, const AffinityTable& affinity);
void save_dataset(const DatasetSplit& split, const AffinityTable& affinity,
                  const std::string& path);
LoadedDataset load_dataset(const std::string& path);

std::uint64_t dataset_fingerprint(const DatasetSplit& split, const AffinityTable& affinity);

}  // namespace lskd
