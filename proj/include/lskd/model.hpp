#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lskd/prob.hpp"
#include "lskd/rng.hpp"

namespace lskd {

struct ModelDims {
  std::size_t feature_dim = 64;
  std::size_t hidden_dim = 64;
  std::size_t repr_dim = 32;
  std::size_t num_classes = 51;  // C + 1, background included

  bool operator==(const ModelDims&) const = default;
};

// Linear classifier head: logits = W^T repr + sigma.
// W is stored row-major over repr dims: W[d * num_classes + c].
struct HeadParams {
  Vec W;
  Vec sigma;

  bool operator==(const HeadParams&) const = default;
};

// feature -> tanh(W1 x + b1) -> tanh(W2 h + b2).
// W1[h * feature_dim + i], W2[r * hidden_dim + h].
struct EncoderParams {
  Vec W1, b1, W2, b2;

  bool operator==(const EncoderParams&) const = default;
};

enum class ModelVariant { single, siamese };

std::string variant_name(ModelVariant v);
ModelVariant parse_variant(const std::string& name);

struct RelationModel {
  ModelDims dims;
  double tau = 1.0;
  ModelVariant variant = ModelVariant::single;
  EncoderParams encoder;
  HeadParams student_head;
  std::optional<HeadParams> teacher_head;  // siamese variant only

  bool operator==(const RelationModel&) const = default;
};

// Learnable label representations for the Label Confusion comparator.
// E[k * repr_dim + d] holds the embedding of class k.
struct LabelEmbedding {
  std::size_t num_classes = 0;
  std::size_t repr_dim = 0;
  Vec E;

  bool operator==(const LabelEmbedding&) const = default;
};

LabelEmbedding init_label_embedding(std::size_t num_classes, std::size_t repr_dim);

// Frozen deep copy of encoder + student head, used as the iterative teacher.
struct TeacherSnapshot {
  EncoderParams encoder;
  HeadParams head;
  double tau = 1.0;
  double created_at = 0.0;  // epoch marker

  bool operator==(const TeacherSnapshot&) const = default;
};

// Weights ~ N(0, scale^2 / fan_in), biases zero. The siamese variant draws
// its two heads independently so they never start identical.
RelationModel init_model(const ModelDims& dims, std::uint64_t seed, double scale,
                         ModelVariant variant = ModelVariant::single, double tau = 1.0);

struct EncodeTrace {
  Vec hidden;
  Vec repr;
};

EncodeTrace encode_trace(const EncoderParams& enc, const ModelDims& dims, const Vec& feature);
Vec encode(const EncoderParams& enc, const ModelDims& dims, const Vec& feature);

struct HeadOutput {
  LogitVector logits;
  ProbabilityVector probs;
};

HeadOutput head_forward(const HeadParams& head, const Vec& repr, double tau);

TeacherSnapshot take_snapshot(const RelationModel& model, double created_at = 0.0);

ProbabilityVector snapshot_forward(const TeacherSnapshot& snap, const ModelDims& dims,
                                   const Vec& feature);

std::uint64_t param_hash(const RelationModel& model);
std::uint64_t snapshot_hash(const TeacherSnapshot& snap);

void save_checkpoint(const RelationModel& model, const std::string& path);
RelationModel load_checkpoint(const std::string& path);

}  // namespace lskd
