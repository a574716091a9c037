#pragma once

#include <span>
#include <vector>

#include "lskd/dataset.hpp"
#include "lskd/model.hpp"
#include "lskd/prob.hpp"

namespace lskd {

// Every batch kernel has a serial reference path and an OpenMP path. Both
// accumulate per-instance contributions in index order, so their results are
// bit-identical regardless of thread count; tests compare them exactly.
enum class Execution { serial, parallel };

enum class LossKind { xe, kl };

// Gradient of the mean batch loss, shaped like the parameters it refers to.
// teacher_head / label_embedding stay empty unless the kernel uses them.
struct Gradients {
  EncoderParams encoder;
  HeadParams student_head;
  HeadParams teacher_head;
  Vec label_embedding;
  double mean_loss = 0.0;
};

using IndexSpan = std::span<const std::size_t>;

std::vector<std::size_t> all_indices(std::size_t n);

// Encoder + head forward for a set of instances; result i corresponds to idx[i].
std::vector<ProbabilityVector> forward_probs(const EncoderParams& enc, const HeadParams& head,
                                             double tau, const ModelDims& dims,
                                             const std::vector<RelationInstance>& data,
                                             IndexSpan idx, Execution ex);

// Mean-loss gradient through the student head and encoder for explicit
// per-instance target distributions. XE and KL share the logit gradient
// (probs - target) / tau; they differ only in the reported loss value.
Gradients backward(const RelationModel& model, const std::vector<RelationInstance>& data,
                   IndexSpan idx, std::span<const ProbabilityVector> targets, LossKind kind,
                   Execution ex);

struct SiameseOptions {
  // SLD targets are built from the teacher head's output without letting the
  // student's KL loss reshape the teacher; both losses reach the shared
  // encoder at weight 1:1. Both defaults are deliberate and overridable.
  bool detach_teacher = true;
  double teacher_weight = 1.0;
  double student_weight = 1.0;
};

// One combined step of the synchronous variant: teacher head XE on one-hot
// labels, student head KL on SLD targets fused from the teacher's output.
Gradients backward_siamese(const RelationModel& model,
                           const std::vector<RelationInstance>& data, IndexSpan idx,
                           double alpha, const SiameseOptions& opts, Execution ex);

// Label Confusion target for one instance: similarity E * repr becomes a
// confusion distribution, which is fused with the one-hot label.
struct LcTarget {
  ProbabilityVector confusion;
  ProbabilityVector target;
};

LcTarget make_target_lc(const Vec& repr, const LabelEmbedding& emb, std::size_t label_idx,
                        double alpha, double tau);

// Label Confusion comparator: the target is fused from a learned
// instance-label similarity distribution, and the loss is differentiable
// through the target path, so E receives gradient too.
Gradients backward_lc(const RelationModel& model, const LabelEmbedding& emb,
                      const std::vector<RelationInstance>& data, IndexSpan idx, double alpha,
                      Execution ex);

}  // namespace lskd
