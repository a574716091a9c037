#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lskd/batch.hpp"
#include "lskd/dataset.hpp"
#include "lskd/model.hpp"

namespace lskd {

// Raised when a recall has no ground-truth positives to average over.
struct UndefinedMetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RankedPrediction {
  std::size_t image_id = 0;
  std::size_t instance_id = 0;
  std::size_t predicted_label = 0;  // never background
  double confidence = 0.0;          // foreground-renormalized probability
};

// One image prepared for recall computation: every instance's top-1
// foreground prediction, ranked, plus the ground-truth positives.
struct ImageEval {
  std::size_t image_id = 0;
  std::vector<RankedPrediction> ranked;
  std::vector<std::pair<std::size_t, std::size_t>> positives;  // (instance_id, label)
};

// Top-1 foreground prediction per instance, sorted by confidence descending,
// ties by ascending instance_id. ids and probs run parallel.
std::vector<RankedPrediction> rank_predictions(std::size_t image_id,
                                               std::span<const std::size_t> instance_ids,
                                               std::span<const ProbabilityVector> probs);

// Groups a split (instance_id = position in the list) into per-image
// evaluation units; probs[i] is the model distribution for instances[i].
std::vector<ImageEval> build_eval_images(const std::vector<RelationInstance>& instances,
                                         const std::vector<ProbabilityVector>& probs);

double recall_at_k(const std::vector<ImageEval>& images, std::size_t k);

// Per-foreground-class recall@k; classes absent from the ground truth get the
// sentinel -1 so callers can tell "absent" from "recalled nothing".
std::vector<double> per_predicate_recall(const std::vector<ImageEval>& images, std::size_t k,
                                         std::size_t num_foreground);

double mean_recall_at_k(const std::vector<ImageEval>& images, std::size_t k,
                        std::size_t num_foreground);

struct GroupRecallReport {
  double head = 0.0;
  double body = 0.0;
  double tail = 0.0;
  double mean = 0.0;  // average of the three groups

  bool operator==(const GroupRecallReport&) const = default;
};

GroupRecallReport group_recall(const std::vector<ImageEval>& images,
                               const PredicateVocabulary& vocab, std::size_t k = 100);

// Mean KL(truth affinity || foreground-renormalized model distribution) over
// positive instances; 0 when there are none.
double calibration_kl(const std::vector<ProbabilityVector>& probs,
                      const std::vector<RelationInstance>& instances,
                      const std::vector<SparseAffinity>& affinity,
                      std::size_t num_foreground);

struct EvalReport {
  std::map<std::size_t, double> r_at;
  std::map<std::size_t, double> mr_at;
  double mean_metric_value = -1.0;  // set when K=50 and K=100 are both present
  GroupRecallReport groups;
  double calibration_kl = 0.0;
  std::vector<double> per_predicate;  // recall@100 per foreground class, -1 if absent
  std::uint64_t config_hash = 0;

  bool operator==(const EvalReport&) const = default;
};

// Average of R@50, R@100, mR@50, mR@100.
double mean_metric(const EvalReport& report);

// Full evaluation of a model on one split. `affinity` may be null when the
// caller has no ground-truth table (calibration_kl is then reported as 0).
EvalReport evaluate(const RelationModel& model,
                    const std::vector<RelationInstance>& instances,
                    const std::vector<SparseAffinity>* affinity,
                    const PredicateVocabulary& vocab, std::span<const std::size_t> ks,
                    Execution ex);

std::string eval_report_json(const EvalReport& report);
EvalReport eval_report_from_json(const std::string& text);
std::string eval_report_csv_header();
std::string eval_report_csv_row(const EvalReport& report);

}  // namespace lskd
