#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lskd/batch.hpp"
#include "lskd/dataset.hpp"
#include "lskd/metrics.hpp"
#include "lskd/model.hpp"

namespace lskd {

enum class Strategy { xe, ls, lc, lskd_iter, lskd_syn };

std::string strategy_name(Strategy s);
Strategy parse_strategy(const std::string& name);

struct TrainConfig {
  Strategy strategy = Strategy::xe;
  double alpha = 4.0;
  double tau = 1.0;
  std::size_t batch_size = 12;
  double lr = 0.01;
  double decay_factor = 10.0;
  std::size_t max_decays = 2;
  std::size_t plateau_patience = 2;
  double interval_epochs = 2.0;  // may be fractional, e.g. 0.5
  std::size_t max_epochs = 20;
  std::uint64_t seed = 1;
  bool parallel = true;
  std::vector<std::size_t> eval_ks = {50, 100};

  // Synchronous-variant knobs; the defaults are the documented convention.
  bool syn_detach_teacher = true;
  double syn_teacher_weight = 1.0;
  double syn_student_weight = 1.0;

  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  double epoch = 0.0;       // completed passes over the train set
  double train_loss = 0.0;  // mean of the epoch's batch losses
  EvalReport val;
  double lr = 0.0;  // rate in effect during the epoch
};

struct TrainState {
  double epoch = 0.0;  // fractional, in units of passes over the train set
  double lr = 0.0;
  std::size_t decays_used = 0;
  std::size_t step = 0;  // global batch counter
  std::optional<TeacherSnapshot> teacher;
  std::vector<EpochRecord> history;
  std::vector<std::pair<std::size_t, std::uint64_t>> snapshot_log;  // (step, teacher hash)
  double best_val_mean = -1.0;
  std::size_t epochs_since_improvement = 0;
};

struct TrainResult {
  RelationModel model;
  LabelEmbedding embedding;  // populated by the lc strategy only
  TrainState state;
};

ProbabilityVector make_target_xe(const RelationInstance& inst, std::size_t num_classes);

// SLD target: fuse the one-hot annotation with the teacher's predicted
// distribution. Applies to background-labeled (missing) instances the same
// way, which is how teacher mass reaches plausible foreground predicates.
ProbabilityVector make_target_lskd(const RelationInstance& inst,
                                   const ProbabilityVector& teacher_probs, double alpha,
                                   double tau);

// Plateau schedule: decay lr by decay_factor when the validation Mean has not
// strictly improved for plateau_patience epochs, at most max_decays times.
void lr_schedule_update(TrainState& state, const TrainConfig& cfg, double val_mean);

void apply_sgd(RelationModel& model, LabelEmbedding* emb, const Gradients& g, double lr);

// Minibatch SGD with the strategy's target-construction rule. Deterministic
// per (config, seed): one shuffle stream drives every epoch.
TrainResult train(const TrainConfig& cfg, const DatasetSplit& data, RelationModel model);

std::string history_csv(const TrainState& state);

}  // namespace lskd
