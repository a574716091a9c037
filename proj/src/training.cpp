#include "lskd/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace lskd {

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::xe: return "xe";
    case Strategy::ls: return "ls";
    case Strategy::lc: return "lc";
    case Strategy::lskd_iter: return "lskd_iter";
    case Strategy::lskd_syn: return "lskd_syn";
  }
  throw std::logic_error("strategy_name: bad enum value");
}

Strategy parse_strategy(const std::string& name) {
  if (name == "xe") return Strategy::xe;
  if (name == "ls") return Strategy::ls;
  if (name == "lc") return Strategy::lc;
  if (name == "lskd_iter") return Strategy::lskd_iter;
  if (name == "lskd_syn") return Strategy::lskd_syn;
  throw std::invalid_argument("parse_strategy: unknown strategy '" + name +
                              "' (expected xe, ls, lc, lskd_iter or lskd_syn)");
}

ProbabilityVector make_target_xe(const RelationInstance& inst, std::size_t num_classes) {
  return OneHotLabel(inst.label, num_classes).as_vector();
}

ProbabilityVector make_target_lskd(const RelationInstance& inst,
                                   const ProbabilityVector& teacher_probs, double alpha,
                                   double tau) {
  return fuse_sld(OneHotLabel(inst.label, teacher_probs.size()), teacher_probs, alpha, tau);
}

void lr_schedule_update(TrainState& state, const TrainConfig& cfg, double val_mean) {
  if (val_mean > state.best_val_mean) {
    state.best_val_mean = val_mean;
    state.epochs_since_improvement = 0;
    return;
  }
  ++state.epochs_since_improvement;
  if (state.epochs_since_improvement >= cfg.plateau_patience &&
      state.decays_used < cfg.max_decays) {
    state.lr /= cfg.decay_factor;
    ++state.decays_used;
    state.epochs_since_improvement = 0;
  }
}

namespace {

void sub_scaled(Vec& params, const Vec& grad, double lr) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
}

}  // namespace

void apply_sgd(RelationModel& model, LabelEmbedding* emb, const Gradients& g, double lr) {
  sub_scaled(model.encoder.W1, g.encoder.W1, lr);
  sub_scaled(model.encoder.b1, g.encoder.b1, lr);
  sub_scaled(model.encoder.W2, g.encoder.W2, lr);
  sub_scaled(model.encoder.b2, g.encoder.b2, lr);
  sub_scaled(model.student_head.W, g.student_head.W, lr);
  sub_scaled(model.student_head.sigma, g.student_head.sigma, lr);
  if (!g.teacher_head.W.empty()) {
    if (!model.teacher_head)
      throw std::invalid_argument("apply_sgd: teacher gradients for a model without one");
    sub_scaled(model.teacher_head->W, g.teacher_head.W, lr);
    sub_scaled(model.teacher_head->sigma, g.teacher_head.sigma, lr);
  }
  if (!g.label_embedding.empty()) {
    if (!emb || emb->E.size() != g.label_embedding.size())
      throw std::invalid_argument("apply_sgd: label embedding gradient size mismatch");
    sub_scaled(emb->E, g.label_embedding, lr);
  }
}

namespace {

void validate_train_config(const TrainConfig& cfg, const DatasetSplit& data,
                           const RelationModel& model) {
  if (!(cfg.alpha >= 0.0)) throw std::invalid_argument("train config: alpha must be >= 0");
  if (!(cfg.tau > 0.0)) throw std::invalid_argument("train config: tau must be positive");
  if (cfg.batch_size == 0) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("train config: lr must be positive");
  if (!(cfg.decay_factor > 1.0))
    throw std::invalid_argument("train config: decay_factor must exceed 1");
  if (cfg.plateau_patience == 0)
    throw std::invalid_argument("train config: plateau_patience must be >= 1");
  if (!(cfg.interval_epochs > 0.0))
    throw std::invalid_argument("train config: interval_epochs must be positive");
  if (!(cfg.syn_teacher_weight >= 0.0) || !(cfg.syn_student_weight >= 0.0))
    throw std::invalid_argument("train config: synchronous loss weights must be >= 0");
  bool has_50 = false, has_100 = false;
  for (std::size_t k : cfg.eval_ks) {
    has_50 |= k == 50;
    has_100 |= k == 100;
  }
  if (!has_50 || !has_100)
    throw std::invalid_argument(
        "train config: eval_ks must include 50 and 100, the plateau criterion needs the Mean");
  if (model.dims.num_classes != data.num_classes())
    throw std::invalid_argument("train config: model and dataset class counts differ");
  if (cfg.strategy == Strategy::lskd_syn && !model.teacher_head)
    throw std::invalid_argument(
        "train config: strategy lskd_syn requires a model with a teacher head (siamese "
        "variant)");
  if (cfg.max_epochs > 0 && (data.train.empty() || data.val.empty()))
    throw std::invalid_argument("train config: training needs non-empty train and val splits");
}

Gradients step_lskd_iter(const TrainConfig& cfg, const DatasetSplit& data,
                         const RelationModel& model, TrainState& state, IndexSpan batch,
                         std::size_t interval_steps, Execution ex) {
  if (state.step > 0 && state.step % interval_steps == 0) {
    state.teacher = take_snapshot(model, state.epoch);
    state.snapshot_log.emplace_back(state.step, snapshot_hash(*state.teacher));
  }
  std::size_t num_classes = model.dims.num_classes;
  if (state.step < interval_steps) {
    // Bootstrap window: plain XE until the first teacher exists.
    std::vector<ProbabilityVector> targets;
    targets.reserve(batch.size());
    for (std::size_t i : batch) targets.push_back(make_target_xe(data.train[i], num_classes));
    return backward(model, data.train, batch, targets, LossKind::xe, ex);
  }
  const TeacherSnapshot& teacher = *state.teacher;
  std::vector<ProbabilityVector> teacher_probs = forward_probs(
      teacher.encoder, teacher.head, teacher.tau, model.dims, data.train, batch, ex);
  std::vector<ProbabilityVector> targets;
  targets.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    targets.push_back(
        make_target_lskd(data.train[batch[i]], teacher_probs[i], cfg.alpha, cfg.tau));
  return backward(model, data.train, batch, targets, LossKind::kl, ex);
}

Gradients train_step(const TrainConfig& cfg, const DatasetSplit& data,
                     const RelationModel& model, const LabelEmbedding& emb, TrainState& state,
                     IndexSpan batch, std::size_t interval_steps, Execution ex) {
  std::size_t num_classes = model.dims.num_classes;
  switch (cfg.strategy) {
    case Strategy::xe: {
      std::vector<ProbabilityVector> targets;
      targets.reserve(batch.size());
      for (std::size_t i : batch) targets.push_back(make_target_xe(data.train[i], num_classes));
      return backward(model, data.train, batch, targets, LossKind::xe, ex);
    }
    case Strategy::ls: {
      std::vector<ProbabilityVector> targets;
      targets.reserve(batch.size());
      for (std::size_t i : batch)
        targets.push_back(ls_target(OneHotLabel(data.train[i].label, num_classes), cfg.alpha,
                                    cfg.tau, num_classes));
      return backward(model, data.train, batch, targets, LossKind::xe, ex);
    }
    case Strategy::lc:
      return backward_lc(model, emb, data.train, batch, cfg.alpha, ex);
    case Strategy::lskd_iter:
      return step_lskd_iter(cfg, data, model, state, batch, interval_steps, ex);
    case Strategy::lskd_syn:
      return backward_siamese(
          model, data.train, batch, cfg.alpha,
          {cfg.syn_detach_teacher, cfg.syn_teacher_weight, cfg.syn_student_weight}, ex);
  }
  throw std::logic_error("train_step: bad strategy enum");
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const DatasetSplit& data, RelationModel model) {
  validate_train_config(cfg, data, model);
  model.tau = cfg.tau;

  TrainState state;
  state.lr = cfg.lr;
  LabelEmbedding emb;
  if (cfg.strategy == Strategy::lc)
    emb = init_label_embedding(model.dims.num_classes, model.dims.repr_dim);
  if (cfg.max_epochs == 0) return {std::move(model), std::move(emb), std::move(state)};

  std::size_t n = data.train.size();
  std::size_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  auto interval_steps = static_cast<std::size_t>(std::max<long long>(
      1, std::llround(cfg.interval_epochs * static_cast<double>(batches_per_epoch))));
  Execution ex = cfg.parallel ? Execution::parallel : Execution::serial;

  Rng shuffle_rng(cfg.seed);
  std::vector<std::size_t> perm = all_indices(n);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(perm);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      IndexSpan batch(perm.data() + start, std::min(cfg.batch_size, n - start));
      Gradients g = train_step(cfg, data, model, emb, state, batch, interval_steps, ex);
      apply_sgd(model, cfg.strategy == Strategy::lc ? &emb : nullptr, g, state.lr);
      ++state.step;
      state.epoch = static_cast<double>(state.step) / static_cast<double>(batches_per_epoch);
      loss_sum += g.mean_loss;
      ++batches;
    }

    EpochRecord record;
    record.epoch = state.epoch;
    record.train_loss = loss_sum / static_cast<double>(batches);
    record.val = evaluate(model, data.val, nullptr, data.vocabulary, cfg.eval_ks, ex);
    record.lr = state.lr;
    double val_mean = record.val.mean_metric_value;
    state.history.push_back(std::move(record));
    lr_schedule_update(state, cfg, val_mean);
  }
  return {std::move(model), std::move(emb), std::move(state)};
}

std::string history_csv(const TrainState& state) {
  std::string out = "epoch,train_loss,val_r_at_50,val_r_at_100,val_mr_at_50,val_mr_at_100,"
                    "val_mean,lr\n";
  char buf[256];
  for (const EpochRecord& rec : state.history) {
    std::snprintf(buf, sizeof(buf), "%.6g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                  rec.epoch, rec.train_loss, rec.val.r_at.at(50), rec.val.r_at.at(100),
                  rec.val.mr_at.at(50), rec.val.mr_at.at(100), rec.val.mean_metric_value,
                  rec.lr);
    out += buf;
  }
  return out;
}

}  // namespace lskd
