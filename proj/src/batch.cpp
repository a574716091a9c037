#include "lskd/batch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lskd {

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

namespace {

Gradients zero_gradients(const RelationModel& model, bool with_teacher,
                         std::size_t emb_size) {
  const ModelDims& d = model.dims;
  Gradients g;
  g.encoder.W1.assign(d.hidden_dim * d.feature_dim, 0.0);
  g.encoder.b1.assign(d.hidden_dim, 0.0);
  g.encoder.W2.assign(d.repr_dim * d.hidden_dim, 0.0);
  g.encoder.b2.assign(d.repr_dim, 0.0);
  g.student_head.W.assign(d.repr_dim * d.num_classes, 0.0);
  g.student_head.sigma.assign(d.num_classes, 0.0);
  if (with_teacher) {
    g.teacher_head.W.assign(d.repr_dim * d.num_classes, 0.0);
    g.teacher_head.sigma.assign(d.num_classes, 0.0);
  }
  g.label_embedding.assign(emb_size, 0.0);
  return g;
}

void add_vec(Vec& acc, const Vec& x) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
}

void add_gradients(Gradients& acc, const Gradients& g) {
  add_vec(acc.encoder.W1, g.encoder.W1);
  add_vec(acc.encoder.b1, g.encoder.b1);
  add_vec(acc.encoder.W2, g.encoder.W2);
  add_vec(acc.encoder.b2, g.encoder.b2);
  add_vec(acc.student_head.W, g.student_head.W);
  add_vec(acc.student_head.sigma, g.student_head.sigma);
  add_vec(acc.teacher_head.W, g.teacher_head.W);
  add_vec(acc.teacher_head.sigma, g.teacher_head.sigma);
  add_vec(acc.label_embedding, g.label_embedding);
}

void scale_gradients(Gradients& g, double s) {
  for (double& x : g.encoder.W1) x *= s;
  for (double& x : g.encoder.b1) x *= s;
  for (double& x : g.encoder.W2) x *= s;
  for (double& x : g.encoder.b2) x *= s;
  for (double& x : g.student_head.W) x *= s;
  for (double& x : g.student_head.sigma) x *= s;
  for (double& x : g.teacher_head.W) x *= s;
  for (double& x : g.teacher_head.sigma) x *= s;
  for (double& x : g.label_embedding) x *= s;
}

// dL/dz = g through one head: accumulates head parameter gradients and adds
// the head's pullback W g onto dr.
void head_backward(const HeadParams& head, std::size_t num_classes, const Vec& repr,
                   const Vec& g, HeadParams& out, Vec& dr) {
  for (std::size_t d = 0; d < repr.size(); ++d) {
    const double* row = &head.W[d * num_classes];
    double* out_row = &out.W[d * num_classes];
    double rd = repr[d];
    double acc = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) {
      out_row[c] += rd * g[c];
      acc += row[c] * g[c];
    }
    dr[d] += acc;
  }
  for (std::size_t c = 0; c < num_classes; ++c) out.sigma[c] += g[c];
}

// Chains dL/drepr through both tanh layers into encoder parameter gradients.
void encoder_backward(const EncoderParams& enc, const ModelDims& dims, const Vec& feature,
                      const EncodeTrace& trace, const Vec& dr, EncoderParams& out) {
  Vec dpre2(dims.repr_dim);
  for (std::size_t r = 0; r < dims.repr_dim; ++r)
    dpre2[r] = dr[r] * (1.0 - trace.repr[r] * trace.repr[r]);

  Vec dh(dims.hidden_dim, 0.0);
  for (std::size_t r = 0; r < dims.repr_dim; ++r) {
    const double* row = &enc.W2[r * dims.hidden_dim];
    double* out_row = &out.W2[r * dims.hidden_dim];
    for (std::size_t h = 0; h < dims.hidden_dim; ++h) {
      out_row[h] += dpre2[r] * trace.hidden[h];
      dh[h] += row[h] * dpre2[r];
    }
    out.b2[r] += dpre2[r];
  }

  for (std::size_t h = 0; h < dims.hidden_dim; ++h) {
    double dpre1 = dh[h] * (1.0 - trace.hidden[h] * trace.hidden[h]);
    double* out_row = &out.W1[h * dims.feature_dim];
    for (std::size_t i = 0; i < dims.feature_dim; ++i) out_row[i] += dpre1 * feature[i];
    out.b1[h] += dpre1;
  }
}

// Pullback of a loss gradient `a` through y = softmax_t(u, tau):
// (J^T a)_k = y_k (a_k - sum_j a_j y_j) / tau.
Vec softmax_pullback(const ProbabilityVector& y, const Vec& a, double tau) {
  double dot = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) dot += a[j] * y[j];
  Vec out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = y[k] * (a[k] - dot) / tau;
  return out;
}

// dKL(t || p)/dt_j for the KL value as computed with clamped logs.
Vec kl_grad_wrt_target(const ProbabilityVector& t, const ProbabilityVector& p) {
  Vec a(t.size());
  for (std::size_t j = 0; j < t.size(); ++j) {
    double tj = std::clamp(t[j], kProbFloor, 1.0);
    double pj = std::clamp(p[j], kProbFloor, 1.0);
    a[j] = std::log(tj / pj) + 1.0;
  }
  return a;
}

// Runs `contrib(i, out)` for every batch position, serially or with OpenMP
// over per-instance slots, reducing in index order either way; then scales by
// 1/n so the result is the gradient of the mean loss.
template <typename F>
Gradients run_batch(const RelationModel& model, bool with_teacher, std::size_t emb_size,
                    std::size_t n, Execution ex, F&& contrib) {
  if (n == 0) throw std::invalid_argument("backward: empty batch");
  Gradients acc = zero_gradients(model, with_teacher, emb_size);
  double loss_sum = 0.0;
  if (ex == Execution::serial) {
    for (std::size_t i = 0; i < n; ++i) loss_sum += contrib(i, acc);
  } else {
    std::vector<Gradients> slots(n, zero_gradients(model, with_teacher, emb_size));
    std::vector<double> losses(n, 0.0);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i)
      losses[i] = contrib(static_cast<std::size_t>(i), slots[i]);
    for (std::size_t i = 0; i < n; ++i) {
      add_gradients(acc, slots[i]);
      loss_sum += losses[i];
    }
  }
  scale_gradients(acc, 1.0 / static_cast<double>(n));
  acc.mean_loss = loss_sum / static_cast<double>(n);
  return acc;
}

void check_batch(const RelationModel& model, const std::vector<RelationInstance>& data,
                 IndexSpan idx) {
  if (idx.empty()) throw std::invalid_argument("backward: empty batch");
  for (std::size_t i : idx) {
    if (i >= data.size()) throw std::invalid_argument("backward: batch index out of range");
    if (data[i].feature.size() != model.dims.feature_dim)
      throw std::invalid_argument("backward: feature dimension mismatch");
    if (data[i].label >= model.dims.num_classes)
      throw std::invalid_argument("backward: label out of range for model");
  }
}

}  // namespace

std::vector<ProbabilityVector> forward_probs(const EncoderParams& enc, const HeadParams& head,
                                             double tau, const ModelDims& dims,
                                             const std::vector<RelationInstance>& data,
                                             IndexSpan idx, Execution ex) {
  std::vector<ProbabilityVector> out(idx.size(), ProbabilityVector::uniform(dims.num_classes));
  auto one = [&](std::size_t i) {
    EncodeTrace trace = encode_trace(enc, dims, data[idx[i]].feature);
    out[i] = head_forward(head, trace.repr, tau).probs;
  };
  if (ex == Execution::serial) {
    for (std::size_t i = 0; i < idx.size(); ++i) one(i);
  } else {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(idx.size()); ++i)
      one(static_cast<std::size_t>(i));
  }
  return out;
}

Gradients backward(const RelationModel& model, const std::vector<RelationInstance>& data,
                   IndexSpan idx, std::span<const ProbabilityVector> targets, LossKind kind,
                   Execution ex) {
  check_batch(model, data, idx);
  if (targets.size() != idx.size())
    throw std::invalid_argument("backward: one target per batch instance required");
  for (const ProbabilityVector& t : targets)
    if (t.size() != model.dims.num_classes)
      throw std::invalid_argument("backward: target dimension mismatch");

  const ModelDims& dims = model.dims;
  double tau = model.tau;
  auto contrib = [&](std::size_t i, Gradients& out) -> double {
    const RelationInstance& inst = data[idx[i]];
    const ProbabilityVector& target = targets[i];
    EncodeTrace trace = encode_trace(model.encoder, dims, inst.feature);
    HeadOutput head = head_forward(model.student_head, trace.repr, tau);

    Vec g(dims.num_classes);
    for (std::size_t c = 0; c < dims.num_classes; ++c) g[c] = (head.probs[c] - target[c]) / tau;

    Vec dr(dims.repr_dim, 0.0);
    head_backward(model.student_head, dims.num_classes, trace.repr, g,
                  out.student_head, dr);
    encoder_backward(model.encoder, dims, inst.feature, trace, dr, out.encoder);

    return kind == LossKind::xe ? cross_entropy(target, head.probs)
                                : kl_divergence(target, head.probs);
  };
  return run_batch(model, false, 0, idx.size(), ex, contrib);
}

Gradients backward_siamese(const RelationModel& model,
                           const std::vector<RelationInstance>& data, IndexSpan idx,
                           double alpha, const SiameseOptions& opts, Execution ex) {
  if (!model.teacher_head)
    throw std::invalid_argument("backward_siamese: model has no teacher head");
  check_batch(model, data, idx);

  const ModelDims& dims = model.dims;
  double tau = model.tau;
  const HeadParams& teacher = *model.teacher_head;

  auto contrib = [&](std::size_t i, Gradients& out) -> double {
    const RelationInstance& inst = data[idx[i]];
    EncodeTrace trace = encode_trace(model.encoder, dims, inst.feature);
    HeadOutput t_out = head_forward(teacher, trace.repr, tau);
    HeadOutput s_out = head_forward(model.student_head, trace.repr, tau);

    OneHotLabel y(inst.label, dims.num_classes);
    ProbabilityVector sld = fuse_sld(y, t_out.probs, alpha, tau);

    // Teacher head: XE against the one-hot label, at its loss weight.
    Vec g_t(dims.num_classes);
    for (std::size_t c = 0; c < dims.num_classes; ++c) {
      double onehot = c == inst.label ? 1.0 : 0.0;
      g_t[c] = opts.teacher_weight * (t_out.probs[c] - onehot) / tau;
    }
    // Student head: KL against the SLD target, at its loss weight.
    Vec g_s(dims.num_classes);
    for (std::size_t c = 0; c < dims.num_classes; ++c)
      g_s[c] = opts.student_weight * (s_out.probs[c] - sld[c]) / tau;

    if (!opts.detach_teacher) {
      // Let the student loss reshape the teacher through the target path:
      // KL(t || p_s) with t = softmax_t(alpha*y + p_t, tau).
      Vec a = kl_grad_wrt_target(sld, s_out.probs);
      Vec du = softmax_pullback(sld, a, tau);           // d/d(alpha*y + p_t)
      Vec dz = softmax_pullback(t_out.probs, du, tau);  // through the teacher softmax
      for (std::size_t c = 0; c < dims.num_classes; ++c)
        g_t[c] += opts.student_weight * dz[c];
    }

    Vec dr(dims.repr_dim, 0.0);
    head_backward(teacher, dims.num_classes, trace.repr, g_t, out.teacher_head, dr);
    head_backward(model.student_head, dims.num_classes, trace.repr, g_s,
                  out.student_head, dr);
    encoder_backward(model.encoder, dims, inst.feature, trace, dr, out.encoder);

    return opts.teacher_weight * cross_entropy(y, t_out.probs) +
           opts.student_weight * kl_divergence(sld, s_out.probs);
  };
  return run_batch(model, true, 0, idx.size(), ex, contrib);
}

LcTarget make_target_lc(const Vec& repr, const LabelEmbedding& emb, std::size_t label_idx,
                        double alpha, double tau) {
  if (emb.repr_dim != repr.size() || emb.E.size() != emb.num_classes * emb.repr_dim)
    throw std::invalid_argument("make_target_lc: label embedding dimension mismatch");
  LogitVector sim;
  sim.values.resize(emb.num_classes);
  for (std::size_t k = 0; k < emb.num_classes; ++k) {
    const double* row = &emb.E[k * emb.repr_dim];
    double acc = 0.0;
    for (std::size_t d = 0; d < repr.size(); ++d) acc += row[d] * repr[d];
    sim.values[k] = acc;
  }
  ProbabilityVector confusion = softmax_t(sim, tau);
  ProbabilityVector target =
      fuse_sld(OneHotLabel(label_idx, emb.num_classes), confusion, alpha, tau);
  return {std::move(confusion), std::move(target)};
}

Gradients backward_lc(const RelationModel& model, const LabelEmbedding& emb,
                      const std::vector<RelationInstance>& data, IndexSpan idx, double alpha,
                      Execution ex) {
  check_batch(model, data, idx);
  const ModelDims& dims = model.dims;
  if (emb.num_classes != dims.num_classes || emb.repr_dim != dims.repr_dim ||
      emb.E.size() != emb.num_classes * emb.repr_dim)
    throw std::invalid_argument("backward_lc: label embedding dimension mismatch");

  double tau = model.tau;
  auto contrib = [&](std::size_t i, Gradients& out) -> double {
    const RelationInstance& inst = data[idx[i]];
    EncodeTrace trace = encode_trace(model.encoder, dims, inst.feature);
    HeadOutput head = head_forward(model.student_head, trace.repr, tau);

    LcTarget lc = make_target_lc(trace.repr, emb, inst.label, alpha, tau);
    const ProbabilityVector& confusion = lc.confusion;
    const ProbabilityVector& target = lc.target;

    // Direct path: KL through the student logits, target held fixed.
    Vec g(dims.num_classes);
    for (std::size_t c = 0; c < dims.num_classes; ++c)
      g[c] = (head.probs[c] - target[c]) / tau;

    // Target path: the loss moves the target, the target moves E and repr.
    Vec a = kl_grad_wrt_target(target, head.probs);
    Vec du = softmax_pullback(target, a, tau);        // d/d(alpha*y + confusion)
    Vec ds = softmax_pullback(confusion, du, tau);    // through the confusion softmax

    Vec dr(dims.repr_dim, 0.0);
    head_backward(model.student_head, dims.num_classes, trace.repr, g,
                  out.student_head, dr);
    for (std::size_t k = 0; k < dims.num_classes; ++k) {
      const double* row = &emb.E[k * dims.repr_dim];
      double* out_row = &out.label_embedding[k * dims.repr_dim];
      for (std::size_t d = 0; d < dims.repr_dim; ++d) {
        out_row[d] += ds[k] * trace.repr[d];
        dr[d] += row[d] * ds[k];
      }
    }
    encoder_backward(model.encoder, dims, inst.feature, trace, dr, out.encoder);

    return kl_divergence(target, head.probs);
  };
  return run_batch(model, false, emb.E.size(), idx.size(), ex, contrib);
}

}  // namespace lskd
