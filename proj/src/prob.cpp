#include "lskd/prob.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lskd {

ProbabilityVector ProbabilityVector::checked(Vec values) {
  double sum = 0.0;
  for (double x : values) {
    if (!(x >= 0.0)) throw std::invalid_argument("ProbabilityVector: negative or NaN entry");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("ProbabilityVector: entries must sum to 1");
  return ProbabilityVector(std::move(values));
}

ProbabilityVector ProbabilityVector::unchecked(Vec values) {
  return ProbabilityVector(std::move(values));
}

ProbabilityVector ProbabilityVector::uniform(std::size_t n) {
  return ProbabilityVector(Vec(n, 1.0 / static_cast<double>(n)));
}

OneHotLabel::OneHotLabel(std::size_t index_, std::size_t num_classes_)
    : index(index_), num_classes(num_classes_) {
  if (index >= num_classes) throw std::invalid_argument("OneHotLabel: index out of range");
}

ProbabilityVector OneHotLabel::as_vector() const {
  Vec v(num_classes, 0.0);
  v[index] = 1.0;
  return ProbabilityVector::unchecked(std::move(v));
}

ProbabilityVector softmax_t(const LogitVector& z, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("softmax_t: tau must be positive");
  if (z.values.empty()) throw std::invalid_argument("softmax_t: empty logit vector");
  double zmax = z.values[0];
  for (double x : z.values) {
    if (!std::isfinite(x)) throw std::invalid_argument("softmax_t: non-finite logit");
    zmax = std::max(zmax, x);
  }
  Vec out(z.values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp((z.values[i] - zmax) / tau);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return ProbabilityVector::unchecked(std::move(out));
}

double cross_entropy(const OneHotLabel& y, const ProbabilityVector& y_hat) {
  if (y.num_classes != y_hat.size())
    throw std::invalid_argument("cross_entropy: dimension mismatch");
  double q = std::clamp(y_hat[y.index], kProbFloor, 1.0);
  return -std::log(q);
}

double cross_entropy(const ProbabilityVector& p, const ProbabilityVector& q) {
  if (p.size() != q.size()) throw std::invalid_argument("cross_entropy: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    acc -= p[i] * std::log(std::clamp(q[i], kProbFloor, 1.0));
  }
  return acc;
}

double kl_divergence(const ProbabilityVector& p, const ProbabilityVector& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;  // 0 log 0 = 0
    double pi = std::clamp(p[i], kProbFloor, 1.0);
    double qi = std::clamp(q[i], kProbFloor, 1.0);
    acc += p[i] * std::log(pi / qi);
  }
  return acc;
}

ProbabilityVector fuse_sld(const OneHotLabel& y_r, const ProbabilityVector& y_t,
                           double alpha, double tau) {
  if (y_r.num_classes != y_t.size())
    throw std::invalid_argument("fuse_sld: dimension mismatch");
  if (!(alpha >= 0.0)) throw std::invalid_argument("fuse_sld: alpha must be nonnegative");
  LogitVector mixed;
  mixed.values = y_t.values();
  mixed.values[y_r.index] += alpha;
  return softmax_t(mixed, tau);
}

ProbabilityVector ls_target(const OneHotLabel& y_r, double alpha, double tau,
                            std::size_t num_classes) {
  if (num_classes < 2) throw std::invalid_argument("ls_target: need at least 2 classes");
  return fuse_sld(y_r, ProbabilityVector::uniform(num_classes), alpha, tau);
}

Vec grad_kl_wrt_logits(const ProbabilityVector& y_s, const LogitVector& z, double tau) {
  if (y_s.size() != z.values.size())
    throw std::invalid_argument("grad_kl_wrt_logits: dimension mismatch");
  ProbabilityVector p = softmax_t(z, tau);
  Vec g(z.values.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (p[i] - y_s[i]) / tau;
  return g;
}

double entropy(const ProbabilityVector& p) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    acc -= p[i] * std::log(p[i]);
  }
  return acc;
}

}  // namespace lskd
