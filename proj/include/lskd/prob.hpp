#pragma once

#include <cstddef>
#include <vector>

namespace lskd {

using Vec = std::vector<double>;

// Floor applied to probabilities before any log; keeps KL and XE finite.
inline constexpr double kProbFloor = 1e-12;

// Nonnegative entries summing to 1 (within 1e-9 when checked). Index 0 is
// the background class throughout this project.
class ProbabilityVector {
 public:
  ProbabilityVector() = default;  // empty placeholder, fill via the factories

  static ProbabilityVector checked(Vec values);
  static ProbabilityVector unchecked(Vec values);
  static ProbabilityVector uniform(std::size_t n);

  const Vec& values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::size_t size() const { return values_.size(); }

  bool operator==(const ProbabilityVector&) const = default;

 private:
  explicit ProbabilityVector(Vec values) : values_(std::move(values)) {}
  Vec values_;
};

// Unnormalized scores; consumers require finite entries.
struct LogitVector {
  Vec values;
};

struct OneHotLabel {
  OneHotLabel(std::size_t index, std::size_t num_classes);
  ProbabilityVector as_vector() const;

  std::size_t index;
  std::size_t num_classes;
};

// exp(z_c/tau) / sum_k exp(z_k/tau), stabilized by max subtraction.
ProbabilityVector softmax_t(const LogitVector& z, double tau);

// -log(y_hat[y.index]) with the probability clamped to [kProbFloor, 1].
double cross_entropy(const OneHotLabel& y, const ProbabilityVector& y_hat);

// -sum_c p_c log q_c, skipping zero p entries, q clamped.
double cross_entropy(const ProbabilityVector& p, const ProbabilityVector& q);

// sum_c p_c log(p_c/q_c) with 0 log 0 = 0 and q clamped.
double kl_divergence(const ProbabilityVector& p, const ProbabilityVector& q);

// softmax_t(alpha * onehot(y_r) + y_t, tau). The softmax argument mixes an
// alpha-scaled one-hot with a probability vector, not with logits; the
// teacher's influence on each coordinate is therefore bounded by 1.
ProbabilityVector fuse_sld(const OneHotLabel& y_r, const ProbabilityVector& y_t,
                           double alpha, double tau);

// fuse_sld with a uniform teacher: classic label smoothing in this framing.
ProbabilityVector ls_target(const OneHotLabel& y_r, double alpha, double tau,
                            std::size_t num_classes);

// d/dz KL(y_s || softmax_t(z, tau)) = (softmax_t(z, tau) - y_s) / tau.
Vec grad_kl_wrt_logits(const ProbabilityVector& y_s, const LogitVector& z, double tau);

// -sum p log p with 0 log 0 = 0.
double entropy(const ProbabilityVector& p);

}  // namespace lskd
