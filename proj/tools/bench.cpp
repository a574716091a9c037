// Timing comparison of the serial reference kernels against the OpenMP path,
// plus a bit-identity check between the two (the parallel path must reproduce
// the serial accumulation exactly).

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "lskd/batch.hpp"
#include "lskd/dataset.hpp"
#include "lskd/model.hpp"
#include "lskd/training.hpp"
#include "lskd/util.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_of(int reps, const auto& fn) {
  fn();  // warm-up
  const auto start = Clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const std::chrono::duration<double> elapsed = Clock::now() - start;
  return elapsed.count() / reps;
}

std::uint64_t grad_hash(const lskd::Gradients& g) {
  std::uint64_t h = lskd::fnv1a64(std::span<const double>(g.encoder.W1));
  h = lskd::fnv1a64(std::span<const double>(g.encoder.b1), h);
  h = lskd::fnv1a64(std::span<const double>(g.encoder.W2), h);
  h = lskd::fnv1a64(std::span<const double>(g.encoder.b2), h);
  h = lskd::fnv1a64(std::span<const double>(g.student_head.W), h);
  h = lskd::fnv1a64(std::span<const double>(g.student_head.sigma), h);
  return lskd::fnv1a64(std::span<const double>(&g.mean_loss, 1), h);
}

}  // namespace

int main(int argc, char** argv) {
  std::size_t num_contexts = 3000;
  int reps = 20;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--contexts" && i + 1 < argc) {
      num_contexts = std::strtoull(argv[++i], nullptr, 10);
    } else if (arg == "--reps" && i + 1 < argc) {
      reps = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--contexts N] [--reps N]\n", argv[0]);
      return 2;
    }
  }

  lskd::GenerationConfig gen;
  gen.num_contexts = num_contexts;
  gen.seed = 11;
  const lskd::GenerationResult ds = generate_dataset(gen);
  const std::vector<lskd::RelationInstance>& data = ds.split.train;

  lskd::ModelDims dims;
  dims.feature_dim = gen.feature_dim;
  dims.num_classes = ds.split.num_classes();
  lskd::RelationModel model = lskd::init_model(dims, 5, 1.0);

  const std::vector<std::size_t> idx = lskd::all_indices(data.size());
  std::vector<lskd::ProbabilityVector> targets;
  targets.reserve(data.size());
  for (const lskd::RelationInstance& inst : data)
    targets.push_back(lskd::make_target_xe(inst, dims.num_classes));

  std::printf("threads: %d, train instances: %zu, reps: %d\n", omp_get_max_threads(),
              data.size(), reps);

  const auto fwd_serial = [&] {
    lskd::forward_probs(model.encoder, model.student_head, model.tau, dims, data, idx,
                        lskd::Execution::serial);
  };
  const auto fwd_parallel = [&] {
    lskd::forward_probs(model.encoder, model.student_head, model.tau, dims, data, idx,
                        lskd::Execution::parallel);
  };
  const double tf_s = time_of(reps, fwd_serial);
  const double tf_p = time_of(reps, fwd_parallel);
  std::printf("forward   serial %8.3f ms   parallel %8.3f ms   speedup %.2fx\n", tf_s * 1e3,
              tf_p * 1e3, tf_s / tf_p);

  lskd::Gradients gs, gp;
  const auto bwd_serial = [&] {
    gs = lskd::backward(model, data, idx, targets, lskd::LossKind::xe, lskd::Execution::serial);
  };
  const auto bwd_parallel = [&] {
    gp = lskd::backward(model, data, idx, targets, lskd::LossKind::xe,
                        lskd::Execution::parallel);
  };
  const double tb_s = time_of(reps, bwd_serial);
  const double tb_p = time_of(reps, bwd_parallel);
  std::printf("backward  serial %8.3f ms   parallel %8.3f ms   speedup %.2fx\n", tb_s * 1e3,
              tb_p * 1e3, tb_s / tb_p);

  const bool identical = grad_hash(gs) == grad_hash(gp);
  std::printf("gradients bit-identical: %s\n", identical ? "yes" : "NO");
  return identical ? 0 : 1;
}
