// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit when any
// criterion fails. Tolerances and budgets are pinned here, next to the checks
// they guard. Heavy phases share per-seed datasets and trained models.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "lskd/batch.hpp"
#include "lskd/config.hpp"
#include "lskd/dataset.hpp"
#include "lskd/metrics.hpp"
#include "lskd/model.hpp"
#include "lskd/prob.hpp"
#include "lskd/rng.hpp"
#include "lskd/training.hpp"
#include "lskd/util.hpp"
#include "oracles.hpp"

using namespace lskd;

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kFdTol = 1e-4;        // criterion 1
constexpr double kAlgebraTol = 1e-12;  // criterion 2
constexpr double kOneHotTol = 1e-6;    // criterion 4b, SLD collapse
constexpr double kLinfTol = 1e-3;      // criterion 4b, parameter match
constexpr double kMeanSlack = 0.02;    // criterion 5(iii), two points on the percent scale
constexpr double kGradientBudget = 60.0;   // seconds, criterion 1
constexpr double kAlgebraBudget = 60.0;    // seconds, criterion 2
constexpr double kEfficacyBudget = 600.0;  // seconds, criterion 5
const std::vector<std::uint64_t> kSeeds = {1, 2, 3};

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string read_bytes(const std::string& path) {
  std::ostringstream out;
  out << std::ifstream(path, std::ios::binary).rdbuf();
  return out.str();
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), pattern, a, b, c);
  return buf;
}

// Collects violation messages; the criterion line shows the first few.
struct Violations {
  std::vector<std::string> items;
  void add(const std::string& s) { items.push_back(s); }
  bool ok() const { return items.empty(); }
  std::string brief() const {
    std::string out;
    for (std::size_t i = 0; i < items.size() && i < 3; ++i) {
      if (i) out += "; ";
      out += items[i];
    }
    if (items.size() > 3) out += fmt("; +%.0f more", double(items.size() - 3));
    return out;
  }
};

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL");
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << "\n" << std::flush;
  if (!pass) ++failures;
}

// ---------------------------------------------------------------------------
// Shared data and trained-model caches for the directional criteria.

struct Bundle {
  DatasetSplit split;
  AffinityTable affinity;
  std::uint64_t fingerprint = 0;
};

std::map<std::uint64_t, Bundle> bundles;

const Bundle& bundle_for(std::uint64_t seed) {
  auto it = bundles.find(seed);
  if (it == bundles.end()) {
    GenerationConfig gen;  // the default configuration is the experiment
    gen.seed = seed;
    GenerationResult g = generate_dataset(gen);
    Bundle b{std::move(g.split), std::move(g.affinity), 0};
    b.fingerprint = dataset_fingerprint(b.split, b.affinity);
    it = bundles.emplace(seed, std::move(b)).first;
  }
  return it->second;
}

struct Run {
  RelationModel model;
  EvalReport report;
};

std::map<std::tuple<int, double, double, std::uint64_t>, Run> runs;

TrainConfig default_train(Strategy s, double alpha, double tau, std::uint64_t seed) {
  TrainConfig tc;
  tc.strategy = s;
  tc.alpha = alpha;
  tc.tau = tau;
  tc.seed = seed;
  return tc;
}

const Run& run_for(Strategy s, double alpha, double tau, std::uint64_t seed) {
  auto key = std::make_tuple(int(s), alpha, tau, seed);
  auto it = runs.find(key);
  if (it != runs.end()) return it->second;

  const Bundle& data = bundle_for(seed);
  TrainConfig tc = default_train(s, alpha, tau, seed);
  ModelDims dims;
  dims.feature_dim = data.split.generation_config.feature_dim;
  dims.num_classes = data.split.num_classes();
  const ModelVariant variant =
      s == Strategy::lskd_syn ? ModelVariant::siamese : ModelVariant::single;
  TrainResult res = train(tc, data.split, init_model(dims, tc.seed, 1.0, variant, tc.tau));
  Run run;
  run.report = evaluate(res.model, data.split.test, &data.affinity.test,
                        data.split.vocabulary, tc.eval_ks, Execution::parallel);
  run.model = std::move(res.model);
  return runs.emplace(key, std::move(run)).first->second;
}

// ---------------------------------------------------------------------------
// Criterion 1: analytic gradients vs central finite differences, mirroring
// each strategy's exact loss composition from the training loop.

void criterion_1() {
  const double start = now_s();
  Rng rng(40404);
  ModelDims dims;
  dims.feature_dim = 5;
  dims.hidden_dim = 4;
  dims.repr_dim = 3;
  dims.num_classes = 6;

  double worst = 0.0;
  std::size_t models_checked = 0;
  Violations v;

  auto check_fd = [&](RelationModel& model, LabelEmbedding* emb, const Gradients& g,
                      const std::function<double()>& loss, const char* tag) {
    std::vector<double*> params = test::param_view(model, emb);
    std::vector<double> grads = test::grad_view(g, model, emb);
    for (std::size_t p = 0; p < params.size(); ++p) {
      double fd = test::central_diff(loss, *params[p], kFdStep);
      double err = test::rel_err(fd, grads[p]);
      worst = std::max(worst, err);
      if (err > kFdTol)
        v.add(fmt((std::string(tag) + " param %.0f err %.2e").c_str(), double(p), err));
    }
  };

  for (int trial = 0; trial < 50; ++trial) {
    double tau = trial % 2 == 0 ? 1.0 : rng.uniform(0.5, 2.0);
    double alpha = rng.uniform(1.0, 6.0);
    std::vector<RelationInstance> batch;
    for (int i = 0; i < 3; ++i)
      batch.push_back(test::random_instance(rng, dims.feature_dim, dims.num_classes));
    std::vector<std::size_t> idx = all_indices(batch.size());
    std::uint64_t seed = 900 + std::uint64_t(trial);

    auto student = [&](const RelationModel& m, const RelationInstance& inst) {
      return head_forward(m.student_head, encode(m.encoder, m.dims, inst.feature), m.tau).probs;
    };
    auto teacher = [&](const RelationModel& m, const RelationInstance& inst) {
      return head_forward(*m.teacher_head, encode(m.encoder, m.dims, inst.feature), m.tau).probs;
    };

    {  // xe: one-hot targets, cross-entropy
      RelationModel m = init_model(dims, seed, 1.0, ModelVariant::single, tau);
      std::vector<ProbabilityVector> t;
      for (const auto& inst : batch) t.push_back(make_target_xe(inst, dims.num_classes));
      Gradients g = backward(m, batch, idx, t, LossKind::xe, Execution::serial);
      check_fd(m, nullptr, g, [&] {
        double acc = 0.0;
        for (std::size_t i = 0; i < batch.size(); ++i)
          acc += cross_entropy(t[i], student(m, batch[i]));
        return acc / double(batch.size());
      }, "xe");
    }
    {  // ls: smoothed targets, trained under the XE loss kind
      RelationModel m = init_model(dims, seed + 50, 1.0, ModelVariant::single, tau);
      std::vector<ProbabilityVector> t;
      for (const auto& inst : batch)
        t.push_back(ls_target(OneHotLabel(inst.label, dims.num_classes), alpha, tau,
                              dims.num_classes));
      Gradients g = backward(m, batch, idx, t, LossKind::xe, Execution::serial);
      check_fd(m, nullptr, g, [&] {
        double acc = 0.0;
        for (std::size_t i = 0; i < batch.size(); ++i)
          acc += cross_entropy(t[i], student(m, batch[i]));
        return acc / double(batch.size());
      }, "ls");
    }
    {  // lskd_iter: fused targets from a frozen snapshot, KL
      RelationModel m = init_model(dims, seed + 100, 1.0, ModelVariant::single, tau);
      TeacherSnapshot snap =
          take_snapshot(init_model(dims, seed + 150, 1.0, ModelVariant::single, tau));
      std::vector<ProbabilityVector> t;
      for (const auto& inst : batch)
        t.push_back(make_target_lskd(inst, snapshot_forward(snap, dims, inst.feature), alpha,
                                     tau));
      Gradients g = backward(m, batch, idx, t, LossKind::kl, Execution::serial);
      check_fd(m, nullptr, g, [&] {
        double acc = 0.0;
        for (std::size_t i = 0; i < batch.size(); ++i)
          acc += kl_divergence(t[i], student(m, batch[i]));
        return acc / double(batch.size());
      }, "lskd_iter");
    }
    {  // lskd_syn: teacher XE plus student KL on detached SLD targets
      RelationModel m = init_model(dims, seed + 200, 1.0, ModelVariant::siamese, tau);
      SiameseOptions opts;
      std::vector<ProbabilityVector> frozen;
      for (const auto& inst : batch)
        frozen.push_back(fuse_sld(OneHotLabel(inst.label, dims.num_classes),
                                  teacher(m, inst), alpha, tau));
      Gradients g = backward_siamese(m, batch, idx, alpha, opts, Execution::serial);
      check_fd(m, nullptr, g, [&] {
        double acc = 0.0;
        for (std::size_t i = 0; i < batch.size(); ++i) {
          OneHotLabel y(batch[i].label, dims.num_classes);
          acc += cross_entropy(y, teacher(m, batch[i]));
          acc += kl_divergence(frozen[i], student(m, batch[i]));
        }
        return acc / double(batch.size());
      }, "lskd_syn");
    }
    {  // lc: differentiable target path through the label embedding
      RelationModel m = init_model(dims, seed + 300, 1.0, ModelVariant::single, tau);
      LabelEmbedding emb = init_label_embedding(dims.num_classes, dims.repr_dim);
      for (double& e : emb.E) e = rng.uniform(-0.8, 0.8);
      Gradients g = backward_lc(m, emb, batch, idx, alpha, Execution::serial);
      check_fd(m, &emb, g, [&] {
        double acc = 0.0;
        for (std::size_t i = 0; i < batch.size(); ++i) {
          Vec repr = encode(m.encoder, m.dims, batch[i].feature);
          LcTarget lc = make_target_lc(repr, emb, batch[i].label, alpha, tau);
          acc += kl_divergence(lc.target, head_forward(m.student_head, repr, tau).probs);
        }
        return acc / double(batch.size());
      }, "lc");
    }
    ++models_checked;
  }

  const double elapsed = now_s() - start;
  if (elapsed > kGradientBudget) v.add(fmt("runtime %.1fs over budget", elapsed));
  report(1, v.ok(),
         v.ok() ? fmt("%.0f models x 5 strategies, max rel err %.1e, %.1fs",
                      double(models_checked), worst, elapsed)
                : v.brief());
}

// ---------------------------------------------------------------------------
// Criterion 2: distribution algebra properties, 1000 randomized cases each.

void criterion_2() {
  const double start = now_s();
  Rng rng(50505);
  Violations v;

  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t n = 2 + rng.uniform_int(7);
    Vec z(n);
    for (double& x : z) x = rng.uniform(-4.0, 4.0);
    double tau = std::exp(rng.uniform(std::log(1e-2), std::log(1e3)));
    ProbabilityVector p = softmax_t(LogitVector{z}, tau);

    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += p[i];
    if (std::fabs(sum - 1.0) > kAlgebraTol) v.add(fmt("softmax sum off by %.1e", sum - 1.0));

    Vec shifted = z;
    double c = rng.uniform(-50.0, 50.0);
    for (double& x : shifted) x += c;
    ProbabilityVector q = softmax_t(LogitVector{shifted}, tau);
    for (std::size_t i = 0; i < n; ++i)
      if (std::fabs(p[i] - q[i]) > kAlgebraTol) {
        v.add("softmax shift invariance broken");
        break;
      }

    std::size_t arg_z = std::max_element(z.begin(), z.end()) - z.begin();
    std::size_t arg_p = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (p[i] > p[arg_p]) arg_p = i;
    if (arg_z != arg_p) v.add("softmax argmax not preserved");
  }

  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t n = 2 + rng.uniform_int(7);
    ProbabilityVector p = test::random_prob(rng, n);
    ProbabilityVector q = test::random_prob(rng, n);
    if (kl_divergence(p, q) < -1e-9) v.add("KL went negative");
    OneHotLabel y(rng.uniform_int(n), n);
    double kl = kl_divergence(y.as_vector(), q);
    double xe = cross_entropy(y, q);
    if (std::fabs(kl - xe) > kAlgebraTol * std::max(1.0, xe)) v.add("one-hot KL != XE");
  }

  const double alphas[] = {0.0, 0.5, 1.0, 2.0, 4.0, 8.0};
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t n = 3 + rng.uniform_int(6);
    ProbabilityVector teacher = test::random_prob(rng, n);
    OneHotLabel y(rng.uniform_int(n), n);
    double prev = -1.0;
    for (double a : alphas) {
      double gt = fuse_sld(y, teacher, a, 1.0)[y.index];
      if (gt <= prev) {
        v.add("fusion not alpha-monotone");
        break;
      }
      prev = gt;
    }
  }

  const double taus[] = {0.25, 0.5, 1.0, 2.0, 4.0};
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t n = 3 + rng.uniform_int(6);
    ProbabilityVector teacher = test::random_prob(rng, n);
    OneHotLabel y(rng.uniform_int(n), n);
    double alpha = rng.uniform(0.5, 6.0);
    double prev = -1.0;
    for (double t : taus) {
      double h = entropy(fuse_sld(y, teacher, alpha, t));
      if (h < prev - kAlgebraTol) {
        v.add("fusion entropy not tau-monotone");
        break;
      }
      prev = h;
    }
  }

  const double elapsed = now_s() - start;
  if (elapsed > kAlgebraBudget) v.add(fmt("runtime %.1fs over budget", elapsed));
  report(2, v.ok(), v.ok() ? fmt("4 property families x 1000 cases, %.1fs", elapsed) : v.brief());
}

// ---------------------------------------------------------------------------
// Criterion 3: metric implementations vs exhaustive brute force, exactly.

void criterion_3() {
  Rng rng(60606);
  Violations v;
  std::size_t sets = 0;

  for (int trial = 0; trial < 120; ++trial) {
    std::size_t num_fg = 2 + rng.uniform_int(5);
    std::size_t num_images = 1 + rng.uniform_int(5);
    std::vector<RelationInstance> instances;
    std::vector<ProbabilityVector> probs;
    std::vector<test::BruteInstance> brute;
    for (std::size_t img = 0; img < num_images; ++img) {
      std::size_t count = 1 + rng.uniform_int(6);
      for (std::size_t j = 0; j < count; ++j) {
        RelationInstance inst;
        inst.image_id = img;
        inst.label = rng.uniform_int(num_fg + 1);
        ProbabilityVector p = (!probs.empty() && rng.uniform(0.0, 1.0) < 0.3)
                                  ? probs.back()
                                  : test::random_prob(rng, num_fg + 1);
        brute.push_back({img, instances.size(), p, inst.label});
        instances.push_back(std::move(inst));
        probs.push_back(std::move(p));
      }
    }
    bool any_fg = false;
    for (const auto& inst : instances) any_fg |= inst.label != 0;
    if (!any_fg) {
      instances.back().label = 1;
      brute.back().label = 1;
    }

    auto images = build_eval_images(instances, probs);
    for (std::size_t k : {std::size_t{1}, std::size_t{3}, std::size_t{50}, std::size_t{100}}) {
      if (recall_at_k(images, k) != test::brute_recall_at_k(brute, k))
        v.add(fmt("R@%.0f mismatch", double(k)));
      if (mean_recall_at_k(images, k, num_fg) != test::brute_mean_recall_at_k(brute, k, num_fg))
        v.add(fmt("mR@%.0f mismatch", double(k)));
      if (per_predicate_recall(images, k, num_fg) != test::brute_per_predicate(brute, k, num_fg))
        v.add("per-predicate mismatch");
    }

    EvalReport rep;
    rep.r_at[50] = recall_at_k(images, 50);
    rep.r_at[100] = recall_at_k(images, 100);
    rep.mr_at[50] = mean_recall_at_k(images, 50, num_fg);
    rep.mr_at[100] = mean_recall_at_k(images, 100, num_fg);
    double brute_mean = (test::brute_recall_at_k(brute, 50) + test::brute_recall_at_k(brute, 100) +
                         test::brute_mean_recall_at_k(brute, 50, num_fg) +
                         test::brute_mean_recall_at_k(brute, 100, num_fg)) /
                        4.0;
    if (mean_metric(rep) != brute_mean) v.add("Mean mismatch");

    if (num_fg >= 3) {
      PredicateVocabulary vocab = build_vocabulary(num_fg, 1.0);
      std::vector<double> per = test::brute_per_predicate(brute, 100, num_fg);
      double sum[3] = {0, 0, 0};
      std::size_t present[3] = {0, 0, 0};
      for (std::size_t c = 0; c < per.size(); ++c) {
        if (per[c] < 0.0) continue;
        sum[std::size_t(vocab.groups[c])] += per[c];
        ++present[std::size_t(vocab.groups[c])];
      }
      if (present[0] && present[1] && present[2]) {
        GroupRecallReport got = group_recall(images, vocab);
        if (got.head != sum[0] / double(present[0]) || got.body != sum[1] / double(present[1]) ||
            got.tail != sum[2] / double(present[2]))
          v.add("group recall mismatch");
      } else {
        try {
          group_recall(images, vocab);
          v.add("group recall should be undefined");
        } catch (const UndefinedMetricError&) {
        }
      }
    }
    ++sets;
  }

  // Headline-table arithmetic: mean of the four recalls, shown to one decimal.
  EvalReport table;
  table.r_at = {{50, 0.551}, {100, 0.591}};
  table.mr_at = {{50, 0.241}, {100, 0.274}};
  if (std::fabs(mean_metric(table) - 0.41425) > 1e-12) v.add("table mean != 0.41425");
  if (format_percent(mean_metric(table)) != "41.4") v.add("table mean not shown as 41.4");

  report(3, v.ok(), v.ok() ? fmt("%.0f random sets match brute force exactly", double(sets))
                           : v.brief());
}

// ---------------------------------------------------------------------------
// Criterion 4: collapse checks.

DatasetSplit toy_split_500() {
  DatasetSplit split;
  split.vocabulary = build_vocabulary(3, 1.0);
  Rng rng(777);
  std::size_t image = 0;
  auto make = [&](std::size_t i) {
    RelationInstance inst;
    inst.context_id = i;
    inst.image_id = image++;
    inst.label = 1 + i % 3;
    inst.feature.assign(6, 0.0);
    inst.feature[inst.label - 1] = 2.0;
    for (double& x : inst.feature) x += 0.3 * rng.normal();
    return inst;
  };
  for (std::size_t i = 0; i < 500; ++i) split.train.push_back(make(i));
  for (std::size_t i = 0; i < 100; ++i) split.val.push_back(make(i));
  for (const auto& inst : split.train) split.vocabulary.frequencies[inst.label]++;
  split.generation_config.feature_dim = 6;
  split.generation_config.num_foreground = 3;
  return split;
}

void criterion_4() {
  Violations v;

  // (a) Truncating lskd_iter inside its bootstrap window is exactly XE.
  {
    const Bundle& data = bundle_for(kSeeds[0]);
    ModelDims dims;
    dims.feature_dim = data.split.generation_config.feature_dim;
    dims.num_classes = data.split.num_classes();
    TrainConfig xe = default_train(Strategy::xe, 4.0, 1.0, 31);
    xe.max_epochs = 2;
    TrainConfig iter = default_train(Strategy::lskd_iter, 4.0, 1.0, 31);
    iter.max_epochs = 2;
    iter.interval_epochs = 2.0;
    TrainResult r_xe = train(xe, data.split, init_model(dims, 31, 1.0));
    TrainResult r_iter = train(iter, data.split, init_model(dims, 31, 1.0));
    if (param_hash(r_xe.model) != param_hash(r_iter.model))
      v.add("bootstrap window is not parameter-identical to xe");
  }

  // (b) alpha = 1e4 collapses SLD to one-hot and the KD run to the XE run.
  {
    Rng rng(888);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      std::size_t n = 3 + rng.uniform_int(49);
      ProbabilityVector teacher = test::random_prob(rng, n);
      OneHotLabel y(rng.uniform_int(n), n);
      ProbabilityVector sld = fuse_sld(y, teacher, 1e4, 1.0);
      for (std::size_t i = 0; i < n; ++i)
        worst = std::max(worst, std::fabs(sld[i] - (i == y.index ? 1.0 : 0.0)));
    }
    if (worst > kOneHotTol) v.add(fmt("SLD off one-hot by %.1e", worst));

    DatasetSplit toy = toy_split_500();
    ModelDims dims;
    dims.feature_dim = 6;
    dims.hidden_dim = 8;
    dims.repr_dim = 6;
    dims.num_classes = 4;
    TrainConfig xe = default_train(Strategy::xe, 4.0, 1.0, 21);
    xe.max_epochs = 6;
    xe.lr = 0.05;
    TrainConfig kd = default_train(Strategy::lskd_iter, 1e4, 1.0, 21);
    kd.max_epochs = 6;
    kd.lr = 0.05;
    kd.interval_epochs = 1.0;
    TrainResult r_xe = train(xe, toy, init_model(dims, 21, 1.0));
    TrainResult r_kd = train(kd, toy, init_model(dims, 21, 1.0));
    std::vector<double*> a = test::param_view(r_xe.model);
    std::vector<double*> b = test::param_view(r_kd.model);
    double linf = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) linf = std::max(linf, std::fabs(*a[i] - *b[i]));
    if (linf > kLinfTol) v.add(fmt("alpha=1e4 run L-inf %.1e from xe", linf));
  }

  report(4, v.ok(), v.ok() ? "bootstrap hash equal; alpha=1e4 collapses to xe" : v.brief());
}

// ---------------------------------------------------------------------------
// Criteria 5-9: directional claims on the default synthetic configuration.

void criterion_5() {
  const double start = now_s();
  Violations v;
  std::string summary;
  for (std::uint64_t s : kSeeds) {
    const Run& xe = run_for(Strategy::xe, 4.0, 1.0, s);
    const Run& iter = run_for(Strategy::lskd_iter, 4.0, 1.0, s);
    const Run& syn = run_for(Strategy::lskd_syn, 4.0, 1.0, s);
    for (const auto& [name, kd] : {std::pair<const char*, const Run*>{"iter", &iter},
                                   std::pair<const char*, const Run*>{"syn", &syn}}) {
      for (std::size_t k : {std::size_t{50}, std::size_t{100}}) {
        if (!(kd->report.mr_at.at(k) > xe.report.mr_at.at(k)))
          v.add(fmt((std::string("seed %.0f ") + name + " mR@%.0f %.3f not above xe").c_str(),
                    double(s), double(k), kd->report.mr_at.at(k)));
      }
      if (!(kd->report.calibration_kl < xe.report.calibration_kl))
        v.add(fmt((std::string("seed %.0f ") + name + " calibration %.3f not below xe %.3f")
                      .c_str(),
                  double(s), kd->report.calibration_kl, xe.report.calibration_kl));
      if (!(kd->report.mean_metric_value >= xe.report.mean_metric_value - kMeanSlack))
        v.add(fmt((std::string("seed %.0f ") + name + " Mean %.3f more than 2pts under xe %.3f")
                      .c_str(),
                  double(s), kd->report.mean_metric_value, xe.report.mean_metric_value));
    }
    if (s == kSeeds[0])
      summary = fmt("seed1 Mean xe %.3f iter %.3f syn %.3f", xe.report.mean_metric_value,
                    iter.report.mean_metric_value, syn.report.mean_metric_value);
  }
  const double elapsed = now_s() - start;
  if (elapsed > kEfficacyBudget) v.add(fmt("runtime %.0fs over budget", elapsed));
  report(5, v.ok(), v.ok() ? summary + fmt(", %.0fs", elapsed) : v.brief() + fmt("; %.0fs", elapsed));
}

double seed_avg(Strategy s, double alpha, double tau, double EvalReport::* field) {
  double sum = 0.0;
  for (std::uint64_t seed : kSeeds) sum += run_for(s, alpha, tau, seed).report.*field;
  return sum / double(kSeeds.size());
}

double seed_avg_at(Strategy s, double alpha, double tau, bool mr, std::size_t k) {
  double sum = 0.0;
  for (std::uint64_t seed : kSeeds) {
    const EvalReport& r = run_for(s, alpha, tau, seed).report;
    sum += mr ? r.mr_at.at(k) : r.r_at.at(k);
  }
  return sum / double(kSeeds.size());
}

void criterion_6() {
  Violations v;
  const double alphas[] = {3.0, 4.0, 5.0};
  double mr[3], r[3];
  for (int i = 0; i < 3; ++i) {
    mr[i] = seed_avg_at(Strategy::lskd_iter, alphas[i], 1.0, true, 100);
    r[i] = seed_avg_at(Strategy::lskd_iter, alphas[i], 1.0, false, 100);
  }
  if (!(mr[0] > mr[1] && mr[1] > mr[2]))
    v.add(fmt("mR@100 not strictly decreasing in alpha: %.3f, %.3f, %.3f", mr[0], mr[1], mr[2]));
  if (!(r[0] < r[1] && r[1] < r[2]))
    v.add(fmt("R@100 not strictly increasing in alpha: %.3f, %.3f, %.3f", r[0], r[1], r[2]));
  report(6, v.ok(),
         v.ok() ? fmt("mR@100 %.3f>%.3f>%.3f with R@100 rising", mr[0], mr[1], mr[2]) : v.brief());
}

void criterion_7() {
  Violations v;
  double r_01 = seed_avg_at(Strategy::lskd_iter, 4.0, 0.1, false, 100);
  double r_1 = seed_avg_at(Strategy::lskd_iter, 4.0, 1.0, false, 100);
  double r_10 = seed_avg_at(Strategy::lskd_iter, 4.0, 10.0, false, 100);
  double mr_01 = seed_avg_at(Strategy::lskd_iter, 4.0, 0.1, true, 100);
  double mr_10 = seed_avg_at(Strategy::lskd_iter, 4.0, 10.0, true, 100);
  if (!(r_10 < r_1)) v.add(fmt("R@100 tau=10 %.3f not below tau=1 %.3f", r_10, r_1));
  if (!(mr_10 >= mr_01)) v.add(fmt("mR@100 tau=10 %.3f below tau=0.1 %.3f", mr_10, mr_01));
  report(7, v.ok(),
         v.ok() ? fmt("R@100 %.3f < %.3f; mR@100 tau10 %.3f", r_10, r_1, mr_10)
                : v.brief() + fmt("; R@100(0.1)=%.3f", r_01));
}

void criterion_8() {
  Violations v;
  std::string summary;
  for (std::uint64_t s : kSeeds) {
    const Bundle& data = bundle_for(s);
    const Run& teacher = run_for(Strategy::lskd_iter, 4.0, 1.0, s);
    const RelationModel& m = teacher.model;
    std::vector<std::size_t> idx = all_indices(data.split.test.size());
    std::vector<ProbabilityVector> probs =
        forward_probs(m.encoder, m.student_head, m.tau, m.dims, data.split.test, idx,
                      Execution::parallel);
    double mass_sum = 0.0;
    double share_sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < data.split.test.size(); ++i) {
      if (data.split.test[i].label != 0) continue;
      const SparseAffinity& aff = data.affinity.test[i];
      double mass = 0.0;
      for (std::size_t id : aff.ids) mass += probs[i][id];
      mass_sum += mass;
      share_sum += double(aff.ids.size()) / double(m.dims.num_classes);
      ++count;
    }
    if (count == 0) {
      v.add(fmt("seed %.0f has no background test instances", double(s)));
      continue;
    }
    double mass = mass_sum / double(count);
    double share = share_sum / double(count);
    if (!(mass > share))
      v.add(fmt("seed %.0f support mass %.4f not above uniform share %.4f", double(s), mass,
                share));
    if (s == kSeeds[0]) summary = fmt("seed1 support mass %.3f vs uniform %.3f", mass, share);
  }
  report(8, v.ok(), v.ok() ? summary : v.brief());
}

void criterion_9() {
  Violations v;
  double kd = seed_avg(Strategy::lskd_iter, 4.0, 1.0, &EvalReport::mean_metric_value);
  double ls = seed_avg(Strategy::ls, 4.0, 1.0, &EvalReport::mean_metric_value);
  double lc = seed_avg(Strategy::lc, 4.0, 1.0, &EvalReport::mean_metric_value);
  if (!(kd >= ls)) v.add(fmt("lskd Mean %.4f below ls %.4f", kd, ls));
  if (!(kd >= lc)) v.add(fmt("lskd Mean %.4f below lc %.4f", kd, lc));
  report(9, v.ok(), fmt("Mean lskd %.4f vs ls %.4f, lc %.4f", kd, ls, lc));
}

// ---------------------------------------------------------------------------
// Criterion 10: determinism and exact persistence round-trips.

void criterion_10() {
  namespace fs = std::filesystem;
  Violations v;
  fs::remove_all("acceptance_tmp");
  fs::create_directories("acceptance_tmp");

  const Bundle& data = bundle_for(kSeeds[0]);

  // Dataset: regeneration reproduces the fingerprint; files round-trip.
  {
    GenerationConfig gen;
    gen.seed = kSeeds[0];
    GenerationResult again = generate_dataset(gen);
    if (dataset_fingerprint(again.split, again.affinity) != data.fingerprint)
      v.add("regenerated dataset fingerprint differs");
    save_dataset(again.split, again.affinity, "acceptance_tmp/data.jsonl");
    LoadedDataset loaded = load_dataset("acceptance_tmp/data.jsonl");
    if (!(loaded.split == again.split) || !(loaded.affinity == again.affinity))
      v.add("dataset round-trip changed contents");
    save_dataset(loaded.split, loaded.affinity, "acceptance_tmp/data2.jsonl");
    if (read_bytes("acceptance_tmp/data.jsonl") !=
        read_bytes("acceptance_tmp/data2.jsonl"))
      v.add("dataset files not byte-stable");
  }

  // Training: identical (config, seed) pairs give identical everything.
  {
    ModelDims dims;
    dims.feature_dim = data.split.generation_config.feature_dim;
    dims.num_classes = data.split.num_classes();
    TrainConfig tc = default_train(Strategy::lskd_syn, 4.0, 1.0, 41);
    tc.max_epochs = 2;
    TrainResult a = train(tc, data.split, init_model(dims, 41, 1.0, ModelVariant::siamese));
    TrainResult b = train(tc, data.split, init_model(dims, 41, 1.0, ModelVariant::siamese));
    if (!(a.model == b.model)) v.add("reruns trained different models");
    if (history_csv(a.state) != history_csv(b.state)) v.add("reruns logged different histories");

    EvalReport ra = evaluate(a.model, data.split.test, &data.affinity.test,
                             data.split.vocabulary, tc.eval_ks, Execution::parallel);
    EvalReport rb = evaluate(b.model, data.split.test, &data.affinity.test,
                             data.split.vocabulary, tc.eval_ks, Execution::serial);
    if (!(ra == rb)) v.add("parallel and serial evaluation reports differ");
    if (!(eval_report_from_json(eval_report_json(ra)) == ra))
      v.add("eval report JSON round-trip changed contents");

    save_checkpoint(a.model, "acceptance_tmp/model.json");
    RelationModel loaded = load_checkpoint("acceptance_tmp/model.json");
    if (!(loaded == a.model)) v.add("checkpoint round-trip changed the model");
    save_checkpoint(loaded, "acceptance_tmp/model2.json");
    if (read_bytes("acceptance_tmp/model.json") !=
        read_bytes("acceptance_tmp/model2.json"))
      v.add("checkpoint files not byte-stable");
  }

  report(10, v.ok(), v.ok() ? "regeneration, reruns and files all reproduce exactly" : v.brief());
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  return failures == 0 ? 0 : 1;
}
