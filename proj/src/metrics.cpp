#include "lskd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "lskd/util.hpp"

namespace lskd {

using ordered_json = nlohmann::ordered_json;

std::vector<RankedPrediction> rank_predictions(std::size_t image_id,
                                               std::span<const std::size_t> instance_ids,
                                               std::span<const ProbabilityVector> probs) {
  if (instance_ids.size() != probs.size())
    throw std::invalid_argument("rank_predictions: ids and probs must run parallel");
  std::vector<RankedPrediction> out;
  out.reserve(instance_ids.size());
  for (std::size_t i = 0; i < instance_ids.size(); ++i) {
    const ProbabilityVector& p = probs[i];
    if (p.size() < 2) throw std::invalid_argument("rank_predictions: need foreground classes");
    double fg_sum = 0.0;
    std::size_t best = 1;  // ties go to the lowest class id
    for (std::size_t c = 1; c < p.size(); ++c) {
      fg_sum += p[c];
      if (p[c] > p[best]) best = c;
    }
    double confidence =
        fg_sum > 0.0 ? p[best] / fg_sum : 1.0 / static_cast<double>(p.size() - 1);
    out.push_back({image_id, instance_ids[i], best, confidence});
  }
  std::sort(out.begin(), out.end(), [](const RankedPrediction& a, const RankedPrediction& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.instance_id < b.instance_id;
  });
  return out;
}

std::vector<ImageEval> build_eval_images(const std::vector<RelationInstance>& instances,
                                         const std::vector<ProbabilityVector>& probs) {
  if (instances.size() != probs.size())
    throw std::invalid_argument("build_eval_images: one distribution per instance required");

  // Images in order of first appearance; instance_id = position in the split.
  std::vector<std::size_t> image_order;
  std::unordered_map<std::size_t, std::size_t> image_slot;
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    auto [it, inserted] = image_slot.try_emplace(instances[i].image_id, members.size());
    if (inserted) {
      image_order.push_back(instances[i].image_id);
      members.emplace_back();
    }
    members[it->second].push_back(i);
  }

  std::vector<ImageEval> images;
  images.reserve(image_order.size());
  for (std::size_t s = 0; s < image_order.size(); ++s) {
    ImageEval image;
    image.image_id = image_order[s];
    std::vector<ProbabilityVector> image_probs;
    image_probs.reserve(members[s].size());
    for (std::size_t i : members[s]) {
      image_probs.push_back(probs[i]);
      if (instances[i].label != 0) image.positives.emplace_back(i, instances[i].label);
    }
    image.ranked = rank_predictions(image.image_id, members[s], image_probs);
    images.push_back(std::move(image));
  }
  return images;
}

namespace {

// Matched ground-truth pairs for one image at cutoff k: a positive counts
// when its instance sits in the top-k and carries the right label.
std::size_t matched_in_top_k(const ImageEval& image, std::size_t k,
                             std::size_t only_label = 0) {
  std::size_t cutoff = std::min(k, image.ranked.size());
  std::unordered_map<std::size_t, std::size_t> top;  // instance_id -> predicted label
  top.reserve(cutoff);
  for (std::size_t i = 0; i < cutoff; ++i)
    top.emplace(image.ranked[i].instance_id, image.ranked[i].predicted_label);
  std::size_t matched = 0;
  for (const auto& [instance_id, label] : image.positives) {
    if (only_label != 0 && label != only_label) continue;
    auto it = top.find(instance_id);
    if (it != top.end() && it->second == label) ++matched;
  }
  return matched;
}

}  // namespace

double recall_at_k(const std::vector<ImageEval>& images, std::size_t k) {
  if (k == 0) throw std::invalid_argument("recall_at_k: k must be >= 1");
  double sum = 0.0;
  std::size_t counted = 0;
  for (const ImageEval& image : images) {
    if (image.positives.empty()) continue;
    sum += static_cast<double>(matched_in_top_k(image, k)) /
           static_cast<double>(image.positives.size());
    ++counted;
  }
  if (counted == 0)
    throw UndefinedMetricError("recall_at_k: no image has ground-truth positives");
  return sum / static_cast<double>(counted);
}

std::vector<double> per_predicate_recall(const std::vector<ImageEval>& images, std::size_t k,
                                         std::size_t num_foreground) {
  if (k == 0) throw std::invalid_argument("per_predicate_recall: k must be >= 1");
  std::vector<double> sum(num_foreground + 1, 0.0);
  std::vector<std::size_t> image_count(num_foreground + 1, 0);
  std::vector<std::size_t> positives_c(num_foreground + 1, 0);
  for (const ImageEval& image : images) {
    std::fill(positives_c.begin(), positives_c.end(), 0);
    for (const auto& [instance_id, label] : image.positives) ++positives_c[label];
    for (std::size_t c = 1; c <= num_foreground; ++c) {
      if (positives_c[c] == 0) continue;
      sum[c] += static_cast<double>(matched_in_top_k(image, k, c)) /
                static_cast<double>(positives_c[c]);
      ++image_count[c];
    }
  }
  std::vector<double> out(num_foreground, -1.0);
  for (std::size_t c = 1; c <= num_foreground; ++c)
    if (image_count[c] > 0) out[c - 1] = sum[c] / static_cast<double>(image_count[c]);
  return out;
}

double mean_recall_at_k(const std::vector<ImageEval>& images, std::size_t k,
                        std::size_t num_foreground) {
  std::vector<double> per_class = per_predicate_recall(images, k, num_foreground);
  double sum = 0.0;
  std::size_t present = 0;
  for (double r : per_class) {
    if (r < 0.0) continue;
    sum += r;
    ++present;
  }
  if (present == 0)
    throw UndefinedMetricError("mean_recall_at_k: no foreground ground truth present");
  return sum / static_cast<double>(present);
}

GroupRecallReport group_recall(const std::vector<ImageEval>& images,
                               const PredicateVocabulary& vocab, std::size_t k) {
  std::vector<double> per_class = per_predicate_recall(images, k, vocab.num_foreground());
  double sum[3] = {0.0, 0.0, 0.0};
  std::size_t present[3] = {0, 0, 0};
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    if (per_class[c] < 0.0) continue;
    auto g = static_cast<std::size_t>(vocab.groups[c]);
    sum[g] += per_class[c];
    ++present[g];
  }
  const char* names[3] = {"head", "body", "tail"};
  for (int g = 0; g < 3; ++g)
    if (present[g] == 0)
      throw UndefinedMetricError(std::string("group_recall: no ground truth for group ") +
                                 names[g]);
  GroupRecallReport report;
  report.head = sum[0] / static_cast<double>(present[0]);
  report.body = sum[1] / static_cast<double>(present[1]);
  report.tail = sum[2] / static_cast<double>(present[2]);
  report.mean = (report.head + report.body + report.tail) / 3.0;
  return report;
}

double calibration_kl(const std::vector<ProbabilityVector>& probs,
                      const std::vector<RelationInstance>& instances,
                      const std::vector<SparseAffinity>& affinity,
                      std::size_t num_foreground) {
  if (probs.size() != instances.size() || affinity.size() != instances.size())
    throw std::invalid_argument("calibration_kl: probs/instances/affinity must run parallel");
  double sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i].label == 0) continue;
    const ProbabilityVector& p = probs[i];
    double fg_sum = 0.0;
    for (std::size_t c = 1; c < p.size(); ++c) fg_sum += p[c];
    Vec q(num_foreground);
    for (std::size_t c = 1; c < p.size(); ++c)
      q[c - 1] = fg_sum > 0.0 ? p[c] / fg_sum : 1.0 / static_cast<double>(num_foreground);
    sum += kl_divergence(affinity[i].dense(num_foreground),
                         ProbabilityVector::unchecked(std::move(q)));
    ++positives;
  }
  return positives == 0 ? 0.0 : sum / static_cast<double>(positives);
}

double mean_metric(const EvalReport& report) {
  for (std::size_t k : {std::size_t{50}, std::size_t{100}}) {
    if (!report.r_at.count(k) || !report.mr_at.count(k))
      throw std::invalid_argument("mean_metric: requires R and mR at K=50 and K=100");
  }
  return (report.r_at.at(50) + report.r_at.at(100) + report.mr_at.at(50) +
          report.mr_at.at(100)) /
         4.0;
}

EvalReport evaluate(const RelationModel& model,
                    const std::vector<RelationInstance>& instances,
                    const std::vector<SparseAffinity>* affinity,
                    const PredicateVocabulary& vocab, std::span<const std::size_t> ks,
                    Execution ex) {
  if (model.dims.num_classes != vocab.num_classes())
    throw std::invalid_argument("evaluate: model and vocabulary class counts differ");
  std::vector<std::size_t> idx = all_indices(instances.size());
  std::vector<ProbabilityVector> probs = forward_probs(
      model.encoder, model.student_head, model.tau, model.dims, instances, idx, ex);
  std::vector<ImageEval> images = build_eval_images(instances, probs);

  EvalReport report;
  for (std::size_t k : ks) {
    report.r_at[k] = recall_at_k(images, k);
    report.mr_at[k] = mean_recall_at_k(images, k, vocab.num_foreground());
  }
  try {
    report.groups = group_recall(images, vocab, 100);
  } catch (const UndefinedMetricError&) {
    // A split can lack entire groups (tiny validation sets); mark them with
    // the same absent sentinel the per-predicate vector uses.
    report.groups = {-1.0, -1.0, -1.0, -1.0};
  }
  report.per_predicate = per_predicate_recall(images, 100, vocab.num_foreground());
  if (affinity)
    report.calibration_kl =
        calibration_kl(probs, instances, *affinity, vocab.num_foreground());
  if (report.r_at.count(50) && report.r_at.count(100) && report.mr_at.count(50) &&
      report.mr_at.count(100))
    report.mean_metric_value = mean_metric(report);
  return report;
}

namespace {

ordered_json metric_map_json(const std::map<std::size_t, double>& m) {
  ordered_json j = ordered_json::object();
  for (const auto& [k, v] : m) j[std::to_string(k)] = v;
  return j;
}

ordered_json metric_map_percent(const std::map<std::size_t, double>& m) {
  ordered_json j = ordered_json::object();
  for (const auto& [k, v] : m) j[std::to_string(k)] = format_percent(v);
  return j;
}

std::string csv_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::string eval_report_json(const EvalReport& report) {
  ordered_json j;
  j["schema_version"] = 1;
  j["kind"] = "lskd.eval_report";
  j["config_hash"] = hex64(report.config_hash);
  j["r_at"] = metric_map_json(report.r_at);
  j["mr_at"] = metric_map_json(report.mr_at);
  if (report.mean_metric_value >= 0.0)
    j["mean"] = report.mean_metric_value;
  else
    j["mean"] = nullptr;
  j["group_recall"] = {{"head", report.groups.head},
                       {"body", report.groups.body},
                       {"tail", report.groups.tail},
                       {"mean", report.groups.mean}};
  j["calibration_kl"] = report.calibration_kl;
  j["per_predicate_recall"] = report.per_predicate;
  ordered_json percent;
  percent["r_at"] = metric_map_percent(report.r_at);
  percent["mr_at"] = metric_map_percent(report.mr_at);
  if (report.mean_metric_value >= 0.0) percent["mean"] = format_percent(report.mean_metric_value);
  if (report.groups.head >= 0.0)
    percent["group_recall"] = {{"head", format_percent(report.groups.head)},
                               {"body", format_percent(report.groups.body)},
                               {"tail", format_percent(report.groups.tail)},
                               {"mean", format_percent(report.groups.mean)}};
  j["percent"] = std::move(percent);
  return j.dump(2) + "\n";
}

EvalReport eval_report_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("eval_report_from_json: parse error: ") + e.what());
  }
  if (!j.is_object() || j.value("kind", std::string()) != "lskd.eval_report") {
    throw std::runtime_error("eval_report_from_json: not an eval report document");
  }
  if (j.value("schema_version", 0) != 1) {
    throw std::runtime_error("eval_report_from_json: unsupported schema_version");
  }
  EvalReport report;
  try {
    report.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    for (const auto& [k, v] : j.at("r_at").items())
      report.r_at[std::stoull(k)] = v.get<double>();
    for (const auto& [k, v] : j.at("mr_at").items())
      report.mr_at[std::stoull(k)] = v.get<double>();
    report.mean_metric_value = j.at("mean").is_null() ? -1.0 : j.at("mean").get<double>();
    const auto& g = j.at("group_recall");
    report.groups.head = g.at("head").get<double>();
    report.groups.body = g.at("body").get<double>();
    report.groups.tail = g.at("tail").get<double>();
    report.groups.mean = g.at("mean").get<double>();
    report.calibration_kl = j.at("calibration_kl").get<double>();
    report.per_predicate = j.at("per_predicate_recall").get<std::vector<double>>();
  } catch (const ordered_json::exception& e) {
    throw std::runtime_error(std::string("eval_report_from_json: malformed report: ") + e.what());
  }
  return report;
}

std::string eval_report_csv_header() {
  return "r_at_50,r_at_100,mr_at_50,mr_at_100,mean,group_head,group_body,group_tail,"
         "group_mean,calibration_kl,config_hash";
}

std::string eval_report_csv_row(const EvalReport& report) {
  auto metric_or_empty = [](const std::map<std::size_t, double>& m, std::size_t k) {
    auto it = m.find(k);
    return it == m.end() ? std::string() : csv_double(it->second);
  };
  std::string row;
  row += metric_or_empty(report.r_at, 50) + ",";
  row += metric_or_empty(report.r_at, 100) + ",";
  row += metric_or_empty(report.mr_at, 50) + ",";
  row += metric_or_empty(report.mr_at, 100) + ",";
  row += (report.mean_metric_value >= 0.0 ? csv_double(report.mean_metric_value)
                                          : std::string()) +
         ",";
  row += csv_double(report.groups.head) + ",";
  row += csv_double(report.groups.body) + ",";
  row += csv_double(report.groups.tail) + ",";
  row += csv_double(report.groups.mean) + ",";
  row += csv_double(report.calibration_kl) + ",";
  row += hex64(report.config_hash);
  return row;
}

}  // namespace lskd
