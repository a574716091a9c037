#include "lskd/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "lskd/util.hpp"

namespace lskd {
namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt_axis(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string fmt_exact(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct DataBundle {
  DatasetSplit split;
  AffinityTable affinity;
};

DataBundle load_or_generate(const Config& cfg) {
  if (cfg.has("dataset.path")) {
    LoadedDataset d = load_dataset(cfg.get_string("dataset.path", ""));
    return {std::move(d.split), std::move(d.affinity)};
  }
  GenerationResult g = generate_dataset(generation_config_from(cfg));
  return {std::move(g.split), std::move(g.affinity)};
}

RelationModel build_model(const DatasetSplit& split, const TrainConfig& tc,
                          const ModelSettings& ms) {
  const ModelVariant variant =
      tc.strategy == Strategy::lskd_syn ? ModelVariant::siamese : ModelVariant::single;
  if (!ms.init_checkpoint.empty()) {
    RelationModel model = load_checkpoint(ms.init_checkpoint);
    if (model.dims.feature_dim != split.generation_config.feature_dim ||
        model.dims.num_classes != split.num_classes()) {
      throw std::invalid_argument(
          "train: checkpoint dimensions do not match the dataset (feature_dim " +
          std::to_string(model.dims.feature_dim) + " vs " +
          std::to_string(split.generation_config.feature_dim) + ", num_classes " +
          std::to_string(model.dims.num_classes) + " vs " +
          std::to_string(split.num_classes()) + ")");
    }
    if (tc.strategy == Strategy::lskd_syn && !model.teacher_head) {
      throw std::invalid_argument(
          "train: strategy lskd_syn requires a siamese checkpoint with a teacher head");
    }
    return model;
  }
  ModelDims dims;
  dims.feature_dim = split.generation_config.feature_dim;
  dims.hidden_dim = ms.hidden_dim;
  dims.repr_dim = ms.repr_dim;
  dims.num_classes = split.num_classes();
  return init_model(dims, tc.seed, ms.init_scale, variant, tc.tau);
}

EvalReport eval_on_test(const RelationModel& model, const DataBundle& data,
                        const TrainConfig& tc, std::uint64_t config_hash) {
  EvalReport report = evaluate(model, data.split.test, &data.affinity.test,
                               data.split.vocabulary, tc.eval_ks,
                               tc.parallel ? Execution::parallel : Execution::serial);
  report.config_hash = config_hash;
  return report;
}

std::string generate_summary(const GenerationResult& result,
                             const std::filesystem::path& path) {
  const DatasetSplit& split = result.split;
  const PredicateVocabulary& vocab = split.vocabulary;
  std::ostringstream out;
  out << "dataset: " << path.string() << "\n";
  out << "instances: train " << split.train.size() << ", val " << split.val.size()
      << ", test " << split.test.size() << "\n";

  std::size_t missing = 0;
  for (const RelationInstance& inst : split.train) missing += inst.missing_flag ? 1 : 0;
  const double miss_rate =
      split.train.empty() ? 0.0
                          : static_cast<double>(missing) / static_cast<double>(split.train.size());
  out << "miss rate (train): " << format_percent(miss_rate) << "%\n";

  std::size_t max_count = 0;
  std::size_t min_count = std::size_t(-1);
  for (std::size_t c = 1; c < vocab.frequencies.size(); ++c) {
    max_count = std::max(max_count, vocab.frequencies[c]);
    min_count = std::min(min_count, vocab.frequencies[c]);
  }
  out << "long-tail ratio (train): ";
  if (min_count == 0) {
    out << "inf\n";
  } else {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f",
                  static_cast<double>(max_count) / static_cast<double>(min_count));
    out << buf << "\n";
  }

  // Per-group boundaries: class count plus the train-count range inside the group.
  for (Group g : {Group::head, Group::body, Group::tail}) {
    std::size_t classes = 0;
    std::size_t lo = std::size_t(-1);
    std::size_t hi = 0;
    for (std::size_t c = 1; c < vocab.frequencies.size(); ++c) {
      if (vocab.groups[c - 1] != g) continue;
      ++classes;
      lo = std::min(lo, vocab.frequencies[c]);
      hi = std::max(hi, vocab.frequencies[c]);
    }
    out << "group " << group_name(g) << ": " << classes << " classes, train counts ";
    if (classes == 0)
      out << "-\n";
    else
      out << lo << ".." << hi << "\n";
  }

  out << "class histogram (train):\n";
  out << "  id  name  group  count\n";
  out << "  0  " << vocab.names[0] << "  -  " << vocab.frequencies[0] << "\n";
  for (std::size_t c = 1; c < vocab.frequencies.size(); ++c) {
    out << "  " << c << "  " << vocab.names[c] << "  " << group_name(vocab.groups[c - 1])
        << "  " << vocab.frequencies[c] << "\n";
  }
  return out.str();
}

MeanStd aggregate(const std::vector<double>& xs) {
  MeanStd agg;
  if (xs.empty()) return agg;
  double sum = 0.0;
  for (double x : xs) sum += x;
  agg.mean = sum / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - agg.mean) * (x - agg.mean);
  agg.std = std::sqrt(var / static_cast<double>(xs.size()));
  return agg;
}

std::string cell_name(double alpha, double tau, double interval, std::uint64_t seed) {
  return "alpha" + fmt_axis(alpha) + "_tau" + fmt_axis(tau) + "_int" + fmt_axis(interval) +
         "_seed" + std::to_string(seed);
}

std::string percent_pm(const MeanStd& m) {
  return format_percent(m.mean) + " ± " + format_percent(m.std);
}

// Hash of the experiment identity: everything except where artifacts land,
// so reruns into different directories produce identical reports.
std::uint64_t experiment_hash(const Config& cfg) {
  Config science;
  for (const auto& [key, value] : cfg.entries())
    if (key != "out") science.set(key, value);
  return science.hash();
}

double axis_value(const SweepCell& cell, const std::string& axis) {
  if (axis == "alpha") return cell.alpha;
  if (axis == "tau") return cell.tau;
  if (axis == "interval") return cell.interval;
  throw std::invalid_argument("report: unknown sweep axis '" + axis +
                              "' (expected alpha, tau, or interval)");
}

}  // namespace

std::filesystem::path resolve_out_dir(const Config& cfg, const std::string& subcommand) {
  if (cfg.has("out")) {
    const std::string dir = cfg.get_string("out", "");
    if (dir.empty()) throw std::invalid_argument("config: 'out' must not be empty");
    return dir;
  }
  if (const char* root = std::getenv("LSKD_OUT_ROOT"); root != nullptr && *root != '\0') {
    return std::filesystem::path(root) / subcommand;
  }
  return std::filesystem::path("lskd_out") / subcommand;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

GenerateOutcome run_generate(const Config& cfg) {
  GenerationResult result = generate_dataset(generation_config_from(cfg));
  const std::filesystem::path out = resolve_out_dir(cfg, "generate");
  std::filesystem::create_directories(out);

  GenerateOutcome outcome;
  outcome.dataset_path = out / "dataset.jsonl";
  save_dataset(result.split, result.affinity, outcome.dataset_path.string());
  outcome.fingerprint = dataset_fingerprint(result.split, result.affinity);
  outcome.summary = generate_summary(result, outcome.dataset_path);
  write_text_file(out / "resolved_config.txt", cfg.canonical());
  return outcome;
}

TrainOutcome run_train(const Config& cfg) {
  DataBundle data = load_or_generate(cfg);
  const TrainConfig tc = train_config_from(cfg);
  const ModelSettings ms = model_settings_from(cfg);
  RelationModel model = build_model(data.split, tc, ms);

  TrainOutcome outcome;
  outcome.out_dir = resolve_out_dir(cfg, "train");
  std::filesystem::create_directories(outcome.out_dir);
  outcome.result = train(tc, data.split, std::move(model));
  outcome.test_report = eval_on_test(outcome.result.model, data, tc, experiment_hash(cfg));

  save_checkpoint(outcome.result.model, (outcome.out_dir / "checkpoint.json").string());
  write_text_file(outcome.out_dir / "history.csv", history_csv(outcome.result.state));
  write_text_file(outcome.out_dir / "eval_test.json", eval_report_json(outcome.test_report));
  write_text_file(outcome.out_dir / "eval_test.csv", eval_report_csv_header() + "\n" +
                                                         eval_report_csv_row(outcome.test_report) +
                                                         "\n");
  write_text_file(outcome.out_dir / "resolved_config.txt", cfg.canonical());
  return outcome;
}

SweepOutcome run_sweep(const Config& cfg) {
  const TrainConfig base = train_config_from(cfg);
  const ModelSettings ms = model_settings_from(cfg);
  const std::vector<double> alphas = cfg.get_double_list("sweep.alpha", {base.alpha});
  const std::vector<double> taus = cfg.get_double_list("sweep.tau", {base.tau});
  const std::vector<double> intervals =
      cfg.get_double_list("sweep.interval", {base.interval_epochs});
  const std::vector<std::uint64_t> seeds = cfg.get_u64_list("sweep.seeds", {1, 2, 3});

  SweepOutcome outcome;
  outcome.out_dir = resolve_out_dir(cfg, "sweep");
  std::filesystem::create_directories(outcome.out_dir / "cells");

  // One dataset per seed, shared by every cell. An explicit dataset path is
  // loaded once up front; then only the training seed varies.
  std::optional<DataBundle> fixed;
  if (cfg.has("dataset.path")) fixed = load_or_generate(cfg);
  std::map<std::uint64_t, DataBundle> per_seed;
  const auto data_for_seed = [&](std::uint64_t s) -> const DataBundle& {
    if (fixed) return *fixed;
    auto it = per_seed.find(s);
    if (it == per_seed.end()) {
      GenerationConfig gen = generation_config_from(cfg);
      gen.seed = s;
      GenerationResult g = generate_dataset(gen);
      it = per_seed.emplace(s, DataBundle{std::move(g.split), std::move(g.affinity)}).first;
    }
    return it->second;
  };

  for (double a : alphas) {
    for (double t : taus) {
      for (double iv : intervals) {
        SweepCell cell;
        cell.alpha = a;
        cell.tau = t;
        cell.interval = iv;
        cell.num_seeds = seeds.size();
        std::vector<double> mr50, mr100, r50, r100, mean;
        for (std::uint64_t s : seeds) {
          const std::string name = cell_name(a, t, iv, s);
          try {
            TrainConfig tc = base;
            tc.alpha = a;
            tc.tau = t;
            tc.interval_epochs = iv;
            tc.seed = s;
            const DataBundle& data = data_for_seed(s);
            TrainResult res = train(tc, data.split, build_model(data.split, tc, ms));
            EvalReport rep = eval_on_test(res.model, data, tc, experiment_hash(cfg));
            const std::filesystem::path cell_dir = outcome.out_dir / "cells" / name;
            std::filesystem::create_directories(cell_dir);
            write_text_file(cell_dir / "history.csv", history_csv(res.state));
            write_text_file(cell_dir / "eval_test.json", eval_report_json(rep));
            mr50.push_back(rep.mr_at.at(50));
            mr100.push_back(rep.mr_at.at(100));
            r50.push_back(rep.r_at.at(50));
            r100.push_back(rep.r_at.at(100));
            mean.push_back(rep.mean_metric_value);
          } catch (const std::exception& e) {
            cell.failed = true;
            outcome.errors.push_back(name + ": " + e.what());
          }
        }
        if (!cell.failed) {
          cell.mr50 = aggregate(mr50);
          cell.mr100 = aggregate(mr100);
          cell.r50 = aggregate(r50);
          cell.r100 = aggregate(r100);
          cell.mean_metric = aggregate(mean);
        }
        outcome.failures += cell.failed ? 1 : 0;
        outcome.cells.push_back(cell);
      }
    }
  }

  write_text_file(outcome.out_dir / "sweep.csv", sweep_csv(outcome.cells));
  write_text_file(outcome.out_dir / "sweep.md", sweep_markdown(outcome.cells));
  write_text_file(outcome.out_dir / "resolved_config.txt", cfg.canonical());
  return outcome;
}

std::string sweep_csv(const std::vector<SweepCell>& cells) {
  std::ostringstream out;
  out << "alpha,tau,interval,seeds,failed,mr50_mean,mr50_std,mr100_mean,mr100_std,"
         "r50_mean,r50_std,r100_mean,r100_std,mean_mean,mean_std\n";
  for (const SweepCell& c : cells) {
    out << fmt_exact(c.alpha) << ',' << fmt_exact(c.tau) << ',' << fmt_exact(c.interval) << ','
        << c.num_seeds << ',' << (c.failed ? 1 : 0);
    for (const MeanStd* m : {&c.mr50, &c.mr100, &c.r50, &c.r100, &c.mean_metric}) {
      out << ',' << fmt_exact(m->mean) << ',' << fmt_exact(m->std);
    }
    out << '\n';
  }
  return out.str();
}

std::vector<SweepCell> parse_sweep_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) ||
      trim(line) !=
          "alpha,tau,interval,seeds,failed,mr50_mean,mr50_std,mr100_mean,mr100_std,"
          "r50_mean,r50_std,r100_mean,r100_std,mean_mean,mean_std") {
    throw std::runtime_error("parse_sweep_csv: unrecognized header");
  }
  std::vector<SweepCell> cells;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> f = split(trim(line), ',');
    if (f.size() != 15) {
      throw std::runtime_error("parse_sweep_csv: line " + std::to_string(line_no) +
                               ": expected 15 fields, got " + std::to_string(f.size()));
    }
    try {
      SweepCell c;
      c.alpha = std::stod(f[0]);
      c.tau = std::stod(f[1]);
      c.interval = std::stod(f[2]);
      c.num_seeds = std::stoull(f[3]);
      c.failed = f[4] == "1";
      MeanStd* slots[5] = {&c.mr50, &c.mr100, &c.r50, &c.r100, &c.mean_metric};
      for (std::size_t m = 0; m < 5; ++m) {
        slots[m]->mean = std::stod(f[5 + 2 * m]);
        slots[m]->std = std::stod(f[6 + 2 * m]);
      }
      cells.push_back(c);
    } catch (const std::exception&) {
      throw std::runtime_error("parse_sweep_csv: line " + std::to_string(line_no) +
                               ": malformed number");
    }
  }
  return cells;
}

std::string sweep_markdown(const std::vector<SweepCell>& cells) {
  std::ostringstream out;
  out << "| alpha | tau | interval | mR@50 | mR@100 | R@50 | R@100 | Mean |\n";
  out << "| --- | --- | --- | --- | --- | --- | --- | --- |\n";
  for (const SweepCell& c : cells) {
    out << "| " << fmt_axis(c.alpha) << " | " << fmt_axis(c.tau) << " | " << fmt_axis(c.interval)
        << " | ";
    if (c.failed) {
      out << "failed | failed | failed | failed | failed |\n";
    } else {
      out << percent_pm(c.mr50) << " | " << percent_pm(c.mr100) << " | " << percent_pm(c.r50)
          << " | " << percent_pm(c.r100) << " | " << percent_pm(c.mean_metric) << " |\n";
    }
  }
  return out.str();
}

std::vector<TrendCheck> trend_checks(const std::vector<SweepCell>& cells,
                                     const std::string& axis) {
  std::vector<SweepCell> ok;
  for (const SweepCell& c : cells)
    if (!c.failed) ok.push_back(c);
  if (ok.size() < 2)
    throw std::runtime_error("trend check needs at least two completed sweep cells");

  for (const std::string& other : {std::string("alpha"), std::string("tau"),
                                   std::string("interval")}) {
    if (other == axis) continue;
    for (const SweepCell& c : ok) {
      if (axis_value(c, other) != axis_value(ok.front(), other)) {
        throw std::invalid_argument("report: sweep varies along '" + other +
                                    "' as well; trend along '" + axis + "' is ambiguous");
      }
    }
  }

  std::sort(ok.begin(), ok.end(), [&](const SweepCell& a, const SweepCell& b) {
    return axis_value(a, axis) < axis_value(b, axis);
  });
  for (std::size_t i = 1; i < ok.size(); ++i) {
    if (axis_value(ok[i - 1], axis) == axis_value(ok[i], axis))
      throw std::invalid_argument("report: duplicate value on axis '" + axis + "'");
  }

  const std::pair<std::string, MeanStd SweepCell::*> metrics[] = {
      {"mr_at_50", &SweepCell::mr50},   {"mr_at_100", &SweepCell::mr100},
      {"r_at_50", &SweepCell::r50},     {"r_at_100", &SweepCell::r100},
      {"mean", &SweepCell::mean_metric},
  };
  std::vector<TrendCheck> checks;
  for (const auto& [name, member] : metrics) {
    TrendCheck check;
    check.metric = name;
    check.axis = axis;
    check.strictly_increasing = true;
    check.strictly_decreasing = true;
    for (std::size_t i = 1; i < ok.size(); ++i) {
      const double prev = (ok[i - 1].*member).mean;
      const double cur = (ok[i].*member).mean;
      if (!(cur > prev)) check.strictly_increasing = false;
      if (!(cur < prev)) check.strictly_decreasing = false;
    }
    checks.push_back(std::move(check));
  }
  return checks;
}

ReportOutcome run_report(const Config& cfg) {
  const bool have_eval = cfg.has("report.eval");
  const bool have_sweep = cfg.has("report.sweep_csv");
  if (!have_eval && !have_sweep)
    throw std::invalid_argument("report: set report.eval and/or report.sweep_csv");

  ReportOutcome outcome;
  outcome.out_dir = resolve_out_dir(cfg, "report");
  std::filesystem::create_directories(outcome.out_dir);

  std::ostringstream md;
  md << "# Evaluation report\n";
  ordered_json j;
  j["schema_version"] = 1;
  j["kind"] = "lskd.report";

  if (have_eval) {
    const EvalReport rep =
        eval_report_from_json(read_text_file(cfg.get_string("report.eval", "")));
    std::optional<EvalReport> base;
    if (cfg.has("report.baseline"))
      base = eval_report_from_json(read_text_file(cfg.get_string("report.baseline", "")));

    md << "\n## Headline metrics (percent)\n\n";
    md << "| metric | value |";
    if (base) md << " baseline | delta |";
    md << "\n| --- | --- |";
    if (base) md << " --- | --- |";
    md << "\n";
    const auto metric_row = [&](const std::string& label, double value, double base_value) {
      md << "| " << label << " | " << format_percent(value) << " |";
      if (base) md << " " << format_percent(base_value) << " | "
                   << format_percent(value - base_value) << " |";
      md << "\n";
    };
    for (std::size_t k : {std::size_t{50}, std::size_t{100}}) {
      if (rep.r_at.count(k))
        metric_row("R@" + std::to_string(k), rep.r_at.at(k),
                   base && base->r_at.count(k) ? base->r_at.at(k) : 0.0);
      if (rep.mr_at.count(k))
        metric_row("mR@" + std::to_string(k), rep.mr_at.at(k),
                   base && base->mr_at.count(k) ? base->mr_at.at(k) : 0.0);
    }
    if (rep.mean_metric_value >= 0.0)
      metric_row("Mean", rep.mean_metric_value,
                 base ? std::max(base->mean_metric_value, 0.0) : 0.0);
    md << "\ncalibration KL: " << fmt_exact(rep.calibration_kl);
    if (base) md << " (baseline " << fmt_exact(base->calibration_kl) << ")";
    md << "\n";

    if (rep.groups.head >= 0.0) {
      md << "\n## Group recall @100 (percent)\n\n";
      md << "| head | body | tail | mean |\n| --- | --- | --- | --- |\n";
      md << "| " << format_percent(rep.groups.head) << " | " << format_percent(rep.groups.body)
         << " | " << format_percent(rep.groups.tail) << " | " << format_percent(rep.groups.mean)
         << " |\n";
    }

    md << "\n## Per-predicate recall @100 (percent)\n\n";
    md << "| class | recall |";
    if (base) md << " baseline | delta |";
    md << "\n| --- | --- |";
    if (base) md << " --- | --- |";
    md << "\n";
    std::size_t rows = 0;
    ordered_json per_predicate = ordered_json::array();
    for (std::size_t c = 0; c < rep.per_predicate.size(); ++c) {
      if (rep.per_predicate[c] < 0.0) continue;
      ++rows;
      const std::size_t class_id = c + 1;
      md << "| " << class_id << " | " << format_percent(rep.per_predicate[c]) << " |";
      ordered_json row;
      row["class"] = class_id;
      row["recall_at_100"] = rep.per_predicate[c];
      if (base) {
        const double b =
            c < base->per_predicate.size() ? base->per_predicate[c] : -1.0;
        if (b >= 0.0) {
          md << " " << format_percent(b) << " | " << format_percent(rep.per_predicate[c] - b)
             << " |";
          row["baseline"] = b;
          row["delta"] = rep.per_predicate[c] - b;
        } else {
          md << " - | - |";
          row["baseline"] = nullptr;
          row["delta"] = nullptr;
        }
      }
      md << "\n";
      per_predicate.push_back(std::move(row));
    }
    md << "\npredicates with test ground truth: " << rows << "\n";

    ordered_json je;
    je["r_at"] = ordered_json::object();
    for (const auto& [k, v] : rep.r_at) je["r_at"][std::to_string(k)] = v;
    je["mr_at"] = ordered_json::object();
    for (const auto& [k, v] : rep.mr_at) je["mr_at"][std::to_string(k)] = v;
    if (rep.mean_metric_value >= 0.0)
      je["mean"] = rep.mean_metric_value;
    else
      je["mean"] = nullptr;
    je["group_recall"] = {{"head", rep.groups.head},
                          {"body", rep.groups.body},
                          {"tail", rep.groups.tail},
                          {"mean", rep.groups.mean}};
    je["calibration_kl"] = rep.calibration_kl;
    je["predicates_with_ground_truth"] = rows;
    je["per_predicate"] = std::move(per_predicate);
    j["eval"] = std::move(je);
  }

  if (have_sweep) {
    const std::string axis = cfg.get_string("report.sweep_axis", "alpha");
    const std::vector<SweepCell> cells =
        parse_sweep_csv(read_text_file(cfg.get_string("report.sweep_csv", "")));
    const std::vector<TrendCheck> trends = trend_checks(cells, axis);

    md << "\n## Trend checks (axis: " << axis << ")\n\n";
    ordered_json jt = ordered_json::array();
    for (const TrendCheck& t : trends) {
      md << "- " << t.metric << " strictly increasing in " << t.axis << ": "
         << (t.strictly_increasing ? "yes" : "no") << "\n";
      md << "- " << t.metric << " strictly decreasing in " << t.axis << ": "
         << (t.strictly_decreasing ? "yes" : "no") << "\n";
      ordered_json row;
      row["metric"] = t.metric;
      row["axis"] = t.axis;
      row["strictly_increasing"] = t.strictly_increasing;
      row["strictly_decreasing"] = t.strictly_decreasing;
      jt.push_back(std::move(row));
    }
    j["trends"] = std::move(jt);
  }

  outcome.markdown = md.str();
  outcome.json = j.dump(2) + "\n";
  write_text_file(outcome.out_dir / "report.md", outcome.markdown);
  write_text_file(outcome.out_dir / "report.json", outcome.json);
  return outcome;
}

}  // namespace lskd
